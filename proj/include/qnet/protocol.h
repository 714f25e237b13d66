// Copyright 2026 The qnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef QNET_PROTOCOL_H
#define QNET_PROTOCOL_H

// Three-node protocol engine: double-link establishment, GHZ distribution and
// entanglement swapping, driven by a deterministic discrete-event queue.
//
// Register layout for the four-qubit stage:
//   qubit 0  Alice communication qubit
//   qubit 1  Bob memory (nuclear spin)
//   qubit 2  Bob communication qubit
//   qubit 3  Charlie communication qubit

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "json.hpp"
#include "qnet/linkmodel.h"
#include "qnet/noise.h"
#include "qnet/qstate.h"

namespace qnet {

enum class NodeId : std::uint8_t { kAlice, kBob, kCharlie };
const char *to_string(NodeId n);

class ProtocolError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Two messages overlapping at Bob's merged (OR-gated) input port.
class CommCollision : public ProtocolError {
   public:
    using ProtocolError::ProtocolError;
};

struct CommTimings {
    double bit_interval_s = 60e-9;
    double decode_delay_s = 2e-6;
};

struct ClassicalMessage {
    NodeId sender = NodeId::kAlice;
    NodeId receiver = NodeId::kBob;
    int payload_bits = 1;
    std::uint32_t payload = 0;
    double send_time_s = 0;
    double delivery_time_s = 0;
    std::string label;
};

struct Event {
    double time_s = 0;
    std::uint64_t seq = 0;
    std::string actor;
    std::string kind;
    std::string detail;
};

/// Time-ordered event queue. Ties are broken by insertion order, so a run is
/// fully determined by the order in which events are scheduled.
class EventQueue {
   public:
    using Action = std::function<void()>;

    void schedule(double time_s, std::string actor, std::string kind, std::string detail = {}, Action action = {});
    /// Pops and executes the earliest event. Returns false when empty.
    bool step();
    void run();
    double now() const { return now_; }
    bool empty() const { return pending_.empty(); }
    const std::vector<Event> &log() const { return log_; }

   private:
    struct Pending {
        Event event;
        Action action;
    };
    struct Later {
        bool operator()(const Pending &a, const Pending &b) const {
            if (a.event.time_s != b.event.time_s) return a.event.time_s > b.event.time_s;
            return a.event.seq > b.event.seq;
        }
    };
    std::priority_queue<Pending, std::vector<Pending>, Later> pending_;
    std::vector<Event> log_;
    std::uint64_t next_seq_ = 0;
    double now_ = 0;
};

/// Serial links between the nodes. Messages addressed to Bob share one
/// merged input port; overlapping occupancy raises CommCollision.
class SerialBus {
   public:
    explicit SerialBus(CommTimings timings = {}) : timings_(timings) {}

    /// Schedules delivery of a `bits`-bit message sent at the queue's current
    /// time plus `send_offset_s`. `on_delivery` runs at the delivery time.
    ClassicalMessage send(EventQueue &queue, NodeId from, NodeId to, int bits, std::uint32_t payload,
                          std::string label, std::function<void(const ClassicalMessage &)> on_delivery = {},
                          double send_time_s = -1);

    const std::vector<ClassicalMessage> &sent() const { return sent_; }
    const CommTimings &timings() const { return timings_; }

   private:
    CommTimings timings_;
    std::vector<std::pair<double, double>> bob_port_busy_;
    std::vector<ClassicalMessage> sent_;
};

/// Free-function form: validates and schedules one message on `bus`.
ClassicalMessage serial_comm(const ClassicalMessage &msg, EventQueue &queue, SerialBus &bus,
                             std::function<void(const ClassicalMessage &)> on_delivery = {});

struct NuclearCompensation {
    double acquired_phase_rad = 0;
    /// Compensating delay of the decoupling sequence, a multiple of the resolution.
    double delay_s = 0;
    double z_rotation_rad = 0;
    /// Acquired phase minus applied compensation, wrapped to (-pi, pi].
    double quantization_error_rad = 0;
};

/// Phase acquired by the memory over `n_attempts` attempts of
/// `attempt_duration_s` at the mean precession frequency, and its compensation
/// by a delay quantized to `resolution_s` within one Larmor period.
NuclearCompensation nuclear_phase_feedforward(long long n_attempts, const NuclearSpinParams &nuclear,
                                              double resolution_s, double attempt_duration_s);

struct PauliCorrection {
    bool x = false;
    bool z = false;
    std::string str() const;
};

struct GhzBranch {
    int sign_ab;
    int sign_bc;
    int outcome;  // Bob's reported communication-qubit outcome
    PauliCorrection charlie;
};

struct SwapBranch {
    int sign_ab;
    int sign_bc;
    int bit_memory;
    int bit_comm;
    PauliCorrection charlie;
};

const std::array<GhzBranch, 8> &ghz_feedforward_table();
const std::array<SwapBranch, 16> &swap_feedforward_table();
PauliCorrection ghz_correction(int sign_ab, int sign_bc, int outcome);
PauliCorrection swap_correction(int sign_ab, int sign_bc, int bit_memory, int bit_comm);

struct LinkConfig {
    LinkParams params;
    /// Forces the per-attempt herald probability (1.0 makes every attempt succeed).
    std::optional<double> herald_probability_override;
    /// Replaces the modeled state by the exact Bell state for the detector sign.
    bool ideal_state = false;
    /// Monte Carlo draws one optical phase per run instead of averaging.
    bool sample_phase = true;

    double herald_probability() const;
    DensityMatrix averaged_state(int sign) const;
};

struct ProtocolTimings {
    /// Preparation (charge/resonance checks, synchronization) per sequence.
    double preparation_s = 0;
    /// Fraction of wall-clock time available to entanglement attempts.
    double attempt_duty_factor = 1.0;
    double memory_swap_s = 1e-3;
    double local_gate_s = 500e-6;
    double readout_s = 10e-6;
    double cr_check_s = 50e-6;
    double feedforward_gate_s = 1e-6;
};

struct ProtocolConfig {
    LinkConfig link_ab;
    LinkConfig link_bc;
    int timeout_attempts = 450;
    MemoryDecayParams memory;
    bool memory_dephasing = true;
    NuclearSpinParams nuclear;
    /// When false the memory phase is compensated exactly.
    bool nuclear_quantization = true;
    ReadoutModel readout_alice;
    ReadoutModel readout_bob;
    ReadoutModel readout_charlie;
    double swap_gate_depolarizing_p = 0;
    double cr_check_pass_prob = 0.90;
    int ghz_herald_outcome = 0;
    double feedforward_resolution_s = 2e-9;
    /// Exponential dephasing time of Alice's and Charlie's qubits while they
    /// wait under dynamical decoupling; 0 means ideal decoupling.
    double comm_dephasing_time_s = 0;
    long long max_sequences = 100000000;
    CommTimings comm;
    ProtocolTimings timings;
    std::uint64_t seed = 1;

    std::vector<std::string> check() const;
    void validate() const;
};

/// All-ideal configuration: exact Bell states, certain heralding, no memory
/// or readout errors.
ProtocolConfig ideal_protocol_config();

enum class ProtocolKind : std::uint8_t { kDoubleLink, kGhz, kSwap };
const char *to_string(ProtocolKind k);

struct AppliedOperation {
    double time_s = 0;
    NodeId node = NodeId::kCharlie;
    std::string operation;
};

struct RunRecord {
    ProtocolKind kind = ProtocolKind::kDoubleLink;
    bool success = false;
    long long sequences = 0;
    long long total_attempts = 0;
    int attempts_ab = 0;
    int attempts_bc = 0;
    int sign_ab = 0;
    int sign_bc = 0;
    /// Reported (post readout error) outcome bits: GHZ {outcome}; swap {memory, comm}.
    std::vector<int> outcome_bits;
    /// Outcomes before readout error.
    std::vector<int> true_bits;
    bool cr_check_passed = true;
    std::vector<AppliedOperation> feedforward;
    std::optional<DensityMatrix> final_state;
    /// Fidelity of final_state to the protocol target; NaN without a state.
    double fidelity = 0;
    /// Double link only: fidelity of the Alice-memory and Bob-Charlie pairs.
    std::array<double, 2> pair_fidelity{};
    double memory_coherence = 1;
    double nuclear_residual_rad = 0;
    double duration_s = 0;
    std::vector<Event> events;
    std::vector<ClassicalMessage> messages;
};

RunRecord run_double_link(const ProtocolConfig &cfg, Rng &rng);
RunRecord run_ghz(const ProtocolConfig &cfg, Rng &rng);
RunRecord run_swap(const ProtocolConfig &cfg, Rng &rng);

struct ForcedBranch {
    int sign_ab;
    int sign_bc;
    /// GHZ: {outcome}; swap: {memory bit, comm bit}. Readout is taken as exact.
    std::vector<int> bits;
};

/// Runs one branch deterministically through the gate-level circuit and the
/// feed-forward tables; used to verify table completeness.
double branch_fidelity(const ProtocolConfig &cfg, ProtocolKind kind, const ForcedBranch &branch);

nlohmann::json to_json(const RunRecord &r, bool include_state = false, bool include_events = true);
std::string events_csv(const std::vector<Event> &events);

// Analytic (averaged) model.

/// Switches for isolating error sources in the analytic budgets.
struct NoiseToggles {
    bool link_ab = true;
    bool link_bc = true;
    bool memory_dephasing = true;
    bool memory_depolarizing = true;
    bool readout = true;
    bool nuclear_quantization = true;

    static NoiseToggles none();
    static NoiseToggles all();
};

ProtocolConfig apply_toggles(const ProtocolConfig &cfg, const NoiseToggles &t);

/// E[c(N) e^{-i r(N)}] over the Bob-Charlie heralding attempt N conditioned on
/// success within the timeout; r is the nuclear quantization residual.
Complex expected_memory_coherence(const ProtocolConfig &cfg);

struct GhzAnalytic {
    double fidelity = 0;
    /// P(Bob reports the herald outcome) given a double link.
    double herald_probability = 0;
    /// Heralded state averaged over detector signs and readout branches.
    CMatrix state;
};
GhzAnalytic analytic_ghz(const ProtocolConfig &cfg);

struct SwapAnalytic {
    /// Indexed by 2 * memory_bit + comm_bit.
    std::array<double, 4> outcome_probability{};
    std::array<double, 4> fidelity{};
    double fidelity_any = 0;
    /// Corrected Alice-Charlie states averaged per reported outcome and overall.
    std::array<CMatrix, 4> state;
    CMatrix state_any;
};
SwapAnalytic analytic_swap(const ProtocolConfig &cfg);

struct BudgetRow {
    std::string source;
    double infidelity = 0;
};

std::vector<BudgetRow> ghz_error_budget(const ProtocolConfig &cfg);
std::vector<BudgetRow> swap_error_budget(const ProtocolConfig &cfg);

struct RateEstimate {
    double double_link_probability_per_sequence = 0;
    double herald_probability_per_sequence = 0;
    double expected_sequence_duration_s = 0;
    double rate_hz = 0;
};

/// Expected heralding rate of a full sequence (GHZ or swap).
RateEstimate analytic_rate(const ProtocolConfig &cfg, ProtocolKind kind);

/// Samples N from the geometric law conditioned on N <= timeout.
int sample_truncated_geometric(double p, int timeout, Rng &rng);

}  // namespace qnet

#endif
