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

#include "qnet/protocol.h"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <unsupported/Eigen/KroneckerProduct>

namespace qnet {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kAlice = 0, kMemory = 1, kBobComm = 2, kCharlie = 3;

double wrap_pi(double x) {
    double w = std::remainder(x, kTwoPi);
    if (w <= -std::numbers::pi) w += kTwoPi;
    return w;
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(12);
    os << v;
    return os.str();
}

}  // namespace

const char *to_string(NodeId n) {
    switch (n) {
        case NodeId::kAlice: return "Alice";
        case NodeId::kBob: return "Bob";
        case NodeId::kCharlie: return "Charlie";
    }
    return "?";
}

const char *to_string(ProtocolKind k) {
    switch (k) {
        case ProtocolKind::kDoubleLink: return "double-link";
        case ProtocolKind::kGhz: return "ghz";
        case ProtocolKind::kSwap: return "swap";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Event queue and serial communication

void EventQueue::schedule(double time_s, std::string actor, std::string kind, std::string detail, Action action) {
    if (time_s < now_) throw ProtocolError("cannot schedule an event in the past");
    Pending p{Event{time_s, next_seq_++, std::move(actor), std::move(kind), std::move(detail)}, std::move(action)};
    pending_.push(std::move(p));
}

bool EventQueue::step() {
    if (pending_.empty()) return false;
    Pending p = pending_.top();
    pending_.pop();
    now_ = p.event.time_s;
    log_.push_back(p.event);
    if (p.action) p.action();
    return true;
}

void EventQueue::run() {
    while (step()) {
    }
}

ClassicalMessage SerialBus::send(EventQueue &queue, NodeId from, NodeId to, int bits, std::uint32_t payload,
                                 std::string label, std::function<void(const ClassicalMessage &)> on_delivery,
                                 double send_time_s) {
    if (bits < 1 || bits > 5) throw ProtocolError("serial messages carry 1 to 5 bits");
    if (from == to) throw ProtocolError("a node cannot message itself");
    if (bits < 32 && (payload >> bits) != 0) throw ProtocolError("payload does not fit in the declared bit count");
    ClassicalMessage msg;
    msg.sender = from;
    msg.receiver = to;
    msg.payload_bits = bits;
    msg.payload = payload;
    msg.send_time_s = send_time_s < 0 ? queue.now() : send_time_s;
    msg.delivery_time_s = msg.send_time_s + bits * timings_.bit_interval_s + timings_.decode_delay_s;
    msg.label = std::move(label);
    if (to == NodeId::kBob) {
        for (const auto &[s, e] : bob_port_busy_) {
            if (msg.send_time_s < e && s < msg.delivery_time_s) {
                throw CommCollision("message '" + msg.label + "' from " + to_string(from) +
                                    " overlaps another arrival at Bob's merged input port");
            }
        }
        bob_port_busy_.emplace_back(msg.send_time_s, msg.delivery_time_s);
    }
    sent_.push_back(msg);
    const std::string detail = msg.label + " bits=" + std::to_string(bits) + " payload=" + std::to_string(payload);
    queue.schedule(msg.send_time_s, to_string(from), "send", detail + " to=" + to_string(to));
    queue.schedule(msg.delivery_time_s, to_string(to), "receive", detail + " from=" + to_string(from),
                   [msg, cb = std::move(on_delivery)] {
                       if (cb) cb(msg);
                   });
    return msg;
}

ClassicalMessage serial_comm(const ClassicalMessage &msg, EventQueue &queue, SerialBus &bus,
                             std::function<void(const ClassicalMessage &)> on_delivery) {
    return bus.send(queue, msg.sender, msg.receiver, msg.payload_bits, msg.payload, msg.label, std::move(on_delivery),
                    msg.send_time_s);
}

// ---------------------------------------------------------------------------
// Nuclear-spin phase feed-forward

NuclearCompensation nuclear_phase_feedforward(long long n_attempts, const NuclearSpinParams &nuclear,
                                              double resolution_s, double attempt_duration_s) {
    if (n_attempts < 0) throw ProtocolError("attempt count must be >= 0");
    if (!(resolution_s > 0)) throw ProtocolError("feed-forward resolution must be > 0");
    if (resolution_s > nuclear.tau_larmor_s) {
        throw ProtocolError("feed-forward resolution exceeds the Larmor period; delays cannot cover 2 pi");
    }
    if (!(attempt_duration_s > 0)) throw ProtocolError("attempt duration must be > 0");
    const double f_mean = 0.5 * (nuclear.omega0_hz + nuclear.omega1_hz);
    // Whole turns per attempt drop out; keep only the fractional part so long
    // attempt counts do not lose precision.
    const double turns_per_attempt = f_mean * attempt_duration_s - std::floor(f_mean * attempt_duration_s);
    double turns = std::fmod(turns_per_attempt * static_cast<double>(n_attempts), 1.0);
    if (turns < 0) turns += 1.0;
    NuclearCompensation out;
    out.acquired_phase_rad = kTwoPi * turns;
    const double ideal_delay = turns * nuclear.tau_larmor_s;
    out.delay_s = std::round(ideal_delay / resolution_s) * resolution_s;
    const double applied = kTwoPi * out.delay_s / nuclear.tau_larmor_s;
    out.z_rotation_rad = wrap_pi(-applied);
    out.quantization_error_rad = wrap_pi(out.acquired_phase_rad - applied);
    return out;
}

// ---------------------------------------------------------------------------
// Feed-forward tables

std::string PauliCorrection::str() const {
    if (x && z) return "XZ";
    if (x) return "X";
    if (z) return "Z";
    return "I";
}

// Charlie's correction after Bob's local X on the memory, CNOT(memory -> comm)
// and a Z readout of the comm qubit. X is applied before Z.
const std::array<GhzBranch, 8> &ghz_feedforward_table() {
    static const std::array<GhzBranch, 8> table{{
        {+1, +1, 0, {true, false}},
        {+1, +1, 1, {false, false}},
        {+1, -1, 0, {true, true}},
        {+1, -1, 1, {false, true}},
        {-1, +1, 0, {true, true}},
        {-1, +1, 1, {false, true}},
        {-1, -1, 0, {true, false}},
        {-1, -1, 1, {false, false}},
    }};
    return table;
}

// Charlie's correction after CNOT(memory -> comm), H on the memory and Z
// readouts of both. X is applied before Z.
const std::array<SwapBranch, 16> &swap_feedforward_table() {
    static const std::array<SwapBranch, 16> table{{
        {+1, +1, 0, 0, {false, false}},
        {+1, +1, 0, 1, {true, false}},
        {+1, +1, 1, 0, {false, true}},
        {+1, +1, 1, 1, {true, true}},
        {+1, -1, 0, 0, {false, true}},
        {+1, -1, 0, 1, {true, true}},
        {+1, -1, 1, 0, {false, false}},
        {+1, -1, 1, 1, {true, false}},
        {-1, +1, 0, 0, {false, true}},
        {-1, +1, 0, 1, {true, true}},
        {-1, +1, 1, 0, {false, false}},
        {-1, +1, 1, 1, {true, false}},
        {-1, -1, 0, 0, {false, false}},
        {-1, -1, 0, 1, {true, false}},
        {-1, -1, 1, 0, {false, true}},
        {-1, -1, 1, 1, {true, true}},
    }};
    return table;
}

PauliCorrection ghz_correction(int sign_ab, int sign_bc, int outcome) {
    for (const auto &b : ghz_feedforward_table()) {
        if (b.sign_ab == sign_ab && b.sign_bc == sign_bc && b.outcome == outcome) return b.charlie;
    }
    throw ProtocolError("no GHZ feed-forward entry for this branch");
}

PauliCorrection swap_correction(int sign_ab, int sign_bc, int bit_memory, int bit_comm) {
    for (const auto &b : swap_feedforward_table()) {
        if (b.sign_ab == sign_ab && b.sign_bc == sign_bc && b.bit_memory == bit_memory && b.bit_comm == bit_comm) {
            return b.charlie;
        }
    }
    throw ProtocolError("no swap feed-forward entry for this branch");
}

// ---------------------------------------------------------------------------
// Configuration

double LinkConfig::herald_probability() const {
    return herald_probability_override ? *herald_probability_override : success_probability(params);
}

DensityMatrix LinkConfig::averaged_state(int sign) const {
    if (ideal_state) return DensityMatrix::from_pure(link_target(sign));
    return heralded_state(params, sign).state;
}

std::vector<std::string> ProtocolConfig::check() const {
    std::vector<std::string> out;
    auto prefixed = [&](const std::string &prefix, const std::vector<std::string> &diag) {
        for (const auto &d : diag) out.push_back(prefix + d);
    };
    prefixed("link_ab: ", link_ab.params.check());
    prefixed("link_bc: ", link_bc.params.check());
    for (const auto *l : {&link_ab, &link_bc}) {
        if (l->herald_probability_override && !(*l->herald_probability_override >= 0.0 &&
                                                 *l->herald_probability_override <= 1.0)) {
            out.push_back("herald_probability_override must lie in [0, 1]");
        }
    }
    if (timeout_attempts < 1) out.push_back("timeout_attempts must be >= 1");
    prefixed("memory: ", memory.check());
    prefixed("nuclear: ", nuclear.check());
    prefixed("readout.alice: ", readout_alice.check());
    prefixed("readout.bob: ", readout_bob.check());
    prefixed("readout.charlie: ", readout_charlie.check());
    if (!(swap_gate_depolarizing_p >= 0 && swap_gate_depolarizing_p <= 1)) {
        out.push_back("swap_gate_depolarizing_p must lie in [0, 1]");
    }
    if (!(cr_check_pass_prob >= 0 && cr_check_pass_prob <= 1)) out.push_back("cr_check_pass_prob must lie in [0, 1]");
    if (ghz_herald_outcome != 0 && ghz_herald_outcome != 1) out.push_back("ghz_herald_outcome must be 0 or 1");
    if (!(feedforward_resolution_s > 0)) out.push_back("feedforward_resolution_s must be > 0");
    if (feedforward_resolution_s > nuclear.tau_larmor_s) {
        out.push_back("feedforward_resolution_s must not exceed the Larmor period tau_larmor_s");
    }
    if (!(comm_dephasing_time_s >= 0)) out.push_back("comm_dephasing_time_s must be >= 0");
    if (max_sequences < 1) out.push_back("max_sequences must be >= 1");
    if (!(comm.bit_interval_s > 0)) out.push_back("comm.bit_interval_s must be > 0");
    if (!(comm.decode_delay_s >= 0)) out.push_back("comm.decode_delay_s must be >= 0");
    const auto &t = timings;
    if (!(t.attempt_duty_factor > 0 && t.attempt_duty_factor <= 1)) {
        out.push_back("timings.attempt_duty_factor must lie in (0, 1]");
    }
    for (double v : {t.preparation_s, t.memory_swap_s, t.local_gate_s, t.readout_s, t.cr_check_s, t.feedforward_gate_s}) {
        if (!(v >= 0)) {
            out.push_back("timings must be >= 0");
            break;
        }
    }
    return out;
}

void ProtocolConfig::validate() const {
    const auto d = check();
    if (!d.empty()) throw ProtocolError("invalid protocol config: " + d.front());
}

ProtocolConfig ideal_protocol_config() {
    ProtocolConfig cfg;
    for (LinkConfig *l : {&cfg.link_ab, &cfg.link_bc}) {
        l->ideal_state = true;
        l->herald_probability_override = 1.0;
        l->sample_phase = false;
    }
    cfg.memory_dephasing = false;
    cfg.nuclear_quantization = false;
    cfg.swap_gate_depolarizing_p = 0;
    cfg.cr_check_pass_prob = 1.0;
    return cfg;
}

// ---------------------------------------------------------------------------
// Circuit pieces shared by the Monte Carlo engine and the analytic model

namespace {

DensityMatrix apply_memory_noise(const DensityMatrix &rho, const ProtocolConfig &cfg, Complex kappa) {
    DensityMatrix out = rho;
    if (cfg.swap_gate_depolarizing_p > 0) {
        out = apply_channel(out, depolarizing_channel(cfg.swap_gate_depolarizing_p, 1), {kMemory});
    }
    if (kappa != Complex(1.0, 0.0)) out = apply_channel(out, complex_dephasing_channel(kappa), {kMemory});
    return out;
}

DensityMatrix ghz_entangle(const DensityMatrix &rho) {
    DensityMatrix out = apply_unitary(rho, gates::x(), {kMemory});
    return apply_unitary(out, gates::cnot(), {kMemory, kBobComm});
}

DensityMatrix swap_entangle(const DensityMatrix &rho) {
    DensityMatrix out = apply_unitary(rho, gates::cnot(), {kMemory, kBobComm});
    return apply_unitary(out, gates::h(), {kMemory});
}

DensityMatrix apply_correction(const DensityMatrix &rho, int qubit, const PauliCorrection &c) {
    DensityMatrix out = rho;
    if (c.x) out = apply_unitary(out, gates::x(), {qubit});
    if (c.z) out = apply_unitary(out, gates::z(), {qubit});
    return out;
}

int sample_sign(Rng &rng) {
    std::bernoulli_distribution coin(0.5);
    return coin(rng) ? 1 : -1;
}

int apply_readout(const ReadoutModel &m, int truth, Rng &rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return u(rng) < m.prob(truth, truth) ? truth : 1 - truth;
}

double memory_factor(const ProtocolConfig &cfg, int n_bc) {
    return cfg.memory_dephasing ? memory_coherence_factor(n_bc, cfg.memory) : 1.0;
}

double nuclear_residual(const ProtocolConfig &cfg, int n_bc) {
    if (!cfg.nuclear_quantization) return 0.0;
    return nuclear_phase_feedforward(n_bc, cfg.nuclear, cfg.feedforward_resolution_s,
                                     cfg.link_bc.params.attempt_duration_s)
        .quantization_error_rad;
}

CVector kron(const CVector &high, const CVector &low) { return Eigen::kroneckerProduct(high, low).eval(); }

}  // namespace

int sample_truncated_geometric(double p, int timeout, Rng &rng) {
    if (timeout < 1) throw ProtocolError("timeout must be >= 1");
    if (!(p > 0 && p <= 1)) throw ProtocolError("truncated geometric needs p in (0, 1]");
    if (p >= 1) return 1;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double log_q = std::log1p(-p);
    const double mass = -std::expm1(timeout * log_q);  // P(N <= timeout)
    // Inverse CDF: P(N <= n) = 1 - q^n.
    const double n = std::ceil(std::log1p(-u(rng) * mass) / log_q);
    return static_cast<int>(std::clamp(n, 1.0, static_cast<double>(timeout)));
}

// ---------------------------------------------------------------------------
// Monte Carlo engine

namespace {

class Engine {
   public:
    Engine(const ProtocolConfig &cfg, Rng &rng, ProtocolKind kind) : cfg_(cfg), rng_(rng), bus_(cfg.comm) {
        cfg_.validate();
        rec_.kind = kind;
        rec_.fidelity = std::numeric_limits<double>::quiet_NaN();
    }

    RunRecord run() {
        if (!sample_sequences()) return finish();
        schedule_final_sequence();
        queue_.run();
        return finish();
    }

   private:
    double d_ab() const { return cfg_.link_ab.params.attempt_duration_s / cfg_.timings.attempt_duty_factor; }
    double d_bc() const { return cfg_.link_bc.params.attempt_duration_s / cfg_.timings.attempt_duty_factor; }

    /// Samples every failed sequence before the successful one. Returns false
    /// if the double link cannot be established within max_sequences.
    bool sample_sequences() {
        const int timeout = cfg_.timeout_attempts;
        pa_ = cfg_.link_ab.herald_probability();
        pb_ = cfg_.link_bc.herald_probability();
        const double block_a = block_success_probability(pa_, timeout);
        const double block_b = block_success_probability(pb_, timeout);
        const double ps = block_a * block_b;
        const auto &t = cfg_.timings;
        if (ps <= 0) {
            rec_.sequences = cfg_.max_sequences;
            rec_.total_attempts = cfg_.max_sequences * static_cast<long long>(timeout);
            rec_.duration_s = static_cast<double>(cfg_.max_sequences) * (t.preparation_s + timeout * d_ab());
            queue_.schedule(rec_.duration_s, "network", "give_up", "double link impossible (zero herald probability)");
            queue_.run();
            return false;
        }
        long long failures = 0;
        if (ps < 1) failures = std::geometric_distribution<long long>(ps)(rng_);
        if (failures >= cfg_.max_sequences) failures = cfg_.max_sequences;
        long long bc_failures = 0;
        if (failures > 0) {
            const double frac = block_a * (1 - block_b) / (1 - ps);
            bc_failures = std::binomial_distribution<long long>(failures, std::clamp(frac, 0.0, 1.0))(rng_);
        }
        double time = static_cast<double>(failures) * t.preparation_s +
                      static_cast<double>(failures - bc_failures) * timeout * d_ab();
        long long attempts = (failures - bc_failures) * timeout;
        for (long long i = 0; i < bc_failures; ++i) {
            const int n = sample_truncated_geometric(pa_, timeout, rng_);
            time += n * d_ab() + t.memory_swap_s + timeout * d_bc();
            attempts += n + timeout;
        }
        rec_.sequences = failures;
        rec_.total_attempts = attempts;
        t0_ = time;
        if (failures > 0) {
            queue_.schedule(0.0, "network", "restarts",
                            std::to_string(failures) + " timed-out sequences (" + std::to_string(bc_failures) +
                                " after Alice-Bob success)");
        }
        if (failures >= cfg_.max_sequences) {
            rec_.duration_s = time;
            queue_.schedule(time, "network", "give_up", "max_sequences reached");
            queue_.run();
            return false;
        }
        rec_.sequences += 1;
        return true;
    }

    void schedule_final_sequence() {
        const auto &t = cfg_.timings;
        queue_.schedule(t0_, "network", "prepare", "charge/resonance checks and synchronization");
        const double t_start = t0_ + t.preparation_s;
        rec_.attempts_ab = sample_truncated_geometric(pa_, cfg_.timeout_attempts, rng_);
        queue_.schedule(t_start, "station-AB", "attempts_start");
        t_ab_ = t_start + rec_.attempts_ab * d_ab();
        queue_.schedule(t_ab_, "station-AB", "herald", "attempt=" + std::to_string(rec_.attempts_ab),
                        [this] { on_herald_ab(); });
    }

    DensityMatrix sample_link_state(const LinkConfig &l, int sign) {
        if (l.ideal_state) return DensityMatrix::from_pure(link_target(sign));
        if (l.sample_phase && l.params.phase_sigma_deg > 0) {
            std::normal_distribution<double> g(0.0, l.params.phase_sigma_deg * std::numbers::pi / 180.0);
            return heralded_state_at_phase(l.params, sign, g(rng_));
        }
        return heralded_state(l.params, sign).state;
    }

    void on_herald_ab() {
        rec_.sign_ab = sample_sign(rng_);
        rho_ab_ = sample_link_state(cfg_.link_ab, rec_.sign_ab);
        rec_.total_attempts += rec_.attempts_ab;
        queue_.schedule(queue_.now(), "Alice", "decoupling_start", "sign=" + std::to_string(rec_.sign_ab));
        bus_.send(queue_, NodeId::kAlice, NodeId::kBob, 1, rec_.sign_ab > 0 ? 0u : 1u, "ab_ready");
        const double t_swap = queue_.now() + cfg_.timings.memory_swap_s;
        queue_.schedule(t_swap, "Bob", "memory_swap", "comm -> memory", [this] { on_memory_swap(); });
    }

    void on_memory_swap() {
        rec_.attempts_bc = sample_truncated_geometric(pb_, cfg_.timeout_attempts, rng_);
        queue_.schedule(queue_.now(), "station-BC", "attempts_start");
        const double t_bc = queue_.now() + rec_.attempts_bc * d_bc();
        queue_.schedule(t_bc, "station-BC", "herald", "attempt=" + std::to_string(rec_.attempts_bc),
                        [this] { on_herald_bc(); });
    }

    void on_herald_bc() {
        t_bc_ = queue_.now();
        rec_.sign_bc = sample_sign(rng_);
        rec_.total_attempts += rec_.attempts_bc;
        const DensityMatrix rho_bc = sample_link_state(cfg_.link_bc, rec_.sign_bc);
        rec_.memory_coherence = memory_factor(cfg_, rec_.attempts_bc);
        queue_.schedule(t_bc_, "Charlie", "decoupling_start", "sign=" + std::to_string(rec_.sign_bc));
        bus_.send(queue_, NodeId::kCharlie, NodeId::kBob, 1, rec_.sign_bc > 0 ? 0u : 1u, "bc_ready",
                  [this](const ClassicalMessage &) { on_double_link_ready(); });

        const NuclearCompensation comp = nuclear_phase_feedforward(
            rec_.attempts_bc, cfg_.nuclear, cfg_.feedforward_resolution_s, cfg_.link_bc.params.attempt_duration_s);
        rec_.nuclear_residual_rad = cfg_.nuclear_quantization ? comp.quantization_error_rad : 0.0;
        rho_ = rho_ab_->tensor(rho_bc);
        // Rz(r) multiplies the memory coherence by e^{-i r}.
        const Complex kappa = rec_.memory_coherence * std::polar(1.0, -rec_.nuclear_residual_rad);
        rho_ = apply_memory_noise(*rho_, cfg_, kappa);
        queue_.schedule(t_bc_ + comp.delay_s, "Bob", "nuclear_feedforward",
                        "delay_ns=" + fmt_double(comp.delay_s * 1e9) + " residual_rad=" +
                            fmt_double(rec_.nuclear_residual_rad));
    }

    void on_double_link_ready() {
        queue_.schedule(queue_.now(), "Bob", "double_link_ready");
        switch (rec_.kind) {
            case ProtocolKind::kDoubleLink: finish_double_link(); break;
            case ProtocolKind::kGhz: start_ghz(); break;
            case ProtocolKind::kSwap: start_swap(); break;
        }
    }

    void apply_comm_dephasing(DensityMatrix &rho, int alice_q, int charlie_q) const {
        if (cfg_.comm_dephasing_time_s <= 0) return;
        const double now = queue_.now();
        rho = apply_channel(rho, dephasing_channel(std::exp(-(now - t_ab_) / cfg_.comm_dephasing_time_s)), {alice_q});
        rho = apply_channel(rho, dephasing_channel(std::exp(-(now - t_bc_) / cfg_.comm_dephasing_time_s)),
                            {charlie_q});
    }

    void finish_double_link() {
        DensityMatrix rho = *rho_;
        apply_comm_dephasing(rho, kAlice, kCharlie);
        const CVector psi_ab = link_target(rec_.sign_ab), psi_bc = link_target(rec_.sign_bc);
        rec_.pair_fidelity[0] = fidelity_with_pure(partial_trace(rho, {kAlice, kMemory}), psi_ab);
        rec_.pair_fidelity[1] = fidelity_with_pure(partial_trace(rho, {kBobComm, kCharlie}), psi_bc);
        rec_.fidelity = fidelity_with_pure(rho, kron(psi_bc, psi_ab));
        rec_.final_state = std::move(rho);
        rec_.success = true;
        queue_.schedule(queue_.now(), "network", "delivered", "double link");
    }

    void start_ghz() {
        const double t_gate = queue_.now();
        queue_.schedule(t_gate, "Bob", "gate", "X(memory); CNOT(memory -> comm)",
                        [this] { rho_ = ghz_entangle(*rho_); });
        queue_.schedule(t_gate + cfg_.timings.local_gate_s, "Bob", "readout", "comm qubit, Z basis", [this] {
            const MeasurementResult m = measure_projective(*rho_, kBobComm, Pauli::Z, rng_);
            const int reported = apply_readout(cfg_.readout_bob, m.outcome, rng_);
            rec_.true_bits = {m.outcome};
            rec_.outcome_bits = {reported};
            rho_ = partial_trace(m.post_state, {kAlice, kMemory, kCharlie});
            queue_.schedule(queue_.now() + cfg_.timings.readout_s, "Bob", "readout_done",
                            "outcome=" + std::to_string(reported), [this] { after_ghz_readout(); });
        });
    }

    void after_ghz_readout() {
        const int outcome = rec_.outcome_bits[0];
        if (outcome != cfg_.ghz_herald_outcome) {
            queue_.schedule(queue_.now(), "Bob", "no_herald", "outcome=" + std::to_string(outcome));
            return;
        }
        const std::uint32_t payload = static_cast<std::uint32_t>(outcome) | (rec_.sign_ab > 0 ? 0u : 2u);
        bus_.send(queue_, NodeId::kBob, NodeId::kCharlie, 2, payload, "ghz_outcome", [this](const ClassicalMessage &m) {
            const int outcome_rx = static_cast<int>(m.payload & 1u);
            const int sign_ab_rx = (m.payload & 2u) ? -1 : 1;
            const PauliCorrection c = ghz_correction(sign_ab_rx, rec_.sign_bc, outcome_rx);
            apply_charlie_correction(c, 2, [this] {
                const DensityMatrix &rho = *rho_;
                rec_.fidelity = fidelity_with_pure(rho, ghz_vector(3));
            });
        });
    }

    void start_swap() {
        const double t_gate = queue_.now();
        queue_.schedule(t_gate, "Bob", "gate", "CNOT(memory -> comm); H(memory)",
                        [this] { rho_ = swap_entangle(*rho_); });
        queue_.schedule(t_gate + cfg_.timings.local_gate_s, "Bob", "readout", "memory and comm, Z basis", [this] {
            const MeasurementResult mm = measure_projective(*rho_, kMemory, Pauli::Z, rng_);
            const MeasurementResult mc = measure_projective(mm.post_state, kBobComm, Pauli::Z, rng_);
            const int rep_m = apply_readout(cfg_.readout_bob, mm.outcome, rng_);
            const int rep_c = apply_readout(cfg_.readout_bob, mc.outcome, rng_);
            rec_.true_bits = {mm.outcome, mc.outcome};
            rec_.outcome_bits = {rep_m, rep_c};
            rho_ = partial_trace(mc.post_state, {kAlice, kCharlie});
            const double t_cr = queue_.now() + cfg_.timings.readout_s;
            queue_.schedule(t_cr, "Bob", "readout_done",
                            "bsm=" + std::to_string(rep_m) + std::to_string(rep_c));
            queue_.schedule(t_cr + cfg_.timings.cr_check_s, "Bob", "cr_check", "", [this] { after_cr_check(); });
        });
    }

    void after_cr_check() {
        std::bernoulli_distribution pass(cfg_.cr_check_pass_prob);
        rec_.cr_check_passed = pass(rng_);
        if (!rec_.cr_check_passed) {
            queue_.schedule(queue_.now(), "Bob", "no_herald", "cr check failed");
            return;
        }
        const std::uint32_t payload = static_cast<std::uint32_t>(rec_.outcome_bits[0]) |
                                      static_cast<std::uint32_t>(rec_.outcome_bits[1]) << 1 |
                                      (rec_.sign_ab > 0 ? 0u : 4u);
        bus_.send(queue_, NodeId::kBob, NodeId::kCharlie, 3, payload, "bsm_outcome", [this](const ClassicalMessage &m) {
            const int bit_m = static_cast<int>(m.payload & 1u);
            const int bit_c = static_cast<int>((m.payload >> 1) & 1u);
            const int sign_ab_rx = (m.payload & 4u) ? -1 : 1;
            const PauliCorrection c = swap_correction(sign_ab_rx, rec_.sign_bc, bit_m, bit_c);
            apply_charlie_correction(c, 1, [this] {
                rec_.fidelity = fidelity_with_pure(*rho_, bell_vector(BellState::PhiPlus));
            });
        });
    }

    /// Applies Charlie's correction on reduced-register qubit `charlie_q`, then
    /// marks the run delivered after the gate time.
    void apply_charlie_correction(const PauliCorrection &c, int charlie_q, std::function<void()> score) {
        rec_.feedforward.push_back({queue_.now(), NodeId::kCharlie, c.str()});
        queue_.schedule(queue_.now(), "Charlie", "feedforward", c.str(), [this, c, charlie_q] {
            rho_ = apply_correction(*rho_, charlie_q, c);
        });
        queue_.schedule(queue_.now() + cfg_.timings.feedforward_gate_s, "network", "delivered", to_string(rec_.kind),
                        [this, charlie_q, score = std::move(score)] {
                            DensityMatrix rho = *rho_;
                            apply_comm_dephasing(rho, 0, charlie_q);
                            rho_ = std::move(rho);
                            score();
                            rec_.final_state = *rho_;
                            rec_.success = true;
                        });
    }

    RunRecord finish() {
        rec_.events = queue_.log();
        rec_.messages = bus_.sent();
        if (!rec_.events.empty()) rec_.duration_s = std::max(rec_.duration_s, rec_.events.back().time_s);
        return std::move(rec_);
    }

    ProtocolConfig cfg_;
    Rng &rng_;
    EventQueue queue_;
    SerialBus bus_;
    RunRecord rec_;
    double pa_ = 0, pb_ = 0;
    double t0_ = 0, t_ab_ = 0, t_bc_ = 0;
    std::optional<DensityMatrix> rho_ab_;
    std::optional<DensityMatrix> rho_;
};

}  // namespace

RunRecord run_double_link(const ProtocolConfig &cfg, Rng &rng) { return Engine(cfg, rng, ProtocolKind::kDoubleLink).run(); }
RunRecord run_ghz(const ProtocolConfig &cfg, Rng &rng) { return Engine(cfg, rng, ProtocolKind::kGhz).run(); }
RunRecord run_swap(const ProtocolConfig &cfg, Rng &rng) { return Engine(cfg, rng, ProtocolKind::kSwap).run(); }

// ---------------------------------------------------------------------------
// Deterministic branches and the analytic model

double branch_fidelity(const ProtocolConfig &cfg, ProtocolKind kind, const ForcedBranch &branch) {
    cfg.validate();
    DensityMatrix rho = cfg.link_ab.averaged_state(branch.sign_ab).tensor(cfg.link_bc.averaged_state(branch.sign_bc));
    rho = apply_memory_noise(rho, cfg, 1.0);
    switch (kind) {
        case ProtocolKind::kGhz: {
            if (branch.bits.size() != 1) throw ProtocolError("GHZ branch needs one outcome bit");
            rho = ghz_entangle(rho);
            const MeasurementResult m = project(rho, kBobComm, Pauli::Z, branch.bits[0]);
            DensityMatrix red = partial_trace(m.post_state, {kAlice, kMemory, kCharlie});
            red = apply_correction(red, 2, ghz_correction(branch.sign_ab, branch.sign_bc, branch.bits[0]));
            return fidelity_with_pure(red, ghz_vector(3));
        }
        case ProtocolKind::kSwap: {
            if (branch.bits.size() != 2) throw ProtocolError("swap branch needs two outcome bits");
            rho = swap_entangle(rho);
            const MeasurementResult mm = project(rho, kMemory, Pauli::Z, branch.bits[0]);
            const MeasurementResult mc = project(mm.post_state, kBobComm, Pauli::Z, branch.bits[1]);
            DensityMatrix red = partial_trace(mc.post_state, {kAlice, kCharlie});
            red = apply_correction(red, 1,
                                   swap_correction(branch.sign_ab, branch.sign_bc, branch.bits[0], branch.bits[1]));
            return fidelity_with_pure(red, bell_vector(BellState::PhiPlus));
        }
        case ProtocolKind::kDoubleLink: {
            const CVector target = kron(link_target(branch.sign_bc), link_target(branch.sign_ab));
            return fidelity_with_pure(rho, target);
        }
    }
    return 0.0;
}

NoiseToggles NoiseToggles::none() { return {false, false, false, false, false, false}; }
NoiseToggles NoiseToggles::all() { return {}; }

ProtocolConfig apply_toggles(const ProtocolConfig &cfg, const NoiseToggles &t) {
    ProtocolConfig out = cfg;
    if (!t.link_ab) out.link_ab.ideal_state = true;
    if (!t.link_bc) out.link_bc.ideal_state = true;
    if (!t.memory_dephasing) out.memory_dephasing = false;
    if (!t.memory_depolarizing) out.swap_gate_depolarizing_p = 0;
    if (!t.readout) out.readout_bob = ReadoutModel{};
    if (!t.nuclear_quantization) out.nuclear_quantization = false;
    return out;
}

Complex expected_memory_coherence(const ProtocolConfig &cfg) {
    if (!cfg.memory_dephasing && !cfg.nuclear_quantization) return 1.0;
    const double p = cfg.link_bc.herald_probability();
    const int timeout = cfg.timeout_attempts;
    if (p >= 1.0) return memory_factor(cfg, 1) * std::polar(1.0, -nuclear_residual(cfg, 1));
    const double q = 1.0 - p;
    Complex acc = 0.0;
    double norm = 0.0, w = p;
    for (int n = 1; n <= timeout; ++n, w *= q) {
        acc += w * memory_factor(cfg, n) * std::polar(1.0, -nuclear_residual(cfg, n));
        norm += w;
    }
    return acc / norm;
}

GhzAnalytic analytic_ghz(const ProtocolConfig &cfg) {
    cfg.validate();
    const Complex kappa = expected_memory_coherence(cfg);
    const int h = cfg.ghz_herald_outcome;
    double num = 0, den = 0;
    CMatrix acc = CMatrix::Zero(8, 8);
    for (int s1 : {1, -1}) {
        for (int s2 : {1, -1}) {
            DensityMatrix rho = cfg.link_ab.averaged_state(s1).tensor(cfg.link_bc.averaged_state(s2));
            rho = ghz_entangle(apply_memory_noise(rho, cfg, kappa));
            const PauliCorrection c = ghz_correction(s1, s2, h);
            for (int b : {0, 1}) {
                const double pb = outcome_zero_probability(rho, kBobComm, Pauli::Z);
                const double p_true = b == 0 ? pb : 1 - pb;
                const double w = 0.25 * p_true * cfg.readout_bob.prob(h, b);
                if (w <= 1e-15) continue;
                const MeasurementResult m = project(rho, kBobComm, Pauli::Z, b);
                DensityMatrix red = partial_trace(m.post_state, {kAlice, kMemory, kCharlie});
                red = apply_correction(red, 2, c);
                num += w * fidelity_with_pure(red, ghz_vector(3));
                den += w;
                acc += w * red.matrix();
            }
        }
    }
    return {num / den, den, acc / den};
}

SwapAnalytic analytic_swap(const ProtocolConfig &cfg) {
    cfg.validate();
    const Complex kappa = expected_memory_coherence(cfg);
    SwapAnalytic out;
    std::array<double, 4> fsum{};
    out.state.fill(CMatrix::Zero(4, 4));
    for (int s1 : {1, -1}) {
        for (int s2 : {1, -1}) {
            DensityMatrix rho = cfg.link_ab.averaged_state(s1).tensor(cfg.link_bc.averaged_state(s2));
            rho = swap_entangle(apply_memory_noise(rho, cfg, kappa));
            for (int tm : {0, 1}) {
                const double p_m0 = outcome_zero_probability(rho, kMemory, Pauli::Z);
                const double p_tm = tm == 0 ? p_m0 : 1 - p_m0;
                if (p_tm <= 1e-15) continue;
                const MeasurementResult mm = project(rho, kMemory, Pauli::Z, tm);
                for (int tc : {0, 1}) {
                    const double p_c0 = outcome_zero_probability(mm.post_state, kBobComm, Pauli::Z);
                    const double p_tc = tc == 0 ? p_c0 : 1 - p_c0;
                    if (p_tc <= 1e-15) continue;
                    const MeasurementResult mc = project(mm.post_state, kBobComm, Pauli::Z, tc);
                    const DensityMatrix red = partial_trace(mc.post_state, {kAlice, kCharlie});
                    for (int rm : {0, 1}) {
                        for (int rc : {0, 1}) {
                            const double w = 0.25 * p_tm * p_tc * cfg.readout_bob.prob(rm, tm) *
                                             cfg.readout_bob.prob(rc, tc);
                            if (w <= 0) continue;
                            const DensityMatrix fixed = apply_correction(red, 1, swap_correction(s1, s2, rm, rc));
                            const int o = 2 * rm + rc;
                            out.outcome_probability[o] += w;
                            fsum[o] += w * fidelity_with_pure(fixed, bell_vector(BellState::PhiPlus));
                            out.state[static_cast<std::size_t>(o)] += w * fixed.matrix();
                        }
                    }
                }
            }
        }
    }
    out.state_any = CMatrix::Zero(4, 4);
    for (std::size_t o = 0; o < 4; ++o) {
        out.fidelity[o] = out.outcome_probability[o] > 0 ? fsum[o] / out.outcome_probability[o] : 0.0;
        out.fidelity_any += fsum[o];
        out.state_any += out.state[o];
        if (out.outcome_probability[o] > 0) out.state[o] /= out.outcome_probability[o];
    }
    return out;
}

namespace {

NoiseToggles only(bool NoiseToggles::*field) {
    NoiseToggles t = NoiseToggles::none();
    t.*field = true;
    return t;
}

}  // namespace

std::vector<BudgetRow> ghz_error_budget(const ProtocolConfig &cfg) {
    auto infid = [&](const NoiseToggles &t) { return 1.0 - analytic_ghz(apply_toggles(cfg, t)).fidelity; };
    NoiseToggles links = NoiseToggles::none();
    links.link_ab = links.link_bc = true;
    NoiseToggles ff = NoiseToggles::none();
    ff.readout = ff.nuclear_quantization = true;
    return {
        {"link AB state", infid(only(&NoiseToggles::link_ab))},
        {"link BC state", infid(only(&NoiseToggles::link_bc))},
        {"memory dephasing", infid(only(&NoiseToggles::memory_dephasing))},
        {"memory depolarizing", infid(only(&NoiseToggles::memory_depolarizing))},
        {"feed-forward", infid(ff)},
        {"links combined", infid(links)},
        {"combined", infid(NoiseToggles::all())},
    };
}

std::vector<BudgetRow> swap_error_budget(const ProtocolConfig &cfg) {
    auto any = [&](const NoiseToggles &t) { return 1.0 - analytic_swap(apply_toggles(cfg, t)).fidelity_any; };
    auto zero = [&](const NoiseToggles &t) { return 1.0 - analytic_swap(apply_toggles(cfg, t)).fidelity[0]; };
    NoiseToggles ff = NoiseToggles::none();
    ff.readout = ff.nuclear_quantization = true;
    return {
        {"link AB state", any(only(&NoiseToggles::link_ab))},
        {"link BC state", any(only(&NoiseToggles::link_bc))},
        {"memory dephasing", any(only(&NoiseToggles::memory_dephasing))},
        {"memory depolarizing", any(only(&NoiseToggles::memory_depolarizing))},
        {"feed-forward (00)", zero(ff)},
        {"feed-forward (any)", any(ff)},
        {"combined (00)", zero(NoiseToggles::all())},
        {"combined (any)", any(NoiseToggles::all())},
    };
}

RateEstimate analytic_rate(const ProtocolConfig &cfg, ProtocolKind kind) {
    cfg.validate();
    const auto &t = cfg.timings;
    const int timeout = cfg.timeout_attempts;
    const double pa = cfg.link_ab.herald_probability(), pb = cfg.link_bc.herald_probability();
    const double block_a = block_success_probability(pa, timeout), block_b = block_success_probability(pb, timeout);
    const double d_ab = cfg.link_ab.params.attempt_duration_s / t.attempt_duty_factor;
    const double d_bc = cfg.link_bc.params.attempt_duration_s / t.attempt_duty_factor;
    RateEstimate r;
    r.double_link_probability_per_sequence = block_a * block_b;
    double post = 0, herald = 1;
    switch (kind) {
        case ProtocolKind::kDoubleLink: break;
        case ProtocolKind::kGhz:
            herald = analytic_ghz(cfg).herald_probability;
            post = t.local_gate_s + t.readout_s;
            break;
        case ProtocolKind::kSwap:
            herald = cfg.cr_check_pass_prob;
            post = t.local_gate_s + t.readout_s + t.cr_check_s;
            break;
    }
    r.herald_probability_per_sequence = r.double_link_probability_per_sequence * herald;
    r.expected_sequence_duration_s = t.preparation_s + expected_block_attempts(pa, timeout) * d_ab +
                                     block_a * (t.memory_swap_s + expected_block_attempts(pb, timeout) * d_bc) +
                                     r.double_link_probability_per_sequence * post;
    r.rate_hz = r.herald_probability_per_sequence / r.expected_sequence_duration_s;
    return r;
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json to_json(const RunRecord &r, bool include_state, bool include_events) {
    nlohmann::json j;
    j["kind"] = to_string(r.kind);
    j["success"] = r.success;
    j["sequences"] = r.sequences;
    j["total_attempts"] = r.total_attempts;
    j["attempts_ab"] = r.attempts_ab;
    j["attempts_bc"] = r.attempts_bc;
    j["sign_ab"] = r.sign_ab;
    j["sign_bc"] = r.sign_bc;
    j["outcome_bits"] = r.outcome_bits;
    j["true_bits"] = r.true_bits;
    j["cr_check_passed"] = r.cr_check_passed;
    j["fidelity"] = std::isnan(r.fidelity) ? nlohmann::json(nullptr) : nlohmann::json(r.fidelity);
    if (r.kind == ProtocolKind::kDoubleLink && r.success) j["pair_fidelity"] = r.pair_fidelity;
    j["memory_coherence"] = r.memory_coherence;
    j["nuclear_residual_rad"] = r.nuclear_residual_rad;
    j["duration_s"] = r.duration_s;
    auto &ff = j["feedforward"] = nlohmann::json::array();
    for (const auto &op : r.feedforward) {
        ff.push_back({{"time_s", op.time_s}, {"node", to_string(op.node)}, {"operation", op.operation}});
    }
    if (include_state && r.final_state) {
        const auto &m = r.final_state->matrix();
        nlohmann::json re = nlohmann::json::array(), im = nlohmann::json::array();
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            std::vector<double> rr, ii;
            for (Eigen::Index k = 0; k < m.cols(); ++k) {
                rr.push_back(m(i, k).real());
                ii.push_back(m(i, k).imag());
            }
            re.push_back(rr);
            im.push_back(ii);
        }
        j["final_state"] = {{"real", re}, {"imag", im}};
    }
    if (include_events) {
        auto &ev = j["events"] = nlohmann::json::array();
        for (const auto &e : r.events) {
            ev.push_back({{"time_s", e.time_s}, {"actor", e.actor}, {"kind", e.kind}, {"detail", e.detail}});
        }
    }
    return j;
}

std::string events_csv(const std::vector<Event> &events) {
    std::ostringstream os;
    os.precision(15);
    os << "time_s,seq,actor,kind,detail\n";
    for (const auto &e : events) {
        std::string d = e.detail;
        for (char &c : d) {
            if (c == ',' || c == '"') c = ';';
        }
        os << e.time_s << ',' << e.seq << ',' << e.actor << ',' << e.kind << ',' << d << '\n';
    }
    return os.str();
}

}  // namespace qnet
