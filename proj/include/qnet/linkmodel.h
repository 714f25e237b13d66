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

#ifndef QNET_LINKMODEL_H
#define QNET_LINKMODEL_H

// Heralded single-photon entanglement between two nodes `a` and `b`.
//
// The heralded two-qubit state puts node a on qubit 0 and node b on qubit 1.
// Spin state 0 is the bright state: "01" (a bright, b dark) has population
// p01 = alpha_a (1 - alpha_b)(pdet_a + 2 p_dc).

#include <string>
#include <utility>
#include <vector>

#include "qnet/qstate.h"

namespace qnet {

class LinkError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

/// Coherence loss per unit double-excitation probability. Calibrated once so
/// that the standalone double-excitation infidelity of the Alice-Bob link
/// comes out at 5.5e-2 with p_double = 0.06.
inline constexpr double kDoubleExcitationCoefficient = 1.9;

struct LinkParams {
    double alpha_a = 0.05;
    double alpha_b = 0.05;
    double pdet_a = 4e-4;
    double pdet_b = 4e-4;
    double p_dc = 0.0;
    double visibility = 1.0;
    double phase_sigma_deg = 0.0;
    double p_double = 0.0;
    double attempt_duration_s = 3.8e-6;

    /// Field-level diagnostics, empty when valid.
    std::vector<std::string> check() const;
    void validate() const;
};

struct HeraldProbabilities {
    double p00 = 0, p01 = 0, p10 = 0, p11 = 0;
    double total() const { return p00 + p01 + p10 + p11; }
};

HeraldProbabilities herald_probabilities(const LinkParams &p);

/// Herald probability per attempt. Evaluates the formula without the
/// invariant checks of heralded_state, so degenerate inputs are allowed.
double success_probability(const LinkParams &p);

/// Magnitude of the heralded coherence before normalization.
double coherence_magnitude(const LinkParams &p);

struct HeraldedLinkResult {
    DensityMatrix state;
    double p_tot = 0;
    int detector_sign = 1;
    double rate_hz = 0;
};

/// Phase-averaged heralded state; detector_sign selects Psi+ (+1) or Psi- (-1).
HeraldedLinkResult heralded_state(const LinkParams &p, int detector_sign);

/// Heralded state for a single realisation of the optical phase error. The
/// Gaussian phase spread is not applied; `phase_rad` rotates the coherence.
DensityMatrix heralded_state_at_phase(const LinkParams &p, int detector_sign, double phase_rad);

/// Target Bell vector for a detector sign.
CVector link_target(int detector_sign);

double link_fidelity(const LinkParams &p, int detector_sign = 1);

struct ErrorBudget {
    std::vector<std::pair<std::string, double>> entries;
    double combined = 0;

    double at(const std::string &name) const;
};

/// Budget rows in order: double emission, phase uncertainty, double
/// excitation, distinguishability, dark counts.
ErrorBudget error_budget(const LinkParams &p);

/// Parameters with every error except the intrinsic alpha term switched off.
LinkParams alpha_only(const LinkParams &p);

struct AttemptOutcome {
    bool success = false;
    int attempts = 0;
};

/// Geometric sampling of the attempt that heralds. A failed block reports
/// `timeout` attempts.
AttemptOutcome sample_attempts_until_success(double p_tot, Rng &rng, int timeout);
AttemptOutcome sample_attempts_until_success(const LinkParams &p, Rng &rng, int timeout);

/// P(success within `timeout` attempts) = 1 - (1 - p)^timeout.
double block_success_probability(double p_tot, int timeout);

/// Mean heralding attempt conditioned on success within `timeout`.
double truncated_geometric_mean(double p_tot, int timeout);

/// Expected attempts spent per block, successful or not.
double expected_block_attempts(double p_tot, int timeout);

/// Which emission pattern produced a herald, as an index into
/// (p00, p01, p10, p11). Index k has bits "ab" with a = k >> 1, b = k & 1.
int sample_emission_pattern(const LinkParams &p, Rng &rng);

double raw_rate_hz(const LinkParams &p);
double duty_cycled_rate_hz(const LinkParams &p, double duty_factor);

}  // namespace qnet

#endif
