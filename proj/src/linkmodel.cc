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

#include "qnet/linkmodel.h"

#include <cmath>
#include <numbers>

namespace qnet {

namespace {

constexpr int kIdx01 = 2;  // node a in 0, node b in 1
constexpr int kIdx10 = 1;

void check_sign(int s) {
    if (s != 1 && s != -1) throw LinkError("detector sign must be +1 or -1");
}

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

CMatrix link_matrix(const LinkParams &p, Complex coherence) {
    const HeraldProbabilities h = herald_probabilities(p);
    const double pt = h.total();
    CMatrix m = CMatrix::Zero(4, 4);
    m(0, 0) = h.p00 / pt;
    m(kIdx01, kIdx01) = h.p01 / pt;
    m(kIdx10, kIdx10) = h.p10 / pt;
    m(3, 3) = h.p11 / pt;
    m(kIdx01, kIdx10) = coherence / pt;
    m(kIdx10, kIdx01) = std::conj(coherence) / pt;
    return m;
}

}  // namespace

std::vector<std::string> LinkParams::check() const {
    std::vector<std::string> out;
    auto open01 = [&](const char *name, double v) {
        if (!(v > 0.0 && v < 1.0)) out.push_back(std::string(name) + " must lie in (0, 1)");
    };
    open01("alpha_a", alpha_a);
    open01("alpha_b", alpha_b);
    open01("pdet_a", pdet_a);
    open01("pdet_b", pdet_b);
    if (!(p_dc >= 0.0)) out.push_back("p_dc must be >= 0");
    if (p_dc >= 0.1 * std::min(pdet_a, pdet_b)) {
        out.push_back("p_dc must be much smaller than pdet (p_dc < 0.1 * min(pdet_a, pdet_b))");
    }
    if (!(visibility >= 0.0 && visibility <= 1.0)) out.push_back("visibility must lie in [0, 1]");
    if (!(phase_sigma_deg >= 0.0)) out.push_back("phase_sigma_deg must be >= 0");
    if (!(p_double >= 0.0 && p_double < 1.0)) out.push_back("p_double must lie in [0, 1)");
    if (kDoubleExcitationCoefficient * p_double > 1.0) {
        out.push_back("p_double too large for the double-excitation coherence model");
    }
    if (!(attempt_duration_s > 0.0)) out.push_back("attempt_duration_s must be > 0");
    return out;
}

void LinkParams::validate() const {
    const auto diag = check();
    if (!diag.empty()) throw LinkError("invalid link parameters: " + diag.front());
}

HeraldProbabilities herald_probabilities(const LinkParams &p) {
    const double aa = p.alpha_a, ab = p.alpha_b;
    HeraldProbabilities h;
    h.p00 = aa * ab * (p.pdet_a + p.pdet_b + 2 * p.p_dc);
    h.p01 = aa * (1 - ab) * (p.pdet_a + 2 * p.p_dc);
    h.p10 = ab * (1 - aa) * (p.pdet_b + 2 * p.p_dc);
    h.p11 = 2 * (1 - aa) * (1 - ab) * p.p_dc;
    return h;
}

double success_probability(const LinkParams &p) { return herald_probabilities(p).total(); }

double coherence_magnitude(const LinkParams &p) {
    const HeraldProbabilities h = herald_probabilities(p);
    // Dark counts are left out of the coherence, as in the population model's
    // p_dc << pdet regime.
    const double sigma = deg2rad(p.phase_sigma_deg);
    const double phase_factor = std::exp(-0.5 * sigma * sigma);
    const double double_factor = 1.0 - kDoubleExcitationCoefficient * p.p_double;
    return std::sqrt(p.visibility * h.p01 * h.p10) * phase_factor * double_factor;
}

HeraldedLinkResult heralded_state(const LinkParams &p, int detector_sign) {
    p.validate();
    check_sign(detector_sign);
    const double pt = success_probability(p);
    CMatrix m = link_matrix(p, static_cast<double>(detector_sign) * coherence_magnitude(p));
    return HeraldedLinkResult{unchecked_state(2, std::move(m)), pt, detector_sign, pt / p.attempt_duration_s};
}

DensityMatrix heralded_state_at_phase(const LinkParams &p, int detector_sign, double phase_rad) {
    p.validate();
    check_sign(detector_sign);
    LinkParams no_spread = p;
    no_spread.phase_sigma_deg = 0.0;
    const Complex coh = static_cast<double>(detector_sign) * coherence_magnitude(no_spread) * std::polar(1.0, phase_rad);
    return unchecked_state(2, link_matrix(p, coh));
}

CVector link_target(int detector_sign) {
    check_sign(detector_sign);
    return bell_vector(detector_sign > 0 ? BellState::PsiPlus : BellState::PsiMinus);
}

double link_fidelity(const LinkParams &p, int detector_sign) {
    return fidelity_with_pure(heralded_state(p, detector_sign).state, link_target(detector_sign));
}

double ErrorBudget::at(const std::string &name) const {
    for (const auto &[k, v] : entries) {
        if (k == name) return v;
    }
    throw LinkError("no budget entry named '" + name + "'");
}

LinkParams alpha_only(const LinkParams &p) {
    LinkParams q = p;
    q.p_dc = 0.0;
    q.visibility = 1.0;
    q.phase_sigma_deg = 0.0;
    q.p_double = 0.0;
    return q;
}

ErrorBudget error_budget(const LinkParams &p) {
    p.validate();
    const LinkParams base = alpha_only(p);
    const double f_base = link_fidelity(base);
    auto with = [&](auto setter) {
        LinkParams q = base;
        setter(q);
        return f_base - link_fidelity(q);
    };
    ErrorBudget b;
    b.entries.emplace_back("double emission", 1.0 - f_base);
    b.entries.emplace_back("phase uncertainty", with([&](LinkParams &q) { q.phase_sigma_deg = p.phase_sigma_deg; }));
    b.entries.emplace_back("double excitation", with([&](LinkParams &q) { q.p_double = p.p_double; }));
    b.entries.emplace_back("distinguishability", with([&](LinkParams &q) { q.visibility = p.visibility; }));
    b.entries.emplace_back("dark counts", with([&](LinkParams &q) { q.p_dc = p.p_dc; }));
    b.combined = 1.0 - link_fidelity(p);
    return b;
}

AttemptOutcome sample_attempts_until_success(double p_tot, Rng &rng, int timeout) {
    if (timeout < 1) throw LinkError("timeout must be >= 1 attempt");
    if (!(p_tot >= 0.0 && p_tot <= 1.0)) throw LinkError("herald probability must lie in [0, 1]");
    if (p_tot >= 1.0) return {true, 1};
    if (p_tot <= 0.0) return {false, timeout};
    std::geometric_distribution<long long> failures(p_tot);
    const long long n = failures(rng) + 1;
    if (n > timeout) return {false, timeout};
    return {true, static_cast<int>(n)};
}

AttemptOutcome sample_attempts_until_success(const LinkParams &p, Rng &rng, int timeout) {
    return sample_attempts_until_success(success_probability(p), rng, timeout);
}

double block_success_probability(double p_tot, int timeout) {
    return -std::expm1(static_cast<double>(timeout) * std::log1p(-p_tot));
}

double truncated_geometric_mean(double p_tot, int timeout) {
    if (p_tot >= 1.0) return 1.0;
    const double q = 1.0 - p_tot;
    const double qt = std::pow(q, timeout);
    // sum_{n=1}^T n p q^{n-1} / (1 - q^T)
    const double num = (1.0 - qt * (1.0 + timeout * p_tot)) / p_tot;
    return num / (1.0 - qt);
}

double expected_block_attempts(double p_tot, int timeout) {
    const double ps = block_success_probability(p_tot, timeout);
    return ps * truncated_geometric_mean(p_tot, timeout) + (1.0 - ps) * timeout;
}

int sample_emission_pattern(const LinkParams &p, Rng &rng) {
    const HeraldProbabilities h = herald_probabilities(p);
    std::discrete_distribution<int> d({h.p00, h.p01, h.p10, h.p11});
    return d(rng);
}

double raw_rate_hz(const LinkParams &p) { return success_probability(p) / p.attempt_duration_s; }

double duty_cycled_rate_hz(const LinkParams &p, double duty_factor) {
    if (!(duty_factor > 0.0 && duty_factor <= 1.0)) throw LinkError("duty factor must lie in (0, 1]");
    return raw_rate_hz(p) * duty_factor;
}

}  // namespace qnet
