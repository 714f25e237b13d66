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

#include "qnet/tomo.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace qnet {

int CountVector::n_qubits() const {
    const std::size_t n = counts.size();
    if (n < 2 || !std::has_single_bit(n)) throw TomoError("count vector length must be a power of two >= 2");
    return std::countr_zero(n);
}

long long CountVector::total() const { return std::accumulate(counts.begin(), counts.end(), 0LL); }

std::vector<double> CountVector::frequencies() const {
    validate();
    const double n = static_cast<double>(total());
    std::vector<double> f(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) f[i] = static_cast<double>(counts[i]) / n;
    return f;
}

void CountVector::validate() const {
    n_qubits();
    for (long long c : counts) {
        if (c < 0) throw TomoError("counts must be non-negative");
    }
    if (total() < 1) throw TomoError("count vector is empty (N = 0)");
}

CountVector CountVector::from_bitstrings(const std::vector<std::pair<std::string, long long>> &entries) {
    if (entries.empty()) throw TomoError("no count entries");
    const std::size_t k = entries.front().first.size();
    if (k < 1 || k > 4) throw TomoError("bitstrings must have 1 to 4 characters");
    CountVector cv;
    cv.counts.assign(std::size_t{1} << k, 0);
    for (const auto &[bits, n] : entries) {
        if (bits.size() != k) throw TomoError("bitstring '" + bits + "' has inconsistent length");
        std::size_t idx = 0;
        for (std::size_t q = 0; q < k; ++q) {
            if (bits[q] == '1') {
                idx |= std::size_t{1} << q;
            } else if (bits[q] != '0') {
                throw TomoError("bitstring '" + bits + "' contains a character other than 0/1");
            }
        }
        cv.counts[idx] += n;
    }
    cv.validate();
    return cv;
}

std::string bitstring(std::size_t index, int n_qubits) {
    std::string s(static_cast<std::size_t>(n_qubits), '0');
    for (int q = 0; q < n_qubits; ++q) {
        if ((index >> q) & 1u) s[static_cast<std::size_t>(q)] = '1';
    }
    return s;
}

namespace {

Eigen::MatrixXd inverse_readout(std::span<const ReadoutModel> models) {
    for (const auto &m : models) m.validate();
    // The Kronecker structure makes the inverse the product of 2x2 inverses.
    Eigen::MatrixXd inv = Eigen::MatrixXd::Ones(1, 1);
    for (const auto &m : models) {
        const Eigen::Matrix2d r = m.matrix().inverse();
        Eigen::MatrixXd next(inv.rows() * 2, inv.cols() * 2);
        for (int a = 0; a < 2; ++a) {
            for (int b = 0; b < 2; ++b) next.block(a * inv.rows(), b * inv.cols(), inv.rows(), inv.cols()) = r(a, b) * inv;
        }
        inv = std::move(next);
    }
    return inv;
}

void check_models(std::size_t dim, std::span<const ReadoutModel> models) {
    if ((std::size_t{1} << models.size()) != dim) {
        throw TomoError("need exactly one readout model per measured qubit");
    }
}

double truncated_normal(double mean, double sigma, Rng &rng) {
    if (sigma <= 0) return mean;
    std::normal_distribution<double> g(mean, sigma);
    for (int i = 0; i < 10000; ++i) {
        const double v = g(rng);
        if (v > 0.5 && v <= 1.0) return v;
    }
    throw TomoError("truncated normal rejection failed; readout fidelity far outside (0.5, 1]");
}

std::vector<long long> multinomial(long long n, std::span<const double> p, Rng &rng) {
    std::vector<long long> out(p.size(), 0);
    double remaining = 1.0;
    for (std::size_t i = 0; i + 1 < p.size() && n > 0; ++i) {
        const double q = remaining > 0 ? std::clamp(p[i] / remaining, 0.0, 1.0) : 0.0;
        out[i] = std::binomial_distribution<long long>(n, q)(rng);
        n -= out[i];
        remaining -= p[i];
    }
    out.back() += n;
    return out;
}

double percentile(const std::vector<double> &sorted, double q) {
    // Linear interpolation between closest ranks.
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

CorrectedPopulations correct_single(const CountVector &counts, const ReadoutModel &model) {
    counts.validate();
    if (counts.counts.size() != 2) throw TomoError("correct_single needs a single-qubit count vector");
    model.validate();
    const double n = static_cast<double>(counts.total());
    const double m0 = static_cast<double>(counts.counts[0]) / n;
    const double f0 = model.f0, f1 = model.f1;
    const double d = f0 + f1 - 1.0;
    const double p0 = (f1 + m0 - 1.0) / d;
    const double sigma_m = std::sqrt(m0 * (1.0 - m0) / n);
    const double dp_df0 = -p0 / d;
    const double dp_df1 = (f0 - m0) / (d * d);
    const double var = std::pow(sigma_m / d, 2) + std::pow(dp_df0 * model.sigma_f0, 2) +
                       std::pow(dp_df1 * model.sigma_f1, 2);
    CorrectedPopulations out;
    out.p = {p0, 1.0 - p0};
    const double s = std::sqrt(var);
    out.sigma = {s, s};
    out.covariance = Eigen::Matrix2d{{var, -var}, {-var, var}};
    return out;
}

CorrectedPopulations correct_multi(const CountVector &counts, std::span<const ReadoutModel> models) {
    counts.validate();
    check_models(counts.counts.size(), models);
    const auto m = counts.frequencies();
    const Eigen::Map<const Eigen::VectorXd> mv(m.data(), static_cast<Eigen::Index>(m.size()));
    const Eigen::MatrixXd inv = inverse_readout(models);
    const Eigen::VectorXd p = inv * mv;
    const Eigen::MatrixXd cov_m =
        (Eigen::MatrixXd(mv.asDiagonal()) - mv * mv.transpose()) / static_cast<double>(counts.total());
    CorrectedPopulations out;
    out.covariance = inv * cov_m * inv.transpose();
    out.p.assign(p.data(), p.data() + p.size());
    out.sigma.resize(out.p.size());
    for (std::size_t i = 0; i < out.p.size(); ++i) {
        out.sigma[i] = std::sqrt(std::max(0.0, out.covariance(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i))));
    }
    return out;
}

std::vector<double> invert_readout(std::span<const double> measured, std::span<const ReadoutModel> models) {
    check_models(measured.size(), models);
    const Eigen::Map<const Eigen::VectorXd> mv(measured.data(), static_cast<Eigen::Index>(measured.size()));
    const Eigen::VectorXd p = inverse_readout(models) * mv;
    return {p.data(), p.data() + p.size()};
}

std::vector<double> project_to_simplex(std::span<const double> p) {
    std::vector<double> u(p.begin(), p.end());
    std::sort(u.begin(), u.end(), std::greater<>());
    double cum = 0, theta = 0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        cum += u[j];
        const double t = (cum - 1.0) / static_cast<double>(j + 1);
        if (u[j] - t > 0) theta = t;
    }
    std::vector<double> out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = std::max(0.0, p[i] - theta);
    return out;
}

double parity_expectation(std::span<const double> populations, unsigned mask) {
    double e = 0;
    for (std::size_t i = 0; i < populations.size(); ++i) {
        e += (std::popcount(static_cast<unsigned>(i) & mask) % 2 ? -1.0 : 1.0) * populations[i];
    }
    return e;
}

McSummary summarize_samples(std::vector<double> samples) {
    if (samples.empty()) throw TomoError("no samples to summarize");
    McSummary s;
    const double n = static_cast<double>(samples.size());
    s.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
    double ss = 0;
    for (double v : samples) ss += (v - s.mean) * (v - s.mean);
    s.std = samples.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    std::sort(samples.begin(), samples.end());
    s.median = percentile(samples, 0.5);
    s.p16 = percentile(samples, 0.16);
    s.p84 = percentile(samples, 0.84);
    s.p2_5 = percentile(samples, 0.025);
    s.p97_5 = percentile(samples, 0.975);
    return s;
}

std::vector<McSummary> monte_carlo_uncertainty(std::span<const CountVector> settings,
                                               std::span<const ReadoutModel> models, const Statistic &statistic,
                                               int n_samples, Rng &rng) {
    if (n_samples < 1000) throw TomoError("Monte Carlo needs at least 1000 samples");
    if (settings.empty()) throw TomoError("no measurement settings");
    std::vector<std::vector<double>> freqs;
    for (const auto &s : settings) {
        check_models(s.counts.size(), models);
        freqs.push_back(s.frequencies());
    }
    std::vector<std::vector<double>> samples;
    std::vector<ReadoutModel> drawn(models.begin(), models.end());
    std::vector<std::vector<double>> corrected(settings.size());
    for (int k = 0; k < n_samples; ++k) {
        for (std::size_t q = 0; q < models.size(); ++q) {
            drawn[q].f0 = truncated_normal(models[q].f0, models[q].sigma_f0, rng);
            drawn[q].f1 = truncated_normal(models[q].f1, models[q].sigma_f1, rng);
        }
        const Eigen::MatrixXd inv = inverse_readout(drawn);
        for (std::size_t s = 0; s < settings.size(); ++s) {
            const auto resampled = multinomial(settings[s].total(), freqs[s], rng);
            Eigen::VectorXd m(static_cast<Eigen::Index>(resampled.size()));
            const double n = static_cast<double>(settings[s].total());
            for (std::size_t i = 0; i < resampled.size(); ++i) m(static_cast<Eigen::Index>(i)) = resampled[i] / n;
            const Eigen::VectorXd p = inv * m;
            corrected[s].assign(p.data(), p.data() + p.size());
        }
        const auto values = statistic(corrected);
        if (samples.empty()) samples.resize(values.size());
        if (values.size() != samples.size()) throw TomoError("statistic returned a varying number of values");
        for (std::size_t i = 0; i < values.size(); ++i) samples[i].push_back(values[i]);
    }
    std::vector<McSummary> out;
    for (auto &s : samples) out.push_back(summarize_samples(std::move(s)));
    return out;
}

std::vector<McSummary> monte_carlo_uncertainty(const CountVector &counts, std::span<const ReadoutModel> models,
                                               int n_samples, Rng &rng) {
    const std::array<CountVector, 1> one{counts};
    return monte_carlo_uncertainty(
        one, models, [](const std::vector<std::vector<double>> &c) { return c[0]; }, n_samples, rng);
}

Estimate ghz_fidelity(const GhzCorrelators &c) {
    const std::array<std::pair<const Estimate *, double>, 7> terms{{
        {&c.izz, 1}, {&c.ziz, 1}, {&c.zzi, 1}, {&c.xxx, 1}, {&c.xyy, -1}, {&c.yxy, -1}, {&c.yyx, -1},
    }};
    Estimate f{1.0, 0.0};
    double var = 0;
    for (const auto &[e, s] : terms) {
        f.value += s * e->value;
        var += e->sigma * e->sigma;
    }
    f.value /= 8.0;
    f.sigma = std::sqrt(var) / 8.0;
    return f;
}

std::array<int, 3> bell_signs(BellState target) {
    switch (target) {
        case BellState::PhiPlus: return {1, -1, 1};
        case BellState::PhiMinus: return {-1, 1, 1};
        case BellState::PsiPlus: return {1, 1, -1};
        case BellState::PsiMinus: return {-1, -1, -1};
    }
    throw TomoError("unknown Bell state");
}

Estimate bell_fidelity(const Estimate &xx, const Estimate &yy, const Estimate &zz, BellState target) {
    const auto s = bell_signs(target);
    return {(1.0 + s[0] * xx.value + s[1] * yy.value + s[2] * zz.value) / 4.0,
            std::sqrt(xx.sigma * xx.sigma + yy.sigma * yy.sigma + zz.sigma * zz.sigma) / 4.0};
}

BellState bell_state_from_label(std::string_view label) {
    if (label == "phi+" || label == "Phi+") return BellState::PhiPlus;
    if (label == "phi-" || label == "Phi-") return BellState::PhiMinus;
    if (label == "psi+" || label == "Psi+") return BellState::PsiPlus;
    if (label == "psi-" || label == "Psi-") return BellState::PsiMinus;
    throw TomoError("unknown Bell state label '" + std::string(label) + "' (expected phi+, phi-, psi+, psi-)");
}

std::vector<double> measured_distribution(const DensityMatrix &rho, std::string_view bases,
                                          std::span<const ReadoutModel> models) {
    if (static_cast<int>(bases.size()) != rho.num_qubits()) throw TomoError("one basis letter per qubit required");
    DensityMatrix r = rho;
    const CMatrix sdg = gates::s().adjoint();
    for (int q = 0; q < rho.num_qubits(); ++q) {
        switch (bases[static_cast<std::size_t>(q)]) {
            case 'Z': break;
            case 'X': r = apply_unitary(r, gates::h(), {q}); break;
            case 'Y': r = apply_unitary(r, CMatrix(gates::h() * sdg), {q}); break;
            default: throw TomoError("basis letters must be X, Y or Z");
        }
    }
    const auto p = populations(r);
    return apply_readout_error(p, models);
}

CountVector simulate_counts(const DensityMatrix &rho, std::string_view bases, long long shots,
                            std::span<const ReadoutModel> models, Rng &rng) {
    if (shots < 1) throw TomoError("shots must be >= 1");
    const auto m = measured_distribution(rho, bases, models);
    std::vector<double> clipped(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) clipped[i] = std::max(0.0, m[i]);
    return CountVector{multinomial(shots, clipped, rng)};
}

CountVector read_counts_csv(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open counts file " + path.string());
    std::vector<std::pair<std::string, long long>> entries;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            if (line.rfind("bitstring", 0) == 0) continue;
        }
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw TomoError("malformed counts line: " + line);
        entries.emplace_back(line.substr(0, comma), std::stoll(line.substr(comma + 1)));
    }
    return CountVector::from_bitstrings(entries);
}

void write_counts_csv(const std::filesystem::path &path, const CountVector &counts) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write counts file " + path.string());
    const int k = counts.n_qubits();
    out << "bitstring,count\n";
    for (std::size_t i = 0; i < counts.counts.size(); ++i) out << bitstring(i, k) << ',' << counts.counts[i] << '\n';
}

}  // namespace qnet
