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

#include "qnet/noise.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <unsupported/Eigen/KroneckerProduct>

namespace qnet {

namespace {

void throw_first(const std::vector<std::string> &diag, const char *what) {
    if (!diag.empty()) throw NoiseError(std::string(what) + ": " + diag.front());
}

std::vector<CMatrix> pauli_products(int k) {
    std::vector<CMatrix> out{CMatrix::Identity(1, 1)};
    for (int q = 0; q < k; ++q) {
        std::vector<CMatrix> next;
        for (const auto &m : out) {
            for (Pauli p : {Pauli::I, Pauli::X, Pauli::Y, Pauli::Z}) {
                // New qubit is the higher bit: kron(P, m).
                next.push_back(Eigen::kroneckerProduct(pauli_matrix(p), m).eval());
            }
        }
        out = std::move(next);
    }
    return out;
}

}  // namespace

std::vector<std::string> MemoryDecayParams::check() const {
    std::vector<std::string> out;
    if (!(amplitude_a > 0.0 && amplitude_a <= 1.0)) out.push_back("amplitude_a must lie in (0, 1]");
    if (!(n_1e > 0.0)) out.push_back("n_1e must be > 0");
    if (!(exponent_n > 0.0)) out.push_back("exponent_n must be > 0");
    if (!(t2_star_s > 0.0)) out.push_back("t2_star_s must be > 0");
    return out;
}

void MemoryDecayParams::validate() const { throw_first(check(), "invalid memory decay parameters"); }

double memory_coherence_factor(double n_attempts, const MemoryDecayParams &params) {
    if (n_attempts < 0) throw NoiseError("attempt count must be >= 0");
    if (n_attempts == 0) return 1.0;
    return std::exp(-std::pow(n_attempts / params.n_1e, params.exponent_n));
}

KrausChannel dephasing_channel(double coherence) {
    if (!(coherence >= 0.0 && coherence <= 1.0)) throw NoiseError("coherence factor must lie in [0, 1]");
    std::vector<CMatrix> ops{std::sqrt(0.5 * (1.0 + coherence)) * gates::identity()};
    if (coherence < 1.0) ops.push_back(std::sqrt(0.5 * (1.0 - coherence)) * gates::z());
    return KrausChannel::make(std::move(ops));
}

KrausChannel complex_dephasing_channel(Complex kappa) {
    const double mag = std::abs(kappa);
    if (mag > 1.0 + 1e-15) throw NoiseError("coherence multiplier must satisfy |kappa| <= 1");
    KrausChannel ch = dephasing_channel(std::min(mag, 1.0));
    // rho_01 picks up conj of the |1> phase: Rz(-arg) maps rho_01 -> e^{i arg} rho_01.
    const CMatrix rot = gates::rz(-std::arg(kappa));
    for (auto &k : ch.operators) k = (rot * k).eval();
    return ch;
}

KrausChannel memory_dephasing_channel(long long n_attempts, const MemoryDecayParams &params) {
    params.validate();
    return dephasing_channel(memory_coherence_factor(static_cast<double>(n_attempts), params));
}

KrausChannel free_evolution_dephasing_channel(double elapsed_s, double attempt_duration_s,
                                              const MemoryDecayParams &idle_params) {
    if (elapsed_s < 0) throw NoiseError("elapsed time must be >= 0");
    if (!(attempt_duration_s > 0)) throw NoiseError("attempt duration must be > 0");
    idle_params.validate();
    return dephasing_channel(memory_coherence_factor(elapsed_s / attempt_duration_s, idle_params));
}

KrausChannel depolarizing_channel(double p, int k_qubits) {
    if (!(p >= 0.0 && p <= 1.0)) throw NoiseError("depolarizing probability must lie in [0, 1]");
    if (k_qubits < 1 || k_qubits > kMaxQubits) throw NoiseError("depolarizing channel needs 1 to 4 qubits");
    const double d2 = std::pow(4.0, k_qubits);
    const auto paulis = pauli_products(k_qubits);
    std::vector<CMatrix> ops{std::sqrt(1.0 - p + p / d2) * paulis.front()};
    if (p > 0.0) {
        for (std::size_t i = 1; i < paulis.size(); ++i) ops.push_back(std::sqrt(p / d2) * paulis[i]);
    }
    return KrausChannel::make(std::move(ops));
}

std::vector<std::string> ReadoutModel::check() const {
    std::vector<std::string> out;
    if (!(f0 > 0.5 && f0 <= 1.0)) out.push_back("f0 must lie in (0.5, 1]");
    if (!(f1 > 0.5 && f1 <= 1.0)) out.push_back("f1 must lie in (0.5, 1]");
    if (!(f0 + f1 > 1.0)) out.push_back("f0 + f1 must exceed 1 (readout matrix must be invertible)");
    if (!(sigma_f0 >= 0.0)) out.push_back("sigma_f0 must be >= 0");
    if (!(sigma_f1 >= 0.0)) out.push_back("sigma_f1 must be >= 0");
    return out;
}

void ReadoutModel::validate() const { throw_first(check(), "invalid readout model"); }

Eigen::Matrix2d ReadoutModel::matrix() const {
    Eigen::Matrix2d r;
    r << f0, 1.0 - f1, 1.0 - f0, f1;
    return r;
}

double ReadoutModel::prob(int measured, int truth) const {
    if (truth == 0) return measured == 0 ? f0 : 1.0 - f0;
    return measured == 1 ? f1 : 1.0 - f1;
}

Eigen::MatrixXd readout_matrix(std::span<const ReadoutModel> models) {
    Eigen::MatrixXd r = Eigen::MatrixXd::Identity(1, 1);
    for (const auto &m : models) {
        m.validate();
        r = Eigen::kroneckerProduct(Eigen::MatrixXd(m.matrix()), r).eval();
    }
    return r;
}

std::vector<double> apply_readout_error(std::span<const double> true_probs, std::span<const ReadoutModel> models) {
    const std::size_t dim = std::size_t{1} << models.size();
    if (true_probs.size() != dim) throw NoiseError("probability vector length does not match the number of qubits");
    const double sum = std::accumulate(true_probs.begin(), true_probs.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-12) throw NoiseError("probability vector must sum to 1");
    const Eigen::MatrixXd r = readout_matrix(models);
    const Eigen::VectorXd p = Eigen::Map<const Eigen::VectorXd>(true_probs.data(), static_cast<Eigen::Index>(dim));
    const Eigen::VectorXd m = r * p;
    return {m.data(), m.data() + m.size()};
}

std::vector<std::string> NuclearSpinParams::check() const {
    std::vector<std::string> out;
    if (!(omega0_hz > 0.0)) out.push_back("omega0_hz must be > 0");
    if (!(omega1_hz > 0.0)) out.push_back("omega1_hz must be > 0");
    if (!(tau_larmor_s > 0.0)) out.push_back("tau_larmor_s must be > 0");
    const double split = std::abs(omega1_hz - omega0_hz);
    if (!(std::abs(a_par_hz - split) <= 0.05 * std::abs(a_par_hz))) {
        out.push_back("a_par_hz must match |omega1_hz - omega0_hz| within 5%");
    }
    return out;
}

void NuclearSpinParams::validate() const { throw_first(check(), "invalid nuclear spin parameters"); }

double decay_model(double n_attempts, double a, double n_1e, double n, double *grad) {
    if (n_attempts <= 0) {
        if (grad) {
            grad[0] = 1.0;
            grad[1] = 0.0;
            grad[2] = 0.0;
        }
        return a;
    }
    const double ratio = n_attempts / n_1e;
    const double u = std::pow(ratio, n);
    const double e = std::exp(-u);
    if (grad) {
        grad[0] = e;
        grad[1] = a * e * u * n / n_1e;
        grad[2] = -a * e * u * std::log(ratio);
    }
    return a * e;
}

namespace {

struct Bounds {
    static constexpr double a_max = 1.2;
    static constexpr double n_min = 0.5;
    static constexpr double n_max = 3.0;
};

Eigen::Vector3d clamp_params(Eigen::Vector3d x, double n1e_floor) {
    x(0) = std::clamp(x(0), 1e-9, Bounds::a_max);
    x(1) = std::max(x(1), n1e_floor);
    x(2) = std::clamp(x(2), Bounds::n_min + 1e-9, Bounds::n_max);
    return x;
}

double chi2_at(std::span<const DecayPoint> data, const Eigen::Vector3d &x) {
    double s = 0;
    for (const auto &d : data) {
        const double r = (d.bloch_length - decay_model(d.attempts, x(0), x(1), x(2))) / d.sigma;
        s += r * r;
    }
    return s;
}

Eigen::Vector3d initial_guess(std::span<const DecayPoint> data) {
    double a0 = 0;
    for (const auto &d : data) a0 = std::max(a0, d.bloch_length);
    a0 = std::clamp(a0, 0.05, Bounds::a_max);
    // Linearize ln(-ln(y / A)) = n ln N - n ln N1e over the informative points.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (const auto &d : data) {
        const double ratio = d.bloch_length / a0;
        if (d.attempts <= 0 || ratio <= 0.05 || ratio >= 0.95) continue;
        const double x = std::log(d.attempts), y = std::log(-std::log(ratio));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++m;
    }
    double n = 1.5, n1e = 0;
    if (m >= 2 && m * sxx - sx * sx > 1e-12) {
        const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
        const double intercept = (sy - slope * sx) / m;
        if (std::isfinite(slope) && slope > 0) {
            n = slope;
            n1e = std::exp(-intercept / slope);
        }
    }
    if (!(n1e > 0) || !std::isfinite(n1e)) {
        std::vector<double> ns;
        for (const auto &d : data) ns.push_back(d.attempts);
        std::sort(ns.begin(), ns.end());
        n1e = std::max(ns[ns.size() / 2], 1.0);
    }
    return {a0, n1e, std::clamp(n, Bounds::n_min + 0.01, Bounds::n_max)};
}

}  // namespace

DecayFit fit_memory_decay(std::span<const DecayPoint> data, const FitOptions &options) {
    if (data.size() < 4) throw FitError("memory decay fit needs at least 4 points");
    double n_min = data.front().attempts, n_max = n_min;
    for (const auto &d : data) {
        if (!(d.sigma > 0)) throw FitError("every point needs a positive uncertainty");
        if (d.attempts < 0) throw FitError("attempt counts must be >= 0");
        n_min = std::min(n_min, d.attempts);
        n_max = std::max(n_max, d.attempts);
    }
    if (n_max - n_min <= 0) throw FitError("degenerate data: all points share one attempt count");
    const double n1e_floor = 1e-6 * std::max(n_max, 1.0);

    Eigen::Vector3d x = clamp_params(initial_guess(data), n1e_floor);
    double chi2 = chi2_at(data, x);
    double lambda = 1e-3;
    const auto m = static_cast<Eigen::Index>(data.size());
    Eigen::MatrixXd jac(m, 3);
    Eigen::VectorXd res(m);
    auto linearize = [&](const Eigen::Vector3d &p) {
        for (Eigen::Index i = 0; i < m; ++i) {
            const auto &d = data[static_cast<std::size_t>(i)];
            double g[3];
            const double f = decay_model(d.attempts, p(0), p(1), p(2), g);
            res(i) = (d.bloch_length - f) / d.sigma;
            for (int k = 0; k < 3; ++k) jac(i, k) = g[k] / d.sigma;
        }
    };

    bool converged = false;
    int it = 0;
    for (; it < options.max_iterations && !converged; ++it) {
        linearize(x);
        const Eigen::Matrix3d jtj = jac.transpose() * jac;
        const Eigen::Vector3d jtr = jac.transpose() * res;
        bool accepted = false;
        for (int tries = 0; tries < 60 && !accepted; ++tries) {
            Eigen::Matrix3d damped = jtj;
            for (int k = 0; k < 3; ++k) damped(k, k) += lambda * std::max(jtj(k, k), 1e-30);
            const Eigen::Vector3d step = damped.ldlt().solve(jtr);
            const Eigen::Vector3d trial = clamp_params(x + step, n1e_floor);
            const double trial_chi2 = chi2_at(data, trial);
            if (std::isfinite(trial_chi2) && trial_chi2 <= chi2) {
                const double rel_step = ((trial - x).cwiseQuotient(x.cwiseAbs().cwiseMax(1e-12))).cwiseAbs().maxCoeff();
                const double drop = chi2 - trial_chi2;
                x = trial;
                chi2 = trial_chi2;
                lambda = std::max(lambda / 10.0, 1e-12);
                accepted = true;
                if (rel_step < 1e-10 || drop <= options.tolerance * std::max(chi2, 1e-300)) converged = true;
            } else {
                lambda *= 10.0;
            }
        }
        if (!accepted) {
            // No downhill step at any damping: we are at a (bounded) minimum.
            converged = true;
        }
    }
    if (!converged) {
        throw FitError("memory decay fit did not converge within " + std::to_string(options.max_iterations) +
                       " iterations");
    }

    linearize(x);
    const Eigen::Matrix3d jtj = jac.transpose() * jac;
    Eigen::FullPivLU<Eigen::Matrix3d> lu(jtj);
    if (!lu.isInvertible()) throw FitError("memory decay fit is under-determined (singular normal matrix)");
    Eigen::Matrix3d cov = lu.inverse();
    if (options.sigma_mode == SigmaMode::kRelative && m > 3) cov *= chi2 / static_cast<double>(m - 3);

    DecayFit fit;
    fit.params.amplitude_a = x(0);
    fit.params.n_1e = x(1);
    fit.params.exponent_n = x(2);
    fit.sigma_a = std::sqrt(std::max(cov(0, 0), 0.0));
    fit.sigma_n_1e = std::sqrt(std::max(cov(1, 1), 0.0));
    fit.sigma_n = std::sqrt(std::max(cov(2, 2), 0.0));
    fit.chi2 = chi2;
    fit.iterations = it;
    return fit;
}

std::vector<DecayPoint> read_decay_csv(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open decay data file " + path.string());
    std::vector<DecayPoint> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (lineno == 1 && line.find("attempts") != std::string::npos) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ss(line);
        DecayPoint p;
        if (!(ss >> p.attempts >> p.bloch_length >> p.sigma)) {
            throw NoiseError(path.string() + ":" + std::to_string(lineno) + ": expected attempts,bloch_length,sigma");
        }
        out.push_back(p);
    }
    return out;
}

void write_decay_csv(const std::filesystem::path &path, std::span<const DecayPoint> data) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write decay data file " + path.string());
    out.precision(17);
    out << "attempts,bloch_length,sigma\n";
    for (const auto &d : data) out << d.attempts << ',' << d.bloch_length << ',' << d.sigma << '\n';
}

}  // namespace qnet
