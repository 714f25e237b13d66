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

#ifndef QNET_NOISE_H
#define QNET_NOISE_H

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "qnet/qstate.h"

namespace qnet {

class NoiseError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

/// Stretched-exponential memory decay A exp(-(N / n_1e)^exponent_n).
struct MemoryDecayParams {
    double amplitude_a = 1.0;
    double n_1e = 1843.0;
    double exponent_n = 1.37;
    double t2_star_s = 11.6e-3;

    std::vector<std::string> check() const;
    void validate() const;
};

/// c(N) = exp(-(N / n_1e)^n). The amplitude A is deliberately not applied.
double memory_coherence_factor(double n_attempts, const MemoryDecayParams &params);

/// Single-qubit phase damping scaling <X>, <Y> by `coherence` in [0, 1].
KrausChannel dephasing_channel(double coherence);

/// Phase damping with a complex coherence multiplier rho_01 -> kappa rho_01,
/// |kappa| <= 1. Equivalent to dephasing |kappa| followed by a Z rotation.
KrausChannel complex_dephasing_channel(Complex kappa);

KrausChannel memory_dephasing_channel(long long n_attempts, const MemoryDecayParams &params);

/// Intrinsic dephasing without network activity: the elapsed time is mapped to
/// an equivalent attempt count t / attempt_duration under the idle-memory fit.
KrausChannel free_evolution_dephasing_channel(double elapsed_s, double attempt_duration_s,
                                              const MemoryDecayParams &idle_params);

/// rho -> (1 - p) rho + p I/2^k on k qubits.
KrausChannel depolarizing_channel(double p, int k_qubits);

struct ReadoutModel {
    double f0 = 1.0;
    double f1 = 1.0;
    double sigma_f0 = 0.0;
    double sigma_f1 = 0.0;

    std::vector<std::string> check() const;
    void validate() const;
    /// R with columns indexed by the true state: [[F0, 1-F1], [1-F0, F1]].
    Eigen::Matrix2d matrix() const;
    /// P(measured | true).
    double prob(int measured, int truth) const;
};

/// Tensor product of single-qubit R matrices; models[q] acts on bit q.
Eigen::MatrixXd readout_matrix(std::span<const ReadoutModel> models);

/// M = (⊗ R_i) P. `true_probs` must sum to 1.
std::vector<double> apply_readout_error(std::span<const double> true_probs, std::span<const ReadoutModel> models);

struct NuclearSpinParams {
    double omega0_hz = 2025e3;
    double omega1_hz = 2056e3;
    double a_par_hz = 30e3;
    double tau_larmor_s = 490e-9;

    std::vector<std::string> check() const;
    void validate() const;
};

struct DecayPoint {
    double attempts = 0;
    double bloch_length = 0;
    double sigma = 0;
};

enum class SigmaMode {
    /// Error bars are taken as absolute one-sigma uncertainties.
    kAbsolute,
    /// Error bars are relative weights; covariance is rescaled by chi2/dof.
    kRelative,
};

struct FitOptions {
    int max_iterations = 200;
    double tolerance = 1e-12;
    SigmaMode sigma_mode = SigmaMode::kAbsolute;
};

struct DecayFit {
    MemoryDecayParams params;
    double sigma_a = 0;
    double sigma_n_1e = 0;
    double sigma_n = 0;
    double chi2 = 0;
    int iterations = 0;
};

class FitError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Weighted least squares of A exp(-(N/N1e)^n) by damped Gauss-Newton.
/// Throws FitError on degenerate data or non-convergence.
DecayFit fit_memory_decay(std::span<const DecayPoint> data, const FitOptions &options = {});

/// Model value and its partial derivatives with respect to (A, N1e, n).
double decay_model(double n_attempts, double a, double n_1e, double n, double *grad = nullptr);

std::vector<DecayPoint> read_decay_csv(const std::filesystem::path &path);
void write_decay_csv(const std::filesystem::path &path, std::span<const DecayPoint> data);

}  // namespace qnet

#endif
