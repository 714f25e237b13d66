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


#ifndef QNET_TOMO_H
#define QNET_TOMO_H

#include <array>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "qnet/noise.h"
#include "qnet/qstate.h"

namespace qnet {

class TomoError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

/// Raw outcome tallies. counts[i] is the number of shots with outcome index i,
/// where bit q of i is the result of qubit q.
struct CountVector {
    std::vector<long long> counts;

    int n_qubits() const;
    long long total() const;
    std::vector<double> frequencies() const;
    void validate() const;

    /// Bitstrings list qubit 0 first: "01" means qubit 0 read 0, qubit 1 read 1.
    static CountVector from_bitstrings(const std::vector<std::pair<std::string, long long>> &entries);
};

std::string bitstring(std::size_t index, int n_qubits);

struct CorrectedPopulations {
    std::vector<double> p;
    std::vector<double> sigma;
    Eigen::MatrixXd covariance;
};

/// Analytic single-qubit inversion; F uncertainties enter in quadrature.
CorrectedPopulations correct_single(const CountVector &counts, const ReadoutModel &model);

/// P = (⊗ R_i)^{-1} M with the exact multinomial covariance of M propagated
/// linearly. F uncertainties are not included; use the Monte Carlo for those.
CorrectedPopulations correct_multi(const CountVector &counts, std::span<const ReadoutModel> models);

/// Inverse without counts, for exact probability vectors.
std::vector<double> invert_readout(std::span<const double> measured, std::span<const ReadoutModel> models);

/// Optional physicality step: Euclidean projection onto the probability simplex.
std::vector<double> project_to_simplex(std::span<const double> p);

/// <Z^{mask}> from computational-basis populations.
double parity_expectation(std::span<const double> populations, unsigned mask);

struct Estimate {
    double value = 0;
    double sigma = 0;
};

struct McSummary {
    double mean = 0;
    double std = 0;
    double median = 0;
    /// 1-sigma-equivalent interval (16th / 84th percentiles).
    double p16 = 0;
    double p84 = 0;
    /// 95% interval.
    double p2_5 = 0;
    double p97_5 = 0;
};

McSummary summarize_samples(std::vector<double> samples);

/// Maps corrected populations of each measurement setting to the statistics
/// of interest.
using Statistic = std::function<std::vector<double>(const std::vector<std::vector<double>> &corrected)>;

/// Resamples each setting's counts multinomially and each F from a normal law
/// truncated to (0.5, 1], inverts, and evaluates `statistic`. The readout
/// fidelities are drawn once per sample and shared by all settings.
std::vector<McSummary> monte_carlo_uncertainty(std::span<const CountVector> settings,
                                               std::span<const ReadoutModel> models, const Statistic &statistic,
                                               int n_samples, Rng &rng);

/// Single-setting convenience: summaries of every corrected population.
std::vector<McSummary> monte_carlo_uncertainty(const CountVector &counts, std::span<const ReadoutModel> models,
                                               int n_samples, Rng &rng);

struct GhzCorrelators {
    Estimate izz, ziz, zzi, xxx, xyy, yxy, yyx;
};

/// F = (1 + <IZZ> + <ZIZ> + <ZZI> + <XXX> - <XYY> - <YXY> - <YYX>) / 8.
Estimate ghz_fidelity(const GhzCorrelators &c);

/// F = (1 + s_x <XX> + s_y <YY> + s_z <ZZ>) / 4 with the target's signs.
Estimate bell_fidelity(const Estimate &xx, const Estimate &yy, const Estimate &zz, BellState target);
std::array<int, 3> bell_signs(BellState target);
BellState bell_state_from_label(std::string_view label);

/// Multinomial draw of `shots` outcomes after rotating each qubit into the
/// given basis (one of X, Y, Z per qubit, qubit 0 first) and applying the
/// readout models.
CountVector simulate_counts(const DensityMatrix &rho, std::string_view bases, long long shots,
                            std::span<const ReadoutModel> models, Rng &rng);

/// Expected measured distribution (no sampling) for the same setting.
std::vector<double> measured_distribution(const DensityMatrix &rho, std::string_view bases,
                                          std::span<const ReadoutModel> models);

CountVector read_counts_csv(const std::filesystem::path &path);
void write_counts_csv(const std::filesystem::path &path, const CountVector &counts);

}  // namespace qnet

#endif
