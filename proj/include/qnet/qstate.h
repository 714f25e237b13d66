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

#ifndef QNET_QSTATE_H
#define QNET_QSTATE_H

// Dense density-matrix engine for registers of 1 to 4 qubits.
//
// Tensor ordering is little-endian: qubit q contributes bit q of the basis
// index, so for two qubits the index of |a b> (qubit 0 = a, qubit 1 = b) is
// a + 2 b. Every matrix handed to apply_unitary / apply_channel uses the same
// convention over its own target list: targets[0] is the operator's bit 0.

#include <complex>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace qnet {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Rng = std::mt19937_64;

inline constexpr int kMaxQubits = 4;

/// Numerical tolerances shared by every state operation and property test.
struct Tolerances {
    double hermiticity = 1e-12;
    double trace = 1e-10;
    double psd = 1e-9;
    double unitarity = 1e-10;
    double trace_preserving = 1e-10;
    double probability = 1e-12;
    double normalization = 1e-10;
};

inline constexpr Tolerances kTolerances{};

class StateError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

class DensityMatrix {
   public:
    /// Validates Hermiticity, unit trace and positivity before accepting `m`.
    static DensityMatrix from_matrix(CMatrix m);
    static DensityMatrix from_pure(const CVector &psi);
    /// `bits[k]` is the value of qubit k, e.g. "01" is qubit 0 in |0>, qubit 1 in |1>.
    static DensityMatrix basis_state(std::string_view bits);
    static DensityMatrix maximally_mixed(int n_qubits);

    int num_qubits() const { return n_qubits_; }
    int dim() const { return static_cast<int>(rho_.rows()); }
    const CMatrix &matrix() const { return rho_; }
    Complex operator()(int row, int col) const { return rho_(row, col); }

    double trace() const;
    double max_hermiticity_error() const;
    double min_eigenvalue() const;
    /// Throws StateError if any invariant is violated.
    void validate() const;

    /// Returns this ⊗ other, with this register occupying the low qubit indices.
    DensityMatrix tensor(const DensityMatrix &other) const;

   private:
    DensityMatrix(int n_qubits, CMatrix rho) : n_qubits_(n_qubits), rho_(std::move(rho)) {}

    int n_qubits_ = 1;
    CMatrix rho_;

    friend DensityMatrix unchecked_state(int n_qubits, CMatrix rho);
};

/// Wraps an already-valid matrix without re-running the eigenvalue check.
/// Used internally by operations whose outputs are valid by construction.
DensityMatrix unchecked_state(int n_qubits, CMatrix rho);

struct KrausChannel {
    std::vector<CMatrix> operators;

    int num_qubits() const;
    /// max |∑ K†K − I|.
    double completeness_error() const;
    /// Builds a channel after checking every operator shares a 2^k shape and
    /// the set is trace preserving.
    static KrausChannel make(std::vector<CMatrix> operators);
};

enum class Pauli : std::uint8_t { I, X, Y, Z };

class PauliString {
   public:
    PauliString() = default;
    explicit PauliString(std::vector<Pauli> symbols) : symbols_(std::move(symbols)) {}
    /// Parses "XYZ": character k acts on qubit k.
    static PauliString parse(std::string_view text);

    std::size_t size() const { return symbols_.size(); }
    Pauli operator[](std::size_t k) const { return symbols_[k]; }
    std::string str() const;

   private:
    std::vector<Pauli> symbols_;
};

CMatrix pauli_matrix(Pauli p);

namespace gates {
CMatrix identity(int n_qubits = 1);
CMatrix x();
CMatrix y();
CMatrix z();
CMatrix h();
CMatrix s();
CMatrix rx(double theta);
CMatrix ry(double theta);
CMatrix rz(double theta);
/// Two-qubit CNOT over targets (control, target) in the little-endian
/// convention: the control is the operator's bit 0.
CMatrix cnot();
}  // namespace gates

DensityMatrix apply_unitary(const DensityMatrix &rho, const CMatrix &u, std::span<const int> targets);
DensityMatrix apply_unitary(const DensityMatrix &rho, const CMatrix &u, std::initializer_list<int> targets);

DensityMatrix apply_channel(const DensityMatrix &rho, const KrausChannel &channel, std::span<const int> targets);
DensityMatrix apply_channel(const DensityMatrix &rho, const KrausChannel &channel, std::initializer_list<int> targets);

struct MeasurementResult {
    int outcome = 0;
    DensityMatrix post_state;
    double probability = 0.0;
};

/// Projects `qubit` onto the eigenstate of `axis` with eigenvalue (-1)^outcome
/// and renormalizes. Throws StateError for a zero-probability branch.
MeasurementResult project(const DensityMatrix &rho, int qubit, Pauli axis, int outcome);

/// Born probability of outcome 0 (eigenvalue +1) for `axis` on `qubit`.
double outcome_zero_probability(const DensityMatrix &rho, int qubit, Pauli axis);

MeasurementResult measure_projective(const DensityMatrix &rho, int qubit, Pauli axis, Rng &rng);

/// Reduced state on `keep`; keep[k] becomes qubit k of the result.
DensityMatrix partial_trace(const DensityMatrix &rho, std::span<const int> keep);
DensityMatrix partial_trace(const DensityMatrix &rho, std::initializer_list<int> keep);

double fidelity_with_pure(const DensityMatrix &rho, const CVector &psi);

double pauli_expectation(const DensityMatrix &rho, const PauliString &p);

/// Computational-basis populations; entry i is the probability of index i.
std::vector<double> populations(const DensityMatrix &rho);

// Named target states.
CVector ket(std::string_view bits);
enum class BellState : std::uint8_t { PhiPlus, PhiMinus, PsiPlus, PsiMinus };
CVector bell_vector(BellState b);
CVector ghz_vector(int n_qubits);

}  // namespace qnet

#endif
