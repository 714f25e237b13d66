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

#include "qnet/qstate.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace qnet {

namespace {

int qubits_for_dim(Eigen::Index dim) {
    int n = 0;
    while ((Eigen::Index{1} << n) < dim) ++n;
    if ((Eigen::Index{1} << n) != dim) return -1;
    return n;
}

// Index bookkeeping for an operator acting on a subset of qubits.
struct TargetLayout {
    std::vector<int> offsets;  // basis-index offset for each operator index
    std::vector<int> rests;    // every assignment of the non-target bits
};

TargetLayout make_layout(int n_qubits, std::span<const int> targets) {
    int mask = 0;
    for (int t : targets) {
        if (t < 0 || t >= n_qubits) {
            throw StateError("target qubit " + std::to_string(t) + " out of range for " +
                             std::to_string(n_qubits) + "-qubit state");
        }
        if (mask & (1 << t)) throw StateError("duplicate target qubit " + std::to_string(t));
        mask |= 1 << t;
    }
    TargetLayout layout;
    const int k = static_cast<int>(targets.size());
    layout.offsets.resize(std::size_t{1} << k);
    for (int j = 0; j < (1 << k); ++j) {
        int off = 0;
        for (int b = 0; b < k; ++b) {
            if (j & (1 << b)) off |= 1 << targets[b];
        }
        layout.offsets[j] = off;
    }
    for (int r = 0; r < (1 << n_qubits); ++r) {
        if ((r & mask) == 0) layout.rests.push_back(r);
    }
    return layout;
}

// rho <- K rho K†, accumulated into `out`.
void accumulate_sandwich(const CMatrix &rho, const CMatrix &op, const TargetLayout &layout, CMatrix &out) {
    const Eigen::Index dim = rho.rows();
    const int m = static_cast<int>(layout.offsets.size());
    CMatrix left(dim, dim);
    std::vector<Complex> buf(m);
    for (Eigen::Index c = 0; c < dim; ++c) {
        for (int r : layout.rests) {
            for (int j = 0; j < m; ++j) buf[j] = rho(r | layout.offsets[j], c);
            for (int i = 0; i < m; ++i) {
                Complex acc = 0.0;
                for (int j = 0; j < m; ++j) acc += op(i, j) * buf[j];
                left(r | layout.offsets[i], c) = acc;
            }
        }
    }
    for (Eigen::Index row = 0; row < dim; ++row) {
        for (int r : layout.rests) {
            for (int j = 0; j < m; ++j) buf[j] = left(row, r | layout.offsets[j]);
            for (int i = 0; i < m; ++i) {
                Complex acc = 0.0;
                for (int j = 0; j < m; ++j) acc += buf[j] * std::conj(op(i, j));
                out(row, r | layout.offsets[i]) += acc;
            }
        }
    }
}

void check_operator_shape(const CMatrix &op, std::size_t n_targets) {
    if (op.rows() != op.cols() || op.rows() != (Eigen::Index{1} << n_targets)) {
        throw StateError("operator dimension " + std::to_string(op.rows()) + "x" + std::to_string(op.cols()) +
                         " does not match " + std::to_string(n_targets) + " target qubit(s)");
    }
}

CMatrix axis_projector(Pauli axis, int outcome) {
    const double sign = outcome == 0 ? 1.0 : -1.0;
    return 0.5 * (CMatrix::Identity(2, 2) + sign * pauli_matrix(axis));
}

}  // namespace

DensityMatrix unchecked_state(int n_qubits, CMatrix rho) { return DensityMatrix(n_qubits, std::move(rho)); }

DensityMatrix DensityMatrix::from_matrix(CMatrix m) {
    if (m.rows() != m.cols()) throw StateError("density matrix must be square");
    const int n = qubits_for_dim(m.rows());
    if (n < 1 || n > kMaxQubits) throw StateError("density matrix must span 1 to 4 qubits");
    DensityMatrix rho(n, std::move(m));
    rho.validate();
    return rho;
}

DensityMatrix DensityMatrix::from_pure(const CVector &psi) {
    const int n = qubits_for_dim(psi.size());
    if (n < 1 || n > kMaxQubits) throw StateError("state vector must span 1 to 4 qubits");
    if (std::abs(psi.squaredNorm() - 1.0) > kTolerances.normalization) throw StateError("state vector not normalized");
    return DensityMatrix(n, psi * psi.adjoint());
}

DensityMatrix DensityMatrix::basis_state(std::string_view bits) { return from_pure(ket(bits)); }

DensityMatrix DensityMatrix::maximally_mixed(int n_qubits) {
    if (n_qubits < 1 || n_qubits > kMaxQubits) throw StateError("maximally mixed state needs 1 to 4 qubits");
    const int dim = 1 << n_qubits;
    return DensityMatrix(n_qubits, CMatrix::Identity(dim, dim) / static_cast<double>(dim));
}

double DensityMatrix::trace() const { return rho_.trace().real(); }

double DensityMatrix::max_hermiticity_error() const { return (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff(); }

double DensityMatrix::min_eigenvalue() const {
    const CMatrix herm = 0.5 * (rho_ + rho_.adjoint());
    Eigen::SelfAdjointEigenSolver<CMatrix> solver(herm, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
}

void DensityMatrix::validate() const {
    if (max_hermiticity_error() > kTolerances.hermiticity) throw StateError("density matrix is not Hermitian");
    if (std::abs(trace() - 1.0) > kTolerances.trace) throw StateError("density matrix trace differs from 1");
    if (min_eigenvalue() < -kTolerances.psd) throw StateError("density matrix has a negative eigenvalue");
}

DensityMatrix DensityMatrix::tensor(const DensityMatrix &other) const {
    const int n = n_qubits_ + other.n_qubits_;
    if (n > kMaxQubits) throw StateError("tensor product exceeds 4 qubits");
    const int d_lo = dim();
    const int d_hi = other.dim();
    CMatrix out(d_lo * d_hi, d_lo * d_hi);
    for (int i_hi = 0; i_hi < d_hi; ++i_hi) {
        for (int j_hi = 0; j_hi < d_hi; ++j_hi) {
            out.block(i_hi * d_lo, j_hi * d_lo, d_lo, d_lo) = other.rho_(i_hi, j_hi) * rho_;
        }
    }
    return DensityMatrix(n, std::move(out));
}

int KrausChannel::num_qubits() const {
    if (operators.empty()) return 0;
    return qubits_for_dim(operators.front().rows());
}

double KrausChannel::completeness_error() const {
    if (operators.empty()) return 1.0;
    const Eigen::Index d = operators.front().rows();
    CMatrix sum = CMatrix::Zero(d, d);
    for (const auto &k : operators) sum += k.adjoint() * k;
    return (sum - CMatrix::Identity(d, d)).cwiseAbs().maxCoeff();
}

KrausChannel KrausChannel::make(std::vector<CMatrix> operators) {
    if (operators.empty()) throw StateError("Kraus channel needs at least one operator");
    const Eigen::Index d = operators.front().rows();
    if (qubits_for_dim(d) < 1) throw StateError("Kraus operators must be 2^k square matrices");
    for (const auto &k : operators) {
        if (k.rows() != d || k.cols() != d) throw StateError("Kraus operators have inconsistent shapes");
    }
    KrausChannel ch{std::move(operators)};
    if (ch.completeness_error() > kTolerances.trace_preserving) {
        throw StateError("Kraus channel is not trace preserving");
    }
    return ch;
}

PauliString PauliString::parse(std::string_view text) {
    std::vector<Pauli> symbols;
    symbols.reserve(text.size());
    for (char c : text) {
        switch (c) {
            case 'I': symbols.push_back(Pauli::I); break;
            case 'X': symbols.push_back(Pauli::X); break;
            case 'Y': symbols.push_back(Pauli::Y); break;
            case 'Z': symbols.push_back(Pauli::Z); break;
            default: throw StateError(std::string("invalid Pauli symbol '") + c + "'");
        }
    }
    return PauliString(std::move(symbols));
}

std::string PauliString::str() const {
    std::string out;
    for (Pauli p : symbols_) out.push_back("IXYZ"[static_cast<int>(p)]);
    return out;
}

CMatrix pauli_matrix(Pauli p) {
    switch (p) {
        case Pauli::I: return gates::identity();
        case Pauli::X: return gates::x();
        case Pauli::Y: return gates::y();
        case Pauli::Z: return gates::z();
    }
    return gates::identity();
}

namespace gates {

CMatrix identity(int n_qubits) { return CMatrix::Identity(1 << n_qubits, 1 << n_qubits); }

CMatrix x() {
    CMatrix m(2, 2);
    m << 0, 1, 1, 0;
    return m;
}

CMatrix y() {
    CMatrix m(2, 2);
    m << 0, Complex(0, -1), Complex(0, 1), 0;
    return m;
}

CMatrix z() {
    CMatrix m(2, 2);
    m << 1, 0, 0, -1;
    return m;
}

CMatrix h() {
    CMatrix m(2, 2);
    m << 1, 1, 1, -1;
    return m / std::numbers::sqrt2;
}

CMatrix s() {
    CMatrix m(2, 2);
    m << 1, 0, 0, Complex(0, 1);
    return m;
}

CMatrix rx(double theta) {
    const double c = std::cos(theta / 2), sn = std::sin(theta / 2);
    CMatrix m(2, 2);
    m << c, Complex(0, -sn), Complex(0, -sn), c;
    return m;
}

CMatrix ry(double theta) {
    const double c = std::cos(theta / 2), sn = std::sin(theta / 2);
    CMatrix m(2, 2);
    m << c, -sn, sn, c;
    return m;
}

CMatrix rz(double theta) {
    CMatrix m = CMatrix::Zero(2, 2);
    m(0, 0) = std::polar(1.0, -theta / 2);
    m(1, 1) = std::polar(1.0, theta / 2);
    return m;
}

CMatrix cnot() {
    // Basis index = control + 2 * target.
    CMatrix m = CMatrix::Zero(4, 4);
    m(0, 0) = 1;  // c=0 t=0
    m(2, 2) = 1;  // c=0 t=1
    m(3, 1) = 1;  // c=1 t=0 -> c=1 t=1
    m(1, 3) = 1;
    return m;
}

}  // namespace gates

DensityMatrix apply_unitary(const DensityMatrix &rho, const CMatrix &u, std::span<const int> targets) {
    check_operator_shape(u, targets.size());
    const Eigen::Index d = u.rows();
    if ((u.adjoint() * u - CMatrix::Identity(d, d)).cwiseAbs().maxCoeff() > kTolerances.unitarity) {
        throw StateError("operator is not unitary");
    }
    const TargetLayout layout = make_layout(rho.num_qubits(), targets);
    CMatrix out = CMatrix::Zero(rho.dim(), rho.dim());
    accumulate_sandwich(rho.matrix(), u, layout, out);
    return unchecked_state(rho.num_qubits(), std::move(out));
}

DensityMatrix apply_unitary(const DensityMatrix &rho, const CMatrix &u, std::initializer_list<int> targets) {
    return apply_unitary(rho, u, std::span<const int>(targets.begin(), targets.size()));
}

DensityMatrix apply_channel(const DensityMatrix &rho, const KrausChannel &channel, std::span<const int> targets) {
    if (channel.operators.empty()) throw StateError("empty Kraus channel");
    for (const auto &k : channel.operators) check_operator_shape(k, targets.size());
    if (channel.completeness_error() > kTolerances.trace_preserving) {
        throw StateError("Kraus channel is not trace preserving");
    }
    const TargetLayout layout = make_layout(rho.num_qubits(), targets);
    CMatrix out = CMatrix::Zero(rho.dim(), rho.dim());
    for (const auto &k : channel.operators) accumulate_sandwich(rho.matrix(), k, layout, out);
    return unchecked_state(rho.num_qubits(), std::move(out));
}

DensityMatrix apply_channel(const DensityMatrix &rho, const KrausChannel &channel, std::initializer_list<int> targets) {
    return apply_channel(rho, channel, std::span<const int>(targets.begin(), targets.size()));
}

double outcome_zero_probability(const DensityMatrix &rho, int qubit, Pauli axis) {
    if (axis == Pauli::I) throw StateError("cannot measure along the identity");
    std::vector<Pauli> symbols(rho.num_qubits(), Pauli::I);
    if (qubit < 0 || qubit >= rho.num_qubits()) throw StateError("measured qubit out of range");
    symbols[qubit] = axis;
    const double expectation = pauli_expectation(rho, PauliString(std::move(symbols)));
    return std::clamp(0.5 * (1.0 + expectation), 0.0, 1.0);
}

MeasurementResult project(const DensityMatrix &rho, int qubit, Pauli axis, int outcome) {
    if (axis == Pauli::I) throw StateError("cannot measure along the identity");
    if (outcome != 0 && outcome != 1) throw StateError("measurement outcome must be 0 or 1");
    const int targets[] = {qubit};
    const TargetLayout layout = make_layout(rho.num_qubits(), targets);
    CMatrix out = CMatrix::Zero(rho.dim(), rho.dim());
    accumulate_sandwich(rho.matrix(), axis_projector(axis, outcome), layout, out);
    const double p = out.trace().real();
    if (p <= kTolerances.probability) {
        throw StateError("requested measurement branch has zero probability");
    }
    out /= p;
    return MeasurementResult{outcome, unchecked_state(rho.num_qubits(), std::move(out)), p};
}

MeasurementResult measure_projective(const DensityMatrix &rho, int qubit, Pauli axis, Rng &rng) {
    const double p0 = outcome_zero_probability(rho, qubit, axis);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const int outcome = u01(rng) < p0 ? 0 : 1;
    return project(rho, qubit, axis, outcome);
}

DensityMatrix partial_trace(const DensityMatrix &rho, std::span<const int> keep) {
    if (keep.empty()) throw StateError("partial trace must keep at least one qubit");
    const int n = rho.num_qubits();
    int keep_mask = 0;
    for (int q : keep) {
        if (q < 0 || q >= n) throw StateError("kept qubit out of range");
        if (keep_mask & (1 << q)) throw StateError("duplicate kept qubit");
        keep_mask |= 1 << q;
    }
    const int k = static_cast<int>(keep.size());
    std::vector<int> kept_offsets(std::size_t{1} << k);
    for (int j = 0; j < (1 << k); ++j) {
        int off = 0;
        for (int b = 0; b < k; ++b) {
            if (j & (1 << b)) off |= 1 << keep[b];
        }
        kept_offsets[j] = off;
    }
    std::vector<int> traced;
    for (int r = 0; r < (1 << n); ++r) {
        if ((r & keep_mask) == 0) traced.push_back(r);
    }
    CMatrix out = CMatrix::Zero(1 << k, 1 << k);
    for (int i = 0; i < (1 << k); ++i) {
        for (int j = 0; j < (1 << k); ++j) {
            Complex acc = 0.0;
            for (int t : traced) acc += rho(kept_offsets[i] | t, kept_offsets[j] | t);
            out(i, j) = acc;
        }
    }
    return unchecked_state(k, std::move(out));
}

DensityMatrix partial_trace(const DensityMatrix &rho, std::initializer_list<int> keep) {
    return partial_trace(rho, std::span<const int>(keep.begin(), keep.size()));
}

double fidelity_with_pure(const DensityMatrix &rho, const CVector &psi) {
    if (psi.size() != rho.dim()) throw StateError("state vector dimension does not match density matrix");
    if (std::abs(psi.squaredNorm() - 1.0) > kTolerances.normalization) throw StateError("state vector not normalized");
    const Complex f = psi.dot(rho.matrix() * psi);
    // Negative values from round-off are clipped here only; the state is untouched.
    return std::clamp(f.real(), 0.0, 1.0);
}

double pauli_expectation(const DensityMatrix &rho, const PauliString &p) {
    if (static_cast<int>(p.size()) != rho.num_qubits()) {
        throw StateError("Pauli string length " + std::to_string(p.size()) + " does not match " +
                         std::to_string(rho.num_qubits()) + "-qubit state");
    }
    int flip = 0;
    for (std::size_t q = 0; q < p.size(); ++q) {
        if (p[q] == Pauli::X || p[q] == Pauli::Y) flip |= 1 << q;
    }
    // P|j> = phase(j) |j ^ flip>, so tr(rho P) = sum_j rho(j, j ^ flip) phase(j).
    Complex acc = 0.0;
    for (int j = 0; j < rho.dim(); ++j) {
        Complex phase = 1.0;
        for (std::size_t q = 0; q < p.size(); ++q) {
            const bool bit = (j >> q) & 1;
            switch (p[q]) {
                case Pauli::I:
                case Pauli::X: break;
                case Pauli::Y: phase *= bit ? Complex(0, -1) : Complex(0, 1); break;
                case Pauli::Z:
                    if (bit) phase = -phase;
                    break;
            }
        }
        acc += rho(j, j ^ flip) * phase;
    }
    return acc.real();
}

std::vector<double> populations(const DensityMatrix &rho) {
    std::vector<double> out(rho.dim());
    for (int i = 0; i < rho.dim(); ++i) out[i] = rho(i, i).real();
    return out;
}

CVector ket(std::string_view bits) {
    const int n = static_cast<int>(bits.size());
    if (n < 1 || n > kMaxQubits) throw StateError("ket needs 1 to 4 qubits");
    int index = 0;
    for (int q = 0; q < n; ++q) {
        if (bits[q] == '1') {
            index |= 1 << q;
        } else if (bits[q] != '0') {
            throw StateError("ket bits must be '0' or '1'");
        }
    }
    CVector v = CVector::Zero(1 << n);
    v(index) = 1.0;
    return v;
}

CVector bell_vector(BellState b) {
    const double r = 1.0 / std::numbers::sqrt2;
    switch (b) {
        case BellState::PhiPlus: return r * (ket("00") + ket("11"));
        case BellState::PhiMinus: return r * (ket("00") - ket("11"));
        case BellState::PsiPlus: return r * (ket("01") + ket("10"));
        case BellState::PsiMinus: return r * (ket("01") - ket("10"));
    }
    return ket("00");
}

CVector ghz_vector(int n_qubits) {
    std::string zeros(n_qubits, '0'), ones(n_qubits, '1');
    return (ket(zeros) + ket(ones)) / std::numbers::sqrt2;
}

}  // namespace qnet
