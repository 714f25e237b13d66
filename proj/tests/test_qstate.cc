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


#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "oracles.h"
#include "qnet/qstate.h"

using namespace qnet;
using qnet::testing::embed;
using qnet::testing::max_abs;

TEST_CASE("basis states follow little-endian ordering") {
    const DensityMatrix rho = DensityMatrix::basis_state("01");
    CHECK(rho.num_qubits() == 2);
    CHECK(std::abs(rho(2, 2) - 1.0) < 1e-15);
    const auto pops = populations(DensityMatrix::basis_state("110"));
    CHECK(pops[3] == doctest::Approx(1.0));
}

TEST_CASE("constructors reject invalid matrices") {
    CMatrix m = CMatrix::Identity(2, 2);
    CHECK_THROWS_AS(DensityMatrix::from_matrix(m), StateError);  // trace 2
    m << 1.5, 0, 0, -0.5;
    CHECK_THROWS_AS(DensityMatrix::from_matrix(m), StateError);  // negative eigenvalue
    m << 0.5, 0.3, 0.1, 0.5;
    CHECK_THROWS_AS(DensityMatrix::from_matrix(m), StateError);  // not Hermitian
    CHECK_THROWS_AS(DensityMatrix::maximally_mixed(5), StateError);
    CHECK_THROWS_AS(DensityMatrix::basis_state("0101").tensor(DensityMatrix::basis_state("0")), StateError);
}

TEST_CASE("apply_unitary agrees with the embedded full operator") {
    Rng rng(11);
    for (int n = 1; n <= 4; ++n) {
        for (int trial = 0; trial < 5; ++trial) {
            const DensityMatrix rho = qnet::testing::random_state(n, rng);
            std::vector<int> qubits(n);
            for (int q = 0; q < n; ++q) qubits[q] = q;
            std::shuffle(qubits.begin(), qubits.end(), rng);
            const int k = 1 + static_cast<int>(rng() % std::min(n, 2));
            std::vector<int> targets(qubits.begin(), qubits.begin() + k);
            const CMatrix u = qnet::testing::random_unitary(1 << k, rng);

            const DensityMatrix out = apply_unitary(rho, u, std::span<const int>(targets));
            const CMatrix full = embed(u, targets, n);
            CHECK(max_abs(out.matrix() - full * rho.matrix() * full.adjoint()) < 1e-12);
            CHECK(std::abs(out.trace() - 1.0) < kTolerances.trace);
            CHECK(out.max_hermiticity_error() < kTolerances.hermiticity);
            CHECK(out.min_eigenvalue() > -kTolerances.psd);
        }
    }
}

TEST_CASE("cnot control sits on operator bit 0") {
    // |c=1, t=0> has index 1 and maps to |1,1> = index 3.
    DensityMatrix rho = DensityMatrix::basis_state("10");
    rho = apply_unitary(rho, gates::cnot(), {0, 1});
    CHECK(populations(rho)[3] == doctest::Approx(1.0));
    DensityMatrix rev = apply_unitary(DensityMatrix::basis_state("10"), gates::cnot(), {1, 0});
    CHECK(populations(rev)[1] == doctest::Approx(1.0));
}

TEST_CASE("gates are unitary and compose as expected") {
    for (const CMatrix &g : {gates::x(), gates::y(), gates::z(), gates::h(), gates::s(), gates::rx(0.3),
                             gates::ry(1.1), gates::rz(-2.0), gates::cnot()}) {
        CHECK(max_abs(g.adjoint() * g - CMatrix::Identity(g.rows(), g.cols())) < 1e-14);
    }
    CHECK(max_abs(gates::h() * gates::z() * gates::h() - gates::x()) < 1e-14);
    CHECK(max_abs(gates::s() * gates::s() - gates::z()) < 1e-14);
    // rz(theta) is diag(e^{-i theta/2}, e^{i theta/2}).
    CHECK(std::abs(gates::rz(0.8)(1, 1) / gates::rz(0.8)(0, 0) - std::polar(1.0, 0.8)) < 1e-14);
}

TEST_CASE("Kraus channels preserve trace and positivity") {
    Rng rng(5);
    // Amplitude damping with gamma = 0.3.
    CMatrix k0(2, 2), k1(2, 2);
    k0 << 1, 0, 0, std::sqrt(0.7);
    k1 << 0, std::sqrt(0.3), 0, 0;
    const KrausChannel ch = KrausChannel::make({k0, k1});
    CHECK(ch.completeness_error() < 1e-15);
    for (int trial = 0; trial < 10; ++trial) {
        const DensityMatrix rho = qnet::testing::random_state(3, rng);
        const int q = static_cast<int>(rng() % 3);
        const DensityMatrix out = apply_channel(rho, ch, {q});
        CMatrix oracle = CMatrix::Zero(8, 8);
        for (const CMatrix &k : ch.operators) {
            const CMatrix full = embed(k, {q}, 3);
            oracle += full * rho.matrix() * full.adjoint();
        }
        CHECK(max_abs(out.matrix() - oracle) < 1e-12);
        CHECK(std::abs(out.trace() - 1.0) < kTolerances.trace);
        CHECK(out.min_eigenvalue() > -kTolerances.psd);
    }
    CMatrix bad = CMatrix::Identity(2, 2) * 0.5;
    CHECK_THROWS_AS(KrausChannel::make({bad}), StateError);
}

TEST_CASE("partial trace matches the index-sum definition") {
    Rng rng(7);
    const DensityMatrix rho = qnet::testing::random_state(4, rng);
    for (const std::vector<int> &keep : {std::vector<int>{0}, {3, 1}, {0, 2, 3}, {2, 0}}) {
        const DensityMatrix red = partial_trace(rho, std::span<const int>(keep));
        CHECK(max_abs(red.matrix() - qnet::testing::partial_trace_oracle(rho.matrix(), keep, 4)) < 1e-12);
        CHECK(std::abs(red.trace() - 1.0) < 1e-12);
    }
    // Product states factor.
    const DensityMatrix a = qnet::testing::random_state(1, rng), b = qnet::testing::random_state(2, rng);
    const DensityMatrix ab = a.tensor(b);
    CHECK(max_abs(partial_trace(ab, {0}).matrix() - a.matrix()) < 1e-12);
    CHECK(max_abs(partial_trace(ab, {1, 2}).matrix() - b.matrix()) < 1e-12);
    CHECK(max_abs(ab.matrix() - qnet::testing::kron(b.matrix(), a.matrix())) < 1e-14);
}

TEST_CASE("projective measurement probabilities sum to one") {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const DensityMatrix rho = qnet::testing::random_state(3, rng);
        for (Pauli axis : {Pauli::X, Pauli::Y, Pauli::Z}) {
            const int q = trial % 3;
            const double p0 = outcome_zero_probability(rho, q, axis);
            const auto r0 = project(rho, q, axis, 0);
            const auto r1 = project(rho, q, axis, 1);
            CHECK(r0.probability + r1.probability == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(r0.probability == doctest::Approx(p0).epsilon(1e-12));
            // Born rule oracle: p0 = (1 + <P_q>) / 2.
            std::string s(3, 'I');
            s[q] = axis == Pauli::X ? 'X' : axis == Pauli::Y ? 'Y' : 'Z';
            CHECK(p0 == doctest::Approx((1 + pauli_expectation(rho, PauliString::parse(s))) / 2).epsilon(1e-12));
            CHECK(std::abs(r0.post_state.trace() - 1.0) < 1e-10);
            // The measured qubit is left in the eigenstate.
            CHECK(outcome_zero_probability(r0.post_state, q, axis) == doctest::Approx(1.0).epsilon(1e-10));
        }
    }
    CHECK_THROWS_AS(project(DensityMatrix::basis_state("0"), 0, Pauli::Z, 1), StateError);
}

TEST_CASE("measure_projective sampling follows the Born rule") {
    Rng rng(19);
    const DensityMatrix rho = apply_unitary(DensityMatrix::basis_state("0"), gates::ry(1.0), {0});
    const double p0 = std::cos(0.5) * std::cos(0.5);
    const int n = 20000;
    int zeros = 0;
    for (int i = 0; i < n; ++i) zeros += measure_projective(rho, 0, Pauli::Z, rng).outcome == 0;
    const double se = std::sqrt(p0 * (1 - p0) / n);
    CHECK(std::abs(zeros / double(n) - p0) < 4 * se);
}

TEST_CASE("named states and expectations") {
    const DensityMatrix ghz = DensityMatrix::from_pure(ghz_vector(3));
    CHECK(pauli_expectation(ghz, PauliString::parse("XXX")) == doctest::Approx(1.0));
    CHECK(pauli_expectation(ghz, PauliString::parse("XYY")) == doctest::Approx(-1.0));
    CHECK(pauli_expectation(ghz, PauliString::parse("ZZI")) == doctest::Approx(1.0));
    CHECK(fidelity_with_pure(ghz, ghz_vector(3)) == doctest::Approx(1.0));
    CHECK(fidelity_with_pure(DensityMatrix::maximally_mixed(3), ghz_vector(3)) == doctest::Approx(0.125));

    const DensityMatrix psim = DensityMatrix::from_pure(bell_vector(BellState::PsiMinus));
    CHECK(pauli_expectation(psim, PauliString::parse("XX")) == doctest::Approx(-1.0));
    CHECK(pauli_expectation(psim, PauliString::parse("YY")) == doctest::Approx(-1.0));
    CHECK(pauli_expectation(psim, PauliString::parse("ZZ")) == doctest::Approx(-1.0));
    CHECK(fidelity_with_pure(psim, bell_vector(BellState::PsiPlus)) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK_THROWS_AS(PauliString::parse("XQ"), StateError);
}
