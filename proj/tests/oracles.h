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


#ifndef QNET_TESTS_ORACLES_H
#define QNET_TESTS_ORACLES_H

// Reference implementations used only by the tests. They favour the most
// literal formulation over speed so they share no code with the library.

#include <complex>
#include <random>
#include <vector>

#include "qnet/qstate.h"

namespace qnet::testing {

inline CMatrix random_complex(int d, Rng &rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    CMatrix m(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) m(i, j) = Complex(g(rng), g(rng));
    return m;
}

inline CMatrix random_unitary(int d, Rng &rng) {
    Eigen::HouseholderQR<CMatrix> qr(random_complex(d, rng));
    return qr.householderQ() * CMatrix::Identity(d, d);
}

inline DensityMatrix random_state(int n_qubits, Rng &rng) {
    const int d = 1 << n_qubits;
    CMatrix g = random_complex(d, rng);
    CMatrix rho = g * g.adjoint();
    rho /= rho.trace();
    rho = (rho + rho.adjoint()) / 2.0;
    return DensityMatrix::from_matrix(rho);
}

// Full-register matrix of `op` acting on `targets`: element (i, j) is
// op(sub(i), sub(j)) when i and j agree on every untouched qubit.
inline CMatrix embed(const CMatrix &op, const std::vector<int> &targets, int n_qubits) {
    const int d = 1 << n_qubits;
    CMatrix full = CMatrix::Zero(d, d);
    int touched = 0;
    for (int t : targets) touched |= 1 << t;
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            if ((i & ~touched) != (j & ~touched)) continue;
            int si = 0, sj = 0;
            for (std::size_t k = 0; k < targets.size(); ++k) {
                si |= ((i >> targets[k]) & 1) << k;
                sj |= ((j >> targets[k]) & 1) << k;
            }
            full(i, j) = op(si, sj);
        }
    }
    return full;
}

inline CMatrix kron(const CMatrix &hi, const CMatrix &lo) {
    CMatrix out(hi.rows() * lo.rows(), hi.cols() * lo.cols());
    for (int a = 0; a < hi.rows(); ++a)
        for (int b = 0; b < hi.cols(); ++b) out.block(a * lo.rows(), b * lo.cols(), lo.rows(), lo.cols()) = hi(a, b) * lo;
    return out;
}

// Trace over every qubit not in `keep`; keep[k] becomes bit k.
inline CMatrix partial_trace_oracle(const CMatrix &rho, const std::vector<int> &keep, int n_qubits) {
    const int dk = 1 << keep.size();
    CMatrix out = CMatrix::Zero(dk, dk);
    const int d = 1 << n_qubits;
    auto reduced = [&](int i) {
        int r = 0;
        for (std::size_t k = 0; k < keep.size(); ++k) r |= ((i >> keep[k]) & 1) << k;
        return r;
    };
    int kept = 0;
    for (int q : keep) kept |= 1 << q;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            if ((i & ~kept) == (j & ~kept)) out(reduced(i), reduced(j)) += rho(i, j);
    return out;
}

inline double max_abs(const CMatrix &m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace qnet::testing

#endif
