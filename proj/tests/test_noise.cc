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


#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "oracles.h"
#include "qnet/noise.h"

using namespace qnet;
using qnet::testing::max_abs;

namespace {

MemoryDecayParams with_network() { return {0.895, 1843.0, 1.37, 11.6e-3}; }

std::vector<DecayPoint> curve(const MemoryDecayParams &m, int points, double max_n, double sigma) {
    std::vector<DecayPoint> out;
    for (int i = 0; i < points; ++i) {
        const double n = max_n * i / (points - 1);
        out.push_back({n, m.amplitude_a * std::exp(-std::pow(n / m.n_1e, m.exponent_n)), sigma});
    }
    return out;
}

std::filesystem::path temp_file(const std::string &name) {
    return std::filesystem::temp_directory_path() / ("qnet_test_" + name);
}

}  // namespace

TEST_CASE("memory coherence factor") {
    const MemoryDecayParams m = with_network();
    CHECK(memory_coherence_factor(0, m) == 1.0);
    for (double n : {0.5, 1.0, 1.37, 3.0}) {
        MemoryDecayParams q = m;
        q.exponent_n = n;
        CHECK(std::abs(memory_coherence_factor(q.n_1e, q) - std::exp(-1.0)) < 1e-12);
    }
    CHECK(memory_coherence_factor(450, m) == doctest::Approx(std::exp(-std::pow(450 / 1843.0, 1.37))));
    // exp(-(450/1843)^1.37) evaluates to 0.8651.
    CHECK(memory_coherence_factor(450, m) == doctest::Approx(0.8651).epsilon(1e-4));
    double prev = 1.0;
    for (int n = 0; n <= 6000; n += 100) {
        const double c = memory_coherence_factor(n, m);
        CHECK(c <= prev);
        prev = c;
    }
    CHECK_THROWS_AS(memory_coherence_factor(-1, m), NoiseError);
}

TEST_CASE("dephasing channels scale the coherences") {
    Rng rng(1);
    const DensityMatrix rho = qnet::testing::random_state(1, rng);
    const DensityMatrix id = apply_channel(rho, memory_dephasing_channel(0, with_network()), {0});
    CHECK(max_abs(id.matrix() - rho.matrix()) < 1e-14);

    const DensityMatrix out = apply_channel(rho, dephasing_channel(0.6), {0});
    CHECK(std::abs(out(0, 1) - 0.6 * rho(0, 1)) < 1e-14);
    CHECK(std::abs(out(0, 0) - rho(0, 0)) < 1e-14);

    const Complex kappa = std::polar(0.7, 0.9);
    const DensityMatrix cz = apply_channel(rho, complex_dephasing_channel(kappa), {0});
    CHECK(std::abs(cz(0, 1) - kappa * rho(0, 1)) < 1e-14);
    CHECK(std::abs(cz(1, 0) - std::conj(kappa) * rho(1, 0)) < 1e-14);
    CHECK_THROWS_AS(complex_dephasing_channel(Complex(1.1, 0)), NoiseError);
    CHECK_THROWS_AS(dephasing_channel(-0.1), NoiseError);

    // Free evolution maps elapsed time to an equivalent attempt count.
    const MemoryDecayParams idle{0.885, 2042, 1.61, 11.6e-3};
    const DensityMatrix fe = apply_channel(rho, free_evolution_dephasing_channel(2042 * 5e-6, 5e-6, idle), {0});
    CHECK(std::abs(fe(0, 1) - std::exp(-1.0) * rho(0, 1)) < 1e-12);
}

TEST_CASE("depolarizing channel") {
    Rng rng(2);
    for (int k = 1; k <= 3; ++k) {
        const DensityMatrix rho = qnet::testing::random_state(k, rng);
        std::vector<int> targets(k);
        for (int q = 0; q < k; ++q) targets[q] = q;
        const int d = 1 << k;
        for (double p : {0.0, 0.11, 0.5, 1.0}) {
            const KrausChannel ch = depolarizing_channel(p, k);
            CHECK(ch.completeness_error() < 1e-12);
            const DensityMatrix out = apply_channel(rho, ch, std::span<const int>(targets));
            const CMatrix oracle = (1 - p) * rho.matrix() + p * CMatrix::Identity(d, d) / double(d);
            CHECK(max_abs(out.matrix() - oracle) < 1e-12);
        }
    }
    // Acting on one qubit of a pair leaves the other marginal untouched.
    const DensityMatrix bell = DensityMatrix::from_pure(bell_vector(BellState::PhiPlus));
    const DensityMatrix out = apply_channel(bell, depolarizing_channel(0.3, 1), {1});
    CHECK(pauli_expectation(out, PauliString::parse("ZZ")) == doctest::Approx(0.7));
    CHECK_THROWS_AS(depolarizing_channel(1.5, 1), NoiseError);
}

TEST_CASE("readout error model") {
    const ReadoutModel m{0.95, 0.99, 0, 0};
    const std::vector<double> p0{1.0, 0.0};
    const auto meas = apply_readout_error(p0, std::span<const ReadoutModel>(&m, 1));
    CHECK(meas[0] == doctest::Approx(0.95));
    CHECK(meas[1] == doctest::Approx(0.05));
    CHECK(m.prob(0, 1) == doctest::Approx(0.01));

    // Two-qubit forward map against an explicit sum over true outcomes.
    const std::vector<ReadoutModel> models{{0.94, 0.9825, 0, 0}, {0.95, 0.99, 0, 0}};
    const std::vector<double> p{0.1, 0.2, 0.3, 0.4};
    const auto m2 = apply_readout_error(p, models);
    for (int meas_i = 0; meas_i < 4; ++meas_i) {
        double expect = 0;
        for (int t = 0; t < 4; ++t)
            expect += p[t] * models[0].prob(meas_i & 1, t & 1) * models[1].prob(meas_i >> 1, t >> 1);
        CHECK(m2[meas_i] == doctest::Approx(expect).epsilon(1e-14));
    }
    const ReadoutModel perfect;
    const std::vector<ReadoutModel> perfect2{perfect, perfect};
    const auto same = apply_readout_error(p, perfect2);
    for (int i = 0; i < 4; ++i) CHECK(same[i] == p[i]);

    CHECK_FALSE(ReadoutModel{0.4, 0.5, 0, 0}.check().empty());
    CHECK_THROWS_AS(apply_readout_error(std::vector<double>{0.5, 0.6}, std::span<const ReadoutModel>(&m, 1)),
                    NoiseError);
}

TEST_CASE("decay model gradient matches finite differences") {
    double g[3];
    const double a = 0.9, n1e = 1800, n = 1.4, x = 700;
    const double f = decay_model(x, a, n1e, n, g);
    CHECK(f == doctest::Approx(a * std::exp(-std::pow(x / n1e, n))));
    const double h = 1e-6;
    CHECK(g[0] == doctest::Approx((decay_model(x, a + h, n1e, n) - decay_model(x, a - h, n1e, n)) / (2 * h)));
    CHECK(g[1] == doctest::Approx((decay_model(x, a, n1e + h * 1e3, n) - decay_model(x, a, n1e - h * 1e3, n)) /
                                  (2 * h * 1e3)));
    CHECK(g[2] == doctest::Approx((decay_model(x, a, n1e, n + h) - decay_model(x, a, n1e, n - h)) / (2 * h)));
}

TEST_CASE("fit recovers noiseless parameters") {
    const MemoryDecayParams truth = with_network();
    const auto data = curve(truth, 20, 5000, 0.01);
    const DecayFit fit = fit_memory_decay(data);
    CHECK(std::abs(fit.params.amplitude_a / truth.amplitude_a - 1) < 1e-3);
    CHECK(std::abs(fit.params.n_1e / truth.n_1e - 1) < 1e-3);
    CHECK(std::abs(fit.params.exponent_n / truth.exponent_n - 1) < 1e-3);
    CHECK(fit.chi2 < 1e-12);
}

TEST_CASE("fit error bars give nominal coverage") {
    const MemoryDecayParams truth = with_network();
    const auto clean = curve(truth, 20, 5000, 0.01);
    Rng rng(77);
    int covered = 0;
    const int trials = 100;
    for (int t = 0; t < trials; ++t) {
        auto data = clean;
        for (auto &d : data) d.bloch_length += std::normal_distribution<double>(0, 0.01)(rng);
        const DecayFit f = fit_memory_decay(data);
        covered += std::abs(f.params.amplitude_a - truth.amplitude_a) <= 3 * f.sigma_a &&
                   std::abs(f.params.n_1e - truth.n_1e) <= 3 * f.sigma_n_1e &&
                   std::abs(f.params.exponent_n - truth.exponent_n) <= 3 * f.sigma_n;
    }
    CHECK(covered >= 95);
}

TEST_CASE("relative sigma mode rescales by reduced chi2") {
    const auto clean = curve(with_network(), 20, 5000, 0.01);
    Rng rng(4);
    auto data = clean;
    for (auto &d : data) d.bloch_length += std::normal_distribution<double>(0, 0.02)(rng);
    FitOptions abs_opt, rel_opt;
    rel_opt.sigma_mode = SigmaMode::kRelative;
    const DecayFit fa = fit_memory_decay(data, abs_opt);
    const DecayFit fr = fit_memory_decay(data, rel_opt);
    CHECK(fr.params.n_1e == doctest::Approx(fa.params.n_1e));
    CHECK(fr.sigma_n_1e == doctest::Approx(fa.sigma_n_1e * std::sqrt(fa.chi2 / 17.0)));
}

TEST_CASE("degenerate fits are rejected") {
    const auto data = curve(with_network(), 2, 5000, 0.01);
    CHECK_THROWS_AS(fit_memory_decay(data), FitError);
    std::vector<DecayPoint> same(6, DecayPoint{100, 0.8, 0.01});
    CHECK_THROWS_AS(fit_memory_decay(same), FitError);
    auto zero_sigma = curve(with_network(), 10, 5000, 0.0);
    CHECK_THROWS_AS(fit_memory_decay(zero_sigma), FitError);
}

TEST_CASE("decay csv round trip") {
    const auto path = temp_file("decay.csv");
    const auto data = curve(with_network(), 8, 4000, 0.01);
    write_decay_csv(path, data);
    const auto back = read_decay_csv(path);
    REQUIRE(back.size() == data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(back[i].attempts == doctest::Approx(data[i].attempts));
        CHECK(back[i].bloch_length == doctest::Approx(data[i].bloch_length).epsilon(1e-5));
    }
    {
        std::ofstream out(path);
        out << "attempts,bloch_length,sigma\n100,0.8\n";
    }
    CHECK_THROWS_AS(read_decay_csv(path), NoiseError);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(read_decay_csv(path), std::runtime_error);
}

TEST_CASE("nuclear parameter validation") {
    NuclearSpinParams n;
    CHECK(n.check().empty());
    n.tau_larmor_s = 0;
    CHECK_FALSE(n.check().empty());
    MemoryDecayParams m = with_network();
    m.n_1e = -1;
    CHECK_THROWS_AS(m.validate(), NoiseError);
}
