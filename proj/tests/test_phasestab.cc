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
#include <numbers>
#include <vector>

#include "doctest.h"
#include "qnet/linkmodel.h"
#include "qnet/phasestab.h"

using namespace qnet;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> tone(double freq, double amp, double phase_deg, double rate, int n) {
    std::vector<double> out(n);
    for (int k = 0; k < n; ++k) out[k] = amp * std::cos(2 * kPi * freq * k / rate + phase_deg * kPi / 180);
    return out;
}

InterferometerSegment quiet_segment(const std::string &id) {
    InterferometerSegment s;
    s.id = id;
    s.detection = DetectionKind::kHeterodyne;
    return s;
}

PhaseStabConfig single_segment(const InterferometerSegment &seg, double window_s, double experiment_s) {
    PhaseStabConfig cfg;
    cfg.segments = {seg};
    cfg.schedule.startup_rounds = 0;
    cfg.schedule.cycle = {{window_s, false, {seg.id}}, {experiment_s, true, {}}};
    cfg.links = {{"L", {seg.id}}};
    return cfg;
}

}  // namespace

TEST_CASE("homodyne phase") {
    CHECK(homodyne_phase(1.0, 2.0, 0.0) == doctest::Approx(90.0));
    CHECK(homodyne_phase(1.0, 2.0, 4 * std::sqrt(2.0)) == doctest::Approx(0.0));
    CHECK(homodyne_phase(1.0, 1.0, -4.0) == doctest::Approx(180.0));
    CHECK(homodyne_phase(0.3, 0.7, 4 * std::sqrt(0.21) * std::cos(1.0)) == doctest::Approx(180 / kPi));
    CHECK_THROWS_AS(homodyne_phase(1.0, 1.0, 5.0), PhaseError);
    CHECK_THROWS_AS(homodyne_phase(0.0, 1.0, 0.0), PhaseError);
}

TEST_CASE("homodyne setpoint is insensitive to input intensity") {
    // I3 - I4 = 4 sqrt(I1 I2) cos(dtheta) vanishes at 90 deg for any intensities.
    for (double scale : {0.8, 1.0, 1.2}) {
        const double i1 = 1.7 * scale, i2 = 0.6;
        const double diff = 4 * std::sqrt(i1 * i2) * std::cos(kPi / 2);
        CHECK(homodyne_phase(i1, i2, diff) == doctest::Approx(90.0).epsilon(1e-12));
        // First-order sensitivity to I1 at the setpoint is zero.
        const double h = 1e-6;
        const double d_plus = 4 * std::sqrt((i1 + h) * i2) * std::cos(kPi / 2);
        const double d_minus = 4 * std::sqrt((i1 - h) * i2) * std::cos(kPi / 2);
        CHECK(std::abs(d_plus - d_minus) / (2 * h) < 1e-12);
    }
}

TEST_CASE("heterodyne phase recovers synthetic beats") {
    const double rate = 1e6, f = 20e3;
    const int n = 400;
    const auto ref = tone(f, 1.0, 0.0, rate, n);
    for (double phase : {37.0, -120.0, 179.0, 0.0}) {
        const auto beat = tone(f, 0.3, phase, rate, n);
        const double est = heterodyne_phase(beat, ref, rate, f);
        CHECK(std::abs(est - phase) < 0.1);
        const auto loud = tone(f, 3.0, phase, rate, n);
        CHECK(std::abs(heterodyne_phase(loud, ref, rate, f) - est) < 0.1);
    }
    const std::vector<double> silent(n, 0.0);
    CHECK_THROWS_AS(heterodyne_phase(silent, ref, rate, f), PhaseError);
    CHECK_THROWS_AS(heterodyne_phase(ref, ref, 5 * f, f), PhaseError);
    const auto brief = tone(f, 1.0, 0.0, rate, 60);
    CHECK_THROWS_AS(heterodyne_phase(brief, brief, rate, f), PhaseError);
}

TEST_CASE("circular statistics") {
    const std::vector<double> same(10, 42.0);
    CHECK(circular_std_deg(same) == doctest::Approx(0.0));
    // Wrapping does not change the spread.
    const std::vector<double> a{-5, 5, -3, 3}, b{355, 5, 357, 363};
    CHECK(circular_std_deg(a) == doctest::Approx(circular_std_deg(b)));
    Rng rng(3);
    std::normal_distribution<double> g(0, 20);
    std::vector<double> s(200000);
    for (auto &x : s) x = g(rng);
    CHECK(circular_std_deg(s) == doctest::Approx(20.0).epsilon(0.01));
}

TEST_CASE("zero noise stays at the setpoint") {
    PhaseStabConfig cfg = single_segment(quiet_segment("s"), 100e-6, 700e-6);
    Rng rng(1);
    const auto res = simulate_closed_loop(cfg, 0.2, rng);
    CHECK(res.segment_std_deg[0] == doctest::Approx(0.0));
    CHECK(effective_link_phase_sigma("L", res) == doctest::Approx(0.0));
    CHECK(res.rounds == 250);
}

TEST_CASE("open-loop random walk grows as sqrt(t)") {
    InterferometerSegment seg = quiet_segment("rw");
    seg.noise.random_walk_deg_per_sqrt_s = 10.0;
    seg.feedback.enabled = false;
    PhaseStabConfig cfg = single_segment(seg, 1e-3, 9e-3);
    cfg.step_s = 1e-3;
    const int seeds = 2000;
    const std::vector<int> probe{99, 199, 399, 799};
    std::vector<double> sum2(probe.size(), 0.0);
    std::vector<double> t;
    for (int s = 0; s < seeds; ++s) {
        Rng rng(1000 + s);
        const auto res = simulate_closed_loop(cfg, 0.8, rng);
        if (t.empty())
            for (int k : probe) t.push_back(res.time_s[k]);
        for (std::size_t i = 0; i < probe.size(); ++i) sum2[i] += res.phase_deg[0][probe[i]] * res.phase_deg[0][probe[i]];
    }
    // Least-squares slope of var(t) through the origin against sigma^2.
    double num = 0, den = 0;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double var = sum2[i] / seeds;
        num += var * t[i];
        den += t[i] * t[i];
    }
    CHECK(num / den == doctest::Approx(100.0).epsilon(0.10));
}

TEST_CASE("independent segment noise adds in quadrature") {
    PhaseStabConfig cfg;
    const std::vector<double> white{0.05, 0.08, 0.12};
    for (std::size_t i = 0; i < white.size(); ++i) {
        InterferometerSegment s = quiet_segment("w" + std::to_string(i));
        s.noise.white_deg_per_sqrt_hz = white[i];
        s.feedback.enabled = false;
        cfg.segments.push_back(s);
    }
    cfg.schedule.startup_rounds = 0;
    cfg.schedule.cycle = {{100e-6, false, {}}, {900e-6, true, {}}};
    cfg.links = {{"L", {"w0", "w1", "w2"}}};
    double ratio = 0;
    const int seeds = 20;
    for (int s = 0; s < seeds; ++s) {
        Rng rng(s);
        const auto res = simulate_closed_loop(cfg, 0.2, rng);
        double q = 0;
        for (double v : res.segment_std_deg) q += v * v;
        ratio += effective_link_phase_sigma("L", res) / std::sqrt(q);
    }
    CHECK(ratio / seeds == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("denser stabilization never increases the spread") {
    InterferometerSegment seg = quiet_segment("s");
    seg.noise.components = {{40, 30}};
    seg.noise.random_walk_deg_per_sqrt_s = 30;
    double prev = 1e9;
    for (double experiment_s : {4e-3, 2e-3, 1e-3, 500e-6}) {
        double total = 0;
        for (int s = 0; s < 5; ++s) {
            Rng rng(50 + s);
            total += simulate_closed_loop(single_segment(seg, 100e-6, experiment_s), 0.5, rng).segment_std_deg[0];
        }
        CHECK(total <= prev);
        prev = total;
    }
}

TEST_CASE("segment loops are independent") {
    const PhaseStabConfig base = default_three_node_config();
    PhaseStabConfig open = base;
    for (auto &s : open.segments)
        if (s.id == "global-AB") s.feedback.enabled = false;
    Rng r1(9), r2(9);
    const auto a = simulate_closed_loop(base, 0.2, r1);
    const auto b = simulate_closed_loop(open, 0.2, r2);
    for (std::size_t i = 0; i < a.segment_ids.size(); ++i) {
        CAPTURE(a.segment_ids[i]);
        if (a.segment_ids[i] == "global-AB") {
            CHECK(b.segment_std_deg[i] > a.segment_std_deg[i]);
        } else {
            CHECK(b.segment_std_deg[i] == a.segment_std_deg[i]);
        }
    }
}

TEST_CASE("calibrated layout reproduces the link phase uncertainties") {
    const PhaseStabConfig cfg = default_three_node_config();
    CHECK(cfg.check().empty());
    CHECK(cfg.schedule.duty_factor() == doctest::Approx(0.7));
    Rng rng(20260417);
    const auto res = simulate_closed_loop(cfg, 1.0, rng);
    const double ab = effective_link_phase_sigma("A-B", res);
    const double bc = effective_link_phase_sigma("B-C", res);
    CHECK(std::abs(ab - 30) <= 3);
    CHECK(std::abs(bc - 15) <= 2);

    // Fed into the link model they give the phase rows of the link budgets.
    LinkParams p;
    p.alpha_a = 0.07;
    p.alpha_b = 0.05;
    p.pdet_a = 3.6e-4;
    p.pdet_b = 4.4e-4;
    p.phase_sigma_deg = ab;
    CHECK(std::abs(error_budget(p).at("phase uncertainty") - 6.0e-2) <= 0.005);
    p.alpha_a = 0.05;
    p.alpha_b = 0.10;
    p.pdet_a = 4.2e-4;
    p.pdet_b = 3.0e-4;
    p.phase_sigma_deg = bc;
    CHECK(std::abs(error_budget(p).at("phase uncertainty") - 1.5e-2) <= 0.005);
}

TEST_CASE("configuration checks") {
    PhaseStabConfig cfg = default_three_node_config();
    cfg.schedule.cycle[0].stabilize.push_back("nowhere");
    CHECK_FALSE(cfg.check().empty());
    CHECK_THROWS_AS(cfg.validate(), PhaseError);

    cfg = default_three_node_config();
    Rng rng(1);
    const auto brief = simulate_closed_loop(cfg, 0.01, rng);
    CHECK_THROWS_AS(effective_link_phase_sigma("A-B", brief), PhaseError);
    CHECK_THROWS_AS(brief.segment_index("missing"), PhaseError);
}
