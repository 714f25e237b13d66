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
#include <string>
#include <vector>

#include "doctest.h"
#include "oracles.h"
#include "qnet/config.h"
#include "qnet/protocol.h"

using namespace qnet;
using qnet::testing::embed;

namespace {

ProtocolConfig reference() {
    return load_config(std::string(QNET_TEST_CONFIG_DIR) + "/reference.yaml").protocol;
}

// Four-qubit product of the two heralded Bell pairs: (A, memory) and (comm, C).
CVector pair_product(int sign_ab, int sign_bc) {
    const CVector ab = link_target(sign_ab), bc = link_target(sign_bc);
    CVector v(16);
    for (int i = 0; i < 16; ++i) v[i] = ab[i & 3] * bc[i >> 2];
    return v;
}

CVector project_bit(CVector v, int qubit, int bit) {
    for (int i = 0; i < v.size(); ++i)
        if (((i >> qubit) & 1) != bit) v[i] = 0;
    return v / v.norm();
}

CVector correct_charlie(CVector v, const PauliCorrection &c) {
    if (c.x) v = embed(gates::x(), {3}, 4) * v;
    if (c.z) v = embed(gates::z(), {3}, 4) * v;
    return v;
}

// Hand-built GHZ branch: X on the memory, CNOT(memory -> comm), comm read out.
double ghz_branch_oracle(int s1, int s2, int outcome) {
    CVector v = pair_product(s1, s2);
    v = embed(gates::x(), {1}, 4) * v;
    v = embed(gates::cnot(), {1, 2}, 4) * v;
    v = project_bit(v, 2, outcome);
    v = correct_charlie(v, ghz_correction(s1, s2, outcome));
    CVector target = CVector::Zero(16);
    target[(outcome << 2)] = 1 / std::numbers::sqrt2;
    target[0b1011 | (outcome << 2)] = 1 / std::numbers::sqrt2;
    return std::norm(target.dot(v));
}

double swap_branch_oracle(int s1, int s2, int bm, int bc) {
    CVector v = pair_product(s1, s2);
    v = embed(gates::cnot(), {1, 2}, 4) * v;
    v = embed(gates::h(), {1}, 4) * v;
    v = project_bit(project_bit(v, 1, bm), 2, bc);
    v = correct_charlie(v, swap_correction(s1, s2, bm, bc));
    const int mid = (bm << 1) | (bc << 2);
    CVector target = CVector::Zero(16);
    target[mid] = 1 / std::numbers::sqrt2;
    target[mid | 0b1001] = 1 / std::numbers::sqrt2;
    return std::norm(target.dot(v));
}

bool has_event(const RunRecord &r, const std::string &actor, const std::string &kind) {
    for (const auto &e : r.events)
        if (e.actor == actor && e.kind == kind) return true;
    return false;
}

}  // namespace

TEST_CASE("event queue orders by time then insertion") {
    EventQueue q;
    std::vector<int> order;
    q.schedule(2.0, "x", "b", "", [&] { order.push_back(2); });
    q.schedule(1.0, "x", "a", "", [&] { order.push_back(1); });
    q.schedule(2.0, "x", "c", "", [&] { order.push_back(3); });
    q.schedule(1.0, "x", "d", "", [&] {
        order.push_back(4);
        q.schedule(1.5, "x", "e", "", [&] { order.push_back(5); });
    });
    q.run();
    CHECK(order == std::vector<int>{1, 4, 5, 2, 3});
    CHECK(q.now() == 2.0);
    CHECK(q.log().size() == 5);
    CHECK_FALSE(q.step());
}

TEST_CASE("serial link timings") {
    EventQueue q;
    SerialBus bus;
    const auto m5 = bus.send(q, NodeId::kBob, NodeId::kCharlie, 5, 0b10110, "five");
    CHECK(m5.delivery_time_s - m5.send_time_s == doctest::Approx(300e-9 + 2e-6));
    const auto m1 = bus.send(q, NodeId::kAlice, NodeId::kCharlie, 1, 1, "one", {}, 1e-3);
    CHECK(m1.delivery_time_s - m1.send_time_s == doctest::Approx(60e-9 + 2e-6));

    // Two arrivals at Bob separated by more than the decode window.
    double received = -1;
    bus.send(q, NodeId::kAlice, NodeId::kBob, 1, 0, "a", [&](const ClassicalMessage &m) { received = m.delivery_time_s; },
             10e-6);
    bus.send(q, NodeId::kCharlie, NodeId::kBob, 1, 1, "c", {}, 20e-6);
    CHECK_THROWS_AS(bus.send(q, NodeId::kCharlie, NodeId::kBob, 1, 1, "overlap", {}, 11e-6), CommCollision);
    // Messages to other nodes never contend for Bob's port.
    CHECK_NOTHROW(bus.send(q, NodeId::kBob, NodeId::kAlice, 2, 3, "b", {}, 10.5e-6));
    q.run();
    CHECK(received == doctest::Approx(10e-6 + 60e-9 + 2e-6));

    CHECK_THROWS_AS(bus.send(q, NodeId::kBob, NodeId::kCharlie, 6, 0, "long"), ProtocolError);
    CHECK_THROWS_AS(bus.send(q, NodeId::kBob, NodeId::kCharlie, 2, 4, "wide"), ProtocolError);
    CHECK_THROWS_AS(bus.send(q, NodeId::kBob, NodeId::kBob, 1, 0, "self"), ProtocolError);

    ClassicalMessage msg;
    msg.sender = NodeId::kAlice;
    msg.receiver = NodeId::kCharlie;
    msg.payload_bits = 3;
    msg.payload = 5;
    msg.send_time_s = 2e-3;
    const auto out = serial_comm(msg, q, bus);
    CHECK(out.delivery_time_s == doctest::Approx(2e-3 + 180e-9 + 2e-6));
}

TEST_CASE("nuclear phase feed-forward stays within half a step") {
    NuclearSpinParams n;
    const double res = 2e-9, attempt = 3.8e-6;
    const auto zero = nuclear_phase_feedforward(0, n, res, attempt);
    CHECK(zero.z_rotation_rad == 0.0);
    CHECK(zero.quantization_error_rad == 0.0);

    const double bound = std::numbers::pi * res / n.tau_larmor_s;
    const double f = 0.5 * (n.omega0_hz + n.omega1_hz);
    double worst = 0;
    for (long long k = 0; k <= 20000; ++k) {
        const auto c = nuclear_phase_feedforward(k, n, res, attempt);
        worst = std::max(worst, std::abs(c.quantization_error_rad));
        // The delay is an integer number of steps inside one Larmor period.
        const double steps = c.delay_s / res;
        CHECK(std::abs(steps - std::round(steps)) < 1e-6);
        CHECK(c.delay_s >= 0);
        CHECK(c.delay_s <= n.tau_larmor_s + 1e-15);
        // Acquired phase from the mean precession frequency, reduced mod 2 pi.
        const double turns = std::fmod(f * attempt * static_cast<double>(k), 1.0);
        const double d = std::remainder(c.acquired_phase_rad - 2 * std::numbers::pi * turns, 2 * std::numbers::pi);
        CHECK(std::abs(d) < 1e-6);
    }
    CHECK(worst <= bound + 1e-12);
    CHECK(bound * 180 / std::numbers::pi == doctest::Approx(0.7347).epsilon(1e-3));
    CHECK_THROWS_AS(nuclear_phase_feedforward(-1, n, res, attempt), ProtocolError);
    CHECK_THROWS_AS(nuclear_phase_feedforward(1, n, 1e-6, attempt), ProtocolError);
}

TEST_CASE("feed-forward tables close every branch") {
    const ProtocolConfig ideal = ideal_protocol_config();
    for (const auto &b : ghz_feedforward_table()) {
        CAPTURE(b.sign_ab);
        CAPTURE(b.sign_bc);
        CAPTURE(b.outcome);
        CHECK(ghz_branch_oracle(b.sign_ab, b.sign_bc, b.outcome) > 1 - 1e-12);
        CHECK(branch_fidelity(ideal, ProtocolKind::kGhz, {b.sign_ab, b.sign_bc, {b.outcome}}) > 1 - 1e-10);
    }
    for (const auto &b : swap_feedforward_table()) {
        CAPTURE(b.sign_ab);
        CAPTURE(b.sign_bc);
        CAPTURE(b.bit_memory);
        CAPTURE(b.bit_comm);
        CHECK(swap_branch_oracle(b.sign_ab, b.sign_bc, b.bit_memory, b.bit_comm) > 1 - 1e-12);
        CHECK(branch_fidelity(ideal, ProtocolKind::kSwap, {b.sign_ab, b.sign_bc, {b.bit_memory, b.bit_comm}}) >
              1 - 1e-10);
    }
    CHECK_THROWS_AS(ghz_correction(1, 1, 2), ProtocolError);
    CHECK_THROWS_AS(swap_correction(0, 1, 0, 0), ProtocolError);
}

TEST_CASE("ideal runs deliver exact targets") {
    const ProtocolConfig ideal = ideal_protocol_config();
    int heralded = 0;
    for (int s = 0; s < 64; ++s) {
        Rng r1(s), r2(s), r3(s);
        const RunRecord dl = run_double_link(ideal, r1);
        REQUIRE(dl.success);
        CHECK(dl.fidelity > 1 - 1e-10);
        CHECK(dl.pair_fidelity[0] > 1 - 1e-10);
        CHECK(dl.pair_fidelity[1] > 1 - 1e-10);

        const RunRecord g = run_ghz(ideal, r2);
        CHECK(g.success == (g.outcome_bits.at(0) == ideal.ghz_herald_outcome));
        if (g.success) {
            ++heralded;
            CHECK(g.fidelity > 1 - 1e-10);
        } else {
            CHECK(std::isnan(g.fidelity));
        }

        const RunRecord w = run_swap(ideal, r3);
        REQUIRE(w.success);
        CHECK(w.fidelity > 1 - 1e-10);
    }
    CHECK(heralded > 16);
    CHECK(heralded < 48);
}

TEST_CASE("runs are deterministic for a fixed seed") {
    const ProtocolConfig cfg = reference();
    for (auto run : {run_double_link, run_ghz, run_swap}) {
        Rng a(99), b(99);
        const RunRecord ra = run(cfg, a), rb = run(cfg, b);
        CHECK(to_json(ra, true, true).dump() == to_json(rb, true, true).dump());
        CHECK(events_csv(ra.events) == events_csv(rb.events));
    }
}

TEST_CASE("event log is causal and heralded") {
    const ProtocolConfig cfg = reference();
    for (int s = 0; s < 20; ++s) {
        Rng rng(500 + s);
        const RunRecord r = s % 2 ? run_ghz(cfg, rng) : run_swap(cfg, rng);
        for (std::size_t i = 1; i < r.events.size(); ++i) CHECK(r.events[i].time_s >= r.events[i - 1].time_s);
        // Each message is received exactly at its delivery time, after it was sent.
        for (const auto &m : r.messages) {
            CHECK(m.delivery_time_s > m.send_time_s);
            bool found = false;
            for (const auto &e : r.events)
                if (e.kind == "receive" && e.detail.rfind(m.label, 0) == 0 && e.time_s == m.delivery_time_s) found = true;
            CHECK(found);
        }
        // Charlie never corrects before Bob's outcome reaches him.
        for (const auto &op : r.feedforward) {
            bool delivered_before = false;
            for (const auto &m : r.messages)
                if (m.receiver == NodeId::kCharlie && m.delivery_time_s <= op.time_s) delivered_before = true;
            CHECK(delivered_before);
        }
        if (r.success) {
            CHECK(r.final_state.has_value());
            CHECK(has_event(r, "station-AB", "herald"));
            CHECK(has_event(r, "station-BC", "herald"));
            CHECK(has_event(r, "network", "delivered"));
            CHECK(r.cr_check_passed);
        } else {
            CHECK_FALSE(r.final_state.has_value());
            CHECK(has_event(r, "Bob", "no_herald"));
        }
    }
}

TEST_CASE("classical messages carry the expected payload sizes") {
    const ProtocolConfig cfg = reference();
    Rng rng(4);
    RunRecord g;
    do g = run_ghz(cfg, rng);
    while (!g.success);
    std::vector<std::pair<std::string, int>> seen;
    for (const auto &m : g.messages) seen.emplace_back(m.label, m.payload_bits);
    const ClassicalMessage &last = g.messages.back();
    CHECK(last.sender == NodeId::kBob);
    CHECK(last.receiver == NodeId::kCharlie);
    CHECK(last.payload_bits == 2);
    bool alice = false, charlie = false;
    for (const auto &m : g.messages) {
        if (m.sender == NodeId::kAlice && m.receiver == NodeId::kBob) alice = m.payload_bits == 1;
        if (m.sender == NodeId::kCharlie && m.receiver == NodeId::kBob) charlie = m.payload_bits == 1;
    }
    CHECK(alice);
    CHECK(charlie);

    RunRecord w;
    do w = run_swap(cfg, rng);
    while (!w.success);
    CHECK(w.messages.back().payload_bits == 3);
}

TEST_CASE("GHZ herald probability follows the readout model") {
    const ProtocolConfig cfg = reference();
    const double p = analytic_ghz(cfg).herald_probability;
    const int n = 20000;
    int hits = 0;
    for (int i = 0; i < n; ++i) {
        Rng rng(100000 + i);
        hits += run_ghz(cfg, rng).success;
    }
    CHECK(std::abs(hits / double(n) - p) < 3 * std::sqrt(p * (1 - p) / n));

    // Independent estimate: P(report 0) = F0 P(true 0) + (1 - F1) P(true 1).
    ProtocolConfig perfect = cfg;
    perfect.readout_bob = ReadoutModel{};
    const double p_true = analytic_ghz(perfect).herald_probability;
    const double expect = cfg.readout_bob.f0 * p_true + (1 - cfg.readout_bob.f1) * (1 - p_true);
    CHECK(p == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("memory coherence over successful double links") {
    const ProtocolConfig cfg = reference();
    const double p = cfg.link_bc.herald_probability();
    double num = 0, den = 0;
    for (int k = 1; k <= cfg.timeout_attempts; ++k) {
        const double w = p * std::pow(1 - p, k - 1);
        num += w * memory_coherence_factor(k, cfg.memory);
        den += w;
    }
    const double oracle = num / den;
    ProtocolConfig exact = cfg;
    exact.nuclear_quantization = false;
    CHECK(expected_memory_coherence(exact).real() == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(std::abs(expected_memory_coherence(exact).imag()) < 1e-15);

    const int n = 20000;
    double sum = 0, sum2 = 0;
    for (int i = 0; i < n; ++i) {
        Rng rng(7 * i + 1);
        const RunRecord r = run_double_link(cfg, rng);
        REQUIRE(r.success);
        CHECK(r.attempts_bc >= 1);
        CHECK(r.attempts_bc <= cfg.timeout_attempts);
        sum += r.memory_coherence;
        sum2 += r.memory_coherence * r.memory_coherence;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum2 / n - mean * mean) / n);
    CHECK(std::abs(mean - oracle) < 3 * se);
}

TEST_CASE("truncated geometric sampler") {
    Rng rng(12);
    const double p = 0.02;
    const int timeout = 100;
    double num = 0, den = 0;
    for (int k = 1; k <= timeout; ++k) {
        num += k * p * std::pow(1 - p, k - 1);
        den += p * std::pow(1 - p, k - 1);
    }
    double sum = 0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
        const int k = sample_truncated_geometric(p, timeout, rng);
        REQUIRE(k >= 1);
        REQUIRE(k <= timeout);
        sum += k;
    }
    CHECK(sum / n == doctest::Approx(num / den).epsilon(0.01));
}

TEST_CASE("analytic model limits") {
    const ProtocolConfig ideal = ideal_protocol_config();
    const GhzAnalytic g = analytic_ghz(ideal);
    CHECK(g.fidelity == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(g.herald_probability == doctest::Approx(0.5).epsilon(1e-12));
    const SwapAnalytic s = analytic_swap(ideal);
    for (int k = 0; k < 4; ++k) {
        CHECK(s.fidelity[k] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(s.outcome_probability[k] == doctest::Approx(0.25).epsilon(1e-12));
    }

    // Depolarizing the memory alone costs 3p/4 of GHZ fidelity.
    const ProtocolConfig cfg = reference();
    for (const auto &row : ghz_error_budget(cfg)) {
        if (row.source == "memory depolarizing")
            CHECK(row.infidelity == doctest::Approx(0.75 * cfg.swap_gate_depolarizing_p).epsilon(1e-9));
    }
    const auto rows = swap_error_budget(cfg);
    double combined_any = 0, largest = 0;
    for (const auto &row : rows) {
        if (row.source == "combined (any)") combined_any = row.infidelity;
        else if (row.source.rfind("combined", 0) != 0) largest = std::max(largest, row.infidelity);
    }
    CHECK(combined_any >= largest);
}

TEST_CASE("analytic rate matches the simulated sequence clock") {
    ProtocolConfig cfg = reference();
    const RateEstimate est = analytic_rate(cfg, ProtocolKind::kGhz);
    const int n = 3000;
    double time = 0;
    int ok = 0;
    for (int i = 0; i < n; ++i) {
        Rng rng(31 * i + 5);
        const RunRecord r = run_ghz(cfg, rng);
        time += r.duration_s;
        ok += r.success;
    }
    CHECK(ok / time == doctest::Approx(est.rate_hz).epsilon(0.10));
}

TEST_CASE("protocol configuration diagnostics") {
    ProtocolConfig cfg = reference();
    CHECK(cfg.check().empty());
    cfg.timeout_attempts = 0;
    cfg.readout_bob.f1 = 0.3;
    cfg.ghz_herald_outcome = 3;
    const auto diag = cfg.check();
    CHECK(diag.size() >= 3);
    CHECK_THROWS_AS(cfg.validate(), ProtocolError);
}
