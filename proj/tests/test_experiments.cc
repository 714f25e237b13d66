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


#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "qnet/experiments.h"

using namespace qnet;

namespace {

ExperimentConfig reference() { return load_config(std::string(QNET_TEST_CONFIG_DIR) + "/reference.yaml"); }

RunOptions small(std::uint64_t seed, int jobs = 1) {
    RunOptions o;
    o.runs = 200;
    o.seed = seed;
    o.jobs = jobs;
    return o;
}

std::string first_line(const std::filesystem::path &p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    return line;
}

}  // namespace

TEST_CASE("every experiment is reproducible from config and seed") {
    const ExperimentConfig cfg = reference();
    for (const auto &kind : experiment_kinds()) {
        CAPTURE(kind);
        const ResultBundle a = run_experiment(cfg, kind, small(42));
        const ResultBundle b = run_experiment(cfg, kind, small(42));
        CHECK(a.summary.dump() == b.summary.dump());
        REQUIRE(a.tables.size() == b.tables.size());
        for (std::size_t i = 0; i < a.tables.size(); ++i) CHECK(a.tables[i].csv() == b.tables[i].csv());
    }
}

TEST_CASE("batch results do not depend on the worker count") {
    const ExperimentConfig cfg = reference();
    for (const char *kind : {"ghz", "swap", "double-link"}) {
        CAPTURE(kind);
        const ResultBundle one = run_experiment(cfg, kind, small(7, 1));
        const ResultBundle four = run_experiment(cfg, kind, small(7, 4));
        CHECK(one.summary.dump() == four.summary.dump());
    }
    const ResultBundle other = run_experiment(cfg, "ghz", small(8));
    CHECK(other.summary.dump() != run_experiment(cfg, "ghz", small(7)).summary.dump());
}

TEST_CASE("run streams are independent of each other") {
    Rng a = run_rng(1, 0), b = run_rng(1, 1), c = run_rng(1, 0), d = run_rng(2, 0);
    const auto x = a();
    CHECK(x == c());
    CHECK(x != b());
    CHECK(x != d());
}

TEST_CASE("summaries carry provenance") {
    const ExperimentConfig cfg = reference();
    const ResultBundle b = run_experiment(cfg, "link", small(3));
    const auto &prov = b.summary.at("provenance");
    CHECK(prov.at("config_hash") == config_hash(cfg));
    CHECK(prov.at("seed") == 3);
    CHECK(prov.at("version") == kVersion);
    CHECK_THROWS_AS(run_experiment(cfg, "teleport", small(1)), std::invalid_argument);
    CHECK_THROWS_AS(reproduce_paper("table-x", cfg, small(1)), std::invalid_argument);
}

TEST_CASE("bundles are written as csv or json") {
    const ExperimentConfig cfg = reference();
    RunOptions o = small(5);
    o.keep_records = true;
    const ResultBundle b = run_experiment(cfg, "ghz", o);
    REQUIRE_FALSE(b.tables.empty());
    const auto root = std::filesystem::temp_directory_path() / "qnet_test_bundle";
    std::filesystem::remove_all(root);

    write_bundle(b, root / "csv", "csv");
    CHECK(std::filesystem::exists(root / "csv" / "summary.json"));
    CHECK(std::filesystem::exists(root / "csv" / "records.jsonl"));
    const auto table = root / "csv" / (b.tables.front().name + ".csv");
    REQUIRE(std::filesystem::exists(table));
    CHECK(first_line(table).rfind("# provenance:", 0) == 0);

    write_bundle(b, root / "json", "json");
    std::ifstream in(root / "json" / "summary.json");
    const auto j = nlohmann::json::parse(in);
    CHECK(j.contains("tables"));
    CHECK_FALSE(std::filesystem::exists(root / "json" / (b.tables.front().name + ".csv")));
    CHECK_THROWS_AS(write_bundle(b, root / "x", "xml"), std::invalid_argument);
    std::filesystem::remove_all(root);
}

TEST_CASE("comparison rows") {
    Comparison c{"value", 0.4, 0.41, 0.015, true, ""};
    CHECK(c.pass());
    CHECK(c.abs_diff() == doctest::Approx(0.01));
    c.model = 0.42;
    CHECK_FALSE(c.pass());
    Comparison cov{"3-sigma coverage, all parameters", 0.95, 0.97, 0, true, ""};
    CHECK(cov.pass());
    ResultBundle b;
    b.comparisons = {c};
    CHECK_FALSE(b.passed());
    b.comparisons[0].gated = false;
    CHECK(b.passed());
}
