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


#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"

namespace {

const std::string kCli = QNET_CLI_PATH;
const std::string kDir = QNET_TEST_CONFIG_DIR;
const std::filesystem::path kTmp = std::filesystem::temp_directory_path() / "qnet_cli_test";

int run(const std::string &args) {
    const std::string cmd = "'" + kCli + "' " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path &p) {
    std::ifstream in(p);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write(const std::filesystem::path &p, const std::string &text) {
    std::ofstream out(p);
    out << text;
}

}  // namespace

TEST_CASE("exit codes") {
    std::filesystem::create_directories(kTmp);
    CHECK(run("validate --config " + kDir + "/reference.yaml") == 0);
    write(kTmp / "bad.yaml", "protocol:\n  timeout_attempts: 0\n");
    CHECK(run("validate --config " + (kTmp / "bad.yaml").string()) == 1);
    CHECK(run("validate --config " + (kTmp / "missing.yaml").string()) == 3);
    CHECK(run("run --config " + kDir + "/ideal.yaml --runs 0 --out /proc/qnet-cannot-write") == 3);
    CHECK(run("run --config " + kDir + "/ideal.yaml --experiment teleport --out " + (kTmp / "x").string()) == 1);
    CHECK(run("bogus") == 1);
    CHECK(run("fit --data " + (kTmp / "missing.csv").string()) == 3);
}

TEST_CASE("run output is identical for identical seeds") {
    const auto a = kTmp / "a", b = kTmp / "b";
    std::filesystem::remove_all(a);
    std::filesystem::remove_all(b);
    const std::string common = "run --config " + kDir + "/reference.yaml --experiment swap --runs 100 --seed 9 --format json";
    REQUIRE(run(common + " --out " + a.string()) == 0);
    REQUIRE(run(common + " --jobs 2 --out " + b.string()) == 0);
    CHECK(slurp(a / "summary.json") == slurp(b / "summary.json"));
    CHECK_FALSE(slurp(a / "summary.json").empty());
}

TEST_CASE("fit subcommand") {
    std::filesystem::create_directories(kTmp);
    std::string csv = "attempts,bloch_length,sigma\n";
    for (int i = 0; i < 12; ++i) {
        const double n = 400.0 * i;
        csv += std::to_string(n) + "," + std::to_string(0.895 * std::exp(-std::pow(n / 1843, 1.37))) + ",0.01\n";
    }
    write(kTmp / "decay.csv", csv);
    const auto out = kTmp / "fit.json";
    REQUIRE(run("fit --data " + (kTmp / "decay.csv").string() + " --out " + out.string()) == 0);
    CHECK(slurp(out).find("\"n_1e\"") != std::string::npos);
    write(kTmp / "broken.csv", "attempts,bloch_length,sigma\n1,2\n");
    CHECK(run("fit --data " + (kTmp / "broken.csv").string()) == 1);
}

TEST_CASE("reproduce writes a comparison per target") {
    const auto dir = kTmp / "repro";
    std::filesystem::remove_all(dir);
    CHECK(run("reproduce table-s2 --out " + dir.string()) == 0);
    CHECK(std::filesystem::exists(dir / "summary.json"));
    CHECK(slurp(dir / "comparison.csv").find("combined") != std::string::npos);
    std::filesystem::remove_all(kTmp);
}
