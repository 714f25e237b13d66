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


#ifndef QNET_EXPERIMENTS_H
#define QNET_EXPERIMENTS_H

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "qnet/config.h"

namespace qnet {

inline constexpr const char *kVersion = "0.1.0";

struct RunOptions {
    long long runs = 0;
    std::uint64_t seed = 1;
    int jobs = 1;
    /// Keep one JSON record per protocol run (JSON lines output).
    bool keep_records = false;
};

/// Options taken from the config, with CLI overrides applied by the caller.
RunOptions options_from(const ExperimentConfig &cfg);

struct Comparison {
    std::string quantity;
    double paper = 0;
    double model = 0;
    double tolerance = 0;
    /// Informational rows are reported but never fail a reproduction.
    bool gated = true;
    std::string note;

    double abs_diff() const;
    bool pass() const;
};

struct Table {
    std::string name;
    std::vector<std::string> header;
    std::vector<std::vector<nlohmann::json>> rows;

    std::string csv() const;
    nlohmann::json to_json() const;
};

struct ResultBundle {
    nlohmann::json summary;
    std::vector<Table> tables;
    std::vector<nlohmann::json> records;
    std::vector<Comparison> comparisons;

    bool passed() const;
};

class IoError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

const std::vector<std::string> &experiment_kinds();
const std::vector<std::string> &reproduce_targets();

ResultBundle run_experiment(const ExperimentConfig &cfg, const std::string &kind, const RunOptions &opts);
ResultBundle reproduce_paper(const std::string &target, const ExperimentConfig &cfg, const RunOptions &opts);

/// Writes summary.json and records.jsonl when present. With format "csv"
/// every table becomes <name>.csv headed by a provenance comment; with "json"
/// the tables are embedded in summary.json instead.
void write_bundle(const ResultBundle &bundle, const std::filesystem::path &out_dir, const std::string &format);

/// Seeds the generator of run `index` from the batch seed; identical for any
/// worker count.
Rng run_rng(std::uint64_t seed, long long index);

}  // namespace qnet

#endif
