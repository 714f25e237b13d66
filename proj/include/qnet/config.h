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


#ifndef QNET_CONFIG_H
#define QNET_CONFIG_H

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "qnet/noise.h"
#include "qnet/phasestab.h"
#include "qnet/protocol.h"

namespace qnet {

/// Parse failure or invariant violations, one diagnostic per offending field.
class ConfigError : public std::runtime_error {
   public:
    explicit ConfigError(std::vector<std::string> diagnostics);
    const std::vector<std::string> &diagnostics() const { return diagnostics_; }

   private:
    std::vector<std::string> diagnostics_;
};

struct TomoSettings {
    long long shots_per_setting = 10000;
    int mc_samples = 2000;
};

struct MemoryExperimentSettings {
    /// Decay with the network idle, used for the free-evolution curve.
    MemoryDecayParams idle{0.885, 2042.0, 1.61, 11.6e-3};
    int points = 20;
    double max_attempts = 5000;
    double noise_sigma = 0.01;
    FitOptions fit;
};

struct ExperimentConfig {
    std::string experiment = "ghz";
    long long runs = 1000;
    std::uint64_t seed = 1;
    ProtocolConfig protocol;
    PhaseStabConfig phase = default_three_node_config();
    double phase_duration_s = 1.0;
    MemoryExperimentSettings memory;
    TomoSettings tomo;
};

ExperimentConfig parse_config(std::string_view yaml_text);
ExperimentConfig load_config(const std::filesystem::path &path);

/// Field-prefixed invariant diagnostics; empty when valid.
std::vector<std::string> validate_config(const ExperimentConfig &cfg);

/// Canonical JSON of every parsed value (SI units), independent of comments
/// and key order in the source file.
nlohmann::json config_to_json(const ExperimentConfig &cfg);
std::string config_hash(const ExperimentConfig &cfg);

/// Directory holding the bundled configs (QNET_CONFIG_DIR overrides).
std::filesystem::path bundled_config_dir();

}  // namespace qnet

#endif
