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

// qnet command-line harness.
//
//   qnet run --config configs/reference.yaml --experiment ghz --runs 100000
//   qnet validate --config my.yaml
//   qnet reproduce table-s4 --out results/
//   qnet fit --data decay.csv
//
// Exit codes: 0 ok, 1 validation error, 2 acceptance failure, 3 I/O error.

#include <cstdio>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "qnet/config.h"
#include "qnet/experiments.h"
#include "qnet/noise.h"

namespace {

enum Exit : int { kOk = 0, kInvalid = 1, kAcceptanceFailure = 2, kIoError = 3 };

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<long long> runs;
    std::string out = "qnet-out";
    std::string format = "csv";
    int jobs = 1;
    bool records = false;
};

void add_common(CLI::App *cmd, Common &c, bool config_required) {
    auto *opt = cmd->add_option("--config", c.config, "YAML configuration file");
    if (config_required) opt->required();
    cmd->add_option("--seed", c.seed, "override the configured seed");
    cmd->add_option("--runs", c.runs, "override the configured number of runs")->check(CLI::NonNegativeNumber);
    cmd->add_option("--out", c.out, "output directory")->capture_default_str();
    cmd->add_option("--format", c.format, "table output format")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
    cmd->add_option("--jobs", c.jobs, "worker threads for batch runs")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_flag("--records", c.records, "write one JSON record per protocol run");
}

void print_diagnostics(const std::vector<std::string> &diags) {
    for (const auto &d : diags) std::cerr << "  " << d << '\n';
}

/// Loads and validates; returns nullopt after printing diagnostics.
std::optional<qnet::ExperimentConfig> load(const std::string &path, int &exit_code) {
    try {
        qnet::ExperimentConfig cfg = qnet::load_config(path);
        const auto diags = qnet::validate_config(cfg);
        if (!diags.empty()) {
            std::cerr << path << ": invalid configuration\n";
            print_diagnostics(diags);
            exit_code = kInvalid;
            return std::nullopt;
        }
        return cfg;
    } catch (const qnet::ConfigError &e) {
        std::cerr << path << ": invalid configuration\n";
        print_diagnostics(e.diagnostics());
        exit_code = kInvalid;
    } catch (const std::runtime_error &e) {
        std::cerr << e.what() << '\n';
        exit_code = kIoError;
    }
    return std::nullopt;
}

qnet::RunOptions options(const qnet::ExperimentConfig &cfg, const Common &c) {
    qnet::RunOptions o = qnet::options_from(cfg);
    if (c.seed) o.seed = *c.seed;
    if (c.runs) o.runs = *c.runs;
    o.jobs = c.jobs;
    o.keep_records = c.records;
    return o;
}

void print_comparisons(const std::string &target, const qnet::ResultBundle &b) {
    std::printf("%s\n", target.c_str());
    for (const auto &c : b.comparisons) {
        const char *status = !c.gated ? "info" : c.pass() ? "PASS" : "FAIL";
        std::printf("  %-4s %-46s paper %-10.4g model %-10.4g |d| %-9.3g tol %-9.3g %s\n", status, c.quantity.c_str(),
                    c.paper, c.model, c.abs_diff(), c.tolerance, c.note.c_str());
    }
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"qnet: three-node quantum network simulator"};
    app.require_subcommand(1);

    Common run_opts;
    std::string experiment;
    auto *run = app.add_subcommand("run", "run one experiment");
    add_common(run, run_opts, true);
    run->add_option("--experiment", experiment, "experiment kind (defaults to the config's)")
        ->check(CLI::IsMember(qnet::experiment_kinds()));

    std::string validate_path;
    auto *validate = app.add_subcommand("validate", "check a configuration file");
    validate->add_option("--config", validate_path, "YAML configuration file")->required();

    Common repro_opts;
    std::vector<std::string> targets;
    auto *repro = app.add_subcommand("reproduce", "compare model output with the published values");
    add_common(repro, repro_opts, false);
    std::vector<std::string> allowed = qnet::reproduce_targets();
    allowed.push_back("all");
    repro->add_option("target", targets, "target name or 'all'")->required()->check(CLI::IsMember(allowed));

    std::string fit_data, fit_mode = "absolute", fit_out;
    auto *fit = app.add_subcommand("fit", "fit the stretched-exponential memory decay");
    fit->add_option("--data", fit_data, "CSV with columns attempts,bloch_length,sigma")->required();
    fit->add_option("--sigma-mode", fit_mode, "error bars are absolute or relative weights")
        ->check(CLI::IsMember({"absolute", "relative"}))
        ->capture_default_str();
    fit->add_option("--out", fit_out, "write the fit as JSON to this file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInvalid;
    }

    int code = kOk;
    try {
        if (*validate) {
            if (load(validate_path, code)) std::printf("%s: ok\n", validate_path.c_str());
            return code;
        }

        if (*run) {
            auto cfg = load(run_opts.config, code);
            if (!cfg) return code;
            const std::string kind = experiment.empty() ? cfg->experiment : experiment;
            const auto bundle = qnet::run_experiment(*cfg, kind, options(*cfg, run_opts));
            qnet::write_bundle(bundle, run_opts.out, run_opts.format);
            std::printf("%s: wrote %s\n", kind.c_str(), run_opts.out.c_str());
            return kOk;
        }

        if (*repro) {
            const std::string path = repro_opts.config.empty()
                                         ? (qnet::bundled_config_dir() / "reference.yaml").string()
                                         : repro_opts.config;
            auto cfg = load(path, code);
            if (!cfg) return code;
            if (targets.size() == 1 && targets[0] == "all") targets = qnet::reproduce_targets();
            bool ok = true;
            for (const auto &t : targets) {
                const auto bundle = qnet::reproduce_paper(t, *cfg, options(*cfg, repro_opts));
                const std::filesystem::path dir =
                    targets.size() > 1 ? std::filesystem::path(repro_opts.out) / t : std::filesystem::path(repro_opts.out);
                qnet::write_bundle(bundle, dir, repro_opts.format);
                print_comparisons(t, bundle);
                ok = ok && bundle.passed();
            }
            return ok ? kOk : kAcceptanceFailure;
        }

        if (*fit) {
            qnet::FitOptions o;
            o.sigma_mode = fit_mode == "relative" ? qnet::SigmaMode::kRelative : qnet::SigmaMode::kAbsolute;
            std::vector<qnet::DecayPoint> data;
            try {
                data = qnet::read_decay_csv(fit_data);
            } catch (const qnet::NoiseError &e) {
                std::cerr << fit_data << ": " << e.what() << '\n';
                return kInvalid;
            }
            const qnet::DecayFit f = qnet::fit_memory_decay(data, o);
            const nlohmann::json j{{"amplitude_a", f.params.amplitude_a}, {"sigma_a", f.sigma_a},
                                   {"n_1e", f.params.n_1e},               {"sigma_n_1e", f.sigma_n_1e},
                                   {"exponent_n", f.params.exponent_n},   {"sigma_n", f.sigma_n},
                                   {"chi2", f.chi2},                      {"iterations", f.iterations},
                                   {"points", data.size()}};
            if (!fit_out.empty()) {
                std::ofstream out(fit_out);
                if (!out) throw qnet::IoError("cannot write " + fit_out);
                out << j.dump(2) << '\n';
            }
            std::printf("%s\n", j.dump(2).c_str());
            return kOk;
        }
    } catch (const qnet::IoError &e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kIoError;
    } catch (const qnet::FitError &e) {
        std::cerr << "fit failed: " << e.what() << '\n';
        return kInvalid;
    } catch (const std::runtime_error &e) {
        // Unreadable input files surface as runtime_error from the readers.
        std::cerr << e.what() << '\n';
        return kIoError;
    } catch (const std::invalid_argument &e) {
        std::cerr << e.what() << '\n';
        return kInvalid;
    }
    return code;
}
