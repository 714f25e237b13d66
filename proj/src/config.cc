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

#include "qnet/config.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace qnet {

ConfigError::ConfigError(std::vector<std::string> diagnostics)
    : std::runtime_error(diagnostics.empty() ? "invalid config" : diagnostics.front()),
      diagnostics_(std::move(diagnostics)) {}

namespace {

bool present(const YAML::Node &n) { return n.IsDefined() && !n.IsNull(); }

// Dividing by an exact power of ten keeps 100 us == 1e-4 s bit-for-bit.
double to_si(double v, double scale) { return scale < 1.0 ? v / std::round(1.0 / scale) : v * scale; }

/// Strict reader over one YAML mapping: every key must be consumed, so typos
/// surface as diagnostics instead of silently falling back to defaults.
class Section {
   public:
    Section(YAML::Node node, std::string path, std::vector<std::string> *diags)
        : node_(std::move(node)), path_(std::move(path)), diags_(diags) {
        if (present(node_) && !node_.IsMap()) {
            error("", "expected a mapping");
            node_ = YAML::Node();
        }
    }

    Section(const Section &) = delete;
    Section &operator=(const Section &) = delete;

    ~Section() {
        if (!present(node_) || !node_.IsMap()) return;
        for (const auto &kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (!used_.count(key)) error(key, "unknown key");
        }
    }

    /// `def` is in the file's unit; `scale` converts file units to SI.
    double num(const std::string &key, double def, double scale = 1.0) {
        const YAML::Node n = get(key);
        if (!present(n)) return to_si(def, scale);
        try {
            return to_si(n.as<double>(), scale);
        } catch (const YAML::Exception &) {
            error(key, "expected a number");
            return def;
        }
    }

    long long integer(const std::string &key, long long def) {
        const YAML::Node n = get(key);
        if (!present(n)) return def;
        try {
            return n.as<long long>();
        } catch (const YAML::Exception &) {
            error(key, "expected an integer");
            return def;
        }
    }

    bool flag(const std::string &key, bool def) {
        const YAML::Node n = get(key);
        if (!present(n)) return def;
        try {
            return n.as<bool>();
        } catch (const YAML::Exception &) {
            error(key, "expected true or false");
            return def;
        }
    }

    std::string text(const std::string &key, const std::string &def) {
        const YAML::Node n = get(key);
        if (!present(n)) return def;
        if (!n.IsScalar()) {
            error(key, "expected a string");
            return def;
        }
        return n.as<std::string>();
    }

    std::vector<std::string> strings(const std::string &key) {
        std::vector<std::string> out;
        const YAML::Node n = get(key);
        if (!present(n)) return out;
        if (!n.IsSequence()) {
            error(key, "expected a list of strings");
            return out;
        }
        for (const auto &v : n) out.push_back(v.as<std::string>());
        return out;
    }

    YAML::Node get(const std::string &key) {
        used_.insert(key);
        if (!present(node_) || !node_.IsMap()) return {};
        return node_[key];
    }

    std::string path(const std::string &key) const { return path_.empty() ? key : path_ + "." + key; }
    std::vector<std::string> *diags() const { return diags_; }

    void error(const std::string &key, const std::string &msg) const {
        diags_->push_back((key.empty() ? path_ : path(key)) + ": " + msg);
    }

   private:
    YAML::Node node_;
    std::string path_;
    std::vector<std::string> *diags_;
    std::set<std::string> used_;
};

LinkParams read_link(Section &parent, const std::string &key, LinkParams p) {
    Section s(parent.get(key), parent.path(key), parent.diags());
    p.alpha_a = s.num("alpha_a", p.alpha_a);
    p.alpha_b = s.num("alpha_b", p.alpha_b);
    p.pdet_a = s.num("pdet_a", p.pdet_a);
    p.pdet_b = s.num("pdet_b", p.pdet_b);
    p.p_dc = s.num("p_dark_count", p.p_dc);
    p.visibility = s.num("visibility", p.visibility);
    p.phase_sigma_deg = s.num("phase_sigma_deg", p.phase_sigma_deg);
    p.p_double = s.num("p_double_excitation", p.p_double);
    p.attempt_duration_s = s.num("attempt_duration_us", p.attempt_duration_s * 1e6, 1e-6);
    return p;
}

void read_link_config(Section &parent, const std::string &key, LinkConfig &l) {
    l.params = read_link(parent, key, l.params);
}

MemoryDecayParams read_decay(Section &parent, const std::string &key, MemoryDecayParams m) {
    Section s(parent.get(key), parent.path(key), parent.diags());
    m.amplitude_a = s.num("amplitude_a", m.amplitude_a);
    m.n_1e = s.num("n_1e_attempts", m.n_1e);
    m.exponent_n = s.num("exponent_n", m.exponent_n);
    m.t2_star_s = s.num("t2_star_ms", m.t2_star_s * 1e3, 1e-3);
    return m;
}

ReadoutModel read_readout(Section &parent, const std::string &key, ReadoutModel r) {
    Section s(parent.get(key), parent.path(key), parent.diags());
    r.f0 = s.num("f0", r.f0);
    r.f1 = s.num("f1", r.f1);
    r.sigma_f0 = s.num("sigma_f0", r.sigma_f0);
    r.sigma_f1 = s.num("sigma_f1", r.sigma_f1);
    return r;
}

void read_phase(Section &root, ExperimentConfig &cfg) {
    Section s(root.get("phase"), "phase", root.diags());
    PhaseStabConfig &pc = cfg.phase;
    cfg.phase_duration_s = s.num("duration_s", cfg.phase_duration_s);
    pc.step_s = s.num("step_us", pc.step_s * 1e6, 1e-6);
    pc.entangled_phase_drift_deg_per_hour =
        s.num("entangled_phase_drift_deg_per_hour", pc.entangled_phase_drift_deg_per_hour);
    pc.schedule.startup_rounds = static_cast<int>(s.integer("startup_rounds", pc.schedule.startup_rounds));

    if (YAML::Node segs = s.get("segments"); present(segs)) {
        if (!segs.IsSequence()) {
            s.error("segments", "expected a list");
        } else {
            pc.segments.clear();
            for (std::size_t i = 0; i < segs.size(); ++i) {
                Section g(segs[i], "phase.segments[" + std::to_string(i) + "]", root.diags());
                InterferometerSegment seg;
                seg.id = g.text("id", "");
                const std::string kind = g.text("detection", "heterodyne");
                if (kind == "homodyne") {
                    seg.detection = DetectionKind::kHomodyne;
                } else if (kind != "heterodyne") {
                    g.error("detection", "expected homodyne or heterodyne");
                }
                if (YAML::Node sins = g.get("sinusoids"); present(sins)) {
                    for (const auto &pair : sins) {
                        if (!pair.IsSequence() || pair.size() != 2) {
                            g.error("sinusoids", "each entry must be [frequency_hz, amplitude_deg]");
                            continue;
                        }
                        seg.noise.components.push_back({pair[0].as<double>(), pair[1].as<double>()});
                    }
                }
                seg.noise.white_deg_per_sqrt_hz = g.num("white_deg_per_sqrt_hz", 0);
                seg.noise.random_walk_deg_per_sqrt_s = g.num("random_walk_deg_per_sqrt_s", 0);
                seg.feedback.gain = g.num("gain", seg.feedback.gain);
                seg.feedback.setpoint_deg = g.num("setpoint_deg", seg.feedback.setpoint_deg);
                seg.feedback.actuator_range_deg = g.num("actuator_range_deg", seg.feedback.actuator_range_deg);
                seg.feedback.measurement_integration_s =
                    g.num("integration_us", seg.feedback.measurement_integration_s * 1e6, 1e-6);
                seg.feedback.detection_noise_deg = g.num("detection_noise_deg", seg.feedback.detection_noise_deg);
                seg.feedback.enabled = g.flag("feedback_enabled", seg.feedback.enabled);
                pc.segments.push_back(std::move(seg));
            }
        }
    }
    if (YAML::Node sched = s.get("schedule"); present(sched)) {
        if (!sched.IsSequence()) {
            s.error("schedule", "expected a list");
        } else {
            pc.schedule.cycle.clear();
            for (std::size_t i = 0; i < sched.size(); ++i) {
                Section g(sched[i], "phase.schedule[" + std::to_string(i) + "]", root.diags());
                ScheduleInterval iv;
                iv.duration_s = g.num("duration_us", 0, 1e-6);
                iv.experiment = g.flag("experiment", false);
                iv.stabilize = g.strings("stabilize");
                pc.schedule.cycle.push_back(std::move(iv));
            }
        }
    }
    if (YAML::Node links = s.get("links"); present(links)) {
        if (!links.IsSequence()) {
            s.error("links", "expected a list");
        } else {
            pc.links.clear();
            for (std::size_t i = 0; i < links.size(); ++i) {
                Section g(links[i], "phase.links[" + std::to_string(i) + "]", root.diags());
                pc.links.push_back({g.text("id", ""), g.strings("segments")});
            }
        }
    }
}

ExperimentConfig parse_node(const YAML::Node &doc) {
    std::vector<std::string> diags;
    ExperimentConfig cfg;
    {
        Section root(doc, "", &diags);
        cfg.experiment = root.text("experiment", cfg.experiment);
        cfg.runs = root.integer("runs", cfg.runs);
        const long long seed = root.integer("seed", static_cast<long long>(cfg.seed));
        if (seed < 0) root.error("seed", "must be >= 0");
        cfg.seed = static_cast<std::uint64_t>(seed);

        ProtocolConfig &pc = cfg.protocol;
        {
            Section links(root.get("links"), "links", &diags);
            read_link_config(links, "alice_bob", pc.link_ab);
            read_link_config(links, "bob_charlie", pc.link_bc);
            const bool sample_phase = links.flag("sample_phase_per_run", true);
            pc.link_ab.sample_phase = pc.link_bc.sample_phase = sample_phase;
        }
        {
            Section mem(root.get("memory"), "memory", &diags);
            pc.memory = read_decay(mem, "with_network", pc.memory);
            cfg.memory.idle = read_decay(mem, "idle", cfg.memory.idle);
            pc.memory_dephasing = mem.flag("dephasing_enabled", pc.memory_dephasing);
            pc.swap_gate_depolarizing_p = mem.num("swap_depolarizing_p", pc.swap_gate_depolarizing_p);
            Section fit(mem.get("fit"), "memory.fit", &diags);
            cfg.memory.points = static_cast<int>(fit.integer("points", cfg.memory.points));
            cfg.memory.max_attempts = fit.num("max_attempts", cfg.memory.max_attempts);
            cfg.memory.noise_sigma = fit.num("noise_sigma", cfg.memory.noise_sigma);
            cfg.memory.fit.max_iterations = static_cast<int>(fit.integer("max_iterations", cfg.memory.fit.max_iterations));
            const std::string mode = fit.text("sigma_mode", "absolute");
            if (mode == "relative") {
                cfg.memory.fit.sigma_mode = SigmaMode::kRelative;
            } else if (mode != "absolute") {
                fit.error("sigma_mode", "expected absolute or relative");
            }
        }
        {
            Section nuc(root.get("nuclear"), "nuclear", &diags);
            pc.nuclear.omega0_hz = nuc.num("omega0_khz", pc.nuclear.omega0_hz * 1e-3, 1e3);
            pc.nuclear.omega1_hz = nuc.num("omega1_khz", pc.nuclear.omega1_hz * 1e-3, 1e3);
            pc.nuclear.a_par_hz = nuc.num("a_parallel_khz", pc.nuclear.a_par_hz * 1e-3, 1e3);
            pc.nuclear.tau_larmor_s = nuc.num("tau_larmor_ns", pc.nuclear.tau_larmor_s * 1e9, 1e-9);
            pc.feedforward_resolution_s = nuc.num("feedforward_resolution_ns", pc.feedforward_resolution_s * 1e9, 1e-9);
            pc.nuclear_quantization = nuc.flag("quantization_enabled", pc.nuclear_quantization);
        }
        {
            Section ro(root.get("readout"), "readout", &diags);
            pc.readout_alice = read_readout(ro, "alice", pc.readout_alice);
            pc.readout_bob = read_readout(ro, "bob", pc.readout_bob);
            pc.readout_charlie = read_readout(ro, "charlie", pc.readout_charlie);
        }
        {
            Section pr(root.get("protocol"), "protocol", &diags);
            pc.timeout_attempts = static_cast<int>(pr.integer("timeout_attempts", pc.timeout_attempts));
            pc.cr_check_pass_prob = pr.num("cr_check_pass_prob", pc.cr_check_pass_prob);
            pc.ghz_herald_outcome = static_cast<int>(pr.integer("ghz_herald_outcome", pc.ghz_herald_outcome));
            pc.comm_dephasing_time_s = pr.num("comm_dephasing_time_ms", pc.comm_dephasing_time_s * 1e3, 1e-3);
            pc.max_sequences = pr.integer("max_sequences", pc.max_sequences);
        }
        {
            Section t(root.get("timings"), "timings", &diags);
            ProtocolTimings &tm = pc.timings;
            tm.preparation_s = t.num("preparation_ms", tm.preparation_s * 1e3, 1e-3);
            tm.attempt_duty_factor = t.num("attempt_duty_factor", tm.attempt_duty_factor);
            tm.memory_swap_s = t.num("memory_swap_us", tm.memory_swap_s * 1e6, 1e-6);
            tm.local_gate_s = t.num("local_gate_us", tm.local_gate_s * 1e6, 1e-6);
            tm.readout_s = t.num("readout_us", tm.readout_s * 1e6, 1e-6);
            tm.cr_check_s = t.num("cr_check_us", tm.cr_check_s * 1e6, 1e-6);
            tm.feedforward_gate_s = t.num("feedforward_gate_us", tm.feedforward_gate_s * 1e6, 1e-6);
        }
        {
            Section c(root.get("comm"), "comm", &diags);
            pc.comm.bit_interval_s = c.num("bit_interval_ns", pc.comm.bit_interval_s * 1e9, 1e-9);
            pc.comm.decode_delay_s = c.num("decode_delay_us", pc.comm.decode_delay_s * 1e6, 1e-6);
        }
        read_phase(root, cfg);
        {
            Section t(root.get("tomo"), "tomo", &diags);
            cfg.tomo.shots_per_setting = t.integer("shots_per_setting", cfg.tomo.shots_per_setting);
            cfg.tomo.mc_samples = static_cast<int>(t.integer("mc_samples", cfg.tomo.mc_samples));
        }
        pc.seed = cfg.seed;
    }
    if (!diags.empty()) {
        // Report invariant violations of whatever did parse alongside the
        // structural problems, so one pass shows everything.
        for (auto &d : validate_config(cfg)) diags.push_back(std::move(d));
        throw ConfigError(std::move(diags));
    }
    return cfg;
}

void prefixed(std::vector<std::string> &out, const std::string &prefix, const std::vector<std::string> &diags) {
    for (const auto &d : diags) out.push_back(prefix + ": " + d);
}

nlohmann::json readout_json(const ReadoutModel &r) {
    return {{"f0", r.f0}, {"f1", r.f1}, {"sigma_f0", r.sigma_f0}, {"sigma_f1", r.sigma_f1}};
}

nlohmann::json link_json(const LinkConfig &l) {
    const LinkParams &p = l.params;
    return {{"alpha_a", p.alpha_a},
            {"alpha_b", p.alpha_b},
            {"pdet_a", p.pdet_a},
            {"pdet_b", p.pdet_b},
            {"p_dark_count", p.p_dc},
            {"visibility", p.visibility},
            {"phase_sigma_deg", p.phase_sigma_deg},
            {"p_double_excitation", p.p_double},
            {"attempt_duration_s", p.attempt_duration_s},
            {"sample_phase", l.sample_phase}};
}

nlohmann::json decay_json(const MemoryDecayParams &m) {
    return {{"amplitude_a", m.amplitude_a}, {"n_1e", m.n_1e}, {"exponent_n", m.exponent_n}, {"t2_star_s", m.t2_star_s}};
}

}  // namespace

ExperimentConfig parse_config(std::string_view yaml_text) {
    YAML::Node doc;
    try {
        doc = YAML::Load(std::string(yaml_text));
    } catch (const YAML::Exception &e) {
        throw ConfigError({std::string("parse error: ") + e.what()});
    }
    return parse_node(doc);
}

ExperimentConfig load_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::vector<std::string> validate_config(const ExperimentConfig &cfg) {
    std::vector<std::string> out;
    static const std::set<std::string> kinds{"link", "memory", "phase", "double-link", "ghz", "swap", "tomo", "budget"};
    if (!kinds.count(cfg.experiment)) out.push_back("experiment: unknown experiment kind '" + cfg.experiment + "'");
    if (cfg.runs < 0) out.push_back("runs: must be >= 0");
    const ProtocolConfig &pc = cfg.protocol;
    const auto proto = pc.check();
    // ProtocolConfig::check already prefixes nested records.
    for (const auto &d : proto) {
        if (d.rfind("timeout_attempts", 0) == 0 || d.rfind("cr_check", 0) == 0 || d.rfind("ghz_herald", 0) == 0 ||
            d.rfind("max_sequences", 0) == 0) {
            out.push_back("protocol." + d);
        } else if (d.rfind("link_ab: ", 0) == 0) {
            out.push_back("links.alice_bob." + d.substr(9));
        } else if (d.rfind("link_bc: ", 0) == 0) {
            out.push_back("links.bob_charlie." + d.substr(9));
        } else if (d.rfind("memory: ", 0) == 0) {
            out.push_back("memory.with_network." + d.substr(8));
        } else {
            out.push_back(d);
        }
    }
    prefixed(out, "memory.idle", cfg.memory.idle.check());
    if (cfg.memory.points < 4) out.push_back("memory.fit.points: must be >= 4");
    if (!(cfg.memory.max_attempts > 0)) out.push_back("memory.fit.max_attempts: must be > 0");
    if (!(cfg.memory.noise_sigma > 0)) out.push_back("memory.fit.noise_sigma: must be > 0");
    prefixed(out, "phase", cfg.phase.check());
    if (!(cfg.phase_duration_s > 0)) out.push_back("phase.duration_s: must be > 0");
    if (cfg.tomo.shots_per_setting < 1) out.push_back("tomo.shots_per_setting: must be >= 1");
    if (cfg.tomo.mc_samples < 1000) out.push_back("tomo.mc_samples: must be >= 1000");
    return out;
}

nlohmann::json config_to_json(const ExperimentConfig &cfg) {
    const ProtocolConfig &pc = cfg.protocol;
    nlohmann::json j;
    j["experiment"] = cfg.experiment;
    j["runs"] = cfg.runs;
    j["seed"] = cfg.seed;
    j["links"] = {{"alice_bob", link_json(pc.link_ab)}, {"bob_charlie", link_json(pc.link_bc)}};
    j["memory"] = {{"with_network", decay_json(pc.memory)},
                   {"idle", decay_json(cfg.memory.idle)},
                   {"dephasing_enabled", pc.memory_dephasing},
                   {"swap_depolarizing_p", pc.swap_gate_depolarizing_p},
                   {"fit",
                    {{"points", cfg.memory.points},
                     {"max_attempts", cfg.memory.max_attempts},
                     {"noise_sigma", cfg.memory.noise_sigma},
                     {"max_iterations", cfg.memory.fit.max_iterations},
                     {"sigma_mode", cfg.memory.fit.sigma_mode == SigmaMode::kRelative ? "relative" : "absolute"}}}};
    j["nuclear"] = {{"omega0_hz", pc.nuclear.omega0_hz},
                    {"omega1_hz", pc.nuclear.omega1_hz},
                    {"a_parallel_hz", pc.nuclear.a_par_hz},
                    {"tau_larmor_s", pc.nuclear.tau_larmor_s},
                    {"feedforward_resolution_s", pc.feedforward_resolution_s},
                    {"quantization_enabled", pc.nuclear_quantization}};
    j["readout"] = {{"alice", readout_json(pc.readout_alice)},
                    {"bob", readout_json(pc.readout_bob)},
                    {"charlie", readout_json(pc.readout_charlie)}};
    j["protocol"] = {{"timeout_attempts", pc.timeout_attempts},
                     {"cr_check_pass_prob", pc.cr_check_pass_prob},
                     {"ghz_herald_outcome", pc.ghz_herald_outcome},
                     {"comm_dephasing_time_s", pc.comm_dephasing_time_s},
                     {"max_sequences", pc.max_sequences}};
    const ProtocolTimings &t = pc.timings;
    j["timings"] = {{"preparation_s", t.preparation_s},     {"attempt_duty_factor", t.attempt_duty_factor},
                    {"memory_swap_s", t.memory_swap_s},     {"local_gate_s", t.local_gate_s},
                    {"readout_s", t.readout_s},             {"cr_check_s", t.cr_check_s},
                    {"feedforward_gate_s", t.feedforward_gate_s}};
    j["comm"] = {{"bit_interval_s", pc.comm.bit_interval_s}, {"decode_delay_s", pc.comm.decode_delay_s}};
    nlohmann::json segs = nlohmann::json::array();
    for (const auto &s : cfg.phase.segments) {
        nlohmann::json sins = nlohmann::json::array();
        for (const auto &c : s.noise.components) sins.push_back({c.frequency_hz, c.amplitude_deg});
        segs.push_back({{"id", s.id},
                        {"detection", s.detection == DetectionKind::kHomodyne ? "homodyne" : "heterodyne"},
                        {"sinusoids", sins},
                        {"white_deg_per_sqrt_hz", s.noise.white_deg_per_sqrt_hz},
                        {"random_walk_deg_per_sqrt_s", s.noise.random_walk_deg_per_sqrt_s},
                        {"gain", s.feedback.gain},
                        {"setpoint_deg", s.feedback.setpoint_deg},
                        {"actuator_range_deg", s.feedback.actuator_range_deg},
                        {"integration_s", s.feedback.measurement_integration_s},
                        {"detection_noise_deg", s.feedback.detection_noise_deg},
                        {"feedback_enabled", s.feedback.enabled}});
    }
    nlohmann::json sched = nlohmann::json::array();
    for (const auto &iv : cfg.phase.schedule.cycle) {
        sched.push_back({{"duration_s", iv.duration_s}, {"experiment", iv.experiment}, {"stabilize", iv.stabilize}});
    }
    nlohmann::json links = nlohmann::json::array();
    for (const auto &l : cfg.phase.links) links.push_back({{"id", l.id}, {"segments", l.segments}});
    j["phase"] = {{"duration_s", cfg.phase_duration_s},
                  {"step_s", cfg.phase.step_s},
                  {"entangled_phase_drift_deg_per_hour", cfg.phase.entangled_phase_drift_deg_per_hour},
                  {"startup_rounds", cfg.phase.schedule.startup_rounds},
                  {"segments", segs},
                  {"schedule", sched},
                  {"links", links}};
    j["tomo"] = {{"shots_per_setting", cfg.tomo.shots_per_setting}, {"mc_samples", cfg.tomo.mc_samples}};
    return j;
}

std::string config_hash(const ExperimentConfig &cfg) {
    nlohmann::json j = config_to_json(cfg);
    j.erase("seed");
    const std::string text = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::filesystem::path bundled_config_dir() {
    if (const char *env = std::getenv("QNET_CONFIG_DIR")) return env;
#ifdef QNET_DEFAULT_CONFIG_DIR
    return QNET_DEFAULT_CONFIG_DIR;
#else
    return "configs";
#endif
}

}  // namespace qnet
