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

#include "qnet/phasestab.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

namespace qnet {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = 180.0 / kPi;

double wrap_deg(double d) {
    double w = std::remainder(d, 360.0);
    if (w <= -180.0) w += 360.0;
    return w;
}

std::uint64_t fnv1a(const std::string &s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

struct Demodulated {
    double phase_rad;
    double amplitude;
};

Demodulated demodulate(std::span<const double> x, double fs, double f) {
    const std::size_t n = x.size();
    double i_sum = 0, q_sum = 0, w_sum = 0;
    for (std::size_t k = 0; k < n; ++k) {
        // Hann window suppresses leakage from a non-integer number of periods.
        const double w = 0.5 - 0.5 * std::cos(2 * kPi * (static_cast<double>(k) + 0.5) / static_cast<double>(n));
        const double arg = 2 * kPi * f * static_cast<double>(k) / fs;
        i_sum += w * x[k] * std::cos(arg);
        q_sum += w * x[k] * std::sin(arg);
        w_sum += w;
    }
    return {std::atan2(-q_sum, i_sum), 2.0 * std::hypot(i_sum, q_sum) / w_sum};
}

}  // namespace

double homodyne_phase(double i1, double i2, double i3_minus_i4) {
    if (!(i1 > 0 && i2 > 0)) throw PhaseError("homodyne input intensities must be positive");
    const double scale = 4.0 * std::sqrt(i1 * i2);
    const double ratio = i3_minus_i4 / scale;
    if (std::abs(ratio) > 1.0 + 1e-12) {
        throw PhaseError("intensity difference exceeds 4 sqrt(I1 I2); inconsistent with the interference model");
    }
    return std::acos(std::clamp(ratio, -1.0, 1.0)) * kDeg;
}

double heterodyne_phase(std::span<const double> beat, std::span<const double> reference, double sample_rate_hz,
                        double beat_freq_hz) {
    if (!(beat_freq_hz > 0)) throw PhaseError("beat frequency must be positive");
    if (beat.size() != reference.size()) throw PhaseError("beat and reference series must have equal length");
    if (sample_rate_hz < 10.0 * beat_freq_hz) throw PhaseError("sample rate must be at least 10x the beat frequency");
    const double periods = static_cast<double>(beat.size()) * beat_freq_hz / sample_rate_hz;
    if (periods < 2.0) throw PhaseError("need at least 2 beat periods of samples");
    const Demodulated b = demodulate(beat, sample_rate_hz, beat_freq_hz);
    const Demodulated r = demodulate(reference, sample_rate_hz, beat_freq_hz);
    if (b.amplitude <= 1e-12) throw PhaseError("beat signal has no component at the beat frequency");
    if (r.amplitude <= 1e-12) throw PhaseError("reference signal has no component at the beat frequency");
    return wrap_deg((b.phase_rad - r.phase_rad) * kDeg);
}

double StabilizationSchedule::cycle_duration_s() const {
    double t = 0;
    for (const auto &iv : cycle) t += iv.duration_s;
    return t;
}

double StabilizationSchedule::duty_factor() const {
    double t = 0;
    for (const auto &iv : cycle) {
        if (iv.experiment) t += iv.duration_s;
    }
    const double total = cycle_duration_s();
    return total > 0 ? t / total : 0.0;
}

std::vector<std::string> PhaseStabConfig::check() const {
    std::vector<std::string> out;
    std::set<std::string> ids;
    for (const auto &s : segments) {
        if (!ids.insert(s.id).second) out.push_back("segment id '" + s.id + "' is not unique");
        for (const auto &c : s.noise.components) {
            if (!(c.amplitude_deg >= 0)) out.push_back("segment '" + s.id + "': sinusoid amplitude must be >= 0");
            if (!(c.frequency_hz >= 0)) out.push_back("segment '" + s.id + "': sinusoid frequency must be >= 0");
        }
        if (!(s.noise.white_deg_per_sqrt_hz >= 0)) out.push_back("segment '" + s.id + "': white noise must be >= 0");
        if (!(s.noise.random_walk_deg_per_sqrt_s >= 0)) {
            out.push_back("segment '" + s.id + "': random walk coefficient must be >= 0");
        }
        if (!(s.feedback.gain >= 0)) out.push_back("segment '" + s.id + "': feedback gain must be >= 0");
        if (!(s.feedback.actuator_range_deg >= 180)) {
            out.push_back("segment '" + s.id + "': actuator range must cover at least 180 deg");
        }
        if (!(s.feedback.measurement_integration_s > 0)) {
            out.push_back("segment '" + s.id + "': measurement integration time must be > 0");
        }
        if (!(s.feedback.detection_noise_deg >= 0)) out.push_back("segment '" + s.id + "': detection noise must be >= 0");
    }
    if (!(step_s > 0)) out.push_back("step_s must be > 0");
    if (schedule.cycle.empty()) out.push_back("schedule cycle is empty");
    if (schedule.startup_rounds < 0) out.push_back("startup_rounds must be >= 0");
    bool has_stab = false;
    for (const auto &iv : schedule.cycle) {
        if (!(iv.duration_s > 0)) out.push_back("schedule interval durations must be > 0");
        if (iv.experiment && !iv.stabilize.empty()) {
            out.push_back("an experiment interval cannot also stabilize segments");
        }
        std::set<std::string> in_slot;
        for (const auto &id : iv.stabilize) {
            if (!ids.count(id)) out.push_back("schedule references unknown segment '" + id + "'");
            if (!in_slot.insert(id).second) out.push_back("segment '" + id + "' listed twice in one slot");
            has_stab = true;
        }
    }
    if (!has_stab && schedule.startup_rounds > 0) out.push_back("startup rounds need at least one stabilization slot");
    for (const auto &l : links) {
        if (l.segments.empty()) out.push_back("link '" + l.id + "' has no segments");
        for (const auto &id : l.segments) {
            if (!ids.count(id)) out.push_back("link '" + l.id + "' references unknown segment '" + id + "'");
        }
    }
    return out;
}

void PhaseStabConfig::validate() const {
    const auto d = check();
    if (!d.empty()) throw PhaseError("invalid phase stabilization config: " + d.front());
}

int ClosedLoopResult::segment_index(const std::string &id) const {
    for (std::size_t i = 0; i < segment_ids.size(); ++i) {
        if (segment_ids[i] == id) return static_cast<int>(i);
    }
    throw PhaseError("unknown segment '" + id + "'");
}

namespace {

class SegmentState {
   public:
    SegmentState(const InterferometerSegment &seg, std::uint64_t seed, double step_s)
        : seg_(seg), rng_(seed), step_s_(step_s) {
        std::uniform_real_distribution<double> u(0.0, 2 * kPi);
        for (std::size_t i = 0; i < seg.noise.components.size(); ++i) phases_.push_back(u(rng_));
        white_std_ = seg.noise.white_deg_per_sqrt_hz * std::sqrt(1.0 / (2.0 * step_s));
        walk_std_ = seg.noise.random_walk_deg_per_sqrt_s * std::sqrt(step_s);
    }

    /// Advances the noise by one step and returns the deviation from setpoint.
    double step(double t) {
        double noise = walk_;
        for (std::size_t i = 0; i < phases_.size(); ++i) {
            const auto &c = seg_.noise.components[i];
            noise += c.amplitude_deg * std::sin(2 * kPi * c.frequency_hz * t + phases_[i]);
        }
        if (white_std_ > 0) noise += white_std_ * gauss_(rng_);
        if (walk_std_ > 0) walk_ += walk_std_ * gauss_(rng_);
        return noise + actuator_;
    }

    void begin_window() {
        acc_c_ = acc_s_ = 0;
        acc_n_ = 0;
    }

    void accumulate(double dev) {
        const double theta = (seg_.feedback.setpoint_deg + dev) / kDeg;
        if (seg_.detection == DetectionKind::kHomodyne) {
            acc_c_ += 4.0 * std::cos(theta);  // I3 - I4 with I1 = I2 = 1
        } else {
            acc_c_ += std::cos(dev / kDeg);
            acc_s_ += std::sin(dev / kDeg);
        }
        ++acc_n_;
    }

    void feedback() {
        if (acc_n_ == 0 || !seg_.feedback.enabled) return;
        double err = 0;
        if (seg_.detection == DetectionKind::kHomodyne) {
            const double diff = std::clamp(acc_c_ / acc_n_, -4.0, 4.0);
            err = homodyne_phase(1.0, 1.0, diff) - seg_.feedback.setpoint_deg;
        } else {
            err = std::atan2(acc_s_, acc_c_) * kDeg;
        }
        if (seg_.feedback.detection_noise_deg > 0) err += seg_.feedback.detection_noise_deg * gauss_(rng_);
        actuator_ -= seg_.feedback.gain * wrap_deg(err);
        if (std::abs(actuator_) > seg_.feedback.actuator_range_deg) {
            actuator_ -= 360.0 * std::round(actuator_ / 360.0);
        }
    }

    int window_steps() const {
        return std::max(1, static_cast<int>(std::lround(seg_.feedback.measurement_integration_s / step_s_)));
    }

   private:
    const InterferometerSegment &seg_;
    Rng rng_;
    std::normal_distribution<double> gauss_{0.0, 1.0};
    double step_s_;
    std::vector<double> phases_;
    double white_std_ = 0;
    double walk_std_ = 0;
    double walk_ = 0;
    double actuator_ = 0;
    double acc_c_ = 0, acc_s_ = 0;
    int acc_n_ = 0;
};

}  // namespace

ClosedLoopResult simulate_closed_loop(const PhaseStabConfig &cfg, double duration_s, Rng &rng) {
    cfg.validate();
    if (duration_s < 0) throw PhaseError("duration must be >= 0");
    const std::uint64_t base = rng();
    std::vector<SegmentState> states;
    std::map<std::string, int> index;
    states.reserve(cfg.segments.size());
    for (std::size_t i = 0; i < cfg.segments.size(); ++i) {
        const auto &seg = cfg.segments[i];
        std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                          static_cast<std::uint32_t>(fnv1a(seg.id)), static_cast<std::uint32_t>(fnv1a(seg.id) >> 32)};
        Rng seg_rng(seq);
        states.emplace_back(seg, seg_rng(), cfg.step_s);
        index[seg.id] = static_cast<int>(i);
    }

    // Startup rounds contain only the stabilization slots.
    std::vector<std::pair<const ScheduleInterval *, bool>> timeline;  // (interval, counted)
    for (int r = 0; r < cfg.schedule.startup_rounds; ++r) {
        for (const auto &iv : cfg.schedule.cycle) {
            if (!iv.experiment) timeline.emplace_back(&iv, false);
        }
    }
    const double cycle = cfg.schedule.cycle_duration_s();
    const int n_cycles = static_cast<int>(std::ceil(duration_s / cycle - 1e-9));
    for (int c = 0; c < n_cycles; ++c) {
        for (const auto &iv : cfg.schedule.cycle) timeline.emplace_back(&iv, true);
    }

    ClosedLoopResult res;
    res.step_s = cfg.step_s;
    res.drift_deg_per_hour = cfg.entangled_phase_drift_deg_per_hour;
    res.links = cfg.links;
    res.rounds = n_cycles;
    for (const auto &s : cfg.segments) res.segment_ids.push_back(s.id);
    res.phase_deg.assign(cfg.segments.size(), {});

    double t = 0;
    std::vector<double> dev(cfg.segments.size());
    for (const auto &[iv, counted] : timeline) {
        const int steps = std::max(1, static_cast<int>(std::lround(iv->duration_s / cfg.step_s)));
        std::vector<int> active;
        for (const auto &id : iv->stabilize) active.push_back(index.at(id));
        std::vector<int> in_window(cfg.segments.size(), 0);
        for (int a : active) states[a].begin_window();
        for (int k = 0; k < steps; ++k) {
            for (std::size_t s = 0; s < states.size(); ++s) {
                dev[s] = states[s].step(t);
                res.phase_deg[s].push_back(dev[s]);
            }
            res.in_experiment.push_back(iv->experiment && counted ? 1 : 0);
            res.time_s.push_back(t);
            for (int a : active) {
                states[a].accumulate(dev[a]);
                if (++in_window[a] >= states[a].window_steps()) {
                    states[a].feedback();
                    states[a].begin_window();
                    in_window[a] = 0;
                }
            }
            t += cfg.step_s;
        }
    }

    for (std::size_t s = 0; s < states.size(); ++s) {
        const auto samples = experiment_samples(res, static_cast<int>(s));
        res.segment_std_deg.push_back(samples.empty() ? 0.0 : circular_std_deg(samples));
    }
    return res;
}

std::vector<double> experiment_samples(const ClosedLoopResult &result, int segment) {
    std::vector<double> out;
    const auto &series = result.phase_deg.at(static_cast<std::size_t>(segment));
    for (std::size_t k = 0; k < series.size(); ++k) {
        if (result.in_experiment[k]) out.push_back(series[k]);
    }
    return out;
}

double circular_std_deg(std::span<const double> phases_deg) {
    if (phases_deg.empty()) throw PhaseError("circular std of an empty sample");
    double c = 0, s = 0;
    for (double p : phases_deg) {
        c += std::cos(p / kDeg);
        s += std::sin(p / kDeg);
    }
    const double r = std::hypot(c, s) / static_cast<double>(phases_deg.size());
    if (r >= 1.0) return 0.0;
    return std::sqrt(-2.0 * std::log(r)) * kDeg;
}

double effective_link_phase_sigma(const std::string &link_id, const ClosedLoopResult &result) {
    if (result.rounds < 100) throw PhaseError("link phase sigma needs at least 100 stabilization rounds");
    const LinkPhaseDefinition *def = nullptr;
    for (const auto &l : result.links) {
        if (l.id == link_id) def = &l;
    }
    if (!def) throw PhaseError("unknown link '" + link_id + "'");
    std::vector<int> segs;
    for (const auto &id : def->segments) segs.push_back(result.segment_index(id));
    std::vector<double> link;
    const double drift_per_s = result.drift_deg_per_hour / 3600.0;
    for (std::size_t k = 0; k < result.in_experiment.size(); ++k) {
        if (!result.in_experiment[k]) continue;
        double sum = drift_per_s * result.time_s[k];
        for (int s : segs) sum += result.phase_deg[static_cast<std::size_t>(s)][k];
        link.push_back(sum);
    }
    return circular_std_deg(link);
}

PhaseStabConfig default_three_node_config() {
    PhaseStabConfig cfg;
    auto local = [](std::string id, NoiseSpectrum n) {
        InterferometerSegment s;
        s.id = std::move(id);
        s.detection = DetectionKind::kHeterodyne;
        s.noise = std::move(n);
        s.feedback.gain = 0.8;
        s.feedback.setpoint_deg = 0;
        return s;
    };
    auto global = [](std::string id, NoiseSpectrum n) {
        InterferometerSegment s;
        s.id = std::move(id);
        s.detection = DetectionKind::kHomodyne;
        s.noise = std::move(n);
        s.feedback.gain = 0.8;
        s.feedback.setpoint_deg = 90;
        s.feedback.measurement_integration_s = 50e-6;
        s.feedback.detection_noise_deg = 3.0;
        return s;
    };
    // Node A's sample stage: strong components above 500 Hz.
    cfg.segments.push_back(local("local-A", {{{730, 18}, {1370, 13}, {2610, 7.7}}, 0.005, 20}));
    cfg.segments.push_back(local("local-B_A", {{{40, 20}, {150, 5}}, 0.005, 20}));
    cfg.segments.push_back(local("local-B_C", {{{40, 20}, {150, 5}}, 0.005, 20}));
    cfg.segments.push_back(local("local-C", {{{60, 20}, {180, 5}}, 0.005, 20}));
    // Fiber between A and B: strong low-frequency components.
    cfg.segments.push_back(global("global-AB", {{{15, 150}, {90, 40}}, 0.01, 100}));
    cfg.segments.push_back(global("global-BC", {{{20, 40}, {310, 23}}, 0.02, 35}));

    cfg.schedule.startup_rounds = 5;
    cfg.schedule.cycle = {
        {100e-6, false, {"local-A", "local-B_A", "global-AB"}},
        {100e-6, false, {"local-C", "local-B_C"}},
        {100e-6, false, {"global-BC"}},
        {700e-6, true, {}},
    };
    cfg.links = {{"A-B", {"local-A", "local-B_A", "global-AB"}}, {"B-C", {"local-B_C", "local-C", "global-BC"}}};
    return cfg;
}

}  // namespace qnet
