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

#ifndef QNET_PHASESTAB_H
#define QNET_PHASESTAB_H

// Phase stabilization of the decomposed link interferometers.
//
// Each link phase is the sum of three segment phases (two local, one global).
// Segment phases are expressed as deviations from their feedback setpoint, in
// degrees, and are not wrapped; circular statistics wrap them as needed.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qnet/qstate.h"

namespace qnet {

class PhaseError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

/// Δθ in degrees from I3 - I4 = 4 sqrt(I1 I2) cos Δθ.
double homodyne_phase(double i1, double i2, double i3_minus_i4);

/// Phase of the beat signal relative to the electronic reference, in degrees
/// within (-180, 180], by quadrature demodulation at `beat_freq_hz`.
double heterodyne_phase(std::span<const double> beat, std::span<const double> reference, double sample_rate_hz,
                        double beat_freq_hz);

enum class DetectionKind : std::uint8_t { kHomodyne, kHeterodyne };

struct Sinusoid {
    double frequency_hz = 0;
    double amplitude_deg = 0;
};

struct NoiseSpectrum {
    std::vector<Sinusoid> components;
    double white_deg_per_sqrt_hz = 0;
    double random_walk_deg_per_sqrt_s = 0;
};

struct FeedbackConfig {
    double gain = 0.8;
    double setpoint_deg = 0;
    double actuator_range_deg = 1800;
    double measurement_integration_s = 10e-6;
    /// Gaussian error on each phase estimate (photon shot noise at the
    /// single-photon-level global detection).
    double detection_noise_deg = 0;
    bool enabled = true;
};

struct InterferometerSegment {
    std::string id;
    DetectionKind detection = DetectionKind::kHeterodyne;
    NoiseSpectrum noise;
    FeedbackConfig feedback;
};

struct ScheduleInterval {
    double duration_s = 0;
    bool experiment = false;
    /// Segments measured and corrected during this interval.
    std::vector<std::string> stabilize;
};

struct StabilizationSchedule {
    std::vector<ScheduleInterval> cycle;
    /// Stabilization-only rounds run before the first experiment window.
    int startup_rounds = 5;

    double cycle_duration_s() const;
    /// Fraction of each cycle spent in experiment windows.
    double duty_factor() const;
};

struct LinkPhaseDefinition {
    std::string id;
    std::vector<std::string> segments;
};

struct PhaseStabConfig {
    std::vector<InterferometerSegment> segments;
    StabilizationSchedule schedule;
    std::vector<LinkPhaseDefinition> links;
    double step_s = 10e-6;
    /// Linear drift of the entangled-state phase, invisible to every detector.
    double entangled_phase_drift_deg_per_hour = 0;

    std::vector<std::string> check() const;
    void validate() const;
};

struct ClosedLoopResult {
    double step_s = 0;
    std::vector<std::string> segment_ids;
    /// phase_deg[segment][step], deviation from setpoint, unwrapped.
    std::vector<std::vector<double>> phase_deg;
    /// Steps inside experiment windows, after the startup rounds.
    std::vector<std::uint8_t> in_experiment;
    /// Elapsed time of each step since the start of the simulation.
    std::vector<double> time_s;
    double drift_deg_per_hour = 0;
    std::vector<double> segment_std_deg;
    /// Completed stabilization cycles after startup.
    int rounds = 0;
    std::vector<LinkPhaseDefinition> links;

    int segment_index(const std::string &id) const;
};

/// Runs `duration_s` of interleaved experiment and stabilization after the
/// startup rounds. Each segment draws from its own RNG stream derived from one
/// draw of `rng`, so segments do not influence each other's noise.
ClosedLoopResult simulate_closed_loop(const PhaseStabConfig &cfg, double duration_s, Rng &rng);

/// Circular standard deviation sqrt(-2 ln R) in degrees.
double circular_std_deg(std::span<const double> phases_deg);

/// Circular std of the summed link phase over experiment windows. Requires at
/// least 100 stabilization rounds.
double effective_link_phase_sigma(const std::string &link_id, const ClosedLoopResult &result);

/// Three-node layout with noise calibrated to the reported link phase
/// uncertainties (about 30 deg for Alice-Bob and 15 deg for Bob-Charlie).
PhaseStabConfig default_three_node_config();

/// Per-step phase samples of one segment during experiment windows.
std::vector<double> experiment_samples(const ClosedLoopResult &result, int segment);

}  // namespace qnet

#endif
