#pragma once

// Experiment configuration: a line-oriented, sectioned key = value format.
//
//     # comment
//     [emitter]
//     T1_ns = 9.5
//     [field.main]
//     kind = gaussian
//     emitter.detuning_MHz = 0     (dotted keys work anywhere; the section is prepended)
//
// Times are in ns and frequencies in MHz (cycles, so the angular value is
// 2 pi times the number); conversion to SI happens in the builders below.
// Unknown keys, duplicate keys and malformed lines are errors.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rabi/bloch.hpp"
#include "rabi/detection.hpp"
#include "rabi/jitter.hpp"
#include "rabi/pulses.hpp"
#include "rabi/sweeps.hpp"

namespace rabi {

struct EmitterConfig {
    std::optional<double> T1_ns;        // exactly one of T1_ns and gamma1_MHz
    std::optional<double> gamma1_MHz;   // gamma1 / 2 pi
    std::optional<double> gamma2_MHz;   // defaults to gamma1 / 2 (radiative limit)
    double detuning_MHz = 0.0;
    bool operator==(const EmitterConfig&) const = default;
};

struct ComponentConfig {
    std::string name;
    std::string kind = "gaussian";  // gaussian | rectangular | sampled
    double width_ns = 5.12;         // intensity FWHM, or duration for rectangular
    double center_ns = 25.0;
    std::optional<double> peak_MHz;  // Omega / 2 pi at the peak
    std::optional<double> ratio_db;  // intensity relative to the first component
    double chirp_MHz = 0.0;          // phase rate / 2 pi; positive shifts to the blue
    double phase_rad = 0.0;
    // sampled only; the shape is normalized to unit peak
    std::optional<std::string> file;  // two columns, t_ns and value
    std::string mode = "amplitude";   // amplitude | intensity
    double offset_ns = 0.0;           // added to the file times
    bool operator==(const ComponentConfig&) const = default;
};

struct FieldConfig {
    std::vector<ComponentConfig> components;
    std::optional<double> area_pi;  // total area at zero detuning, in units of pi
    bool operator==(const FieldConfig&) const = default;
};

struct DetectorConfig {
    double efficiency = 0.02;
    double dead_time_ns = 70.0;
    double jitter_ns = 0.05;
    double rep_period_ns = 1400.0;
    double bin_ns = 1.0;
    double range_ns = 70.0;
    double dark_rate_Hz = 0.0;
    bool operator==(const DetectorConfig&) const = default;
};

struct TraceConfig {
    double start_ns = 0.0;
    double stop_ns = 70.0;
    double dt_ns = 0.02;
    std::uint64_t pulses = 0;  // Monte Carlo histogram size; 0 skips it
    bool operator==(const TraceConfig&) const = default;
};

struct JitterConfig {
    double sigma_rel = 0.07;
    double edge_ps = 200.0;
    bool operator==(const JitterConfig&) const = default;
};

struct ScanConfig {
    double pulse_ns = 4.0;  // Gaussian intensity FWHM of the scan pulse
    double center_ns = 20.0;
    double area_max_pi = 12.0;
    std::uint64_t points = 241;
    std::uint64_t samples = 500;
    bool stratified = true;
    bool operator==(const ScanConfig&) const = default;
};

struct SweepConfig {
    double pedestal_ns = 50.0;
    double main_ns = 4.0;
    double ratio_db = -34.0;
    double chirp_MHz = 70.0;
    double detuning_min_MHz = -600.0;
    double detuning_max_MHz = 600.0;
    std::uint64_t detuning_points = 121;
    double area_max_pi = 12.0;  // main-pulse area of the last row
    std::uint64_t rows = 40;
    bool pedestal = true;
    bool main = true;
    bool leak = false;
    double leak_ns = 4.0;
    double leak_ratio_db = -20.0;
    double leak_offset_MHz = 300.0;
    double tail_lifetimes = 50.0;
    bool operator==(const SweepConfig&) const = default;
};

struct FitConfig {
    std::string model = "population";  // population | first-detected
    double tail_lifetimes = 3.0;
    std::uint64_t max_iterations = 200;
    bool operator==(const FitConfig&) const = default;
};

struct ExperimentConfig {
    EmitterConfig emitter;
    FieldConfig field;
    DetectorConfig detector;
    TraceConfig trace;
    JitterConfig jitter;
    ScanConfig scan;
    SweepConfig sweep;
    FitConfig fit;
    std::uint64_t seed = 1;
    std::string output_dir = ".";

    /// "key = value (default|file|override)" for every key, in a fixed order.
    std::vector<std::string> provenance;

    /// Throws ValidationError naming the offending key.
    void validate() const;

    /// Compares the settings; the provenance log is ignored.
    bool operator==(const ExperimentConfig& other) const;
};

/// Parses and validates `text`, applying defaults. `overrides` are extra
/// "key=value" assignments that replace file values. Throws ParseError for
/// malformed text and ValidationError for unknown keys or invalid values.
ExperimentConfig parse_config(std::string_view text, std::span<const std::string> overrides = {});

/// Reads a config file; relative sampled-shape paths are resolved against
/// the file's directory.
ExperimentConfig load_config(const std::filesystem::path& path,
                             std::span<const std::string> overrides = {});

/// Complete text form with every key spelled out; numbers are written in
/// shortest round-trip form, so parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& config);

// Builders to SI units.
EmitterModel make_emitter(const ExperimentConfig& config);
DriveField make_field(const ExperimentConfig& config);
DetectorModel make_detector(const ExperimentConfig& config);
JitterModel make_jitter(const ExperimentConfig& config);
CompositeFieldTemplate make_sweep_template(const ExperimentConfig& config);
/// Peak Rabi frequencies (rad/s) of the power-scan axis: `points` values up
/// to the area maximum of the scan pulse, starting at zero.
std::vector<double> scan_amplitudes(const ExperimentConfig& config);
/// Scan pulse of unit peak centred at scan.center_ns.
DriveField scan_template(const ExperimentConfig& config);
std::vector<double> sweep_detunings(const ExperimentConfig& config);
/// Main-pulse peaks (rad/s) of the sweep rows, area_max * k / rows for k = 1..rows.
std::vector<double> sweep_amplitudes(const ExperimentConfig& config);

}  // namespace rabi
