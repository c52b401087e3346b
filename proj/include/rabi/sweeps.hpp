#pragma once

// Two-dimensional excitation maps over laser detuning and field strength for
// a composite field: a weak long pedestal under a short, frequency-shifted
// main pulse, plus an optional leakage component.

#include <cstddef>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "rabi/bloch.hpp"
#include "rabi/pulses.hpp"

namespace rabi {

struct CompositeFieldTemplate {
    double center = 0.0;            // s, shared by all components
    double pedestal_fwhm = 50e-9;   // s, intensity FWHM
    double main_fwhm = 4e-9;        // s
    double ratio_db = -34.0;        // pedestal to main intensity ratio, <= 0
    double chirp = 2.0 * std::numbers::pi * 70e6;  // rad/s, phase rate of the main pulse
    bool pedestal_enabled = true;
    bool main_enabled = true;

    bool leak_enabled = false;
    double leak_fwhm = 4e-9;        // s
    double leak_ratio_db = -20.0;   // leak to main intensity ratio
    double leak_offset = 2.0 * std::numbers::pi * 300e6;  // rad/s, phase rate of the leak

    void validate() const;
    bool operator==(const CompositeFieldTemplate&) const = default;
};

/// Field with main peak `scale` (rad/s); the pedestal peak is scale * 10^(ratio_db / 20).
/// Only the main and leak components carry a phase rate.
DriveField build_composite(const CompositeFieldTemplate& tpl, double scale);

struct SweepResult {
    std::vector<double> detuning;   // rad/s, columns
    std::vector<double> amplitude;  // rad/s main peak, rows
    std::vector<double> signal;     // row-major, mean emitted photons per period
    CompositeFieldTemplate field_template;

    double at(std::size_t row, std::size_t column) const {
        return signal[row * detuning.size() + column];
    }
    std::vector<double> row(std::size_t r) const;
};

struct SweepOptions {
    /// Integration continues this many lifetimes past the end of the field.
    double tail_lifetimes = 50.0;
    IntegratorOptions integrator;
};

/// Emitted-photon integral for every (amplitude, detuning) pair, evaluated in
/// parallel. The axis detuning replaces the emitter's own. Failures are rethrown naming the grid point.
SweepResult sweep_2d(const EmitterModel& emitter, const CompositeFieldTemplate& tpl,
                     std::span<const double> detuning, std::span<const double> amplitude,
                     const SweepOptions& options = {});

/// Emitted-photon integral for one field at one detuning.
double excitation_signal(const EmitterModel& emitter, const DriveField& field,
                         const SweepOptions& options = {});

struct CrossSection {
    std::size_t row = 0;
    double amplitude = 0.0;  // actual row amplitude
    std::vector<std::pair<double, double>> points;  // (detuning, signal)
};

/// The row nearest to `amplitude`; ties go to the lower row. Throws
/// OutOfRange outside the axis.
CrossSection cross_section(const SweepResult& result, double amplitude);

struct SpectralPeak {
    double position = 0.0;  // parabolic refinement around the largest sample
    double value = 0.0;
    double fwhm = 0.0;      // full width at half of the peak value, linear interpolation
};

/// Throws ValidationError when the half-maximum crossings fall outside the series.
SpectralPeak spectral_peak(const std::vector<std::pair<double, double>>& series);

}  // namespace rabi
