#pragma once

// Excitation pulses: envelopes, phase laws and the complex Rabi frequency they
// define, plus pulse-area calculus and photon bookkeeping.
//
// Amplitudes are angular Rabi frequencies (rad/s) with the dipole moment and
// hbar folded in. The sign of the Rabi frequency is taken positive; only |Omega|
// and relative phases enter the populations. Times are in seconds.

#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace rabi {

using Complex = std::complex<double>;

/// Closed time interval [begin, end] in seconds.
struct Interval {
    double begin = 0.0;
    double end = 0.0;

    double length() const { return end - begin; }
    bool empty() const { return !(end > begin); }
    bool operator==(const Interval&) const = default;
};

/// Envelope amplitude below which a component counts as switched off,
/// relative to its own peak.
inline constexpr double kSupportThreshold = 1e-6;

struct Rectangular {
    double peak;      // rad/s
    double duration;  // s
    double center;    // s
    bool operator==(const Rectangular&) const = default;
};

/// Gaussian whose intensity profile (amplitude squared) has full width at
/// half maximum `fwhm`.
struct Gaussian {
    double peak;
    double fwhm;
    double center;
    bool operator==(const Gaussian&) const = default;
};

/// Uniformly sampled amplitude, linearly interpolated, zero outside the grid.
struct Sampled {
    double start;     // time of the first sample
    double step;      // grid spacing
    std::vector<double> amplitude;
    bool operator==(const Sampled&) const = default;

    double stop() const { return start + step * static_cast<double>(amplitude.size() - 1); }
};

class Envelope {
public:
    using Shape = std::variant<Rectangular, Gaussian, Sampled>;

    // Validating constructors; throw ValidationError on bad parameters.
    static Envelope rectangular(double peak, double duration, double center);
    static Envelope gaussian(double peak, double fwhm, double center);
    static Envelope sampled(double start, double step, std::vector<double> amplitude);
    /// Builds a sampled envelope from an explicit time grid, which must be
    /// uniform to one part in 1e9.
    static Envelope sampled(std::span<const double> times, std::vector<double> amplitude);

    double operator()(double t) const;

    double peak() const;
    /// Reference time for the component phase law.
    double center() const;
    /// Interval outside which the amplitude stays below kSupportThreshold * peak.
    Interval support() const;
    /// Times at which the envelope is discontinuous.
    std::vector<double> discontinuities() const;

    /// Amplitude multiplied by `factor` (>= 0).
    Envelope scaled(double factor) const;
    /// Time axis stretched by `factor` (> 0) about center(), amplitude kept.
    Envelope stretched(double factor) const;
    /// Time axis shifted by `dt`.
    Envelope shifted(double dt) const;

    const Shape& shape() const { return shape_; }
    bool operator==(const Envelope&) const = default;

private:
    explicit Envelope(Shape shape) : shape_(std::move(shape)) {}
    Shape shape_;
};

/// phi(t) = offset + chirp_rate * (t - reference), where the reference is the
/// center of the envelope the law is attached to.
struct PhaseLaw {
    double offset = 0.0;      // rad
    double chirp_rate = 0.0;  // rad/s; a positive rate shifts the component to the blue
    bool operator==(const PhaseLaw&) const = default;
};

struct FieldComponent {
    Envelope envelope;
    PhaseLaw phase;
    bool operator==(const FieldComponent&) const = default;
};

/// Complex Rabi frequency Omega(t) = sum_k env_k(t) exp(i phi_k(t)).
class DriveField {
public:
    explicit DriveField(std::vector<FieldComponent> components);
    explicit DriveField(Envelope envelope, PhaseLaw phase = {});

    Complex operator()(double t) const;
    /// |Omega(t)|, cheaper than abs(operator()) for a single unchirped component.
    double magnitude(double t) const;

    const std::vector<FieldComponent>& components() const { return components_; }

    /// Largest envelope peak among the components.
    double peak() const;
    /// Union of the component supports; empty when every peak is zero.
    Interval support() const;
    /// Sorted times where the field is discontinuous or where quadrature
    /// should start a fresh panel (component centers and support edges).
    std::vector<double> breakpoints() const;

    DriveField scaled(double factor) const;
    DriveField stretched(double factor) const;
    DriveField shifted(double dt) const;

    bool is_zero() const { return peak() == 0.0; }

    /// Stable 64-bit digest of the field parameters, used in metadata.
    std::uint64_t digest() const;

    bool operator==(const DriveField&) const = default;

private:
    std::vector<FieldComponent> components_;
};

struct QuadratureOptions {
    double rel_tol = 1e-8;
    int max_depth = 40;
};

/// Omega(t) evaluated at time t.
Complex eval_rabi(const DriveField& field, double t);

/// Nutation angle integral of sqrt(detuning^2 + |Omega(t)|^2) over `window`,
/// by adaptive Simpson quadrature. Throws NonConvergedQuadrature.
double pulse_area(const DriveField& field, double detuning, Interval window,
                  const QuadratureOptions& options = {});

/// Returns `field` with every envelope scaled by a common factor so that its
/// pulse area over `window` equals `target` to 1e-6 relative. Throws
/// Unreachable when the target lies below the detuning-only floor.
DriveField scale_to_area(const DriveField& field, double target, double detuning, Interval window,
                         const QuadratureOptions& options = {});

/// Photons per repetition period carried by a pulse train of average power
/// `avg_power` (W), repetition rate `rep_rate` (Hz) and wavelength (m).
double photons_per_pulse(double avg_power, double rep_rate, double wavelength);

/// Inverse of photons_per_pulse: average power (W) needed for `photons` per period.
double power_for_photons(double photons, double rep_rate, double wavelength);

/// Amplitude ratio for an intensity ratio given in dB.
inline double amplitude_ratio_from_db(double ratio_db) {
    return std::pow(10.0, ratio_db / 20.0);
}

/// Time integral of a Gaussian amplitude with peak `peak` and intensity FWHM
/// `fwhm`: peak * fwhm * sqrt(pi / (2 ln 2)).
double gaussian_area(double peak, double fwhm);

}  // namespace rabi
