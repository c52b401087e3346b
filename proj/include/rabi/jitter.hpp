#pragma once

// Pulse-duration jitter and the jitter-averaged power scan: the time-integrated
// emission per period as a function of the peak Rabi frequency, averaged over
// pulse-duration fluctuations, and a damped-sinusoid fit to it.

#include <cstdint>
#include <span>
#include <vector>

#include "rabi/bloch.hpp"
#include "rabi/fitting.hpp"
#include "rabi/pulses.hpp"
#include "rabi/random.hpp"

namespace rabi {

struct JitterModel {
    double sigma_T_rel = 0.07;  // relative standard deviation of the pulse duration
    double edge_sigma = 200e-12;  // s, rise/fall fluctuation; not used by the sampler

    /// Two independent edges of `edge_sigma` added in quadrature, relative to `duration`.
    static JitterModel from_edges(double edge_sigma, double duration);
    void validate() const;
};

/// T' ~ Normal(base_T, sigma_T_rel * base_T) truncated to T' > 0.
double sample_duration(double base_T, const JitterModel& model, Philox& rng);
double sample_duration(double base_T, const JitterModel& model, std::uint64_t seed);

struct PowerScan {
    std::vector<double> amplitude;   // peak Rabi frequency, rad/s, strictly increasing
    std::vector<double> signal;      // mean emitted photons per period
    std::vector<double> std_error;   // standard error of the mean
    std::vector<double> area_mean;   // mean pulse area at zero detuning, rad
    std::vector<double> area_sigma;  // sample standard deviation of the pulse area, rad

    std::size_t size() const { return amplitude.size(); }
    void validate() const;
};

struct PowerScanOptions {
    double rep_period = 1.4e-6;  // s, emission is integrated over [0, rep_period]
    /// Durations are drawn one per stratum of the normal distribution, which
    /// removes most of the sampling noise of the mean.
    bool stratified = true;
    IntegratorOptions integrator;
};

/// For each amplitude the template is scaled to that peak Rabi frequency and
/// stretched about its centre by T'/T for `n_samples` jittered durations T';
/// the signal is the mean over samples of the integral of gamma1 * rho22. The
/// pulse area thus fluctuates in proportion to the amplitude. Points are
/// computed in parallel with per-point random streams. Integration failures
/// are rethrown naming the offending point.
PowerScan averaged_power_scan(const EmitterModel& emitter, const DriveField& pulse_template,
                              std::span<const double> amplitudes, const JitterModel& jitter,
                              int n_samples, std::uint64_t seed,
                              const PowerScanOptions& options = {});

struct Extremum {
    double amplitude = 0.0;  // parabolic refinement between grid points
    double value = 0.0;
    bool maximum = false;
};

/// Alternating local extrema of the signal, starting with the first maximum.
/// A turning point counts only after the signal has moved by more than
/// `hysteresis` from it.
std::vector<Extremum> scan_extrema(const PowerScan& scan, double hysteresis = 0.0);

/// (max - min) / (max + min) for each maximum and the minimum following it.
std::vector<double> fringe_visibilities(const std::vector<Extremum>& extrema);

/// S(a) = offset + background_slope * a
///        - max(modulation + decay_slope * a, 0) * cos(2 pi a / period + phase) / 2.
/// With phase 0 the first maximum sits at a = period / 2, the pi-pulse amplitude.
struct PowerScanFit {
    double period = 0.0;            // rad/s of amplitude per 2 pi of area
    double decay_slope = 0.0;       // change of the modulation depth per unit amplitude
    double background_slope = 0.0;
    double offset = 0.0;
    double modulation = 0.0;
    double phase = 0.0;
    double residual_norm = 0.0;
    FitResult fit;  // parameters offset, background_slope, modulation, decay_slope, period, phase

    double pi_amplitude() const { return 0.5 * period; }
};

double power_scan_model(const PowerScanFit& fit, double amplitude);

/// Least-squares fit of the model above. Throws DegenerateFit when the signal
/// carries no modulation, ValidationError when the scan holds fewer than four
/// extrema, and FitDiverged from the optimizer.
PowerScanFit fit_power_scan(const PowerScan& scan);

}  // namespace rabi
