#pragma once

// Photon emission and time-correlated single photon counting (TCSPC).
//
// Emission is unravelled into quantum jumps: the emitter's wave function
// evolves under the non-Hermitian effective Hamiltonian and each jump records
// a photon and resets the emitter to its ground state, so re-excitation within
// a pulse is part of the statistics. Detection thins the emitted stream,
// blurs it with Gaussian timing jitter and applies a non-paralyzable dead
// time before histogramming arrival times relative to the pulse trigger.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "rabi/bloch.hpp"
#include "rabi/pulses.hpp"
#include "rabi/random.hpp"

namespace rabi {

using TimeSeries = std::vector<std::pair<double, double>>;

struct DetectorModel {
    double efficiency = 0.02;
    double dead_time = 70e-9;             // s
    double timing_jitter_sigma = 50e-12;  // s
    double rep_period = 1.4e-6;           // s, trigger to trigger
    double bin_width = 1e-9;              // s
    double range = 70e-9;                 // histogrammed span after each trigger, s
    double dark_count_rate = 0.0;         // 1/s, uniform in time

    void validate() const;
    /// Bin edges 0, w, 2w, ... covering [0, range].
    std::vector<double> bin_edges() const;

    bool operator==(const DetectorModel&) const = default;
};

struct TcspcHistogram {
    std::vector<double> edges;
    std::vector<std::uint64_t> counts;
    std::uint64_t n_pulses = 0;
    std::uint64_t seed = 0;
    DetectorModel detector;
    std::uint64_t field_digest = 0;
    std::uint64_t emitted = 0;   // photons emitted over all periods
    std::uint64_t detected = 0;  // registered detections, inside or outside the range

    std::uint64_t total() const;
    bool operator==(const TcspcHistogram&) const = default;
};

/// Quantum-jump sampler for one repetition period. The jump-free evolution
/// from the initial state is computed once and shared by every trajectory.
class JumpProcess {
public:
    /// `initial` must be a pure state. Throws ValidationError otherwise.
    JumpProcess(EmitterModel emitter, DriveField field, Interval span,
                const BlochState& initial = BlochState::ground(),
                const IntegratorOptions& options = {});

    /// Emission times of one trajectory, increasing.
    std::vector<double> sample(Philox& rng) const;

    const Interval& span() const { return span_; }

private:
    struct Node {
        double t;
        std::array<double, 4> psi;
        double norm2;
    };

    std::optional<double> next_jump(std::array<double, 4> psi, double t_from, double threshold) const;
    std::optional<double> first_jump(double threshold) const;

    EmitterModel emitter_;
    DriveField field_;
    Interval span_;
    IntegratorOptions options_;
    double kappa_;  // total jump rate out of the excited state
    std::array<double, 4> initial_;
    std::vector<Node> nodes_;
};

/// Mean photon flux gamma1 * rho22(t).
TimeSeries emission_rate(const BlochTrajectory& trajectory, const EmitterModel& emitter);

/// One quantum-jump trajectory over `span`; returns the emission times.
std::vector<double> simulate_photon_stream(const EmitterModel& emitter, const DriveField& field,
                                           Interval span, std::uint64_t seed,
                                           const BlochState& initial = BlochState::ground(),
                                           const IntegratorOptions& options = {});

struct TcspcOptions {
    BlochState initial = BlochState::ground();
    IntegratorOptions integrator;
};

/// Simulates `n_pulses` repetition periods. Results depend only on the seed,
/// the pulse count and the configuration, not on the thread count.
TcspcHistogram simulate_tcspc(const EmitterModel& emitter, const DriveField& field,
                              const DetectorModel& detector, std::uint64_t n_pulses,
                              std::uint64_t seed, const TcspcOptions& options = {});

/// Thinned-Poisson approximation of the first-detected-photon density,
/// f(t) = eta r(t) exp(-eta * integral_0^t r). Accurate when eta is small or
/// re-excitation is weak; the cumulative integral uses the trapezoid rule on
/// the rate grid.
TimeSeries first_detected_density(const TimeSeries& rate, double efficiency);

/// Integrates a density series over each bin (trapezoid on the series grid
/// with linear interpolation at bin edges).
std::vector<double> bin_probabilities(const TimeSeries& density, std::span<const double> edges);

}  // namespace rabi
