#pragma once

// Optical Bloch equations for a driven, damped two-level emitter in the
// rotating frame (rotating-wave approximation):
//
//   d rho12 / dt = (i Delta - Gamma2) rho12 - (i/2) Omega(t) (2 rho22 - 1)
//   d rho22 / dt = -Gamma1 rho22 + Im(conj(Omega(t)) rho12)
//
// rho12 = <g|rho|e>. A linear chirp on a field component acts as a detuning
// shift for that component: its resonance sits at Delta = +chirp rate.

#include <cstdint>
#include <utility>
#include <vector>

#include "rabi/pulses.hpp"

namespace rabi {

struct EmitterModel {
    double gamma1 = 0.0;    // population decay rate, rad/s
    double gamma2 = 0.0;    // coherence decay rate, rad/s
    double detuning = 0.0;  // laser minus transition angular frequency, rad/s

    /// Lifetime-limited emitter (gamma2 = gamma1 / 2).
    static EmitterModel radiative(double gamma1, double detuning = 0.0);
    static EmitterModel from_lifetime(double t1, double detuning = 0.0);

    /// Dephasing in excess of the radiative limit, gamma2 - gamma1 / 2.
    double pure_dephasing() const { return gamma2 - 0.5 * gamma1; }

    /// Throws ValidationError unless gamma1 >= 0 and gamma2 >= gamma1 / 2.
    void validate() const;

    bool operator==(const EmitterModel&) const = default;
};

struct BlochState {
    double rho_ee = 0.0;
    Complex coherence{0.0, 0.0};  // rho12 in the rotating frame

    static BlochState ground() { return {}; }
    static BlochState excited() { return {1.0, {0.0, 0.0}}; }

    /// Amount by which the state leaves the physical set: population outside
    /// [0, 1] or |rho12|^2 above rho22 (1 - rho22). Zero for physical states.
    double positivity_violation() const;

    bool operator==(const BlochState&) const = default;
};

struct BlochTrajectory {
    std::vector<double> times;  // uniform grid, s
    std::vector<BlochState> states;
    std::uint64_t field_digest = 0;
    double detuning = 0.0;
    /// Mean number of emitted photons over the span, the integral of gamma1 * rho22.
    double emitted = 0.0;

    std::size_t size() const { return times.size(); }
};

struct IntegratorOptions {
    double rel_tol = 1e-9;
    double abs_tol = 1e-12;
    /// Hard cap on accepted steps per call; exceeding it raises StepFailure.
    std::size_t max_steps = 50'000'000;
    /// When > 0, driven segments are split into equal steps no longer than
    /// this (s) and the tolerances are ignored. The solution is then a smooth
    /// function of the field parameters, as finite-difference fits require.
    double fixed_step = 0.0;
};

/// Solves the Bloch equations over `span` and samples the state every `dt_out`
/// starting at span.begin. Stepping is adaptive (Dormand-Prince 5(4)) with
/// dense output; intervals without drive are propagated in closed form.
/// Throws StepFailure or InvariantBreach.
BlochTrajectory integrate(const EmitterModel& emitter, const DriveField& field,
                          const BlochState& initial, Interval span, double dt_out,
                          const IntegratorOptions& options = {});

struct Evolution {
    BlochState final;
    double emitted = 0.0;  // integral of gamma1 * rho22 over the span
};

/// Same dynamics as integrate() without the output grid.
Evolution evolve(const EmitterModel& emitter, const DriveField& field, const BlochState& initial,
                 Interval span, const IntegratorOptions& options = {});

/// Undamped Rabi formula (Omega^2 / W^2) sin^2(W t / 2) with W^2 = Omega^2 + Delta^2.
double analytic_rabi(double omega, double detuning, double t);

/// Closed-form CW steady state under constant real drive `omega`.
BlochState steady_state(const EmitterModel& emitter, double omega);

/// (t, rho22) pairs of a trajectory.
std::vector<std::pair<double, double>> excited_population_series(const BlochTrajectory& trajectory);

}  // namespace rabi
