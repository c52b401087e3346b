#pragma once

// Thin driver around Boost.odeint's dense-output Dormand-Prince 5(4) stepper:
// advances exactly to the end of a segment and reports each accepted step so
// callers can sample the continuous extension or locate events.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include <boost/numeric/odeint.hpp>

#include "rabi/bloch.hpp"
#include "rabi/errors.hpp"

namespace rabi::detail {

using State4 = std::array<double, 4>;
using Dopri5 = boost::numeric::odeint::runge_kutta_dopri5<State4>;
using DenseDopri5 = boost::numeric::odeint::result_of::make_dense_output<Dopri5>::type;

inline DenseDopri5 make_stepper(const IntegratorOptions& options, double max_dt) {
    return boost::numeric::odeint::make_dense_output(options.abs_tol, options.rel_tol, max_dt,
                                                     Dopri5());
}

/// Integrates `rhs` from x at segment.begin to segment.end. After every
/// accepted step `on_step(stepper, t_old, t_new)` is called; returning false
/// stops early. On return `x` holds the state at the stopping time, which is
/// returned.
template <class Rhs, class OnStep>
double run_segment(Rhs&& rhs, State4& x, Interval segment, double dt0, double max_dt,
                   const IntegratorOptions& options, OnStep&& on_step) {
    if (options.fixed_step > 0.0) {
        // tolerances too loose to reject any step: the step stays at max_dt
        // the count must not flip under rounding of lengths that are step multiples
        const double n = std::max(1.0, std::ceil(segment.length() / options.fixed_step * (1.0 - 1e-9)));
        if (n > static_cast<double>(options.max_steps)) {
            throw StepFailure("integrator: step budget exhausted");
        }
        max_dt = segment.length() / n;
        dt0 = max_dt;
    }
    DenseDopri5 stepper = options.fixed_step > 0.0
                              ? boost::numeric::odeint::make_dense_output(1e300, 1e300, max_dt, Dopri5())
                              : make_stepper(options, max_dt);
    double dt = std::min({dt0, max_dt, segment.length()});
    stepper.initialize(x, segment.begin, dt);
    std::size_t steps = 0;
    try {
        while (stepper.current_time() < segment.end) {
            const double remaining = segment.end - stepper.current_time();
            if (stepper.current_time_step() > remaining) {
                stepper.initialize(stepper.current_state(), stepper.current_time(), remaining);
            }
            const auto [t_old, t_new] = stepper.do_step(rhs);
            if (!(t_new > t_old)) throw StepFailure("integrator: step size underflow");
            if (++steps > options.max_steps) {
                throw StepFailure("integrator: step budget exhausted");
            }
            if (!on_step(stepper, t_old, t_new)) {
                x = stepper.current_state();
                return t_new;
            }
            // Landing within rounding of the end counts as arriving.
            if (segment.end - t_new <= 4.0 * std::numeric_limits<double>::epsilon() *
                                           std::max(std::abs(segment.end), 1e-300)) {
                break;
            }
        }
    } catch (const boost::numeric::odeint::odeint_error& e) {
        throw StepFailure(std::string("integrator: ") + e.what());
    }
    x = stepper.current_state();
    return segment.end;
}

/// Initial step guess from the fastest rate in the problem.
inline double initial_step(double rate_scale, Interval segment) {
    const double rate = rate_scale + 1.0 / segment.length();
    return 1e-3 / rate;
}

}  // namespace rabi::detail
