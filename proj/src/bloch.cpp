#include "rabi/bloch.hpp"

#include <algorithm>
#include <cmath>
#include <span>

#include "dense_stepper.hpp"
#include "rabi/errors.hpp"
#include "segments.hpp"

namespace rabi {

namespace {

constexpr double kBreachTolerance = 1e-6;

// y = {Re rho12, Im rho12, rho22, emitted}
using detail::State4;

State4 pack(const BlochState& s, double emitted) {
    return {s.coherence.real(), s.coherence.imag(), s.rho_ee, emitted};
}

BlochState unpack(const State4& y) { return {y[2], {y[0], y[1]}}; }

void check_state(const BlochState& s, double t) {
    if (!(s.positivity_violation() <= kBreachTolerance)) {
        throw InvariantBreach("Bloch state left the physical set at t = " + std::to_string(t) +
                              " s; integrator tolerances are too loose for this field");
    }
}

// Drive-free evolution over tau, including the emitted-photon integral.
State4 free_evolution(const EmitterModel& e, const State4& y, double tau) {
    const double decay = std::exp(-e.gamma1 * tau);
    const Complex rot = std::exp(Complex(-e.gamma2, e.detuning) * tau);
    const Complex r = Complex(y[0], y[1]) * rot;
    const double emitted = y[3] + y[2] * -std::expm1(-e.gamma1 * tau);
    return {r.real(), r.imag(), y[2] * decay, emitted};
}

struct BlochRhs {
    const EmitterModel& emitter;
    const DriveField& field;
    double lo;  // field is evaluated inside the open segment only
    double hi;

    void operator()(const State4& y, State4& dy, double t) const {
        const double tc = std::clamp(t, lo, hi);
        const Complex omega = field(tc);
        const Complex r{y[0], y[1]};
        const double inversion = 2.0 * y[2] - 1.0;
        const Complex dr =
            Complex(-emitter.gamma2, emitter.detuning) * r - Complex(0.0, 0.5) * omega * inversion;
        const double dp = -emitter.gamma1 * y[2] + (std::conj(omega) * r).imag();
        dy = {dr.real(), dr.imag(), dp, emitter.gamma1 * y[2]};
    }
};

// Propagates over `span`, writing the state at each of `out_times` (sorted,
// inside the span) through `sink(index, state)`. Returns the final packed state.
template <class Sink>
State4 propagate(const EmitterModel& emitter, const DriveField& field, const BlochState& initial,
                 Interval span, std::span<const double> out_times, const IntegratorOptions& options,
                 Sink&& sink) {
    emitter.validate();
    if (initial.positivity_violation() > 1e-9) {
        throw ValidationError("initial", "state violates density-matrix positivity");
    }
    State4 y = pack(initial, 0.0);
    std::size_t next = 0;
    while (next < out_times.size() && out_times[next] <= span.begin) {
        sink(next++, initial);
    }

    const auto segments = detail::split_span(field, span);
    for (std::size_t k = 0; k < segments.size(); ++k) {
        const Interval seg = segments[k].range;
        const bool last = k + 1 == segments.size();
        auto in_segment = [&](double t) { return last ? t <= seg.end : t < seg.end; };

        if (!segments[k].driven) {
            const State4 start = y;
            for (; next < out_times.size() && in_segment(out_times[next]); ++next) {
                sink(next, unpack(free_evolution(emitter, start, out_times[next] - seg.begin)));
            }
            y = free_evolution(emitter, start, seg.length());
            continue;
        }

        const double lo = std::nextafter(seg.begin, seg.end);
        const double hi = std::nextafter(seg.end, seg.begin);
        const BlochRhs rhs{emitter, field, lo, hi};
        const double rate = field.peak() + std::abs(emitter.detuning) + emitter.gamma1;
        State4 x = y;
        detail::run_segment(
            rhs, x, seg, detail::initial_step(rate, seg), detail::max_step_for(field, seg), options,
            [&](auto& stepper, double, double t_new) {
                State4 tmp;
                for (; next < out_times.size() && out_times[next] <= t_new &&
                       in_segment(out_times[next]);
                     ++next) {
                    stepper.calc_state(out_times[next], tmp);
                    const BlochState s = unpack(tmp);
                    check_state(s, out_times[next]);
                    sink(next, s);
                }
                return true;
            });
        y = x;
        check_state(unpack(y), seg.end);
        // Outputs landing on the segment end after the final step.
        for (; next < out_times.size() && in_segment(out_times[next]); ++next) {
            sink(next, unpack(y));
        }
    }
    return y;
}

}  // namespace

EmitterModel EmitterModel::radiative(double gamma1, double detuning) {
    EmitterModel e{gamma1, 0.5 * gamma1, detuning};
    e.validate();
    return e;
}

EmitterModel EmitterModel::from_lifetime(double t1, double detuning) {
    if (!(t1 > 0.0) || !std::isfinite(t1)) throw ValidationError("T1", "must be finite and > 0");
    return radiative(1.0 / t1, detuning);
}

void EmitterModel::validate() const {
    if (!std::isfinite(gamma1) || gamma1 < 0.0) {
        throw ValidationError("gamma1", "must be finite and >= 0");
    }
    if (!std::isfinite(gamma2) || gamma2 < 0.5 * gamma1 * (1.0 - 1e-12)) {
        throw ValidationError("gamma2", "must be finite and >= gamma1 / 2");
    }
    if (!std::isfinite(detuning)) throw ValidationError("detuning", "must be finite");
}

double BlochState::positivity_violation() const {
    double v = 0.0;
    v = std::max(v, -rho_ee);
    v = std::max(v, rho_ee - 1.0);
    v = std::max(v, std::norm(coherence) - rho_ee * (1.0 - rho_ee));
    return v;
}

BlochTrajectory integrate(const EmitterModel& emitter, const DriveField& field,
                          const BlochState& initial, Interval span, double dt_out,
                          const IntegratorOptions& options) {
    if (!(dt_out > 0.0) || !std::isfinite(dt_out)) {
        throw ValidationError("dt_out", "must be finite and > 0");
    }
    if (!(span.end >= span.begin) || !std::isfinite(span.begin) || !std::isfinite(span.end)) {
        throw ValidationError("span", "needs finite t0 <= t1");
    }
    const double n = std::floor(span.length() / dt_out * (1.0 + 1e-12) + 1e-9);
    if (n > 5e7) throw ValidationError("dt_out", "output grid exceeds 5e7 points");
    const auto count = static_cast<std::size_t>(n) + 1;

    BlochTrajectory traj;
    traj.times.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        traj.times[i] = span.begin + dt_out * static_cast<double>(i);
    }
    traj.times.back() = std::min(traj.times.back(), span.end);
    traj.states.resize(count);
    traj.field_digest = field.digest();
    traj.detuning = emitter.detuning;

    const State4 final = propagate(emitter, field, initial, span, traj.times, options,
                                   [&](std::size_t i, const BlochState& s) { traj.states[i] = s; });
    traj.emitted = final[3];
    return traj;
}

Evolution evolve(const EmitterModel& emitter, const DriveField& field, const BlochState& initial,
                 Interval span, const IntegratorOptions& options) {
    if (!(span.end >= span.begin)) throw ValidationError("span", "needs t0 <= t1");
    const State4 final =
        propagate(emitter, field, initial, span, {}, options, [](std::size_t, const BlochState&) {});
    return {unpack(final), final[3]};
}

double analytic_rabi(double omega, double detuning, double t) {
    const double w2 = omega * omega + detuning * detuning;
    if (w2 == 0.0) return 0.0;
    const double s = std::sin(0.5 * std::sqrt(w2) * t);
    return omega * omega / w2 * s * s;
}

BlochState steady_state(const EmitterModel& emitter, double omega) {
    emitter.validate();
    if (!(emitter.gamma1 > 0.0)) {
        throw ValidationError("gamma1", "steady state needs gamma1 > 0");
    }
    const double g1 = emitter.gamma1;
    const double g2 = emitter.gamma2;
    const double d = emitter.detuning;
    const double drive = omega * omega * g2 / g1;
    const double rho_ee = 0.5 * drive / (d * d + g2 * g2 + drive);
    const double inversion = 2.0 * rho_ee - 1.0;
    const Complex coherence = Complex(0.0, 0.5) * omega * inversion / Complex(-g2, d);
    return {rho_ee, coherence};
}

std::vector<std::pair<double, double>> excited_population_series(const BlochTrajectory& trajectory) {
    std::vector<std::pair<double, double>> out;
    out.reserve(trajectory.size());
    for (std::size_t i = 0; i < trajectory.size(); ++i) {
        out.emplace_back(trajectory.times[i], trajectory.states[i].rho_ee);
    }
    return out;
}

}  // namespace rabi
