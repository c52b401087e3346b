#include "rabi/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>
#include <numbers>

#include "rabi/errors.hpp"
#include "rabi/parallel.hpp"

namespace rabi {

namespace {

constexpr double kInitialDamping = 1e-10;
constexpr double kMinDamping = 1e-15;
constexpr double kMaxDamping = 1e16;

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

Eigen::VectorXd clamp(const Eigen::VectorXd& p, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    return p.cwiseMax(lo).cwiseMin(hi);
}

// Damped Gauss-Newton step. Parameters sitting on a bound whose step points
// out of the box are frozen and the system is solved for the rest.
Eigen::VectorXd damped_step(const Eigen::MatrixXd& a, const Eigen::VectorXd& g, double lambda,
                            const Eigen::VectorXd& p, const Eigen::VectorXd& lo,
                            const Eigen::VectorXd& hi) {
    const Eigen::Index n = p.size();
    std::vector<bool> frozen(static_cast<std::size_t>(n), false);
    Eigen::VectorXd step = Eigen::VectorXd::Zero(n);
    for (Eigen::Index round = 0; round <= n; ++round) {
        std::vector<Eigen::Index> free;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!frozen[static_cast<std::size_t>(j)]) free.push_back(j);
        }
        step.setZero();
        if (free.empty()) return step;
        const auto m = static_cast<Eigen::Index>(free.size());
        Eigen::MatrixXd sub(m, m);
        Eigen::VectorXd rhs(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            rhs(i) = -g(free[i]);
            for (Eigen::Index k = 0; k < m; ++k) sub(i, k) = a(free[i], free[k]);
            sub(i, i) += lambda * a(free[i], free[i]);
        }
        const Eigen::VectorXd x = sub.ldlt().solve(rhs);
        for (Eigen::Index i = 0; i < m; ++i) step(free[i]) = x(i);

        bool changed = false;
        for (Eigen::Index j : free) {
            const bool out_low = p(j) <= lo(j) && step(j) < 0.0;
            const bool out_high = p(j) >= hi(j) && step(j) > 0.0;
            if (out_low || out_high) {
                frozen[static_cast<std::size_t>(j)] = true;
                changed = true;
            }
        }
        if (!changed) return step;
    }
    return step;
}

Eigen::MatrixXd covariance_from(const Eigen::MatrixXd& j, double cost, bool absolute_sigma) {
    // columns are normalized first so parameter units do not decide the rank cutoff
    Eigen::VectorXd scale = j.colwise().norm().transpose();
    for (Eigen::Index c = 0; c < scale.size(); ++c) {
        if (scale(c) == 0.0) scale(c) = 1.0;
    }
    const Eigen::MatrixXd js = j * scale.cwiseInverse().asDiagonal();
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(js.transpose() * js);
    const Eigen::VectorXd ev = eig.eigenvalues();
    const double cutoff = 1e-14 * std::max(ev.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev(i) > cutoff) inv(i) = 1.0 / ev(i);
    }
    const Eigen::MatrixXd unscaled = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
    Eigen::MatrixXd cov = scale.cwiseInverse().asDiagonal() * unscaled * scale.cwiseInverse().asDiagonal();
    const Eigen::Index dof = j.rows() - j.cols();
    if (!absolute_sigma && dof > 0) cov *= cost / static_cast<double>(dof);
    return 0.5 * (cov + cov.transpose());
}

}  // namespace

FitProblem FitProblem::unbounded(std::vector<std::string> names, Eigen::VectorXd initial,
                                 ResidualFunction residuals) {
    FitProblem p;
    const auto n = initial.size();
    p.names = std::move(names);
    p.initial = std::move(initial);
    p.lower = Eigen::VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
    p.upper = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    p.residuals = std::move(residuals);
    return p;
}

void FitProblem::validate() const {
    const auto n = initial.size();
    if (n < 1) throw ValidationError("parameters", "need at least one free parameter");
    if (static_cast<Eigen::Index>(names.size()) != n || lower.size() != n || upper.size() != n) {
        throw ValidationError("parameters", "names, initial values and bounds differ in length");
    }
    for (Eigen::Index j = 0; j < n; ++j) {
        if (!std::isfinite(initial(j)) || !(lower(j) <= initial(j)) || !(initial(j) <= upper(j))) {
            throw ValidationError(names[static_cast<std::size_t>(j)],
                                  "initial value must be finite and within its bounds");
        }
    }
    if (!residuals) throw ValidationError("residuals", "no residual function");
    if (max_iterations < 1) throw ValidationError("max_iterations", "must be >= 1");
    if (!(step_tolerance > 0.0) || !(cost_tolerance > 0.0)) {
        throw ValidationError("tolerance", "must be > 0");
    }
}

const char* to_string(FitStatus status) {
    switch (status) {
        case FitStatus::StepTolerance: return "step-tolerance";
        case FitStatus::CostTolerance: return "cost-tolerance";
        case FitStatus::ExactFit: return "exact-fit";
        case FitStatus::NoDescent: return "no-descent";
    }
    return "unknown";
}

double FitResult::value(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ValidationError(name, "no such parameter");
    return params(it - names.begin());
}

double FitResult::sigma(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ValidationError(name, "no such parameter");
    const auto j = it - names.begin();
    return std::sqrt(std::max(covariance(j, j), 0.0));
}

Eigen::MatrixXd forward_jacobian(const ResidualFunction& f, const Eigen::VectorXd& p,
                                 const Eigen::VectorXd& r0, const Eigen::VectorXd& lower,
                                 const Eigen::VectorXd& upper, bool concurrent) {
    const Eigen::Index n = p.size();
    Eigen::MatrixXd j(r0.size(), n);
    auto column = [&](std::size_t k) {
        const auto c = static_cast<Eigen::Index>(k);
        double h = std::max(1e-7, 1e-7 * std::abs(p(c)));
        if (p(c) + h > upper(c) && p(c) - h >= lower(c)) h = -h;
        Eigen::VectorXd q = p;
        q(c) += h;
        const Eigen::VectorXd r = f(q);
        if (r.size() != r0.size()) throw ValidationError("residuals", "length changed between calls");
        j.col(c) = (r - r0) / h;
    };
    if (concurrent) {
        parallel_for(static_cast<std::size_t>(n), column);
    } else {
        for (Eigen::Index c = 0; c < n; ++c) column(static_cast<std::size_t>(c));
    }
    return j;
}

Eigen::MatrixXd central_jacobian(const ResidualFunction& f, const Eigen::VectorXd& p, double rel_step) {
    const Eigen::VectorXd r0 = f(p);
    Eigen::MatrixXd j(r0.size(), p.size());
    for (Eigen::Index c = 0; c < p.size(); ++c) {
        const double h = rel_step * std::max(1.0, std::abs(p(c)));
        Eigen::VectorXd hi = p, lo = p;
        hi(c) += h;
        lo(c) -= h;
        j.col(c) = (f(hi) - f(lo)) / (2.0 * h);
    }
    return j;
}

FitResult least_squares(const FitProblem& problem) {
    problem.validate();
    const auto& lo = problem.lower;
    const auto& hi = problem.upper;

    FitResult result;
    result.names = problem.names;
    Eigen::VectorXd p = problem.initial;
    Eigen::VectorXd r = problem.residuals(p);
    if (!all_finite(r) || r.size() == 0) {
        throw ValidationError("initial", "residuals are empty or not finite at the starting point");
    }
    double cost = r.squaredNorm();
    result.cost_history.push_back(cost);

    double lambda = kInitialDamping;
    bool converged = cost == 0.0;
    if (converged) result.status = FitStatus::ExactFit;

    int iteration = 0;
    while (!converged) {
        if (iteration == problem.max_iterations) {
            throw FitDiverged("least squares: no convergence after " +
                              std::to_string(problem.max_iterations) + " iterations (cost " +
                              std::to_string(cost) + ")");
        }
        ++iteration;
        const Eigen::MatrixXd j = forward_jacobian(problem.residuals, p, r, lo, hi,
                                                   problem.concurrent_jacobian);
        if (!j.allFinite()) throw SingularJacobian("least squares: Jacobian is not finite");
        for (Eigen::Index c = 0; c < j.cols(); ++c) {
            if (j.col(c).squaredNorm() == 0.0) {
                throw SingularJacobian("least squares: parameter '" +
                                       problem.names[static_cast<std::size_t>(c)] +
                                       "' does not affect the residuals");
            }
        }
        const Eigen::MatrixXd a = j.transpose() * j;
        const Eigen::VectorXd g = j.transpose() * r;

        while (true) {
            const Eigen::VectorXd step = damped_step(a, g, lambda, p, lo, hi);
            if (!all_finite(step)) {
                lambda *= 10.0;
                if (lambda > kMaxDamping) {
                    throw SingularJacobian("least squares: damping cannot regularize the normal equations");
                }
                continue;
            }
            const Eigen::VectorXd trial = clamp(p + step, lo, hi);
            const double moved = (trial - p).norm();
            const bool small_step =
                moved <= problem.step_tolerance * (p.norm() + problem.step_tolerance);
            const Eigen::VectorXd r_trial = problem.residuals(trial);
            const double trial_cost = all_finite(r_trial) ? r_trial.squaredNorm()
                                                          : std::numeric_limits<double>::infinity();
            if (trial_cost < cost) {
                const double drop = (cost - trial_cost) / cost;
                p = trial;
                r = r_trial;
                cost = trial_cost;
                result.cost_history.push_back(cost);
                lambda = std::max(lambda / 10.0, kMinDamping);
                if (cost == 0.0) {
                    result.status = FitStatus::ExactFit;
                    converged = true;
                } else if (small_step) {
                    result.status = FitStatus::StepTolerance;
                    converged = true;
                } else if (drop <= problem.cost_tolerance) {
                    result.status = FitStatus::CostTolerance;
                    converged = true;
                }
                break;
            }
            if (small_step) {
                result.status = FitStatus::StepTolerance;
                converged = true;
                break;
            }
            lambda *= 10.0;
            if (lambda > kMaxDamping) {
                result.status = FitStatus::NoDescent;
                converged = true;
                break;
            }
        }
    }

    result.params = p;
    result.cost = cost;
    result.iterations = iteration;
    result.n_residuals = static_cast<std::size_t>(r.size());
    result.jacobian = forward_jacobian(problem.residuals, p, r, lo, hi, problem.concurrent_jacobian);
    result.covariance = covariance_from(result.jacobian, cost, problem.absolute_sigma);
    return result;
}

// ---------------------------------------------------------------------------
// Trace fit

TraceData TraceData::from_histogram(const TcspcHistogram& histogram) {
    TraceData d;
    const auto& e = histogram.edges;
    if (e.size() < 2) throw ValidationError("histogram", "no bins");
    d.bin_width = e[1] - e[0];
    for (std::size_t i = 0; i + 1 < e.size(); ++i) {
        if (std::abs((e[i + 1] - e[i]) - d.bin_width) > 1e-9 * d.bin_width) {
            throw ValidationError("histogram", "bins must have equal width");
        }
        d.times.push_back(0.5 * (e[i] + e[i + 1]));
        d.values.push_back(static_cast<double>(histogram.counts[i]));
    }
    return d;
}

void TraceData::validate() const {
    if (times.size() != values.size()) throw ValidationError("trace", "times and values differ in length");
    if (times.size() < 5) throw ValidationError("trace", "needs at least 5 points");
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (!std::isfinite(times[i]) || !std::isfinite(values[i])) {
            throw ValidationError("trace", "non-finite sample");
        }
        if (i > 0 && !(times[i] > times[i - 1])) {
            throw NonMonotonicTime("trace: times must increase strictly");
        }
    }
    if (!(bin_width >= 0.0) || !std::isfinite(bin_width)) {
        throw ValidationError("bin_width", "must be finite and >= 0");
    }
}

namespace {

double interpolate(const TimeSeries& s, double t) {
    if (t <= s.front().first) return s.front().second;
    if (t >= s.back().first) return s.back().second;
    const auto it = std::lower_bound(s.begin(), s.end(), t,
                                     [](const auto& p, double x) { return p.first < x; });
    const auto& [t1, v1] = *it;
    const auto& [t0, v0] = *(it - 1);
    return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
}

// Model shape (before c and b) on the data grid.
std::vector<double> trace_shape(const TraceData& data, const Envelope& envelope,
                                const EmitterModel& emitter, double s, double t0_ns,
                                const TraceFitOptions& options) {
    const DriveField field(envelope.scaled(s).shifted(t0_ns * 1e-9));
    const double half = 0.5 * data.bin_width;
    const double first = data.times.front() - half;
    const double last = data.times.back() + half;
    const double start = field.is_zero() ? first : std::min(first, field.support().begin);
    const auto traj = integrate(emitter, field, BlochState::ground(), {start, last},
                                options.model_step, options.integrator);

    TimeSeries shape;
    if (options.model == TraceModel::FirstDetected) {
        shape = first_detected_density(emission_rate(traj, emitter), options.efficiency);
        const double norm = 1.0 / (options.efficiency * emitter.gamma1);
        for (auto& [t, v] : shape) v *= norm;
    } else {
        shape = excited_population_series(traj);
    }
    // the grid may stop short of `last` by rounding
    if (shape.back().first < last) shape.emplace_back(last, shape.back().second);

    std::vector<double> out(data.times.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double t = data.times[i];
        if (data.bin_width > 0.0) {
            const std::vector<double> edges{t - half, t + half};
            out[i] = bin_probabilities(shape, edges)[0] / data.bin_width;
        } else {
            out[i] = interpolate(shape, t);
        }
    }
    return out;
}

// Counts the oscillation maxima with a hysteresis of `h`.
int count_maxima(const std::vector<double>& y, double h) {
    int count = 0;
    double lo = y.front();
    double hi = y.front();
    bool rising = true;
    for (double v : y) {
        if (rising) {
            hi = std::max(hi, v);
            if (hi - lo > h && v < hi - h) {
                ++count;
                rising = false;
                lo = v;
            }
        } else {
            lo = std::min(lo, v);
            if (v > lo + h) {
                rising = true;
                hi = v;
            }
        }
    }
    return count;
}

struct LinearFit {
    double b = 0.0;
    double c = 0.0;
    double cost = std::numeric_limits<double>::infinity();
};

// Weighted least squares for data ~ c * shape + b, c >= 0.
LinearFit fit_offset_scale(const std::vector<double>& shape, const std::vector<double>& data,
                           const std::vector<double>& sigma) {
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double w = 1.0 / (sigma[i] * sigma[i]);
        sw += w;
        sx += w * shape[i];
        sy += w * data[i];
        sxx += w * shape[i] * shape[i];
        sxy += w * shape[i] * data[i];
    }
    LinearFit f;
    const double det = sw * sxx - sx * sx;
    if (det > 0.0) {
        f.c = std::max((sw * sxy - sx * sy) / det, 0.0);
    }
    f.b = (sy - f.c * sx) / sw;
    f.cost = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double r = (f.c * shape[i] + f.b - data[i]) / sigma[i];
        f.cost += r * r;
    }
    return f;
}

}  // namespace

std::vector<double> trace_model(const TraceData& data, const Envelope& envelope,
                                const EmitterModel& emitter, double s, double t0_ns, double b,
                                double c, const TraceFitOptions& options) {
    data.validate();
    auto y = trace_shape(data, envelope, emitter, s, t0_ns, options);
    for (double& v : y) v = c * v + b;
    return y;
}

TraceFit fit_trace(const TraceData& data, const Envelope& envelope, const EmitterModel& emitter,
                   const TraceFitOptions& options) {
    data.validate();
    emitter.validate();
    if (!(emitter.gamma1 > 0.0)) throw ValidationError("gamma1", "trace fit needs gamma1 > 0");
    if (!(envelope.peak() > 0.0)) throw ValidationError("envelope", "measured pulse is zero");
    if (options.model == TraceModel::FirstDetected &&
        !(options.efficiency > 0.0 && options.efficiency <= 1.0)) {
        throw ValidationError("efficiency", "must lie in (0, 1]");
    }

    const double t1 = 1.0 / emitter.gamma1;
    const double data_end = data.times.back() + 0.5 * data.bin_width;
    const double tail = data_end - envelope.support().end;
    if (tail < options.min_tail_lifetimes * t1) {
        throw DegenerateTail("trace ends " + std::to_string(tail / t1) +
                             " lifetimes after the pulse; at least " +
                             std::to_string(options.min_tail_lifetimes) + " are needed");
    }

    std::vector<double> sigma(data.values.size());
    for (std::size_t i = 0; i < sigma.size(); ++i) sigma[i] = std::sqrt(std::max(data.values[i], 1.0));

    const DriveField unit(envelope);
    const double unit_area = pulse_area(unit, 0.0, unit.support());

    // Starting point: candidate areas around the count of observed maxima.
    const double peak = *std::max_element(data.values.begin(), data.values.end());
    const double floor = *std::min_element(data.values.begin(), data.values.end());
    const double hysteresis = std::max(3.0 * std::sqrt(std::max(peak, 1.0)), 0.05 * (peak - floor));
    const int maxima = count_maxima(data.values, hysteresis);
    const double pi = std::numbers::pi;
    const double a_lo = std::max(0.5 * pi, (2.0 * maxima - 3.0) * pi);
    const double a_hi = (2.0 * maxima + 3.0) * pi;

    double best_cost = std::numeric_limits<double>::infinity();
    double best_s = 0, best_t0 = 0, best_b = 0, best_c = 0;
    if (options.start) {
        std::tie(best_s, best_t0, best_b, best_c) = *options.start;
        best_cost = 0.0;
    }
    for (double area = a_lo; !options.start && area <= a_hi + 1e-9; area += 0.25 * pi) {
        const double s = area / unit_area;
        for (double t0 = -3.0; t0 <= 3.0 + 1e-9; t0 += 0.5) {
            const auto shape = trace_shape(data, envelope, emitter, s, t0, options);
            const LinearFit lf = fit_offset_scale(shape, data.values, sigma);
            if (lf.cost < best_cost) {
                best_cost = lf.cost;
                best_s = s;
                best_t0 = t0;
                best_b = lf.b;
                best_c = lf.c;
            }
        }
    }
    if (!(best_c > 0.0)) {
        throw DegenerateFit("trace fit: the data show no excitation signal");
    }

    FitProblem problem;
    problem.names = {"s", "t0_ns", "b", "c"};
    problem.initial = Eigen::Vector4d(best_s, best_t0, best_b, best_c);
    const double inf = std::numeric_limits<double>::infinity();
    const double span_ns = (data_end - data.times.front()) * 1e9;
    problem.lower = Eigen::Vector4d(0.0, -span_ns, -inf, 0.0);
    problem.upper = Eigen::Vector4d(inf, span_ns, inf, inf);
    problem.max_iterations = options.max_iterations;
    problem.absolute_sigma = true;
    problem.residuals = [&](const Eigen::VectorXd& p) {
        const auto shape = trace_shape(data, envelope, emitter, p(0), p(1), options);
        Eigen::VectorXd r(static_cast<Eigen::Index>(shape.size()));
        for (std::size_t i = 0; i < shape.size(); ++i) {
            r(static_cast<Eigen::Index>(i)) = (p(3) * shape[i] + p(2) - data.values[i]) / sigma[i];
        }
        return r;
    };

    TraceFit out;
    out.fit = least_squares(problem);
    const double s = out.fit.value("s");
    out.omega_max = s * envelope.peak();
    out.area = s * unit_area;
    return out;
}

}  // namespace rabi
