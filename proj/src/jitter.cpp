#include "rabi/jitter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "context_error.hpp"
#include "rabi/errors.hpp"
#include "rabi/parallel.hpp"
#include "rabi/stats.hpp"

namespace rabi {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Vertex of the parabola through three points; falls back to the middle one.
std::pair<double, double> parabola_vertex(double x0, double y0, double x1, double y1, double x2,
                                          double y2) {
    const double d0 = (y1 - y0) / (x1 - x0);
    const double d1 = (y2 - y1) / (x2 - x1);
    const double a = (d1 - d0) / (x2 - x0);
    if (a == 0.0) return {x1, y1};
    const double b = d0 - a * (x0 + x1);
    const double xv = std::clamp(-b / (2.0 * a), x0, x2);
    const double yv = y1 + (xv - x1) * (d0 + a * (xv - x0));
    return {xv, yv};
}

Extremum refine(const PowerScan& s, std::size_t j, bool maximum) {
    if (j == 0 || j + 1 >= s.size()) return {s.amplitude[j], s.signal[j], maximum};
    const auto [x, y] = parabola_vertex(s.amplitude[j - 1], s.signal[j - 1], s.amplitude[j],
                                        s.signal[j], s.amplitude[j + 1], s.signal[j + 1]);
    return {x, y, maximum};
}

// Normalized model, parameters {c0, c1, m0, m1, p, phi}.
double model_at(const double* q, double x) {
    const double depth = std::max(q[2] + q[3] * x, 0.0);
    return q[0] + q[1] * x - 0.5 * depth * std::cos(kTwoPi * x / q[4] + q[5]);
}

}  // namespace

JitterModel JitterModel::from_edges(double edge_sigma, double duration) {
    if (!(duration > 0.0)) throw ValidationError("duration", "must be > 0");
    JitterModel m;
    m.edge_sigma = edge_sigma;
    m.sigma_T_rel = std::sqrt(2.0) * edge_sigma / duration;
    m.validate();
    return m;
}

void JitterModel::validate() const {
    if (!(sigma_T_rel >= 0.0 && sigma_T_rel < 0.5)) {
        throw ValidationError("sigma_T_rel", "must lie in [0, 0.5)");
    }
    if (!(edge_sigma >= 0.0) || !std::isfinite(edge_sigma)) {
        throw ValidationError("edge_sigma", "must be finite and >= 0");
    }
}

double sample_duration(double base_T, const JitterModel& model, Philox& rng) {
    if (!(base_T > 0.0) || !std::isfinite(base_T)) throw ValidationError("base_T", "must be > 0");
    model.validate();
    if (model.sigma_T_rel == 0.0) return base_T;
    while (true) {
        const double t = base_T * (1.0 + model.sigma_T_rel * rng.normal());
        if (t > 0.0) return t;
    }
}

double sample_duration(double base_T, const JitterModel& model, std::uint64_t seed) {
    Philox rng(seed, 0);
    return sample_duration(base_T, model, rng);
}

void PowerScan::validate() const {
    const std::size_t n = amplitude.size();
    if (signal.size() != n || std_error.size() != n || area_mean.size() != n ||
        area_sigma.size() != n) {
        throw ValidationError("power_scan", "columns differ in length");
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(amplitude[i]) || !std::isfinite(signal[i])) {
            throw ValidationError("power_scan", "non-finite entry");
        }
        if (i > 0 && !(amplitude[i] > amplitude[i - 1])) {
            throw ValidationError("amplitude", "axis must increase strictly");
        }
        if (signal[i] < 0.0) throw ValidationError("signal", "must be >= 0");
    }
}

PowerScan averaged_power_scan(const EmitterModel& emitter, const DriveField& pulse_template,
                              std::span<const double> amplitudes, const JitterModel& jitter,
                              int n_samples, std::uint64_t seed, const PowerScanOptions& options) {
    emitter.validate();
    jitter.validate();
    if (n_samples < 1) throw ValidationError("n_samples", "must be >= 1");
    if (amplitudes.empty()) throw ValidationError("amplitude", "axis is empty");
    for (std::size_t i = 0; i < amplitudes.size(); ++i) {
        if (!(amplitudes[i] >= 0.0) || !std::isfinite(amplitudes[i])) {
            throw ValidationError("amplitude", "must be finite and >= 0");
        }
        if (i > 0 && !(amplitudes[i] > amplitudes[i - 1])) {
            throw ValidationError("amplitude", "axis must increase strictly");
        }
    }
    const double peak = pulse_template.peak();
    if (!(peak > 0.0)) throw ValidationError("template", "pulse template has no drive");
    const Interval support = pulse_template.support();
    if (!(options.rep_period > support.end)) {
        throw ValidationError("rep_period", "must exceed the end of the pulse");
    }
    const double unit_area = pulse_area(pulse_template, 0.0, support) / peak;

    const std::size_t n_points = amplitudes.size();
    const auto n = static_cast<std::size_t>(n_samples);
    PowerScan scan;
    scan.amplitude.assign(amplitudes.begin(), amplitudes.end());
    scan.signal.resize(n_points);
    scan.std_error.resize(n_points);
    scan.area_mean.resize(n_points);
    scan.area_sigma.resize(n_points);

    const boost::math::normal_distribution<double> standard;
    parallel_for(n_points, [&](std::size_t i) {
        const double a = amplitudes[i];
        try {
            Philox rng(seed, substream(i, 0));
            std::vector<double> stretch;
            if (jitter.sigma_T_rel == 0.0) {
                stretch.assign(1, 1.0);
            } else {
                stretch.resize(n);
                for (std::size_t k = 0; k < n; ++k) {
                    double f = 0.0;
                    do {
                        const double z = options.stratified
                                             ? boost::math::quantile(standard, (static_cast<double>(k) + rng.uniform()) / static_cast<double>(n))
                                             : rng.normal();
                        f = 1.0 + jitter.sigma_T_rel * z;
                    } while (!(f > 0.0));
                    stretch[k] = f;
                }
            }

            std::vector<double> s(stretch.size());
            std::vector<double> area(stretch.size());
            const DriveField scaled = pulse_template.scaled(a / peak);
            for (std::size_t k = 0; k < stretch.size(); ++k) {
                const DriveField field = scaled.stretched(stretch[k]);
                const double begin = field.is_zero() ? 0.0 : std::min(0.0, field.support().begin);
                s[k] = evolve(emitter, field, BlochState::ground(), {begin, options.rep_period},
                              options.integrator)
                           .emitted;
                area[k] = a * unit_area * stretch[k];
            }
            scan.signal[i] = std::max(stats::mean(s), 0.0);
            scan.area_mean[i] = stats::mean(area);
            if (s.size() > 1) {
                scan.std_error[i] = stats::stddev(s) / std::sqrt(static_cast<double>(s.size()));
                scan.area_sigma[i] = stats::stddev(area);
            } else {
                scan.std_error[i] = 0.0;
                scan.area_sigma[i] = 0.0;
            }
        } catch (const NumericalError&) {
            detail::rethrow_with_context("power scan point " + std::to_string(i) + " (amplitude " +
                                         std::to_string(a / (kTwoPi * 1e6)) + " MHz): ");
        }
    });
    return scan;
}

std::vector<Extremum> scan_extrema(const PowerScan& scan, double hysteresis) {
    std::vector<Extremum> out;
    if (scan.size() < 2) return out;
    bool seeking_max = true;
    std::size_t best = 0;
    for (std::size_t i = 1; i < scan.size(); ++i) {
        const double v = scan.signal[i];
        if (seeking_max) {
            if (v > scan.signal[best]) {
                best = i;
            } else if (v < scan.signal[best] - hysteresis && best > 0) {
                out.push_back(refine(scan, best, true));
                seeking_max = false;
                best = i;
            }
        } else {
            if (v < scan.signal[best]) {
                best = i;
            } else if (v > scan.signal[best] + hysteresis) {
                out.push_back(refine(scan, best, false));
                seeking_max = true;
                best = i;
            }
        }
    }
    return out;
}

std::vector<double> fringe_visibilities(const std::vector<Extremum>& extrema) {
    std::vector<double> v;
    for (std::size_t k = 0; k + 1 < extrema.size(); ++k) {
        if (!extrema[k].maximum || extrema[k + 1].maximum) continue;
        const double hi = extrema[k].value;
        const double lo = extrema[k + 1].value;
        v.push_back(hi + lo > 0.0 ? (hi - lo) / (hi + lo) : 0.0);
    }
    return v;
}

double power_scan_model(const PowerScanFit& fit, double amplitude) {
    const double depth = std::max(fit.modulation + fit.decay_slope * amplitude, 0.0);
    return fit.offset + fit.background_slope * amplitude -
           0.5 * depth * std::cos(kTwoPi * amplitude / fit.period + fit.phase);
}

PowerScanFit fit_power_scan(const PowerScan& scan) {
    scan.validate();
    const std::size_t n = scan.size();
    const double xs = scan.amplitude.back();
    const auto [lo_it, hi_it] = std::minmax_element(scan.signal.begin(), scan.signal.end());
    const double ys = std::max(std::abs(*lo_it), std::abs(*hi_it));
    const double range = *hi_it - *lo_it;
    if (!(ys > 0.0) || !(xs > 0.0) || range <= 1e-9 * ys) {
        throw DegenerateFit("power scan carries no modulation to fit");
    }
    const auto extrema = scan_extrema(scan, 0.05 * range);
    if (extrema.size() < 4) {
        throw ValidationError("power_scan", "needs at least 4 extrema, found " +
                                                std::to_string(extrema.size()));
    }

    Eigen::VectorXd x(static_cast<Eigen::Index>(n)), y(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        x(static_cast<Eigen::Index>(i)) = scan.amplitude[i] / xs;
        y(static_cast<Eigen::Index>(i)) = scan.signal[i] / ys;
    }

    // Period from the spacing of maxima, phase from the first maximum.
    std::vector<double> maxima;
    for (const auto& e : extrema) {
        if (e.maximum) maxima.push_back(e.amplitude / xs);
    }
    double p0 = 2.0 * maxima.front();
    if (maxima.size() >= 2) p0 = (maxima.back() - maxima.front()) / static_cast<double>(maxima.size() - 1);

    Eigen::VectorXd best(6);
    double best_cost = std::numeric_limits<double>::infinity();
    for (int ip = -8; ip <= 8; ++ip) {
        const double p = p0 * (1.0 + 0.025 * ip);
        for (int iphi = 0; iphi < 24; ++iphi) {
            const double phi = -std::numbers::pi + kTwoPi * iphi / 24.0;
            Eigen::MatrixXd design(static_cast<Eigen::Index>(n), 4);
            for (Eigen::Index i = 0; i < design.rows(); ++i) {
                const double c = -0.5 * std::cos(kTwoPi * x(i) / p + phi);
                design.row(i) << 1.0, x(i), c, c * x(i);
            }
            const Eigen::VectorXd lin = design.colPivHouseholderQr().solve(y);
            const double cost = (design * lin - y).squaredNorm();
            if (cost < best_cost && lin(2) > 0.0) {
                best_cost = cost;
                best << lin(0), lin(1), lin(2), lin(3), p, phi;
            }
        }
    }
    if (!std::isfinite(best_cost)) throw DegenerateFit("power scan: no oscillating start found");

    FitProblem problem = FitProblem::unbounded(
        {"offset", "background_slope", "modulation", "decay_slope", "period", "phase"}, best,
        [&](const Eigen::VectorXd& q) -> Eigen::VectorXd {
            Eigen::VectorXd r(x.size());
            for (Eigen::Index i = 0; i < x.size(); ++i) r(i) = model_at(q.data(), x(i)) - y(i);
            return r;
        });
    problem.lower(2) = 0.0;
    problem.lower(4) = 1e-3 * p0;
    FitResult fit = least_squares(problem);

    Eigen::VectorXd unit(6);
    unit << ys, ys / xs, ys, ys / xs, xs, 1.0;
    fit.params = fit.params.cwiseProduct(unit);
    fit.covariance = unit.asDiagonal() * fit.covariance * unit.asDiagonal();
    fit.jacobian = fit.jacobian * unit.cwiseInverse().asDiagonal();
    fit.jacobian *= ys;
    fit.cost *= ys * ys;
    for (double& c : fit.cost_history) c *= ys * ys;

    PowerScanFit out;
    out.offset = fit.params(0);
    out.background_slope = fit.params(1);
    out.modulation = fit.params(2);
    out.decay_slope = fit.params(3);
    out.period = fit.params(4);
    out.phase = std::remainder(fit.params(5), kTwoPi);
    out.residual_norm = std::sqrt(fit.cost);
    out.fit = std::move(fit);
    return out;
}

}  // namespace rabi
