#include "rabi/detection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/tools/toms748_solve.hpp>

#include "dense_stepper.hpp"
#include "rabi/errors.hpp"
#include "rabi/parallel.hpp"
#include "segments.hpp"

namespace rabi {

namespace {

// psi = {Re c_g, Im c_g, Re c_e, Im c_e}, unnormalized between jumps.
using Psi = detail::State4;

constexpr Psi kGround{1.0, 0.0, 0.0, 0.0};
constexpr Psi kExcited{0.0, 0.0, 1.0, 0.0};

// Stream purposes within one repetition period.
constexpr std::uint64_t kEmissionStream = 0;
constexpr std::uint64_t kDetectionStream = 1;
constexpr std::uint64_t kDarkStream = 2;

double norm2(const Psi& p) { return p[0] * p[0] + p[1] * p[1] + p[2] * p[2] + p[3] * p[3]; }

struct JumpRhs {
    const DriveField& field;
    double detuning;
    double half_kappa;
    double lo;
    double hi;

    void operator()(const Psi& y, Psi& dy, double t) const {
        const Complex omega = field(std::clamp(t, lo, hi));
        const Complex cg{y[0], y[1]};
        const Complex ce{y[2], y[3]};
        const Complex minus_half_i{0.0, -0.5};
        const Complex dcg = minus_half_i * omega * ce;
        const Complex dce = minus_half_i * std::conj(omega) * cg + Complex(-half_kappa, -detuning) * ce;
        dy = {dcg.real(), dcg.imag(), dce.real(), dce.imag()};
    }
};

Psi free_evolution(const Psi& p, double detuning, double kappa, double tau) {
    const Complex ce = Complex(p[2], p[3]) * std::exp(Complex(-0.5 * kappa, -detuning) * tau);
    return {p[0], p[1], ce.real(), ce.imag()};
}

// Time within [0, tau] where the drive-free norm drops to `threshold`.
std::optional<double> free_crossing(const Psi& p, double kappa, double tau, double threshold) {
    const double g = p[0] * p[0] + p[1] * p[1];
    const double e = p[2] * p[2] + p[3] * p[3];
    if (e <= 0.0 || kappa <= 0.0 || threshold <= g) return std::nullopt;
    if (threshold >= g + e) return 0.0;
    const double x = std::log(e / (threshold - g)) / kappa;
    if (x <= tau) return x;
    return std::nullopt;
}

Psi pure_state(const BlochState& s) {
    if (s.positivity_violation() > 1e-9 ||
        std::abs(std::norm(s.coherence) - s.rho_ee * (1.0 - s.rho_ee)) > 1e-9) {
        throw ValidationError("initial", "quantum-jump sampling needs a pure initial state");
    }
    if (s.rho_ee <= 0.0) return kGround;
    const double ce = std::sqrt(s.rho_ee);
    const Complex cg = s.coherence / ce;
    const double n = std::sqrt(std::norm(cg) + s.rho_ee);
    return {cg.real() / n, cg.imag() / n, ce / n, 0.0};
}

}  // namespace

void DetectorModel::validate() const {
    if (!(efficiency > 0.0 && efficiency <= 1.0)) {
        throw ValidationError("efficiency", "must lie in (0, 1]");
    }
    if (!(dead_time >= 0.0) || !std::isfinite(dead_time)) {
        throw ValidationError("dead_time", "must be finite and >= 0");
    }
    if (!(timing_jitter_sigma >= 0.0) || !std::isfinite(timing_jitter_sigma)) {
        throw ValidationError("timing_jitter", "must be finite and >= 0");
    }
    if (!(rep_period > 0.0) || !std::isfinite(rep_period)) {
        throw ValidationError("rep_period", "must be finite and > 0");
    }
    if (!(bin_width > 0.0) || !std::isfinite(bin_width)) {
        throw ValidationError("bin_width", "must be finite and > 0");
    }
    if (!(range > 0.0) || range > rep_period) {
        throw ValidationError("range", "must lie in (0, rep_period]");
    }
    if (range / bin_width > 1e7) throw ValidationError("bin_width", "more than 1e7 bins");
    if (!(dark_count_rate >= 0.0) || !std::isfinite(dark_count_rate)) {
        throw ValidationError("dark_count_rate", "must be finite and >= 0");
    }
}

std::vector<double> DetectorModel::bin_edges() const {
    const auto n = static_cast<std::size_t>(std::ceil(range / bin_width * (1.0 - 1e-12)));
    std::vector<double> edges(n + 1);
    for (std::size_t i = 0; i <= n; ++i) edges[i] = bin_width * static_cast<double>(i);
    return edges;
}

std::uint64_t TcspcHistogram::total() const {
    std::uint64_t s = 0;
    for (auto c : counts) s += c;
    return s;
}

JumpProcess::JumpProcess(EmitterModel emitter, DriveField field, Interval span,
                         const BlochState& initial, const IntegratorOptions& options)
    : emitter_(emitter),
      field_(std::move(field)),
      span_(span),
      options_(options),
      kappa_(emitter.gamma1 + 2.0 * emitter.pure_dephasing()),
      initial_(pure_state(initial)) {
    emitter_.validate();
    if (!(span.end >= span.begin)) throw ValidationError("span", "needs t0 <= t1");

    // Jump-free evolution from the initial state, node per accepted step.
    Psi psi = initial_;
    nodes_.push_back({span.begin, psi, norm2(psi)});
    for (const auto& seg : detail::split_span(field_, span_)) {
        if (!seg.driven) {
            psi = free_evolution(psi, emitter_.detuning, kappa_, seg.range.length());
            nodes_.push_back({seg.range.end, psi, norm2(psi)});
            continue;
        }
        const JumpRhs rhs{field_, emitter_.detuning, 0.5 * kappa_,
                          std::nextafter(seg.range.begin, seg.range.end),
                          std::nextafter(seg.range.end, seg.range.begin)};
        const double rate = field_.peak() + std::abs(emitter_.detuning) + kappa_;
        detail::run_segment(rhs, psi, seg.range, detail::initial_step(rate, seg.range),
                            detail::max_step_for(field_, seg.range), options_,
                            [&](auto& stepper, double, double t_new) {
                                const Psi& s = stepper.current_state();
                                nodes_.push_back({t_new, s, norm2(s)});
                                return true;
                            });
        nodes_.back().t = seg.range.end;
        nodes_.back().psi = psi;
        nodes_.back().norm2 = norm2(psi);
    }
}

std::optional<double> JumpProcess::next_jump(Psi psi, double t_from, double threshold) const {
    for (const auto& seg : detail::split_span(field_, {t_from, span_.end})) {
        if (!seg.driven) {
            if (auto x = free_crossing(psi, kappa_, seg.range.length(), threshold)) {
                return seg.range.begin + *x;
            }
            psi = free_evolution(psi, emitter_.detuning, kappa_, seg.range.length());
            continue;
        }
        if (norm2(psi) <= threshold) return seg.range.begin;

        const JumpRhs rhs{field_, emitter_.detuning, 0.5 * kappa_,
                          std::nextafter(seg.range.begin, seg.range.end),
                          std::nextafter(seg.range.end, seg.range.begin)};
        const double rate = field_.peak() + std::abs(emitter_.detuning) + kappa_;
        std::optional<double> hit;
        detail::run_segment(
            rhs, psi, seg.range, detail::initial_step(rate, seg.range),
            detail::max_step_for(field_, seg.range), options_,
            [&](auto& stepper, double t_old, double t_new) {
                if (norm2(stepper.current_state()) > threshold) return true;
                Psi tmp;
                auto f = [&](double t) {
                    stepper.calc_state(t, tmp);
                    return norm2(tmp) - threshold;
                };
                const double f_old = f(t_old);
                if (f_old <= 0.0) {
                    hit = t_old;
                    return false;
                }
                std::uintmax_t iterations = 60;
                const auto root = boost::math::tools::toms748_solve(
                    f, t_old, t_new, f_old, norm2(stepper.current_state()) - threshold,
                    boost::math::tools::eps_tolerance<double>(48), iterations);
                hit = 0.5 * (root.first + root.second);
                return false;
            });
        if (hit) return hit;
    }
    return std::nullopt;
}

std::optional<double> JumpProcess::first_jump(double threshold) const {
    // Norms along the cached nodes never increase.
    const auto it = std::partition_point(nodes_.begin(), nodes_.end(),
                                         [threshold](const Node& n) { return n.norm2 > threshold; });
    if (it == nodes_.end()) return std::nullopt;
    if (it == nodes_.begin()) return span_.begin;
    const Node& from = *(it - 1);
    return next_jump(from.psi, from.t, threshold);
}

std::vector<double> JumpProcess::sample(Philox& rng) const {
    std::vector<double> emissions;
    const double emission_share = kappa_ > 0.0 ? emitter_.gamma1 / kappa_ : 1.0;
    std::optional<double> jump = first_jump(rng.uniform());
    while (jump) {
        bool emitted = true;
        if (emission_share < 1.0) emitted = rng.uniform() < emission_share;
        if (emitted) emissions.push_back(*jump);
        jump = next_jump(emitted ? kGround : kExcited, *jump, rng.uniform());
    }
    return emissions;
}

TimeSeries emission_rate(const BlochTrajectory& trajectory, const EmitterModel& emitter) {
    TimeSeries out;
    out.reserve(trajectory.size());
    for (std::size_t i = 0; i < trajectory.size(); ++i) {
        out.emplace_back(trajectory.times[i], emitter.gamma1 * trajectory.states[i].rho_ee);
    }
    return out;
}

std::vector<double> simulate_photon_stream(const EmitterModel& emitter, const DriveField& field,
                                           Interval span, std::uint64_t seed,
                                           const BlochState& initial,
                                           const IntegratorOptions& options) {
    const JumpProcess process(emitter, field, span, initial, options);
    Philox rng(seed, substream(0, kEmissionStream));
    return process.sample(rng);
}

TcspcHistogram simulate_tcspc(const EmitterModel& emitter, const DriveField& field,
                              const DetectorModel& detector, std::uint64_t n_pulses,
                              std::uint64_t seed, const TcspcOptions& options) {
    detector.validate();
    if (n_pulses < 1) throw ValidationError("n_pulses", "must be >= 1");
    const Interval period{0.0, detector.rep_period};
    if (!field.is_zero() && !(field.support().end < detector.rep_period)) {
        throw ValidationError("rep_period", "must exceed the end of the pulse");
    }
    const JumpProcess process(emitter, field, period, options.initial, options.integrator);

    struct Candidate {
        std::uint64_t pulse;
        double t;
    };
    constexpr std::uint64_t kBlock = 4096;
    const std::uint64_t n_blocks = (n_pulses + kBlock - 1) / kBlock;
    std::vector<std::vector<Candidate>> candidates(n_blocks);
    std::vector<std::uint64_t> emitted(n_blocks, 0);

    parallel_for(n_blocks, [&](std::size_t b) {
        const std::uint64_t first = b * kBlock;
        const std::uint64_t last = std::min(n_pulses, first + kBlock);
        auto& out = candidates[b];
        std::vector<double> times;
        for (std::uint64_t p = first; p < last; ++p) {
            Philox emit_rng(seed, substream(p, kEmissionStream));
            Philox det_rng(seed, substream(p, kDetectionStream));
            const auto emissions = process.sample(emit_rng);
            emitted[b] += emissions.size();
            times.clear();
            for (double t : emissions) {
                // both draws always consumed: thinning uses common uniforms across efficiencies
                const double u = det_rng.uniform();
                const double z = det_rng.normal();
                if (u < detector.efficiency) {
                    times.push_back(std::max(t + detector.timing_jitter_sigma * z, 0.0));
                }
            }
            if (detector.dark_count_rate > 0.0) {
                Philox dark_rng(seed, substream(p, kDarkStream));
                double t = 0.0;
                while (true) {
                    t += -std::log(dark_rng.uniform()) / detector.dark_count_rate;
                    if (t >= detector.rep_period) break;
                    times.push_back(t);
                }
            }
            std::sort(times.begin(), times.end());
            for (double t : times) out.push_back({p, t});
        }
    });

    TcspcHistogram h;
    h.edges = detector.bin_edges();
    h.counts.assign(h.edges.size() - 1, 0);
    h.n_pulses = n_pulses;
    h.seed = seed;
    h.detector = detector;
    h.field_digest = field.digest();
    for (auto e : emitted) h.emitted += e;

    // Non-paralyzable dead time on the absolute time axis, across periods.
    double blind_until = -std::numeric_limits<double>::infinity();
    for (const auto& block : candidates) {
        for (const auto& c : block) {
            const double absolute = static_cast<double>(c.pulse) * detector.rep_period + c.t;
            if (absolute < blind_until) continue;
            blind_until = absolute + detector.dead_time;
            ++h.detected;
            if (c.t < h.edges.back()) {
                const auto bin = std::min(static_cast<std::size_t>(c.t / detector.bin_width),
                                          h.counts.size() - 1);
                ++h.counts[bin];
            }
        }
    }
    return h;
}

TimeSeries first_detected_density(const TimeSeries& rate, double efficiency) {
    if (!(efficiency > 0.0 && efficiency <= 1.0)) {
        throw ValidationError("efficiency", "must lie in (0, 1]");
    }
    TimeSeries out;
    out.reserve(rate.size());
    double cumulative = 0.0;
    for (std::size_t i = 0; i < rate.size(); ++i) {
        if (rate[i].second < 0.0) throw ValidationError("rate", "must be non-negative");
        if (i > 0) {
            cumulative += 0.5 * (rate[i].second + rate[i - 1].second) * (rate[i].first - rate[i - 1].first);
        }
        out.emplace_back(rate[i].first, efficiency * rate[i].second * std::exp(-efficiency * cumulative));
    }
    return out;
}

std::vector<double> bin_probabilities(const TimeSeries& density, std::span<const double> edges) {
    if (edges.size() < 2) throw ValidationError("edges", "need at least one bin");
    // Linear interpolation; zero outside the series.
    auto value_at = [&](double t) {
        if (density.empty() || t < density.front().first || t > density.back().first) return 0.0;
        const auto it = std::lower_bound(density.begin(), density.end(), t,
                                         [](const auto& p, double x) { return p.first < x; });
        if (it->first == t) return it->second;
        const auto& [t1, v1] = *it;
        const auto& [t0, v0] = *(it - 1);
        return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
    };
    std::vector<double> out(edges.size() - 1, 0.0);
    for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
        const double lo = edges[b];
        const double hi = edges[b + 1];
        double prev_t = lo;
        double prev_v = value_at(lo);
        auto it = std::upper_bound(density.begin(), density.end(), lo,
                                   [](double x, const auto& p) { return x < p.first; });
        double sum = 0.0;
        for (; it != density.end() && it->first < hi; ++it) {
            sum += 0.5 * (prev_v + it->second) * (it->first - prev_t);
            prev_t = it->first;
            prev_v = it->second;
        }
        sum += 0.5 * (prev_v + value_at(hi)) * (hi - prev_t);
        out[b] = sum;
    }
    return out;
}

}  // namespace rabi
