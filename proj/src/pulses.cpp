#include "rabi/pulses.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>

#include "rabi/errors.hpp"

namespace rabi {

namespace {

// exp(-kGaussExponent * (t - c)^2 / fwhm^2) is the amplitude of a Gaussian
// whose squared modulus has the given FWHM.
constexpr double kGaussExponent = 2.0 * std::numbers::ln2;

void require(bool ok, const char* key, const char* what) {
    if (!ok) {
        throw ValidationError(key, what);
    }
}

bool finite(double x) { return std::isfinite(x); }

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

}  // namespace

Envelope Envelope::rectangular(double peak, double duration, double center) {
    require(finite(peak) && peak >= 0.0, "peak", "must be finite and >= 0");
    require(finite(duration) && duration > 0.0, "duration", "must be finite and > 0");
    require(finite(center), "center", "must be finite");
    return Envelope(Rectangular{peak, duration, center});
}

Envelope Envelope::gaussian(double peak, double fwhm, double center) {
    require(finite(peak) && peak >= 0.0, "peak", "must be finite and >= 0");
    require(finite(fwhm) && fwhm > 0.0, "fwhm", "must be finite and > 0");
    require(finite(center), "center", "must be finite");
    return Envelope(Gaussian{peak, fwhm, center});
}

Envelope Envelope::sampled(double start, double step, std::vector<double> amplitude) {
    require(amplitude.size() >= 2, "amplitude", "needs at least two samples");
    require(finite(start), "start", "must be finite");
    require(finite(step) && step > 0.0, "step", "must be finite and > 0");
    for (double a : amplitude) {
        require(finite(a) && a >= 0.0, "amplitude", "samples must be finite and >= 0");
    }
    return Envelope(Sampled{start, step, std::move(amplitude)});
}

Envelope Envelope::sampled(std::span<const double> times, std::vector<double> amplitude) {
    require(times.size() == amplitude.size(), "times", "length differs from amplitude samples");
    require(times.size() >= 2, "times", "needs at least two samples");
    const double step = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
    require(step > 0.0, "times", "must be strictly increasing");
    for (std::size_t i = 1; i < times.size(); ++i) {
        const double d = times[i] - times[i - 1];
        require(d > 0.0, "times", "must be strictly increasing");
        require(std::abs(d - step) <= 1e-9 * step, "times", "grid spacing is not uniform");
    }
    return sampled(times.front(), step, std::move(amplitude));
}

double Envelope::operator()(double t) const {
    return std::visit(
        overloaded{
            [t](const Rectangular& r) {
                const double half = 0.5 * r.duration;
                return (t >= r.center - half && t < r.center + half) ? r.peak : 0.0;
            },
            [t](const Gaussian& g) {
                const double x = (t - g.center) / g.fwhm;
                return g.peak * std::exp(-kGaussExponent * x * x);
            },
            [t](const Sampled& s) {
                const double u = (t - s.start) / s.step;
                const auto last = static_cast<double>(s.amplitude.size() - 1);
                if (!(u >= 0.0) || u > last) {
                    return 0.0;
                }
                const auto i = std::min(static_cast<std::size_t>(u), s.amplitude.size() - 2);
                const double f = u - static_cast<double>(i);
                return s.amplitude[i] + f * (s.amplitude[i + 1] - s.amplitude[i]);
            },
        },
        shape_);
}

double Envelope::peak() const {
    return std::visit(overloaded{
                          [](const Rectangular& r) { return r.peak; },
                          [](const Gaussian& g) { return g.peak; },
                          [](const Sampled& s) {
                              return *std::max_element(s.amplitude.begin(), s.amplitude.end());
                          },
                      },
                      shape_);
}

double Envelope::center() const {
    return std::visit(overloaded{
                          [](const Rectangular& r) { return r.center; },
                          [](const Gaussian& g) { return g.center; },
                          [](const Sampled& s) { return 0.5 * (s.start + s.stop()); },
                      },
                      shape_);
}

Interval Envelope::support() const {
    return std::visit(
        overloaded{
            [](const Rectangular& r) {
                if (r.peak == 0.0) return Interval{r.center, r.center};
                return Interval{r.center - 0.5 * r.duration, r.center + 0.5 * r.duration};
            },
            [](const Gaussian& g) {
                if (g.peak == 0.0) return Interval{g.center, g.center};
                const double half =
                    g.fwhm * std::sqrt(std::log(1.0 / kSupportThreshold) / kGaussExponent);
                return Interval{g.center - half, g.center + half};
            },
            [](const Sampled& s) {
                const double threshold =
                    kSupportThreshold * *std::max_element(s.amplitude.begin(), s.amplitude.end());
                std::size_t lo = s.amplitude.size();
                std::size_t hi = 0;
                for (std::size_t i = 0; i < s.amplitude.size(); ++i) {
                    if (s.amplitude[i] > threshold) {
                        lo = std::min(lo, i);
                        hi = i;
                    }
                }
                if (lo > hi) {
                    const double mid = 0.5 * (s.start + s.stop());
                    return Interval{mid, mid};
                }
                // linear interpolation reaches into the neighbouring cells
                lo = lo > 0 ? lo - 1 : 0;
                hi = std::min(hi + 1, s.amplitude.size() - 1);
                return Interval{s.start + s.step * static_cast<double>(lo),
                                s.start + s.step * static_cast<double>(hi)};
            },
        },
        shape_);
}

std::vector<double> Envelope::discontinuities() const {
    if (const auto* r = std::get_if<Rectangular>(&shape_); r && r->peak > 0.0) {
        return {r->center - 0.5 * r->duration, r->center + 0.5 * r->duration};
    }
    if (const auto* s = std::get_if<Sampled>(&shape_)) {
        std::vector<double> edges;
        if (s->amplitude.front() > 0.0) edges.push_back(s->start);
        if (s->amplitude.back() > 0.0) edges.push_back(s->stop());
        return edges;
    }
    return {};
}

Envelope Envelope::scaled(double factor) const {
    require(finite(factor) && factor >= 0.0, "scale", "must be finite and >= 0");
    return std::visit(overloaded{
                          [factor](Rectangular r) {
                              r.peak *= factor;
                              return Envelope(r);
                          },
                          [factor](Gaussian g) {
                              g.peak *= factor;
                              return Envelope(g);
                          },
                          [factor](Sampled s) {
                              for (double& a : s.amplitude) a *= factor;
                              return Envelope(std::move(s));
                          },
                      },
                      shape_);
}

Envelope Envelope::stretched(double factor) const {
    require(finite(factor) && factor > 0.0, "stretch", "must be finite and > 0");
    return std::visit(overloaded{
                          [factor](Rectangular r) {
                              r.duration *= factor;
                              return Envelope(r);
                          },
                          [factor](Gaussian g) {
                              g.fwhm *= factor;
                              return Envelope(g);
                          },
                          [factor](Sampled s) {
                              const double mid = 0.5 * (s.start + s.stop());
                              s.start = mid + (s.start - mid) * factor;
                              s.step *= factor;
                              return Envelope(std::move(s));
                          },
                      },
                      shape_);
}

Envelope Envelope::shifted(double dt) const {
    return std::visit(overloaded{
                          [dt](Rectangular r) {
                              r.center += dt;
                              return Envelope(r);
                          },
                          [dt](Gaussian g) {
                              g.center += dt;
                              return Envelope(g);
                          },
                          [dt](Sampled s) {
                              s.start += dt;
                              return Envelope(std::move(s));
                          },
                      },
                      shape_);
}

DriveField::DriveField(std::vector<FieldComponent> components)
    : components_(std::move(components)) {
    require(!components_.empty(), "field", "needs at least one component");
    for (const auto& c : components_) {
        require(finite(c.phase.offset) && finite(c.phase.chirp_rate), "phase",
                "offset and chirp rate must be finite");
    }
}

DriveField::DriveField(Envelope envelope, PhaseLaw phase)
    : DriveField(std::vector<FieldComponent>{{std::move(envelope), phase}}) {}

Complex DriveField::operator()(double t) const {
    Complex sum{0.0, 0.0};
    for (const auto& c : components_) {
        const double a = c.envelope(t);
        if (a == 0.0) continue;
        if (c.phase.offset == 0.0 && c.phase.chirp_rate == 0.0) {
            sum += a;
        } else {
            const double phi = c.phase.offset + c.phase.chirp_rate * (t - c.envelope.center());
            sum += std::polar(a, phi);
        }
    }
    return sum;
}

double DriveField::magnitude(double t) const {
    if (components_.size() == 1) {
        return components_.front().envelope(t);
    }
    return std::abs((*this)(t));
}

double DriveField::peak() const {
    double p = 0.0;
    for (const auto& c : components_) p = std::max(p, c.envelope.peak());
    return p;
}

Interval DriveField::support() const {
    Interval out{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& c : components_) {
        if (c.envelope.peak() == 0.0) continue;
        const Interval s = c.envelope.support();
        out.begin = std::min(out.begin, s.begin);
        out.end = std::max(out.end, s.end);
    }
    if (out.begin > out.end) return Interval{0.0, 0.0};
    return out;
}

std::vector<double> DriveField::breakpoints() const {
    std::vector<double> points;
    for (const auto& c : components_) {
        if (c.envelope.peak() == 0.0) continue;
        const Interval s = c.envelope.support();
        points.push_back(s.begin);
        points.push_back(c.envelope.center());
        points.push_back(s.end);
        for (double d : c.envelope.discontinuities()) points.push_back(d);
    }
    std::sort(points.begin(), points.end());
    points.erase(std::unique(points.begin(), points.end()), points.end());
    return points;
}

DriveField DriveField::scaled(double factor) const {
    std::vector<FieldComponent> out;
    out.reserve(components_.size());
    for (const auto& c : components_) out.push_back({c.envelope.scaled(factor), c.phase});
    return DriveField(std::move(out));
}

DriveField DriveField::stretched(double factor) const {
    std::vector<FieldComponent> out;
    out.reserve(components_.size());
    for (const auto& c : components_) out.push_back({c.envelope.stretched(factor), c.phase});
    return DriveField(std::move(out));
}

DriveField DriveField::shifted(double dt) const {
    std::vector<FieldComponent> out;
    out.reserve(components_.size());
    for (const auto& c : components_) out.push_back({c.envelope.shifted(dt), c.phase});
    return DriveField(std::move(out));
}

std::uint64_t DriveField::digest() const {
    // FNV-1a over the bit patterns of every parameter
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    };
    auto mixd = [&mix](double d) { mix(std::bit_cast<std::uint64_t>(d)); };
    for (const auto& c : components_) {
        const auto& shape = c.envelope.shape();
        mix(shape.index());
        std::visit(overloaded{
                       [&](const Rectangular& r) {
                           mixd(r.peak);
                           mixd(r.duration);
                           mixd(r.center);
                       },
                       [&](const Gaussian& g) {
                           mixd(g.peak);
                           mixd(g.fwhm);
                           mixd(g.center);
                       },
                       [&](const Sampled& s) {
                           mixd(s.start);
                           mixd(s.step);
                           for (double a : s.amplitude) mixd(a);
                       },
                   },
                   shape);
        mixd(c.phase.offset);
        mixd(c.phase.chirp_rate);
    }
    return h;
}

Complex eval_rabi(const DriveField& field, double t) { return field(t); }

namespace {

struct SimpsonIntegrator {
    const DriveField& field;
    double detuning_sq;
    int max_depth;

    double f(double t) const {
        const double m = field.magnitude(t);
        return std::sqrt(detuning_sq + m * m);
    }

    double refine(double a, double b, double fa, double fm, double fb, double whole, double eps,
                  int depth) const {
        const double m = 0.5 * (a + b);
        const double lm = 0.5 * (a + m);
        const double rm = 0.5 * (m + b);
        const double flm = f(lm);
        const double frm = f(rm);
        const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        const double delta = left + right - whole;
        if (std::abs(delta) <= 15.0 * eps) {
            return left + right + delta / 15.0;
        }
        if (depth >= max_depth) {
            throw NonConvergedQuadrature("pulse_area: tolerance not met at maximum subdivision depth");
        }
        return refine(a, m, fa, flm, fm, left, 0.5 * eps, depth + 1) +
               refine(m, b, fm, frm, fb, right, 0.5 * eps, depth + 1);
    }
};

}  // namespace

double pulse_area(const DriveField& field, double detuning, Interval window,
                  const QuadratureOptions& options) {
    require(finite(window.begin) && finite(window.end) && window.begin < window.end, "window",
            "needs t0 < t1");
    require(finite(detuning), "detuning", "must be finite");

    std::vector<double> edges{window.begin};
    for (double b : field.breakpoints()) {
        if (b > window.begin && b < window.end) edges.push_back(b);
    }
    edges.push_back(window.end);

    // Each breakpoint segment starts as a few equal panels, so narrow pulses in
    // wide windows are never skipped by the first Simpson estimate.
    constexpr int kPanelsPerSegment = 8;
    struct Panel {
        double a, b, fa, fm, fb, whole;
    };
    const SimpsonIntegrator integ{field, detuning * detuning, options.max_depth};
    std::vector<Panel> panels;
    double estimate = 0.0;
    for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
        const double h = (edges[k + 1] - edges[k]) / kPanelsPerSegment;
        for (int j = 0; j < kPanelsPerSegment; ++j) {
            const double a = edges[k] + h * j;
            const double b = j + 1 == kPanelsPerSegment ? edges[k + 1] : a + h;
            // sample just inside discontinuities so each panel sees one branch
            const double fa = integ.f(std::nextafter(a, b));
            const double fb = integ.f(std::nextafter(b, a));
            const double fm = integ.f(0.5 * (a + b));
            const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
            panels.push_back({a, b, fa, fm, fb, whole});
            estimate += whole;
        }
    }
    if (estimate == 0.0) return 0.0;

    const double eps_total = options.rel_tol * std::abs(estimate);
    double area = 0.0;
    for (const auto& p : panels) {
        const double eps = eps_total * (p.b - p.a) / window.length();
        area += integ.refine(p.a, p.b, p.fa, p.fm, p.fb, p.whole, eps, 0);
    }
    return area;
}

DriveField scale_to_area(const DriveField& field, double target, double detuning, Interval window,
                         const QuadratureOptions& options) {
    require(finite(target) && target > 0.0, "target", "must be finite and > 0");
    const double floor = std::abs(detuning) * window.length();
    if (target < floor) {
        throw Unreachable("scale_to_area: target area lies below the detuning floor");
    }
    const double unit = pulse_area(field, detuning, window, options);
    if (!(unit > floor)) {
        throw Unreachable("scale_to_area: field has no area above the detuning floor");
    }
    auto area_at = [&](double s) { return pulse_area(field.scaled(s), detuning, window, options); };

    // The excess above the floor is monotone in s; bracket around the linear guess.
    const double guess = (target - floor) / (unit - floor);
    double lo = guess * 0.5;
    double hi = guess * 2.0;
    while (lo > 0.0 && area_at(lo) > target) lo *= 0.5;
    if (lo < std::numeric_limits<double>::min()) lo = 0.0;
    int expansions = 0;
    while (area_at(hi) < target) {
        hi *= 2.0;
        if (++expansions > 200) throw Unreachable("scale_to_area: could not bracket the target");
    }
    for (int i = 0; i < 200 && hi - lo > 1e-14 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        (area_at(mid) < target ? lo : hi) = mid;
    }
    return field.scaled(0.5 * (lo + hi));
}

namespace {
constexpr double kPlanck = 6.62607015e-34;     // J s
constexpr double kSpeedOfLight = 299792458.0;  // m/s
}  // namespace

double photons_per_pulse(double avg_power, double rep_rate, double wavelength) {
    require(avg_power > 0.0, "avg_power", "must be > 0");
    require(rep_rate > 0.0, "rep_rate", "must be > 0");
    require(wavelength > 0.0, "wavelength", "must be > 0");
    const double photon_energy = kPlanck * kSpeedOfLight / wavelength;
    return avg_power / (rep_rate * photon_energy);
}

double power_for_photons(double photons, double rep_rate, double wavelength) {
    require(photons > 0.0, "photons", "must be > 0");
    require(rep_rate > 0.0, "rep_rate", "must be > 0");
    require(wavelength > 0.0, "wavelength", "must be > 0");
    return photons * rep_rate * kPlanck * kSpeedOfLight / wavelength;
}

double gaussian_area(double peak, double fwhm) {
    return peak * fwhm * std::sqrt(std::numbers::pi / (2.0 * std::numbers::ln2));
}

}  // namespace rabi
