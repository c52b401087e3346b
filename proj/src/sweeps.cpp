#include "rabi/sweeps.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "context_error.hpp"
#include "rabi/errors.hpp"
#include "rabi/parallel.hpp"

namespace rabi {

namespace {

void check_axis(std::span<const double> axis, const char* name) {
    if (axis.empty()) throw ValidationError(name, "axis is empty");
    for (std::size_t i = 0; i < axis.size(); ++i) {
        if (!std::isfinite(axis[i])) throw ValidationError(name, "axis values must be finite");
        if (i > 0 && !(axis[i] > axis[i - 1])) throw ValidationError(name, "axis must increase strictly");
    }
}

double mhz(double angular) { return angular / (2.0 * std::numbers::pi * 1e6); }

}  // namespace

void CompositeFieldTemplate::validate() const {
    if (!std::isfinite(center)) throw ValidationError("center", "must be finite");
    if (!(pedestal_fwhm > 0.0) || !std::isfinite(pedestal_fwhm)) {
        throw ValidationError("pedestal_fwhm", "must be finite and > 0");
    }
    if (!(main_fwhm > 0.0) || !std::isfinite(main_fwhm)) {
        throw ValidationError("main_fwhm", "must be finite and > 0");
    }
    if (!(ratio_db <= 0.0) || !std::isfinite(ratio_db)) {
        throw ValidationError("ratio_db", "must be finite and <= 0 (pedestal weaker)");
    }
    if (!std::isfinite(chirp)) throw ValidationError("chirp", "must be finite");
    if (leak_enabled) {
        if (!(leak_fwhm > 0.0) || !std::isfinite(leak_fwhm)) {
            throw ValidationError("leak_fwhm", "must be finite and > 0");
        }
        if (!std::isfinite(leak_ratio_db)) throw ValidationError("leak_ratio_db", "must be finite");
        if (!std::isfinite(leak_offset)) throw ValidationError("leak_offset", "must be finite");
    }
    if (!pedestal_enabled && !main_enabled && !leak_enabled) {
        throw ValidationError("template", "every component is disabled");
    }
}

DriveField build_composite(const CompositeFieldTemplate& tpl, double scale) {
    tpl.validate();
    if (!(scale >= 0.0) || !std::isfinite(scale)) throw ValidationError("scale", "must be finite and >= 0");
    std::vector<FieldComponent> comps;
    if (tpl.pedestal_enabled) {
        comps.push_back({Envelope::gaussian(scale * amplitude_ratio_from_db(tpl.ratio_db),
                                            tpl.pedestal_fwhm, tpl.center),
                         PhaseLaw{}});
    }
    if (tpl.main_enabled) {
        comps.push_back({Envelope::gaussian(scale, tpl.main_fwhm, tpl.center), PhaseLaw{0.0, tpl.chirp}});
    }
    if (tpl.leak_enabled) {
        comps.push_back({Envelope::gaussian(scale * amplitude_ratio_from_db(tpl.leak_ratio_db),
                                            tpl.leak_fwhm, tpl.center),
                         PhaseLaw{0.0, tpl.leak_offset}});
    }
    return DriveField(std::move(comps));
}

std::vector<double> SweepResult::row(std::size_t r) const {
    const auto begin = signal.begin() + static_cast<std::ptrdiff_t>(r * detuning.size());
    return {begin, begin + static_cast<std::ptrdiff_t>(detuning.size())};
}

double excitation_signal(const EmitterModel& emitter, const DriveField& field,
                         const SweepOptions& options) {
    if (field.is_zero()) return 0.0;
    if (!(options.tail_lifetimes >= 5.0)) throw ValidationError("tail_lifetimes", "must be >= 5");
    if (!(emitter.gamma1 > 0.0)) throw ValidationError("gamma1", "must be > 0");
    const Interval support = field.support();
    const Interval window{support.begin, support.end + options.tail_lifetimes / emitter.gamma1};
    return std::max(evolve(emitter, field, BlochState::ground(), window, options.integrator).emitted, 0.0);
}

SweepResult sweep_2d(const EmitterModel& emitter, const CompositeFieldTemplate& tpl,
                     std::span<const double> detuning, std::span<const double> amplitude,
                     const SweepOptions& options) {
    emitter.validate();
    tpl.validate();
    check_axis(detuning, "detuning");
    check_axis(amplitude, "amplitude");
    if (amplitude.front() < 0.0) throw ValidationError("amplitude", "must be >= 0");

    SweepResult result;
    result.detuning.assign(detuning.begin(), detuning.end());
    result.amplitude.assign(amplitude.begin(), amplitude.end());
    result.signal.resize(detuning.size() * amplitude.size());
    result.field_template = tpl;

    const std::size_t cols = detuning.size();
    parallel_for(result.signal.size(), [&](std::size_t k) {
        const std::size_t r = k / cols;
        const std::size_t c = k % cols;
        try {
            EmitterModel e = emitter;
            e.detuning = detuning[c];
            result.signal[k] = excitation_signal(e, build_composite(tpl, amplitude[r]), options);
        } catch (const NumericalError&) {
            detail::rethrow_with_context("sweep point (amplitude " + std::to_string(mhz(amplitude[r])) +
                                         " MHz, detuning " + std::to_string(mhz(detuning[c])) + " MHz): ");
        }
    });
    return result;
}

CrossSection cross_section(const SweepResult& result, double amplitude) {
    const auto& axis = result.amplitude;
    if (axis.empty() || !(amplitude >= axis.front() && amplitude <= axis.back())) {
        throw OutOfRange("cross_section: amplitude outside the sweep axis");
    }
    const auto upper = std::lower_bound(axis.begin(), axis.end(), amplitude);
    auto r = static_cast<std::size_t>(upper - axis.begin());
    if (axis[r] != amplitude && r > 0 && amplitude - axis[r - 1] <= axis[r] - amplitude) --r;

    CrossSection cs;
    cs.row = r;
    cs.amplitude = axis[r];
    for (std::size_t c = 0; c < result.detuning.size(); ++c) {
        cs.points.emplace_back(result.detuning[c], result.at(r, c));
    }
    return cs;
}

SpectralPeak spectral_peak(const std::vector<std::pair<double, double>>& series) {
    if (series.size() < 3) throw ValidationError("series", "needs at least 3 points");
    std::size_t j = 0;
    for (std::size_t i = 1; i < series.size(); ++i) {
        if (series[i].second > series[j].second) j = i;
    }
    SpectralPeak p{series[j].first, series[j].second, 0.0};
    if (j > 0 && j + 1 < series.size()) {
        const auto [x0, y0] = series[j - 1];
        const auto [x1, y1] = series[j];
        const auto [x2, y2] = series[j + 1];
        const double d0 = (y1 - y0) / (x1 - x0);
        const double d1 = (y2 - y1) / (x2 - x1);
        const double a = (d1 - d0) / (x2 - x0);
        if (a < 0.0) {
            const double b = d0 - a * (x0 + x1);
            p.position = std::clamp(-b / (2.0 * a), x0, x2);
            p.value = y1 + (p.position - x1) * (d0 + a * (p.position - x0));
        }
    }

    const double half = 0.5 * p.value;
    auto crossing = [&](std::size_t i, std::size_t k) {
        const auto [xa, ya] = series[i];
        const auto [xb, yb] = series[k];
        return xa + (half - ya) * (xb - xa) / (yb - ya);
    };
    std::size_t lo = j;
    while (lo > 0 && series[lo - 1].second > half) --lo;
    std::size_t hi = j;
    while (hi + 1 < series.size() && series[hi + 1].second > half) ++hi;
    if (lo == 0 || hi + 1 == series.size()) {
        throw ValidationError("series", "half-maximum crossing lies outside the axis");
    }
    p.fwhm = crossing(hi, hi + 1) - crossing(lo - 1, lo);
    return p;
}

}  // namespace rabi
