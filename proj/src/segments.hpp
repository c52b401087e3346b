#pragma once

// Splits a time span into driven pieces (handed to the ODE stepper) and free
// pieces (solved in closed form).

#include <algorithm>
#include <vector>

#include "rabi/pulses.hpp"

namespace rabi::detail {

struct Segment {
    Interval range;
    bool driven = false;
};

inline std::vector<Segment> split_span(const DriveField& field, Interval span) {
    std::vector<Segment> out;
    if (!(span.end > span.begin)) return out;

    const Interval support = field.support();
    const double lo = std::max(span.begin, support.begin);
    const double hi = std::min(span.end, support.end);
    if (support.empty() || !(hi > lo)) {
        out.push_back({span, false});
        return out;
    }

    std::vector<double> cuts{span.begin, lo};
    for (const auto& c : field.components()) {
        if (c.envelope.peak() == 0.0) continue;
        for (double d : c.envelope.discontinuities()) {
            if (d > lo && d < hi) cuts.push_back(d);
        }
    }
    cuts.push_back(hi);
    cuts.push_back(span.end);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const Interval r{cuts[i], cuts[i + 1]};
        const bool driven = r.begin >= lo && r.end <= hi;
        out.push_back({r, driven});
    }
    return out;
}

/// Largest step the stepper may take inside a driven segment: a fraction of
/// the narrowest feature of the field.
inline double max_step_for(const DriveField& field, Interval segment) {
    double scale = segment.length();
    for (const auto& c : field.components()) {
        if (c.envelope.peak() == 0.0) continue;
        const auto& shape = c.envelope.shape();
        if (const auto* g = std::get_if<Gaussian>(&shape)) {
            scale = std::min(scale, g->fwhm / 8.0);
        } else if (const auto* s = std::get_if<Sampled>(&shape)) {
            scale = std::min(scale, 4.0 * s->step);
        }
    }
    return scale;
}

}  // namespace rabi::detail
