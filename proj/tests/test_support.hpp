#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include "rabi/pulses.hpp"

namespace rabi::test {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double ns = 1e-9;
inline constexpr double MHz = 2.0 * kPi * 1e6;  // angular, rad/s per MHz

inline double relative_error(double got, double want) {
    return std::abs(got - want) / std::abs(want);
}

/// Random one- to three-component field with Gaussian and rectangular
/// envelopes inside [0, 40 ns], optionally chirped.
inline DriveField random_field(std::mt19937_64& rng, bool chirped) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int n = 1 + static_cast<int>(u(rng) * 3.0);
    std::vector<FieldComponent> comps;
    for (int k = 0; k < n; ++k) {
        const double peak = (50.0 + 400.0 * u(rng)) * MHz;
        const double center = (15.0 + 10.0 * u(rng)) * ns;
        const double width = (1.0 + 6.0 * u(rng)) * ns;
        Envelope env = u(rng) < 0.5 ? Envelope::gaussian(peak, width, center)
                                    : Envelope::rectangular(peak, width, center);
        PhaseLaw phase;
        if (chirped) {
            phase.offset = 2.0 * kPi * u(rng);
            phase.chirp_rate = (u(rng) - 0.5) * 200.0 * MHz;
        }
        comps.push_back({std::move(env), phase});
    }
    return DriveField(std::move(comps));
}

}  // namespace rabi::test
