#include "doctest.h"

#include <random>

#include "rabi/errors.hpp"
#include "rabi/pulses.hpp"
#include "test_support.hpp"

using namespace rabi;
using namespace rabi::test;

namespace {

const Interval kFourNs{0.0, 4 * ns};

DriveField rect_pi_pulse() { return DriveField(Envelope::rectangular(125 * MHz, 4 * ns, 2 * ns)); }

// Brute-force trapezoid rule, independent of the adaptive quadrature.
double trapezoid_area(const DriveField& f, double detuning, Interval w, int n) {
    const double h = w.length() / n;
    double sum = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double t = w.begin + h * i;
        const double v = std::sqrt(detuning * detuning + std::norm(f(t)));
        sum += (i == 0 || i == n) ? 0.5 * v : v;
    }
    return sum * h;
}

}  // namespace

TEST_CASE("eval_rabi on a rectangular pulse") {
    const DriveField f = rect_pi_pulse();
    CHECK(eval_rabi(f, 1 * ns) == Complex(125 * MHz, 0.0));
    CHECK(eval_rabi(f, 10 * ns) == Complex(0.0, 0.0));
    CHECK(eval_rabi(f, -0.5 * ns) == Complex(0.0, 0.0));
}

TEST_CASE("eval_rabi at the Gaussian center returns the peak") {
    const DriveField f(Envelope::gaussian(300 * MHz, 4 * ns, 20 * ns));
    CHECK(eval_rabi(f, 20 * ns).real() == doctest::Approx(300 * MHz).epsilon(1e-15));
    // half intensity at +-fwhm/2
    CHECK(std::norm(eval_rabi(f, 22 * ns)) ==
          doctest::Approx(0.5 * std::pow(300 * MHz, 2)).epsilon(1e-12));
}

TEST_CASE("sampled envelopes interpolate linearly and vanish outside the grid") {
    const Envelope e = Envelope::sampled(0.0, 1 * ns, {0.0, 2.0, 4.0});
    CHECK(e(0.5 * ns) == doctest::Approx(1.0));
    CHECK(e(1.5 * ns) == doctest::Approx(3.0));
    CHECK(e(2 * ns) == doctest::Approx(4.0));
    CHECK(e(2.5 * ns) == 0.0);
    CHECK(e(-0.1 * ns) == 0.0);
}

TEST_CASE("envelope validation") {
    CHECK_THROWS_AS(Envelope::gaussian(1.0, 0.0, 0.0), ValidationError);
    CHECK_THROWS_AS(Envelope::rectangular(-1.0, 1.0, 0.0), ValidationError);
    CHECK_THROWS_AS(Envelope::sampled(0.0, 1.0, {1.0}), ValidationError);
    CHECK_THROWS_AS(Envelope::sampled(0.0, 1.0, {1.0, -2.0}), ValidationError);
    const std::vector<double> uneven{0.0, 1.0, 2.5};
    CHECK_THROWS_AS(Envelope::sampled(uneven, {1.0, 1.0, 1.0}), ValidationError);
    CHECK_THROWS_AS(DriveField(std::vector<FieldComponent>{}), ValidationError);
}

TEST_CASE("pulse_area of a resonant rectangular pulse is Omega T") {
    CHECK(relative_error(pulse_area(rect_pi_pulse(), 0.0, kFourNs), kPi) < 1e-8);
    // window wider than the pulse changes nothing at zero detuning
    CHECK(relative_error(pulse_area(rect_pi_pulse(), 0.0, {-50 * ns, 200 * ns}), kPi) < 1e-8);
}

TEST_CASE("pulse_area of a zero field is the detuning floor") {
    const DriveField zero(Envelope::rectangular(0.0, 4 * ns, 2 * ns));
    CHECK(relative_error(pulse_area(zero, 125 * MHz, kFourNs), kPi) < 1e-8);
    CHECK(pulse_area(zero, 0.0, kFourNs) == 0.0);
}

TEST_CASE("pulse_area of a Gaussian matches closed form and trapezoid oracle") {
    const double peak = 370 * MHz;
    const double fwhm = 7 * ns;
    const DriveField f(Envelope::gaussian(peak, fwhm, 30 * ns));
    const Interval w{0.0, 60 * ns};
    // amplitude exp(-2 ln2 (t/w)^2) integrates to w sqrt(pi / (2 ln 2))
    const double closed = peak * fwhm * std::sqrt(kPi / (2.0 * std::log(2.0)));
    const double brute = trapezoid_area(f, 0.0, w, 100000);
    const double adaptive = pulse_area(f, 0.0, w);
    CHECK(relative_error(brute, closed) < 1e-8);
    CHECK(relative_error(adaptive, closed) < 1e-8);
    CHECK(relative_error(gaussian_area(peak, fwhm), closed) < 1e-15);

    // detuned: only the brute-force oracle is available
    const double d = 40 * MHz;
    CHECK(relative_error(pulse_area(f, d, w), trapezoid_area(f, d, w, 100000)) < 1e-8);
}

TEST_CASE("pulse_area ignores chirp") {
    DriveField chirped(Envelope::gaussian(200 * MHz, 4 * ns, 20 * ns), PhaseLaw{0.7, 70 * MHz});
    DriveField plain(Envelope::gaussian(200 * MHz, 4 * ns, 20 * ns));
    CHECK(pulse_area(chirped, 30 * MHz, {0, 40 * ns}) ==
          doctest::Approx(pulse_area(plain, 30 * MHz, {0, 40 * ns})).epsilon(1e-12));
}

TEST_CASE("pulse_area rejects an empty window") {
    CHECK_THROWS_AS(pulse_area(rect_pi_pulse(), 0.0, {1.0, 1.0}), ValidationError);
}

TEST_CASE("pulse_area reports non-convergence") {
    QuadratureOptions tight;
    tight.rel_tol = 1e-15;
    tight.max_depth = 3;
    const DriveField f(Envelope::gaussian(200 * MHz, 4 * ns, 20 * ns));
    CHECK_THROWS_AS(pulse_area(f, 13 * MHz, {0, 40 * ns}, tight), NonConvergedQuadrature);
}

TEST_CASE("scale_to_area inverts A = Omega T") {
    const DriveField unit(Envelope::rectangular(1 * MHz, 4 * ns, 2 * ns));
    const DriveField pi_pulse = scale_to_area(unit, kPi, 0.0, kFourNs);
    CHECK(relative_error(pi_pulse.peak(), 125 * MHz) < 1e-6);
}

TEST_CASE("scale_to_area at the current area is a fixed point") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 5; ++i) {
        const DriveField f = random_field(rng, true);
        const Interval w{0.0, 40 * ns};
        for (double d : {0.0, 25 * MHz}) {
            const double a = pulse_area(f, d, w);
            const DriveField g = scale_to_area(f, a, d, w);
            CHECK(relative_error(g.peak(), f.peak()) < 1e-6);
        }
    }
}

TEST_CASE("scale_to_area reproduces the closed-form Gaussian inversion") {
    const double fwhm = 4 * ns;
    const DriveField unit(Envelope::gaussian(1 * MHz, fwhm, 20 * ns));
    const DriveField g = scale_to_area(unit, 5.7 * kPi, 0.0, {0, 40 * ns});
    const double expected_peak = 5.7 * kPi / (fwhm * std::sqrt(kPi / (2.0 * std::log(2.0))));
    CHECK(relative_error(g.peak(), expected_peak) < 1e-6);
}

TEST_CASE("scale_to_area with detuning hits the target") {
    const DriveField unit(Envelope::gaussian(1 * MHz, 4 * ns, 20 * ns));
    const Interval w{0, 40 * ns};
    const double d = 10 * MHz;
    const double target = 3.0 * kPi;
    const DriveField g = scale_to_area(unit, target, d, w);
    CHECK(relative_error(pulse_area(g, d, w), target) < 1e-6);
    // floor = |d| * 40 ns = 0.8 pi
    CHECK_THROWS_AS(scale_to_area(unit, 0.5 * kPi, d, w), Unreachable);
}

TEST_CASE("photons_per_pulse bookkeeping") {
    const double hc = 6.62607015e-34 * 299792458.0;
    const double lambda = 589e-9;
    const double power = 500.0 * (hc / lambda) * 700e3;
    CHECK(power == doctest::Approx(1.18e-10).epsilon(0.003));
    CHECK(photons_per_pulse(power, 700e3, lambda) == doctest::Approx(500.0).epsilon(1e-12));
    CHECK(photons_per_pulse(2 * power, 700e3, lambda) == doctest::Approx(1000.0).epsilon(1e-12));
    CHECK(photons_per_pulse(power, 1400e3, lambda) == doctest::Approx(250.0).epsilon(1e-12));
    CHECK(power_for_photons(500.0, 700e3, lambda) == doctest::Approx(power).epsilon(1e-12));
    CHECK_THROWS_AS(photons_per_pulse(0.0, 700e3, lambda), ValidationError);
}

TEST_CASE("property: area is positively homogeneous at zero detuning") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.1, 10.0);
    for (int i = 0; i < 20; ++i) {
        const DriveField f = random_field(rng, true);
        const double s = u(rng);
        const Interval w{0.0, 40 * ns};
        const double a = pulse_area(f, 0.0, w);
        CHECK(relative_error(pulse_area(f.scaled(s), 0.0, w), s * a) < 1e-8);
    }
}

TEST_CASE("property: detuning never lowers the area below either bound") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-300.0, 300.0);
    for (int i = 0; i < 20; ++i) {
        const DriveField f = random_field(rng, i % 2 == 0);
        const double d = u(rng) * MHz;
        const Interval w{0.0, 40 * ns};
        const double bound = std::max(pulse_area(f, 0.0, w), std::abs(d) * w.length());
        CHECK(pulse_area(f, d, w) >= bound * (1.0 - 1e-9));
    }
}

TEST_CASE("property: an unchirped zero-phase component is real and non-negative") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> t(-5.0, 45.0);
    for (int i = 0; i < 20; ++i) {
        const DriveField many = random_field(rng, false);
        const DriveField single(std::vector<FieldComponent>{many.components().front()});
        for (int k = 0; k < 50; ++k) {
            const Complex v = single(t(rng) * ns);
            CHECK(v.imag() == 0.0);
            CHECK(v.real() >= 0.0);
        }
    }
}

TEST_CASE("property: resampled Gaussians converge at second order") {
    const Envelope g = Envelope::gaussian(1.0, 4 * ns, 10 * ns);
    auto max_error = [&](double dt) {
        const int n = static_cast<int>(std::round(20 * ns / dt));
        std::vector<double> samples(n + 1);
        for (int i = 0; i <= n; ++i) samples[i] = g(i * dt);
        const Envelope s = Envelope::sampled(0.0, dt, samples);
        double err = 0.0;
        for (int k = 0; k < 20000; ++k) {
            const double t = 20 * ns * (k + 0.5) / 20000;
            err = std::max(err, std::abs(s(t) - g(t)));
        }
        return err;
    };
    const double e1 = max_error(0.2 * ns);
    const double e2 = max_error(0.1 * ns);
    const double e3 = max_error(0.05 * ns);
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.1));
    CHECK(e2 / e3 == doctest::Approx(4.0).epsilon(0.1));
}

TEST_CASE("stretch and shift keep amplitude and move the support") {
    const Envelope g = Envelope::gaussian(2.0, 4 * ns, 10 * ns);
    const Envelope s = g.stretched(1.5);
    CHECK(s.peak() == 2.0);
    CHECK(s(10 * ns + 3 * ns) == doctest::Approx(g(10 * ns + 2 * ns)));
    const Envelope r = Envelope::rectangular(1.0, 4 * ns, 2 * ns).shifted(1 * ns);
    CHECK(r(4.5 * ns) == 1.0);
    CHECK(r(0.5 * ns) == 0.0);
}
