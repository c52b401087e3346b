#include "doctest.h"

#include <chrono>

#include "rabi/errors.hpp"
#include "rabi/stats.hpp"
#include "rabi/sweeps.hpp"
#include "test_support.hpp"

using namespace rabi;
using namespace rabi::test;

namespace {

const EmitterModel kEmitter = EmitterModel::from_lifetime(9.5 * ns);

std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = a + (b - a) * i / (n - 1);
    return v;
}

// Main-pulse peak for a given main-pulse area.
double main_peak_for_area(double area, const CompositeFieldTemplate& tpl = {}) {
    return area / gaussian_area(1.0, tpl.main_fwhm);
}

// Weak-field emitted-photon integral for a real Gaussian drive of peak w0 and
// intensity FWHM w: S = 1/2 Re int_0^inf exp((i D - G2) tau) C(tau) dtau with
// C the field autocorrelation w0^2 sqrt(pi / 2a) exp(-a tau^2 / 2), a = 2 ln2 / w^2.
double linear_response(double w0, double w, double gamma2, double detuning) {
    const double a = 2.0 * std::log(2.0) / (w * w);
    const double pref = 0.5 * w0 * w0 * std::sqrt(kPi / (2.0 * a));
    const double tau_max = 12.0 / std::sqrt(a) + 40.0 / gamma2;
    const int n = 200000;
    const double h = tau_max / n;
    double sum = 0.0;
    for (int k = 0; k <= n; ++k) {
        const double tau = k * h;
        const double f = std::exp(-gamma2 * tau - 0.5 * a * tau * tau) * std::cos(detuning * tau);
        sum += (k == 0 || k == n) ? 0.5 * f : f;
    }
    return pref * sum * h;
}

}  // namespace

TEST_CASE("composite field arithmetic") {
    const CompositeFieldTemplate tpl;
    const double s = 1e9;
    const DriveField f = build_composite(tpl, s);
    REQUIRE(f.components().size() == 2);
    CHECK(f.components()[0].envelope.peak() == doctest::Approx(0.01995 * s).epsilon(1e-3));
    CHECK(f.components()[0].phase.chirp_rate == 0.0);
    CHECK(f.components()[1].envelope.peak() == s);
    CHECK(f.components()[1].phase.chirp_rate == doctest::Approx(70 * MHz));
    CHECK(build_composite(tpl, 0.0).is_zero());

    const DriveField ped(f.components()[0].envelope);
    const DriveField main(f.components()[1].envelope);
    const double ratio = pulse_area(ped, 0.0, ped.support()) / pulse_area(main, 0.0, main.support());
    CHECK(ratio == doctest::Approx(std::pow(10.0, -1.7) * 50.0 / 4.0).epsilon(1e-6));

    CompositeFieldTemplate leak = tpl;
    leak.leak_enabled = true;
    CHECK(build_composite(leak, s).components().size() == 3);
    CHECK(build_composite(leak, s).components()[2].phase.chirp_rate == leak.leak_offset);

    CompositeFieldTemplate bad = tpl;
    bad.ratio_db = 3.0;
    CHECK_THROWS_AS(build_composite(bad, s), ValidationError);
    CHECK_THROWS_AS(build_composite(tpl, -1.0), ValidationError);
}

TEST_CASE("weak pedestal spectrum matches linear response") {
    CompositeFieldTemplate tpl;
    tpl.main_enabled = false;
    const double scale = 0.05 * kEmitter.gamma1 / amplitude_ratio_from_db(tpl.ratio_db);
    const double w0 = scale * amplitude_ratio_from_db(tpl.ratio_db);
    for (double d : {0.0, 10.0, 25.0, 60.0}) {
        EmitterModel e = kEmitter;
        e.detuning = d * MHz;
        const double got = excitation_signal(e, build_composite(tpl, scale));
        const double want = linear_response(w0, tpl.pedestal_fwhm, kEmitter.gamma2, d * MHz);
        CHECK(relative_error(got, want) < 5e-3);
    }
}

TEST_CASE("weak pedestal spectrum peaks on resonance") {
    CompositeFieldTemplate tpl;
    tpl.main_enabled = false;
    const auto det = linspace(-100 * MHz, 100 * MHz, 81);
    const std::vector<double> amp{0.02 * kEmitter.gamma1 / amplitude_ratio_from_db(tpl.ratio_db)};
    const auto sweep = sweep_2d(kEmitter, tpl, det, amp);
    const auto peak = spectral_peak(cross_section(sweep, amp[0]).points);
    CHECK(std::abs(peak.position) < 0.1 * MHz);

    // width of the pulse spectrum convolved with the Lorentzian line
    std::vector<std::pair<double, double>> oracle;
    for (double d : det) oracle.emplace_back(d, linear_response(1.0, tpl.pedestal_fwhm, kEmitter.gamma2, d));
    CHECK(relative_error(peak.fwhm, spectral_peak(oracle).fwhm) < 0.01);
    CHECK(peak.fwhm > kEmitter.gamma1);
}

TEST_CASE("low-amplitude full template is blue shifted by the chirp") {
    const CompositeFieldTemplate tpl;
    const auto det = linspace(-600 * MHz, 600 * MHz, 121);
    const std::vector<double> amp{main_peak_for_area(0.3 * kPi)};
    const auto sweep = sweep_2d(kEmitter, tpl, det, amp);
    const auto peak = spectral_peak(cross_section(sweep, amp[0]).points);
    CHECK(std::abs(peak.position - 70 * MHz) < 15 * MHz);
}

TEST_CASE("zero chirp gives a detuning-symmetric map") {
    CompositeFieldTemplate tpl;
    tpl.chirp = 0.0;
    const auto det = linspace(-300 * MHz, 300 * MHz, 21);
    const auto amp = linspace(0.0, main_peak_for_area(6 * kPi), 5);
    const auto sweep = sweep_2d(kEmitter, tpl, det, amp);
    double scale = *std::max_element(sweep.signal.begin(), sweep.signal.end());
    for (std::size_t r = 0; r < amp.size(); ++r) {
        for (std::size_t c = 0; c < det.size(); ++c) {
            CHECK(std::abs(sweep.at(r, c) - sweep.at(r, det.size() - 1 - c)) <= 1e-9 * scale);
        }
    }

    tpl.chirp = 70 * MHz;
    const std::vector<double> pm{-70 * MHz, 70 * MHz};
    const auto chirped = sweep_2d(kEmitter, tpl, pm, std::vector<double>{main_peak_for_area(kPi)});
    CHECK(chirped.at(0, 1) > chirped.at(0, 0));
    tpl.chirp = -70 * MHz;
    const auto reversed = sweep_2d(kEmitter, tpl, pm, std::vector<double>{main_peak_for_area(kPi)});
    CHECK(reversed.at(0, 0) > reversed.at(0, 1));
}

TEST_CASE("far off resonance the signal vanishes") {
    const CompositeFieldTemplate tpl;
    const double a = main_peak_for_area(kPi);
    EmitterModel e = kEmitter;
    e.detuning = 70 * MHz;
    const double on = excitation_signal(e, build_composite(tpl, a));
    e.detuning = 5000 * MHz;
    CHECK(excitation_signal(e, build_composite(tpl, a)) < 1e-3 * on);
}

TEST_CASE("signal grows monotonically below the first pi area") {
    const CompositeFieldTemplate tpl;
    const auto amp = linspace(0.0, main_peak_for_area(kPi), 15);
    const auto sweep = sweep_2d(kEmitter, tpl, std::vector<double>{0.0}, amp);
    for (std::size_t r = 1; r < amp.size(); ++r) CHECK(sweep.at(r, 0) >= sweep.at(r - 1, 0));
}

TEST_CASE("refining the detuning grid changes interpolated values by less than 1%") {
    const CompositeFieldTemplate tpl;
    const std::vector<double> amp{main_peak_for_area(3 * kPi)};
    const auto coarse = sweep_2d(kEmitter, tpl, linspace(-600 * MHz, 600 * MHz, 121), amp);
    const auto fine = sweep_2d(kEmitter, tpl, linspace(-600 * MHz, 600 * MHz, 241), amp);
    // smooth region: away from the narrow pedestal line
    for (std::size_t c = 0; c + 1 < coarse.detuning.size(); ++c) {
        const double mid = 0.5 * (coarse.detuning[c] + coarse.detuning[c + 1]);
        if (std::abs(mid) < 100 * MHz) continue;
        const double interp = 0.5 * (coarse.at(0, c) + coarse.at(0, c + 1));
        CHECK(relative_error(interp, fine.at(0, 2 * c + 1)) < 0.01);
    }
}

TEST_CASE("pedestal background grows linearly before saturation") {
    CompositeFieldTemplate tpl;
    tpl.main_enabled = false;
    const double ratio = amplitude_ratio_from_db(tpl.ratio_db);
    // pedestal saturation parameter 2 W^2 / G1^2 up to 4
    const double w_max = std::sqrt(2.0) * kEmitter.gamma1;
    const auto amp = linspace(0.25 * w_max / ratio, w_max / ratio, 16);
    const auto sweep = sweep_2d(kEmitter, tpl, std::vector<double>{0.0}, amp);
    const auto line = stats::fit_line(amp, sweep.signal);
    CHECK(line.r_squared > 0.99);
    CHECK(line.slope > 0.0);
}

TEST_CASE("cross sections pick the nearest row") {
    SweepResult r;
    r.detuning = {-1.0, 0.0, 1.0};
    r.amplitude = {1.0, 2.0, 4.0};
    r.signal = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    auto cs = cross_section(r, 2.0);
    CHECK(cs.row == 1);
    CHECK(cs.amplitude == 2.0);
    CHECK(cs.points == std::vector<std::pair<double, double>>{{-1.0, 4.0}, {0.0, 5.0}, {1.0, 6.0}});
    CHECK(cross_section(r, 2.9).row == 1);
    CHECK(cross_section(r, 3.0).row == 1);  // tie goes to the lower row
    CHECK(cross_section(r, 3.1).row == 2);
    CHECK(cross_section(r, 1.0).row == 0);
    CHECK(cross_section(r, 4.0).row == 2);
    CHECK_THROWS_AS(cross_section(r, 0.5), OutOfRange);
    CHECK_THROWS_AS(cross_section(r, 4.5), OutOfRange);
}

TEST_CASE("spectral peak of a sampled Lorentzian") {
    std::vector<std::pair<double, double>> s;
    for (int i = -200; i <= 200; ++i) {
        const double x = 0.05 * i;
        s.emplace_back(x, 1.0 / (1.0 + 4.0 * (x - 0.33) * (x - 0.33)));
    }
    const auto p = spectral_peak(s);
    CHECK(p.position == doctest::Approx(0.33).epsilon(1e-2));
    CHECK(p.fwhm == doctest::Approx(1.0).epsilon(1e-2));
    s.resize(210);
    CHECK_THROWS_AS(spectral_peak(s), ValidationError);
}

TEST_CASE("sweep validation and thread independence") {
    const CompositeFieldTemplate tpl;
    const std::vector<double> bad{1.0, 0.0};
    const std::vector<double> ok{0.0, 1e9};
    CHECK_THROWS_AS(sweep_2d(kEmitter, tpl, bad, ok), ValidationError);
    CHECK_THROWS_AS(sweep_2d(kEmitter, tpl, ok, bad), ValidationError);
    CHECK_THROWS_AS(sweep_2d(kEmitter, tpl, std::vector<double>{}, ok), ValidationError);

    const auto det = linspace(-200 * MHz, 200 * MHz, 7);
    ::setenv("RABI_THREADS", "1", 1);
    const auto a = sweep_2d(kEmitter, tpl, det, ok);
    ::setenv("RABI_THREADS", "4", 1);
    const auto b = sweep_2d(kEmitter, tpl, det, ok);
    ::unsetenv("RABI_THREADS");
    CHECK(a.signal == b.signal);
}
