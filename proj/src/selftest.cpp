#include <cmath>
#include <cstdio>
#include <numbers>

#include "rabi/bloch.hpp"
#include "rabi/cli.hpp"
#include "rabi/pulses.hpp"
#include "rabi/random.hpp"

namespace rabi {

namespace {

constexpr double kPi = std::numbers::pi;

std::string sci(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", x);
    return buf;
}

SelftestCheck bound(std::string name, double error, double tolerance) {
    return {std::move(name), error < tolerance, "error " + sci(error) + " < " + sci(tolerance)};
}

// max |rho22 - analytic| over ten generalized Rabi periods of an undamped drive
double rabi_error(double omega, double detuning) {
    const EmitterModel e{0.0, 0.0, detuning};
    const double periods = 10.0 * 2.0 * kPi / std::hypot(omega, detuning);
    const DriveField f(Envelope::rectangular(omega, periods + 2e-9, 0.5 * periods));
    const auto traj = integrate(e, f, BlochState::ground(), {0.0, periods}, periods / 2000.0);
    double worst = 0.0;
    for (std::size_t i = 0; i < traj.size(); ++i) {
        worst = std::max(worst, std::abs(traj.states[i].rho_ee - analytic_rabi(omega, detuning, traj.times[i])));
    }
    return worst;
}

}  // namespace

std::vector<SelftestCheck> run_selftest() {
    std::vector<SelftestCheck> out;
    const double omega = 2.0 * kPi * 125e6;
    out.push_back(bound("resonant Rabi oscillation", rabi_error(omega, 0.0), 1e-6));
    out.push_back(bound("detuned Rabi oscillation", rabi_error(omega, omega), 1e-6));

    {
        const EmitterModel e = EmitterModel::from_lifetime(9.5e-9);
        const DriveField none(Envelope::gaussian(0.0, 1e-9, 0.0));
        const auto traj = integrate(e, none, {1.0, {0.0, 0.0}}, {0.0, 50e-9}, 0.5e-9);
        double worst = 0.0;
        for (std::size_t i = 0; i < traj.size(); ++i) {
            worst = std::max(worst, std::abs(traj.states[i].rho_ee - std::exp(-traj.times[i] / 9.5e-9)));
        }
        out.push_back(bound("free decay", worst, 1e-10));
    }
    {
        EmitterModel e = EmitterModel::from_lifetime(9.5e-9, 2.0 * kPi * 20e6);
        const double w = 2.0 * kPi * 30e6;
        const double span = 400e-9;
        const DriveField cw(Envelope::rectangular(w, span + 2e-9, 0.5 * span));
        const auto end = evolve(e, cw, BlochState::ground(), {0.0, span});
        const auto ss = steady_state(e, w);
        out.push_back(bound("steady state", std::abs(end.final.rho_ee - ss.rho_ee) +
                                                std::abs(end.final.coherence - ss.coherence),
                            1e-8));
    }
    {
        const DriveField g(Envelope::gaussian(2.0 * kPi * 370e6, 5.12e-9, 0.0));
        // the closed form integrates to infinity; the 1e-6 support would drop ~1e-7 of it
        const double numeric = pulse_area(g, 0.0, {-40e-9, 40e-9});
        const double closed = gaussian_area(2.0 * kPi * 370e6, 5.12e-9);
        out.push_back(bound("Gaussian pulse area", std::abs(numeric / closed - 1.0), 1e-7));
    }
    {
        const double p = power_for_photons(500.0, 700e3, 589e-9);
        out.push_back(bound("photon budget inversion", std::abs(photons_per_pulse(p, 700e3, 589e-9) - 500.0),
                            1e-9));
    }
    {
        const auto z = Philox::bijection({0, 0, 0, 0}, {0, 0});
        const bool ok = z == Philox::Block{0x6627e8d5U, 0xe169c58dU, 0xbc57ac4cU, 0x9b00dbd8U};
        out.push_back({"Philox4x32-10 known answer", ok, ok ? "match" : "mismatch"});
    }
    return out;
}

}  // namespace rabi
