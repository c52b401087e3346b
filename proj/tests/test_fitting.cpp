#include "doctest.h"

#include <random>

#include "rabi/errors.hpp"
#include "rabi/fitting.hpp"
#include "rabi/stats.hpp"
#include "test_support.hpp"

using namespace rabi;
using namespace rabi::test;

namespace {

const EmitterModel kEmitter = EmitterModel::from_lifetime(9.5 * ns);

// Measured pulse shape in arbitrary units: a Gaussian sampled every 0.1 ns.
Envelope measured_pulse(double fwhm = 5.1 * ns, double scale = 1.0) {
    const auto g = Envelope::gaussian(scale, fwhm, 20 * ns);
    std::vector<double> a;
    for (double t = 0.0; t <= 40 * ns + 1e-15; t += 0.1 * ns) a.push_back(g(t));
    return Envelope::sampled(0.0, 0.1 * ns, std::move(a));
}

TraceData histogram_grid() {
    TraceData d;
    d.bin_width = 1 * ns;
    for (int i = 0; i < 70; ++i) d.times.push_back((i + 0.5) * ns);
    d.values.assign(d.times.size(), 0.0);
    return d;
}

TraceData poisson_trace(const Envelope& env, double s, double t0, double b, double c,
                        std::mt19937_64& rng) {
    TraceData d = histogram_grid();
    const auto mean = trace_model(d, env, kEmitter, s, t0, b, c);
    for (std::size_t i = 0; i < mean.size(); ++i) {
        d.values[i] = static_cast<double>(std::poisson_distribution<long>(mean[i])(rng));
    }
    return d;
}

double s_for_area(const Envelope& env, double area) {
    const DriveField f(env);
    return area / pulse_area(f, 0.0, f.support());
}

}  // namespace

TEST_CASE("least squares recovers a linear model exactly within two iterations") {
    const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(20, 0.0, 5.0);
    const Eigen::VectorXd y = 2.75 * x;
    auto problem = FitProblem::unbounded({"p"}, Eigen::VectorXd::Constant(1, 0.1),
                                         [&](const Eigen::VectorXd& p) -> Eigen::VectorXd { return p(0) * x - y; });
    const auto fit = least_squares(problem);
    CHECK(fit.iterations <= 2);
    CHECK(fit.value("p") == doctest::Approx(2.75).epsilon(1e-12));
}

TEST_CASE("least squares follows the Rosenbrock valley") {
    auto problem = FitProblem::unbounded(
        {"x", "y"}, Eigen::Vector2d(-1.2, 1.0), [](const Eigen::VectorXd& p) -> Eigen::VectorXd {
            return Eigen::Vector2d(10.0 * (p(1) - p(0) * p(0)), 1.0 - p(0));
        });
    const auto fit = least_squares(problem);
    CHECK(std::abs(fit.params(0) - 1.0) < 1e-6);
    CHECK(std::abs(fit.params(1) - 1.0) < 1e-6);
    for (std::size_t i = 1; i < fit.cost_history.size(); ++i) {
        CHECK(fit.cost_history[i] <= fit.cost_history[i - 1]);
    }
}

TEST_CASE("least squares respects bounds") {
    // unconstrained optimum at (-1, 2); p0 is bounded below by 0
    auto residuals = [](const Eigen::VectorXd& p) -> Eigen::VectorXd {
        return Eigen::Vector3d(p(0) + 1.0, p(1) - 2.0, 0.1 * (p(0) + p(1) - 1.0));
    };
    for (double start : {0.0, 0.7}) {
        FitProblem problem = FitProblem::unbounded({"a", "b"}, Eigen::Vector2d(start, 0.0), residuals);
        problem.lower(0) = 0.0;
        const auto fit = least_squares(problem);
        CHECK(fit.params(0) == 0.0);
        // interior optimum in b with a pinned at 0: minimise (b-2)^2 + 0.01 (b-1)^2
        CHECK(fit.params(1) == doctest::Approx((2.0 + 0.01) / 1.01).epsilon(1e-8));
    }
    FitProblem inside = FitProblem::unbounded({"a", "b"}, Eigen::Vector2d(0.0, 0.0), residuals);
    inside.lower(0) = -5.0;
    inside.upper(1) = 1.5;
    const auto fit = least_squares(inside);
    CHECK(fit.params(1) == 1.5);
    CHECK(fit.params(0) >= -5.0);
}

TEST_CASE("least squares covariance matches linear regression theory") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> noise(0.0, 0.5);
    const int n = 200;
    Eigen::VectorXd x(n), y(n);
    for (int i = 0; i < n; ++i) {
        x(i) = i * 0.05;
        y(i) = 1.0 + 0.3 * x(i) + noise(rng);
    }
    auto problem = FitProblem::unbounded({"a", "b"}, Eigen::Vector2d(0.0, 0.0),
                                         [&](const Eigen::VectorXd& p) -> Eigen::VectorXd {
                                             return (p(0) + p(1) * x.array()).matrix() - y;
                                         });
    const auto fit = least_squares(problem);
    Eigen::MatrixXd design(n, 2);
    design.col(0).setOnes();
    design.col(1) = x;
    const double s2 = fit.cost / (n - 2);
    const Eigen::MatrixXd want = s2 * (design.transpose() * design).inverse();
    CHECK((fit.covariance - want).norm() < 1e-6 * want.norm());
    CHECK((fit.covariance - fit.covariance.transpose()).norm() == 0.0);
    CHECK(fit.covariance.selfadjointView<Eigen::Lower>().ldlt().isPositive());
}

TEST_CASE("least squares failure modes") {
    auto rosen = FitProblem::unbounded(
        {"x", "y"}, Eigen::Vector2d(-1.2, 1.0), [](const Eigen::VectorXd& p) -> Eigen::VectorXd {
            return Eigen::Vector2d(10.0 * (p(1) - p(0) * p(0)), 1.0 - p(0));
        });
    rosen.max_iterations = 2;
    CHECK_THROWS_AS(least_squares(rosen), FitDiverged);

    auto blind = FitProblem::unbounded({"a", "unused"}, Eigen::Vector2d(0.0, 0.0),
                                       [](const Eigen::VectorXd& p) -> Eigen::VectorXd {
                                           return Eigen::Vector2d(p(0) - 1.0, p(0) + 1.0);
                                       });
    CHECK_THROWS_AS(least_squares(blind), SingularJacobian);

    auto bad = FitProblem::unbounded({"a"}, Eigen::VectorXd::Constant(1, 2.0),
                                     [](const Eigen::VectorXd& p) -> Eigen::VectorXd { return p; });
    bad.upper(0) = 1.0;
    CHECK_THROWS_AS(least_squares(bad), ValidationError);
    bad = FitProblem::unbounded({}, Eigen::VectorXd(), [](const Eigen::VectorXd& p) -> Eigen::VectorXd { return p; });
    CHECK_THROWS_AS(least_squares(bad), ValidationError);
}

TEST_CASE("trace fit: exact synthetic data are recovered exactly") {
    const auto env = measured_pulse();
    const double s = s_for_area(env, 5.7 * kPi);
    TraceData d = histogram_grid();
    d.values = trace_model(d, env, kEmitter, s, 0.4, 30.0, 1e5);
    const auto fit = fit_trace(d, env, kEmitter);
    double data_norm = 0.0;
    for (double v : d.values) data_norm += v * v;
    CHECK(fit.fit.cost < 1e-15 * data_norm);
    CHECK(relative_error(fit.fit.value("s"), s) < 1e-6);
    CHECK(std::abs(fit.fit.value("t0_ns") - 0.4) < 1e-6);
    CHECK(relative_error(fit.fit.value("c"), 1e5) < 1e-6);
    CHECK(relative_error(fit.area, 5.7 * kPi) < 1e-6);
}

TEST_CASE("trace fit: Poisson round trip at 1e5 peak counts") {
    const auto env = measured_pulse();
    const double s = s_for_area(env, 5.7 * kPi);
    std::mt19937_64 rng(42);
    const double b = 200.0, c = 1.6e5;  // peak near 1e5 counts per bin
    const TraceData d = poisson_trace(env, s, -0.8, b, c, rng);
    const auto fit = fit_trace(d, env, kEmitter);
    CHECK(relative_error(fit.fit.value("s"), s) < 0.02);
    CHECK(std::abs(fit.fit.value("t0_ns") + 0.8) < 0.02 * 1.0);  // 2% of a 1 ns bin
    CHECK(relative_error(fit.fit.value("b"), b) < 0.02 * c / b);   // 2% of the signal scale
    CHECK(relative_error(fit.fit.value("c"), c) < 0.02);
    CHECK(relative_error(fit.omega_max, s * env.peak()) < 0.02);
    CHECK(fit.area / kPi == doctest::Approx(5.7).epsilon(0.02));
    CHECK(fit.omega_max / MHz == doctest::Approx(370.0).epsilon(0.02));

    SUBCASE("forward and central Jacobians agree at the optimum") {
        std::vector<double> sigma;
        for (double v : d.values) sigma.push_back(std::sqrt(std::max(v, 1.0)));
        const ResidualFunction f = [&](const Eigen::VectorXd& p) -> Eigen::VectorXd {
            const auto y = trace_model(d, env, kEmitter, p(0), p(1), p(2), p(3));
            Eigen::VectorXd r(static_cast<Eigen::Index>(y.size()));
            for (std::size_t i = 0; i < y.size(); ++i) r(static_cast<Eigen::Index>(i)) = (y[i] - d.values[i]) / sigma[i];
            return r;
        };
        const Eigen::MatrixXd central = central_jacobian(f, fit.fit.params, 1e-6);
        const Eigen::MatrixXd& forward = fit.fit.jacobian;
        for (Eigen::Index c2 = 0; c2 < forward.cols(); ++c2) {
            const double scale = central.col(c2).cwiseAbs().maxCoeff();
            for (Eigen::Index r = 0; r < forward.rows(); ++r) {
                CHECK(std::abs(forward(r, c2) - central(r, c2)) <= 1e-4 * scale);
            }
        }
    }
}

TEST_CASE("trace fit: derived quantities are invariant under envelope rescaling") {
    std::mt19937_64 rng(8);
    const auto env = measured_pulse();
    const auto env_k = measured_pulse(5.1 * ns, 250.0);
    const double s = s_for_area(env, 4.2 * kPi);
    const TraceData d = poisson_trace(env, s, 0.0, 50.0, 5e4, rng);
    const auto a = fit_trace(d, env, kEmitter);
    const auto b = fit_trace(d, env_k, kEmitter);
    CHECK(relative_error(b.fit.value("s") * 250.0, a.fit.value("s")) < 1e-5);
    CHECK(relative_error(a.omega_max, b.omega_max) < 1e-5);
    CHECK(relative_error(a.area, b.area) < 1e-5);
}

TEST_CASE("trace fit: parameter errors shrink with the square root of the counts") {
    const auto env = measured_pulse();
    const double s = s_for_area(env, 5.7 * kPi);
    std::mt19937_64 rng(99);
    TraceFitOptions low_opts, high_opts;
    low_opts.start = std::tuple{s, 0.0, 5.0, 1e3};
    high_opts.start = std::tuple{s, 0.0, 500.0, 1e5};
    std::vector<double> low, high;
    for (int k = 0; k < 50; ++k) {
        low.push_back(fit_trace(poisson_trace(env, s, 0.0, 5.0, 1e3, rng), env, kEmitter, low_opts).fit.value("s"));
        high.push_back(fit_trace(poisson_trace(env, s, 0.0, 500.0, 1e5, rng), env, kEmitter, high_opts).fit.value("s"));
    }
    const double ratio = stats::stddev(low) / stats::stddev(high);
    CHECK(ratio == doctest::Approx(10.0).epsilon(0.2));

    // the covariance estimate follows the same law
    const auto one = fit_trace(poisson_trace(env, s, 0.0, 5.0, 1e3, rng), env, kEmitter);
    const auto hundred = fit_trace(poisson_trace(env, s, 0.0, 500.0, 1e5, rng), env, kEmitter);
    CHECK(one.fit.sigma("s") / hundred.fit.sigma("s") == doctest::Approx(10.0).epsilon(0.2));
}

TEST_CASE("trace fit: first-detected model round trip") {
    TraceFitOptions opts;
    opts.model = TraceModel::FirstDetected;
    opts.efficiency = 0.5;
    const auto env = measured_pulse();
    const double s = s_for_area(env, 3.3 * kPi);
    TraceData d = histogram_grid();
    d.values = trace_model(d, env, kEmitter, s, 0.2, 10.0, 2e4, opts);
    const auto fit = fit_trace(d, env, kEmitter, opts);
    CHECK(relative_error(fit.area, 3.3 * kPi) < 1e-5);
}

TEST_CASE("trace fit: input contracts") {
    const auto env = measured_pulse();
    TraceData d = histogram_grid();
    d.times.resize(30);
    d.values.assign(30, 1.0);
    CHECK_THROWS_AS(fit_trace(d, env, kEmitter), DegenerateTail);

    d = histogram_grid();
    std::swap(d.times[3], d.times[4]);
    CHECK_THROWS_AS(fit_trace(d, env, kEmitter), NonMonotonicTime);

    d = histogram_grid();
    CHECK_THROWS_AS(fit_trace(d, env, kEmitter), DegenerateFit);
}
