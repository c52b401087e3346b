#pragma once

// Bounded Levenberg-Marquardt least squares and the time-resolved trace fit
// that recovers the peak Rabi frequency and pulse area of a measured pulse.

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "rabi/bloch.hpp"
#include "rabi/detection.hpp"
#include "rabi/pulses.hpp"

namespace rabi {

using ResidualFunction = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct FitProblem {
    std::vector<std::string> names;
    Eigen::VectorXd initial;
    Eigen::VectorXd lower;  // may hold -inf
    Eigen::VectorXd upper;  // may hold +inf
    /// Model minus data, already divided by the per-point sigma when weighted.
    ResidualFunction residuals;

    int max_iterations = 200;
    double step_tolerance = 1e-8;  // relative
    double cost_tolerance = 1e-10; // relative
    /// Residual weights are true standard deviations: the covariance is not
    /// rescaled by the reduced chi-square.
    bool absolute_sigma = false;
    /// Jacobian columns are evaluated concurrently; `residuals` must then be
    /// safe to call from several threads.
    bool concurrent_jacobian = false;

    /// Problem with unbounded parameters.
    static FitProblem unbounded(std::vector<std::string> names, Eigen::VectorXd initial,
                                ResidualFunction residuals);
    void validate() const;
};

enum class FitStatus {
    StepTolerance,   // relative step below tolerance
    CostTolerance,   // relative cost decrease below tolerance
    ExactFit,        // zero residual
    NoDescent,       // no damping level reduces the cost further
};

const char* to_string(FitStatus status);

struct FitResult {
    std::vector<std::string> names;
    Eigen::VectorXd params;
    double cost = 0.0;  // sum of squared residuals
    Eigen::MatrixXd covariance;
    Eigen::MatrixXd jacobian;  // forward differences at the optimum
    FitStatus status = FitStatus::StepTolerance;
    int iterations = 0;
    std::size_t n_residuals = 0;
    std::vector<double> cost_history;  // cost after each accepted step, starting at the initial cost

    double value(const std::string& name) const;
    double sigma(const std::string& name) const;
};

/// Forward-difference Jacobian with step max(1e-7, 1e-7 |p|), taken backward
/// where a forward step would leave the box.
Eigen::MatrixXd forward_jacobian(const ResidualFunction& f, const Eigen::VectorXd& p,
                                 const Eigen::VectorXd& r0, const Eigen::VectorXd& lower,
                                 const Eigen::VectorXd& upper, bool concurrent = false);

/// Central-difference Jacobian with steps `rel_step * max(1, |p|)`.
Eigen::MatrixXd central_jacobian(const ResidualFunction& f, const Eigen::VectorXd& p,
                                 double rel_step = 1e-5);

/// Damped Gauss-Newton with multiplicative damping (x10 on rejection, /10 on
/// acceptance) and steps projected onto the bounds. Throws FitDiverged when
/// the iteration limit is reached and SingularJacobian when a parameter has
/// no influence on the residuals or the damped system cannot be solved.
FitResult least_squares(const FitProblem& problem);

/// Measured trace: samples of a density, or counts per bin when bin_width > 0
/// (times are then bin centres).
struct TraceData {
    std::vector<double> times;
    std::vector<double> values;
    double bin_width = 0.0;

    static TraceData from_histogram(const TcspcHistogram& histogram);
    void validate() const;
};

enum class TraceModel {
    ExcitedPopulation,   // c * rho22 + b
    FirstDetected,       // c * first-detected density / (efficiency * gamma1) + b
};

struct TraceFitOptions {
    TraceModel model = TraceModel::ExcitedPopulation;
    double efficiency = 0.02;       // used by TraceModel::FirstDetected
    double model_step = 0.02e-9;    // s, grid of the model trajectory
    double min_tail_lifetimes = 3;  // required decay tail after the pulse, in T1
    int max_iterations = 200;
    /// Starting point (s, t0_ns, b, c); replaces the candidate-area search.
    std::optional<std::tuple<double, double, double, double>> start;
    /// Fixed steps keep the model smooth in the fit parameters.
    IntegratorOptions integrator{.fixed_step = 0.01e-9};
};

struct TraceFit {
    FitResult fit;        // parameters s, t0_ns, b, c
    double omega_max = 0; // s * envelope peak, rad/s
    double area = 0;      // pulse area at zero detuning, rad
};

/// Fits c * model(t; s * envelope shifted by t0) + b to the trace with Poisson
/// weights sqrt(max(n, 1)). `envelope` is the measured field shape in any
/// amplitude unit; s converts it to a Rabi frequency in rad/s. The starting
/// point is the best of a grid of candidate areas around the one implied by
/// the number of oscillation maxima in the data. Throws DegenerateTail when
/// the data end less than `min_tail_lifetimes` T1 after the pulse.
TraceFit fit_trace(const TraceData& data, const Envelope& envelope, const EmitterModel& emitter,
                   const TraceFitOptions& options = {});

/// The model of fit_trace evaluated at (s, t0 in ns, b, c) on the data grid.
std::vector<double> trace_model(const TraceData& data, const Envelope& envelope,
                                const EmitterModel& emitter, double s, double t0_ns, double b,
                                double c, const TraceFitOptions& options = {});

}  // namespace rabi
