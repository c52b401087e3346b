#pragma once

// Small statistics toolkit shared by the Monte Carlo checks.

#include <span>
#include <vector>

namespace rabi::stats {

double mean(std::span<const double> x);
/// Sample standard deviation (n - 1 denominator).
double stddev(std::span<const double> x);

double pearson(std::span<const double> x, std::span<const double> y);

struct LineFit {
    double intercept = 0.0;
    double slope = 0.0;
    double r_squared = 0.0;
};
LineFit fit_line(std::span<const double> x, std::span<const double> y);

/// Asymptotic Kolmogorov survival function P(K > lambda).
double kolmogorov_survival(double lambda);

struct KsResult {
    double statistic = 0.0;
    double p_value = 0.0;
};
/// One-sample KS test of `samples` against an exponential law with mean `scale`.
KsResult ks_exponential(std::vector<double> samples, double scale);

struct ChiSquareResult {
    double statistic = 0.0;
    double dof = 0.0;
    double p_value = 0.0;
};
/// Pearson chi-square of observed counts against expected counts; bins with
/// expectation below `min_expected` are pooled into their neighbour.
ChiSquareResult chi_square(std::span<const double> observed, std::span<const double> expected,
                           double min_expected = 5.0, int fitted_parameters = 0);

}  // namespace rabi::stats
