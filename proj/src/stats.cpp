#include "rabi/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

#include "rabi/errors.hpp"

namespace rabi::stats {

double mean(std::span<const double> x) {
    if (x.empty()) throw ValidationError("samples", "empty");
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double stddev(std::span<const double> x) {
    if (x.size() < 2) throw ValidationError("samples", "needs at least two values");
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw ValidationError("samples", "need two equally long series of length >= 2");
    }
    const double mx = mean(x);
    const double my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw ValidationError("samples", "need two equally long series of length >= 2");
    }
    const double mx = mean(x);
    const double my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - f.intercept - f.slope * x[i];
        ss_res += r * r;
    }
    f.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
    return f;
}

double kolmogorov_survival(double lambda) {
    if (lambda <= 0.0) return 1.0;
    if (lambda < 0.2) return 1.0;  // series converges poorly; the value is 1 to double precision
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 ? 1.0 : -1.0) * term;
        if (term < 1e-17) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_exponential(std::vector<double> samples, double scale) {
    if (samples.empty()) throw ValidationError("samples", "empty");
    std::sort(samples.begin(), samples.end());
    const auto n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double cdf = -std::expm1(-std::max(samples[i], 0.0) / scale);
        d = std::max(d, std::max(static_cast<double>(i + 1) / n - cdf,
                                 cdf - static_cast<double>(i) / n));
    }
    // Stephens' small-sample correction of the asymptotic law
    const double sq = std::sqrt(n);
    return {d, kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d)};
}

ChiSquareResult chi_square(std::span<const double> observed, std::span<const double> expected,
                           double min_expected, int fitted_parameters) {
    if (observed.size() != expected.size() || observed.empty()) {
        throw ValidationError("counts", "observed and expected differ in length");
    }
    std::vector<double> obs, exp;
    double acc_o = 0.0, acc_e = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        acc_o += observed[i];
        acc_e += expected[i];
        if (acc_e >= min_expected) {
            obs.push_back(acc_o);
            exp.push_back(acc_e);
            acc_o = acc_e = 0.0;
        }
    }
    if (acc_e > 0.0 || acc_o > 0.0) {
        if (exp.empty()) {
            obs.push_back(acc_o);
            exp.push_back(acc_e);
        } else {
            obs.back() += acc_o;
            exp.back() += acc_e;
        }
    }
    ChiSquareResult r;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        r.statistic += (obs[i] - exp[i]) * (obs[i] - exp[i]) / exp[i];
    }
    r.dof = static_cast<double>(obs.size()) - 1.0 - fitted_parameters;
    if (r.dof < 1.0) throw ValidationError("counts", "too few populated bins for a chi-square test");
    r.p_value = boost::math::gamma_q(0.5 * r.dof, 0.5 * r.statistic);
    return r;
}

}  // namespace rabi::stats
