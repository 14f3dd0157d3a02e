#pragma once

#include "fblab/lattice.hpp"

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace fblab {

/// Monte Carlo estimate of a disorder-averaged quantity.
struct EnsembleEstimate {
    std::string quantity;
    std::size_t n_samples = 0;
    double value = 0.0;
    Interval ci;
    std::uint64_t seed = 0;
};

inline constexpr double kConfidenceLevel = 0.95;

/// Exact binomial (Clopper-Pearson) interval for `hits` successes in `n`
/// trials. Interior counts get the two-sided interval; at hits == 0 or
/// hits == n the single nontrivial bound is one-sided at the full level,
/// which gives the familiar [0, ~3/n] for zero hits.
inline Interval clopper_pearson(std::size_t hits, std::size_t n, double level = kConfidenceLevel) {
    if (n == 0) throw std::invalid_argument("clopper_pearson: zero trials");
    if (hits > n) throw std::invalid_argument("clopper_pearson: hits exceed trials");
    const double alpha = 1.0 - level;
    const auto x = static_cast<double>(hits);
    const auto nn = static_cast<double>(n);
    if (hits == 0) return {0.0, 1.0 - std::pow(alpha, 1.0 / nn)};
    if (hits == n) return {std::pow(alpha, 1.0 / nn), 1.0};
    using boost::math::beta_distribution;
    const double lo = boost::math::quantile(beta_distribution<double>(x, nn - x + 1.0), alpha / 2.0);
    const double hi = boost::math::quantile(beta_distribution<double>(x + 1.0, nn - x), 1.0 - alpha / 2.0);
    return {lo, hi};
}

inline double normal_quantile(double p) {
    return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), p);
}

struct MeanStats {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation
    double half_width = 0.0;
    Interval ci;
};

/// Normal-approximation confidence interval for a sample mean. Summation is
/// sequential so the result does not depend on how samples were produced.
inline MeanStats mean_with_ci(std::span<const double> xs, double level = kConfidenceLevel) {
    MeanStats s;
    if (xs.empty()) return s;
    double sum = 0.0;
    for (double x : xs) sum += x;
    s.mean = sum / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    const double z = normal_quantile(0.5 + level / 2.0);
    s.half_width = z * s.stddev / std::sqrt(static_cast<double>(xs.size()));
    s.ci = {s.mean - s.half_width, s.mean + s.half_width};
    return s;
}

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    double slope_stderr = 0.0;
    std::size_t n = 0;
};

/// Ordinary (optionally weighted) least squares y = intercept + slope * x.
inline LinearFit least_squares(std::span<const double> x, std::span<const double> y,
                               std::span<const double> w = {}) {
    LinearFit f;
    f.n = x.size();
    if (x.size() != y.size() || (!w.empty() && w.size() != x.size()))
        throw std::invalid_argument("least_squares: size mismatch");
    if (x.size() < 2) throw std::invalid_argument("least_squares: need at least two points");
    double sw = 0, sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double wi = w.empty() ? 1.0 : w[i];
        sw += wi;
        sx += wi * x[i];
        sy += wi * y[i];
    }
    const double mx = sx / sw, my = sy / sw;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double wi = w.empty() ? 1.0 : w[i];
        sxx += wi * (x[i] - mx) * (x[i] - mx);
        sxy += wi * (x[i] - mx) * (y[i] - my);
        syy += wi * (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0) throw std::invalid_argument("least_squares: degenerate abscissae");
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double sse = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double wi = w.empty() ? 1.0 : w[i];
        const double r = y[i] - f.intercept - f.slope * x[i];
        sse += wi * r * r;
    }
    f.r2 = syy > 0 ? 1.0 - sse / syy : 1.0;
    if (w.empty()) {
        f.slope_stderr = x.size() > 2 ? std::sqrt(sse / static_cast<double>(x.size() - 2) / sxx) : 0.0;
    } else {
        // Weights are inverse variances.
        f.slope_stderr = std::sqrt(1.0 / sxx);
    }
    return f;
}

}  // namespace fblab
