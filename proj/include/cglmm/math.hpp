#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace cglmm {

inline constexpr double kLogTwoPi = 1.8378770664093454836;

// log(1 + e^x) without overflow for large |x|.
inline double log1pexp(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double logistic(double x) {
    return x > 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

inline double log_beta(double a, double b) {
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

inline double log_choose(double n, double k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

inline double log_sum_exp(std::span<const double> xs) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : xs) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double acc = 0.0;
    for (double x : xs) acc += std::exp(x - m);
    return m + std::log(acc);
}

inline bool is_nonneg_integer(double y) {
    return y >= 0.0 && std::floor(y) == y && std::isfinite(y);
}

// lgamma(x + d) - lgamma(x) without cancellation when x is huge and d is
// comparatively small (Stirling with the 1/(12z) correction; the next term
// is O(d/x^4)).
inline double lgamma_diff(double x, double d) {
    if (x < 1e5 || std::abs(d) > 0.01 * x) return std::lgamma(x + d) - std::lgamma(x);
    const double r = d / x;
    return d * std::log(x) + (x + d - 0.5) * std::log1p(r) - d +
           1.0 / (12.0 * (x + d)) - 1.0 / (12.0 * x);
}

// Sum that does not depend on the order of the inputs: sort by value first.
inline double stable_sum(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    double acc = 0.0;
    for (double x : xs) acc += x;
    return acc;
}

}  // namespace cglmm
