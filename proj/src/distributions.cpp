#include "selectiv/distributions.hpp"

#include "selectiv/error.hpp"

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace selectiv {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::invalid_argument, "normal quantile needs p in (0,1)");
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double two_sided_normal_pvalue(double z) {
    if (std::isnan(z)) return std::numeric_limits<double>::quiet_NaN();
    return std::min(1.0, std::erfc(std::abs(z) / std::numbers::sqrt2));
}

double chi2_cdf(double x, double df) {
    if (x <= 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    return boost::math::gamma_p(df / 2, x / 2);
}

double chi2_sf(double x, double df) {
    if (x <= 0.0) return 1.0;
    if (std::isinf(x)) return 0.0;
    return boost::math::gamma_q(df / 2, x / 2);
}

double chi2_interval_probability(double lo, double hi, double df) {
    lo = std::max(lo, 0.0);
    if (!(hi > lo)) return 0.0;
    // Both bounds above the mean: difference of upper tails is accurate.
    if (lo >= df) return std::max(0.0, chi2_sf(lo, df) - chi2_sf(hi, df));
    return std::max(0.0, chi2_cdf(hi, df) - chi2_cdf(lo, df));
}

double f_sf(double x, double d1, double d2) {
    if (x <= 0.0) return 1.0;
    if (std::isinf(x)) return 0.0;
    return boost::math::cdf(boost::math::complement(boost::math::fisher_f_distribution<double>(d1, d2), x));
}

double kolmogorov_pvalue(double statistic, double effective_n) {
    const double root = std::sqrt(effective_n);
    const double lambda = (root + 0.12 + 0.11 / root) * statistic;
    if (lambda < 1e-3) return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int j = 1; j <= 200; ++j) {
        const double term = sign * std::exp(-2.0 * j * j * lambda * lambda);
        sum += term;
        if (std::abs(term) < 1e-16 * std::abs(sum)) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_test(std::span<const double> sample, const std::function<double(double)>& cdf) {
    if (sample.empty()) throw Error(ErrorCode::invalid_argument, "KS test on empty sample");
    std::vector<double> sorted(sample.begin(), sample.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double f = cdf(sorted[i]);
        d = std::max({d, (i + 1) / n - f, f - i / n});
    }
    return {d, kolmogorov_pvalue(d, n)};
}

KsResult ks_uniform_test(std::span<const double> sample) {
    return ks_test(sample, [](double x) { return std::clamp(x, 0.0, 1.0); });
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw Error(ErrorCode::invalid_argument, "KS test on empty sample");
    std::vector<double> x(a.begin(), a.end());
    std::vector<double> y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const double nx = static_cast<double>(x.size());
    const double ny = static_cast<double>(y.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < x.size() && j < y.size()) {
        const double v = std::min(x[i], y[j]);
        while (i < x.size() && x[i] <= v) ++i;
        while (j < y.size() && y[j] <= v) ++j;
        d = std::max(d, std::abs(i / nx - j / ny));
    }
    return {d, kolmogorov_pvalue(d, nx * ny / (nx + ny))};
}

double mean(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v;
    return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
    if (x.size() < 2) return 0.0;
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

} // namespace selectiv
