#pragma once

#include <functional>
#include <span>
#include <vector>

namespace selectiv {

double normal_cdf(double x);
double normal_sf(double x);
double normal_quantile(double p);
/// 2 * P(N(0,1) >= |z|).
double two_sided_normal_pvalue(double z);

double chi2_cdf(double x, double df);
double chi2_sf(double x, double df);
/// P(lo <= X <= hi) for X ~ chi2(df); picks the lower or upper tail so that the
/// difference never cancels catastrophically. `hi` may be +infinity.
double chi2_interval_probability(double lo, double hi, double df);

/// Upper tail of the F(d1, d2) distribution.
double f_sf(double x, double d1, double d2);

/// Asymptotic Kolmogorov tail with Stephens' finite-sample correction.
double kolmogorov_pvalue(double statistic, double effective_n);

struct KsResult {
    double statistic = 0.0;
    double pvalue = 1.0;
};

/// One-sample KS test against a continuous CDF.
KsResult ks_test(std::span<const double> sample, const std::function<double(double)>& cdf);
KsResult ks_uniform_test(std::span<const double> sample);
/// Two-sample KS distance and p-value.
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> x);
double variance(std::span<const double> x);

} // namespace selectiv
