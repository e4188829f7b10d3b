#include "selectiv/sampler.hpp"

#include "selectiv/distributions.hpp"
#include "selectiv/error.hpp"
#include "selectiv/parallel.hpp"
#include "selectiv/test_stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

namespace selectiv {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::uint64_t kReportKey = std::numeric_limits<std::uint64_t>::max();

double robbins_monro_gain(int k) { return 1.0 / std::pow(static_cast<double>(k + 1), 0.6); }

} // namespace

RandomizationDensity RandomizationDensity::gaussian(double scale) {
    if (!(scale > 0.0)) throw Error(ErrorCode::invalid_argument, "randomization scale must be positive");
    RandomizationDensity g;
    g.gaussian_scale = scale;
    return g;
}

RandomizationDensity RandomizationDensity::from_log_density(std::function<double(const Eigen::VectorXd&)> f) {
    RandomizationDensity g;
    g.custom = std::move(f);
    return g;
}

double RandomizationDensity::log_density(const Eigen::VectorXd& x) const {
    if (gaussian_scale) return -0.5 * x.squaredNorm() / (*gaussian_scale * *gaussian_scale);
    if (!custom) throw Error(ErrorCode::invalid_argument, "randomization density is not set");
    return custom(x);
}

double ConditionalLaw::log_density(double t, double d) const {
    if (!(d > 0.0)) return kNegInf;
    const double s = d + lambda;
    const Eigen::VectorXd x = -w_st * (t / w_t) + s * u - o;
    return -0.5 * t * t / w_t + g.log_density(x) + jacobian_exponent * std::log(s);
}

ConditionalLaw build_law_tsls(const IVSummary& s, double beta0, const PretestOutcome& pre, const ModelEstimates& est,
                              const RandomizationDensity& g) {
    if (!pre.passed) throw Error(ErrorCode::pretest_not_passed, "the TSLS conditional law needs a passed pre-test");
    const double snorm2 = s.s_d.squaredNorm();
    if (!(snorm2 > 0.0)) throw Error(ErrorCode::zero_s, "S is the zero vector");
    if (pre.u.size() != s.p) throw Error(ErrorCode::dimension_mismatch, "pre-test direction has the wrong length");
    ConditionalLaw law;
    law.w_t = 1.0;
    law.w_st = est.sigma_hat(0, 1) * s.s_d / std::sqrt(est.sigma_hat(0, 0) * snorm2);
    law.t_obs = tsls_stat(s, beta0, est).statistic;
    law.o = s.s_d - law.w_st * (law.t_obs / law.w_t);
    law.u = pre.u;
    law.lambda = pre.lambda;
    law.g = g;
    law.jacobian_exponent = static_cast<int>(s.p) - 1;
    law.beta0 = beta0;
    law.d_obs = pre.d;
    return law;
}

double ExactConditionalLaw::log_density(const Eigen::VectorXd& s, double d) const {
    if (!(d > 0.0)) return kNegInf;
    const double r = d + lambda;
    const double log_f = -0.5 * (s - mu_s).squaredNorm() / (s_sd * s_sd);
    return log_f + g.log_density(r * u - s) + jacobian_exponent * std::log(r);
}

double ExactConditionalLaw::log_marginal_gaussian(double d, const Eigen::VectorXd& direction) const {
    if (!g.gaussian_scale) throw Error(ErrorCode::invalid_argument, "closed-form marginal needs Gaussian randomization");
    if (!(d > 0.0)) return kNegInf;
    const double var = s_sd * s_sd + *g.gaussian_scale * *g.gaussian_scale;
    const double r = d + lambda;
    const double p = static_cast<double>(mu_s.size());
    return -0.5 * (r * direction - mu_s).squaredNorm() / var - 0.5 * p * std::log(2 * std::numbers::pi * var) +
           jacobian_exponent * std::log(r);
}

ExactConditionalLaw exact_law(const IVSummary& s, const PretestOutcome& pre, const Eigen::VectorXd& gamma_star,
                              const Eigen::Matrix2d& sigma_star, const RandomizationDensity& g) {
    if (gamma_star.size() != s.p) throw Error(ErrorCode::dimension_mismatch, "gamma* has the wrong length");
    ExactConditionalLaw law;
    // (Z'Z)^(1/2) gamma* = ((Z'Z)^(-1/2))^(-1) gamma*.
    law.mu_s = s.ztz_inv_sqrt.ldlt().solve(gamma_star);
    law.s_sd = std::sqrt(sigma_star(1, 1));
    law.u = pre.u;
    law.lambda = pre.lambda;
    law.g = g;
    law.jacobian_exponent = static_cast<int>(s.p) - 1;
    return law;
}

double SampleResult::ess() const {
    double total = 0.0;
    for (const auto& c : chains) total += c.ess;
    return total;
}

double effective_sample_size(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 4) return static_cast<double>(n);
    const double m = mean(x);
    auto autocov = [&](std::size_t lag) {
        double s = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - m) * (x[i + lag] - m);
        return s / static_cast<double>(n);
    };
    const double c0 = autocov(0);
    if (!(c0 > 0.0)) return static_cast<double>(n);
    // Geyer: sum consecutive pairs of autocorrelations while they stay positive.
    double tau = -1.0;
    for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
        const double pair = (autocov(2 * k) + autocov(2 * k + 1)) / c0;
        if (pair <= 0.0) break;
        tau += 2.0 * pair;
    }
    tau = std::max(tau, 1.0 / static_cast<double>(n));
    return std::min(static_cast<double>(n), static_cast<double>(n) / tau);
}

double geweke_z(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 20) return 0.0;
    const auto first = x.subspan(0, n / 10);
    const auto last = x.subspan(n - n / 2);
    const double v1 = variance(first) / effective_sample_size(first);
    const double v2 = variance(last) / effective_sample_size(last);
    if (!(v1 + v2 > 0.0)) return 0.0;
    return (mean(first) - mean(last)) / std::sqrt(v1 + v2);
}

SampleResult gibbs_chain(const ConditionalLaw& law, const SamplerConfig& config, double init_t, double init_d, Rng rng) {
    if (config.n_samples < 1 || config.burn_in < 0) throw Error(ErrorCode::invalid_argument, "invalid sampler sizes");
    if (!(config.adapt_target > 0.0 && config.adapt_target < 1.0)) {
        throw Error(ErrorCode::invalid_argument, "adapt_target must lie in (0, 1)");
    }
    double t = init_t;
    double d = init_d;
    double current = law.log_density(t, d);
    if (!(init_d > 0.0) || !std::isfinite(current)) {
        throw Error(ErrorCode::sampler_init, "log-density is not finite at the initial state");
    }
    const int total = config.burn_in + config.n_samples;
    SampleResult out;
    out.per_chain = config.n_samples;
    out.t.reserve(static_cast<std::size_t>(config.n_samples));
    out.d.reserve(static_cast<std::size_t>(config.n_samples));
    ChainDiagnostics diag;
    long accepted_t = 0, accepted_d = 0, burn_t = 0, burn_d = 0;

    if (law.g.gaussian_scale && config.exact_gaussian) {
        const double c2 = *law.g.gaussian_scale * *law.g.gaussian_scale;
        const Eigen::VectorXd wt = law.w_st / law.w_t;
        const double ww = wt.squaredNorm();
        const double wu = wt.dot(law.u);
        const double wo = wt.dot(law.o);
        const double uo = law.u.dot(law.o);
        const double precision = 1.0 / law.w_t + ww / c2;
        const double t_sd = 1.0 / std::sqrt(precision);
        const int k = law.jacobian_exponent;
        for (int it = 0; it < total; ++it) {
            const double s = d + law.lambda;
            t = ((s * wu - wo) / c2) / precision + t_sd * rng.normal();
            const double mean_s = uo + wu * t;
            const double proposal = truncated_normal(rng, mean_s, std::sqrt(c2), law.lambda,
                                                     std::numeric_limits<double>::infinity());
            bool accept = proposal > law.lambda;
            if (accept && k > 0) accept = std::log(rng.uniform()) < k * (std::log(proposal) - std::log(s));
            if (accept) {
                d = proposal - law.lambda;
                if (it < config.burn_in) ++burn_d;
                else ++accepted_d;
            }
            if (it >= config.burn_in) {
                out.t.push_back(t);
                out.d.push_back(d);
            }
        }
        if (config.burn_in > 0 && burn_d == 0 && k > 0) {
            throw Error(ErrorCode::sampler_stuck, "no d-update accepted during burn-in");
        }
        diag.acceptance_t = 1.0;
        diag.acceptance_d = static_cast<double>(accepted_d) / config.n_samples;
    } else {
        double step_t = config.step_t;
        double step_d = config.step_d;
        for (int it = 0; it < total; ++it) {
            const bool burning = it < config.burn_in;
            const double t_prop = t + step_t * rng.normal();
            const double lt = law.log_density(t_prop, d);
            const double acc_t = std::isfinite(lt) ? std::min(1.0, std::exp(lt - current)) : 0.0;
            if (rng.uniform() < acc_t) {
                t = t_prop;
                current = lt;
                if (burning) ++burn_t;
                else ++accepted_t;
            }
            const double d_prop = d + step_d * rng.normal();
            double acc_d = 0.0;
            if (d_prop > 0.0) {
                const double ld = law.log_density(t, d_prop);
                if (std::isfinite(ld)) {
                    acc_d = std::min(1.0, std::exp(ld - current));
                    if (rng.uniform() < acc_d) {
                        d = d_prop;
                        current = ld;
                        if (burning) ++burn_d;
                        else ++accepted_d;
                    }
                }
            }
            if (burning) {
                const double gain = robbins_monro_gain(it);
                step_t *= std::exp(gain * (acc_t - config.adapt_target));
                step_d *= std::exp(gain * (acc_d - config.adapt_target));
            } else {
                out.t.push_back(t);
                out.d.push_back(d);
            }
        }
        if (config.burn_in > 0 && (burn_t == 0 || burn_d == 0)) {
            throw Error(ErrorCode::sampler_stuck, "no proposal accepted during burn-in; step sizes are mis-scaled");
        }
        diag.acceptance_t = static_cast<double>(accepted_t) / config.n_samples;
        diag.acceptance_d = static_cast<double>(accepted_d) / config.n_samples;
        diag.step_t = step_t;
        diag.step_d = step_d;
    }
    diag.ess = effective_sample_size(out.t);
    diag.geweke_z = geweke_z(out.t);
    out.chains.push_back(diag);
    return out;
}

std::vector<double> gibbs_sample(const ConditionalLaw& law, const SamplerConfig& config, double init_t, double init_d) {
    return gibbs_chain(law, config, init_t, init_d, Rng(config.seed, 0)).t;
}

SampleResult sample_chains(const ConditionalLaw& law, const SamplerConfig& config, double init_t, double init_d,
                           std::uint64_t key) {
    if (config.chains < 1) throw Error(ErrorCode::invalid_argument, "need at least one chain");
    SamplerConfig per = config;
    per.n_samples = std::max(1, config.n_samples / config.chains);
    std::vector<SampleResult> parts(static_cast<std::size_t>(config.chains));
    parallel_for(parts.size(), config.threads, [&](std::size_t c) {
        parts[c] = gibbs_chain(law, per, init_t, init_d, Rng(config.seed, derive_stream(key, c)));
    });
    SampleResult out;
    out.per_chain = per.n_samples;
    for (auto& part : parts) {
        out.t.insert(out.t.end(), part.t.begin(), part.t.end());
        out.d.insert(out.d.end(), part.d.begin(), part.d.end());
        out.chains.push_back(part.chains.front());
    }
    return out;
}

double conditional_pvalue(std::span<const double> draws, double t_obs, Sided sided) {
    if (draws.empty()) throw Error(ErrorCode::invalid_argument, "no draws");
    const double n = static_cast<double>(draws.size());
    double upper = 0.0, lower = 0.0;
    for (double v : draws) {
        if (v >= t_obs) upper += 1.0;
        if (v <= t_obs) lower += 1.0;
    }
    upper /= n;
    lower /= n;
    switch (sided) {
    case Sided::upper: return upper;
    case Sided::lower: return lower;
    case Sided::two_sided: return std::min(1.0, 2.0 * std::min(upper, lower));
    }
    return upper;
}

void write_draws_csv(const std::string& path, const SampleResult& result) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::invalid_argument, "cannot open " + path + " for writing");
    out.precision(17);
    out << "chain,iter,t,d\n";
    for (std::size_t i = 0; i < result.t.size(); ++i) {
        const std::size_t per = static_cast<std::size_t>(std::max(1, result.per_chain));
        out << i / per << ',' << i % per << ',' << result.t[i] << ',' << result.d[i] << '\n';
    }
}

double tsls_conditional_pvalue(const IVSummary& s, double beta0, const PretestOutcome& pre,
                               const RandomizationDensity& g, const SamplerConfig& config, std::uint64_t key,
                               SampleResult* draws) {
    const ModelEstimates est = covariance_estimates(s, beta0);
    const ConditionalLaw law = build_law_tsls(s, beta0, pre, est, g);
    SampleResult result = sample_chains(law, config, law.t_obs, law.d_obs, key);
    const double p = conditional_pvalue(result.t, law.t_obs, Sided::two_sided);
    if (draws) *draws = std::move(result);
    return p;
}

Interval naive_tsls_ci(const IVSummary& s, double alpha) {
    const double beta = tsls_estimate(s);
    const double half = normal_quantile(1.0 - alpha / 2.0) * tsls_standard_error(s);
    return {beta - half, beta + half, false, false};
}

TslsInference invert_ci(const IVSummary& s, const PretestOutcome& pre, double beta0, double alpha,
                        const RandomizationDensity& g, const SamplerConfig& config, const GridSpec& grid) {
    TslsInference out;
    out.beta0 = beta0;
    const ModelEstimates at_estimate = covariance_estimates(s, tsls_estimate(s));
    out.naive_pvalue = tsls_stat(s, beta0, at_estimate).naive_pvalue;
    out.naive_ci = naive_tsls_ci(s, alpha);
    out.t_obs = tsls_stat(s, beta0, covariance_estimates(s, beta0)).statistic;
    SamplerConfig sequential = config;
    sequential.threads = 1;
    out.conditional_pvalue = tsls_conditional_pvalue(s, beta0, pre, g, sequential, kReportKey, &out.draws);
    out.conditional_ci = invert_pvalue(
        [&](double b, std::uint64_t key) { return tsls_conditional_pvalue(s, b, pre, g, sequential, key); },
        at_estimate.beta_tsls, tsls_standard_error(s), alpha, grid, config.threads);
    return out;
}

InversionResult invert_ci_on_grid(const IVSummary& s, const PretestOutcome& pre, double alpha,
                                  const std::vector<double>& grid, const RandomizationDensity& g,
                                  const SamplerConfig& config, const GridSpec& spec) {
    SamplerConfig sequential = config;
    sequential.threads = 1;
    return invert_on_grid(
        [&](double b, std::uint64_t key) { return tsls_conditional_pvalue(s, b, pre, g, sequential, key); }, grid,
        alpha, spec, config.threads);
}

} // namespace selectiv
