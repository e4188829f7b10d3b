#pragma once

#include "selectiv/inversion.hpp"
#include "selectiv/model.hpp"
#include "selectiv/pretest.hpp"
#include "selectiv/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace selectiv {

/// Log-density (up to a constant) of the randomization omega. The Gaussian
/// case is recognized by the samplers and handled with exact conditional draws.
struct RandomizationDensity {
    std::optional<double> gaussian_scale;
    std::function<double(const Eigen::VectorXd&)> custom;

    static RandomizationDensity gaussian(double scale);
    static RandomizationDensity from_log_density(std::function<double(const Eigen::VectorXd&)> f);

    double log_density(const Eigen::VectorXd& x) const;
};

/// Unnormalized conditional null density of (t, d):
///   log phi(t; 0, w_t) + log g(-w_st t / w_t + (d + lambda) u - o) + k log(d + lambda),  d > 0.
struct ConditionalLaw {
    double w_t = 1.0;
    Eigen::VectorXd w_st;
    Eigen::VectorXd o;
    Eigen::VectorXd u;
    double lambda = 0.0;
    RandomizationDensity g;
    int jacobian_exponent = 0;
    double beta0 = 0.0;
    double t_obs = 0.0;
    double d_obs = 0.0;

    double log_density(double t, double d) const;
};

/// Law of the standardized TSLS statistic at beta0 given that the randomized
/// pre-test passed in direction u. `est` supplies Sigma-hat at the tested beta0.
ConditionalLaw build_law_tsls(const IVSummary& s, double beta0, const PretestOutcome& pre, const ModelEstimates& est,
                              const RandomizationDensity& g);

/// Exact density over (S, d) at known nuisance parameters, with u fixed:
///   f(S) g((d + lambda) u - S) (d + lambda)^(p-1),  S ~ N(mu_s, s_sd^2 I).
struct ExactConditionalLaw {
    Eigen::VectorXd mu_s;
    double s_sd = 1.0;
    Eigen::VectorXd u;
    double lambda = 0.0;
    RandomizationDensity g;
    int jacobian_exponent = 0;

    double log_density(const Eigen::VectorXd& s, double d) const;
    /// Normalized log-density of (d, u) after integrating S out; Gaussian g only.
    /// Integrating exp() over d > 0 and the unit sphere gives P(pass).
    double log_marginal_gaussian(double d, const Eigen::VectorXd& direction) const;
};

ExactConditionalLaw exact_law(const IVSummary& s, const PretestOutcome& pre, const Eigen::VectorXd& gamma_star,
                              const Eigen::Matrix2d& sigma_star, const RandomizationDensity& g);

struct SamplerConfig {
    int n_samples = 10000; // post-burn-in draws pooled over chains
    int burn_in = 2000;    // per chain
    int chains = 4;
    double step_t = 1.0;
    double step_d = 1.0;
    double adapt_target = 0.44;
    std::uint64_t seed = 0;
    bool exact_gaussian = true; // conditional-Gaussian updates when g is Gaussian
    unsigned threads = 1;
};

struct ChainDiagnostics {
    double acceptance_t = 0.0;
    double acceptance_d = 0.0;
    double step_t = 0.0;
    double step_d = 0.0;
    double ess = 0.0;
    double geweke_z = 0.0;
};

struct SampleResult {
    std::vector<double> t;
    std::vector<double> d;
    std::vector<ChainDiagnostics> chains; // draws of chain c occupy a contiguous block
    int per_chain = 0;

    double ess() const;
};

/// One chain of config.n_samples post-burn-in t-draws (Metropolis-within-Gibbs,
/// or exact conditional updates for Gaussian g). Throws sampler_init when the
/// start has zero density and sampler_stuck when burn-in accepts nothing.
SampleResult gibbs_chain(const ConditionalLaw& law, const SamplerConfig& config, double init_t, double init_d, Rng rng);

/// Convenience: the t-draws of a single chain seeded by config.seed.
std::vector<double> gibbs_sample(const ConditionalLaw& law, const SamplerConfig& config, double init_t, double init_d);

/// config.chains independent chains, each with n_samples / chains draws, on
/// substreams keyed by (config.seed, key, chain).
SampleResult sample_chains(const ConditionalLaw& law, const SamplerConfig& config, double init_t, double init_d,
                           std::uint64_t key);

enum class Sided { upper, lower, two_sided };

/// Monte Carlo tail frequency of the draws at t_obs.
double conditional_pvalue(std::span<const double> draws, double t_obs, Sided sided);

/// Initial-positive-sequence effective sample size.
double effective_sample_size(std::span<const double> x);
/// Geweke z comparing the first 10% and last 50% of a chain.
double geweke_z(std::span<const double> x);

/// Draws as CSV with columns chain,iter,t,d.
void write_draws_csv(const std::string& path, const SampleResult& result);

/// Conditional two-sided TSLS p-value at one null value. The sampler stream
/// is keyed by `key` (typically the grid index).
double tsls_conditional_pvalue(const IVSummary& s, double beta0, const PretestOutcome& pre,
                               const RandomizationDensity& g, const SamplerConfig& config, std::uint64_t key,
                               SampleResult* draws = nullptr);

/// Naive Wald interval beta_tsls +- z_(1-alpha/2) SE.
Interval naive_tsls_ci(const IVSummary& s, double alpha);

struct TslsInference {
    double beta0 = 0.0;
    double t_obs = 0.0;
    double naive_pvalue = 1.0;
    double conditional_pvalue = 1.0;
    Interval naive_ci;
    InversionResult conditional_ci;
    SampleResult draws; // the chains at beta0
};

/// Conditional p-value at beta0 plus the inverted conditional CI on the
/// default grid around beta_tsls. u and omega stay at their realized values;
/// Sigma-hat, W_ST and O are recomputed at every grid point.
TslsInference invert_ci(const IVSummary& s, const PretestOutcome& pre, double beta0, double alpha,
                        const RandomizationDensity& g, const SamplerConfig& config, const GridSpec& grid = {});

/// Same on an explicit grid of null values (no expansion).
InversionResult invert_ci_on_grid(const IVSummary& s, const PretestOutcome& pre, double alpha,
                                  const std::vector<double>& grid, const RandomizationDensity& g,
                                  const SamplerConfig& config, const GridSpec& spec = {});

} // namespace selectiv
