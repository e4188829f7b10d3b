#pragma once

#include "selectiv/inversion.hpp"
#include "selectiv/model.hpp"
#include "selectiv/pretest.hpp"
#include "selectiv/random.hpp"
#include "selectiv/sampler.hpp"

#include <Eigen/Dense>

#include <vector>

namespace selectiv {

struct LassoSelection {
    double lambda_l = 0.0;
    Eigen::VectorXd omega;
    Eigen::VectorXd gamma;        // solution
    std::vector<int> support;     // E, ascending
    std::vector<int> signs;       // s_E, aligned with support
    Eigen::VectorXd subgradient;  // u: u_E = s_E, |u_-E| <= 1
    double objective = 0.0;
    double duality_gap = 0.0;
    int sweeps = 0;
    RandomizationLaw law;
};

struct LassoSolverOptions {
    double gap_tol = 1e-10; // relative to max(1, |objective|)
    int max_sweeps = 100000;
};

/// 0.5||D - Z gamma||^2 + lambda ||gamma||_1 - omega'gamma.
double lasso_objective(const Eigen::MatrixXd& z, const Eigen::VectorXd& d, double lambda, const Eigen::VectorXd& omega,
                       const Eigen::VectorXd& gamma);

/// Coordinate descent on the Gram matrix until the duality gap is below
/// tolerance, then an active-set polish. Throws nonconvergence.
LassoSelection solve_randomized_lasso(const Eigen::MatrixXd& z, const Eigen::VectorXd& d, double lambda_l,
                                      const Eigen::VectorXd& omega, const LassoSolverOptions& options = {});

/// Same with omega ~ N(0, law.scale^2 I) from the law's stream.
LassoSelection solve_randomized_lasso(const IVDataset& prepared, double lambda_l, const RandomizationLaw& law,
                                      const LassoSolverOptions& options = {});

/// 1.1 times the median over `draws` resamples of ||Z'e*||_inf, e* drawn with
/// replacement from the OLS first-stage residuals.
double default_lasso_lambda(const IVDataset& prepared, Rng& rng, int draws = 200);

/// 0.5 sqrt(sigma22_hat * tr(Z'Z) / p).
double default_lasso_scale(const IVDataset& prepared);

struct LassoLawOptions {
    bool full_z_statistic = false; // T on all instruments instead of Z_E
    bool keep_states = false;
};

/// Unnormalized law over v = (t, gamma_E, u_-E):
///   -t^2/2 + log g(A v + b), with sign(gamma_E) = s_E and |u_-E| <= 1.
struct LassoLaw {
    Eigen::MatrixXd a;
    Eigen::VectorXd b;
    std::vector<int> support;
    std::vector<int> signs;
    std::vector<int> inactive;
    Eigen::VectorXd w_st;
    Eigen::VectorXd o;
    double lambda_l = 0.0;
    RandomizationDensity g;
    double beta0 = 0.0;
    double t_obs = 0.0;
    Eigen::VectorXd init; // the realized (T_obs, gamma_E, u_-E)

    Eigen::Index dim() const { return a.cols(); }
    bool feasible(const Eigen::VectorXd& v) const;
    double log_density(const Eigen::VectorXd& v) const;
};

LassoLaw build_lasso_law(const IVDataset& prepared, double beta0, const LassoSelection& sel,
                         const RandomizationDensity& g, const LassoLawOptions& options = {});

struct LassoSampleResult {
    std::vector<double> t;
    Eigen::MatrixXd states; // one row per retained draw when keep_states is set
    std::vector<ChainDiagnostics> chains;

    double ess() const;
};

LassoSampleResult sample_lasso_law(const LassoLaw& law, const SamplerConfig& config, std::uint64_t key,
                                   bool keep_states = false);

struct LassoInference {
    double beta0 = 0.0;
    double t_obs = 0.0;
    double naive_pvalue = 1.0;
    double conditional_pvalue = 1.0;
    LassoSampleResult draws;
};

/// Conditional two-sided TSLS p-value at beta0 given the selected support and signs.
LassoInference lasso_conditional_inference(const IVDataset& prepared, double beta0, const LassoSelection& sel,
                                           const RandomizationDensity& g, const SamplerConfig& config,
                                           const LassoLawOptions& options = {});

/// Inverted conditional CI around the TSLS estimate on the selected instruments.
InversionResult lasso_conditional_ci(const IVDataset& prepared, const LassoSelection& sel, double alpha,
                                     const RandomizationDensity& g, const SamplerConfig& config,
                                     const LassoLawOptions& options = {}, const GridSpec& grid = {});

/// The prepared dataset restricted to the given instrument columns.
IVDataset select_instruments(const IVDataset& prepared, const std::vector<int>& columns);

} // namespace selectiv
