#pragma once

#include "selectiv/distributions.hpp"
#include "selectiv/inversion.hpp"
#include "selectiv/model.hpp"
#include "selectiv/pretest.hpp"
#include "selectiv/random.hpp"
#include "selectiv/sampler.hpp"
#include "selectiv/weak_iv_clr.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <vector>

namespace selectiv {

enum class InstrumentLaw { standard_normal };

/// Z_i ~ N(0, I_p), (delta_i, xi_i) ~ N(0, Sigma*), D = Z gamma* + xi, Y = D beta* + delta.
struct DGPConfig {
    Eigen::Index n = 1000;
    Eigen::Index p = 10;
    double beta_star = 1.0;
    Eigen::VectorXd gamma_star;
    Eigen::Matrix2d sigma_star = Eigen::Matrix2d::Identity();
    InstrumentLaw instrument_law = InstrumentLaw::standard_normal;
    std::uint64_t seed = 0;

    /// gamma*_j = r for every j, unit error variances and correlation sigma12.
    static DGPConfig equal_strength(double r, double sigma12, Eigen::Index n = 1000, Eigen::Index p = 10,
                                    double beta_star = 1.0, std::uint64_t seed = 0);
    void validate() const;
};

Eigen::MatrixXd draw_instruments(const DGPConfig& config, Rng& rng);

/// Prepared (centered) dataset for given instruments.
IVDataset generate_with_z(const DGPConfig& config, const Eigen::MatrixXd& z, Rng& rng);
IVDataset generate(const DGPConfig& config, Rng& rng);
/// Uses the stream (config.seed, 0).
IVDataset generate(const DGPConfig& config);

struct ExperimentSettings {
    double alpha = 0.05;
    std::optional<double> randomization_scale; // default: the data-driven scale
    SamplerConfig sampler;
    QuadratureConfig quad;
    GridSpec grid;
    unsigned threads = 1;
    int min_branch = 50;
};

struct ExperimentResult {
    int reps = 0;
    int branch_reps = 0;
    double passing_rate = 0.0;
    double passing_se = 0.0;
    double naive_coverage = 0.0;
    double naive_se = 0.0;
    double conditional_coverage = 0.0;
    double conditional_se = 0.0;
    std::vector<double> pvalue_samples;       // conditional, one per branch replication
    std::vector<double> naive_pvalue_samples; // same replications
    KsResult ks;                              // conditional p-values vs Uniform(0, 1)
    KsResult naive_ks;
};

/// Null replications at beta0 = beta*: conditional TSLS p-values of those that
/// pass the randomized pre-test. Throws insufficient_replications when fewer
/// than settings.min_branch replications pass.
ExperimentResult uniformity_experiment(const DGPConfig& config, double c0, int reps, const ExperimentSettings& settings);

enum class Branch { tsls_pass, clr_fail };

struct ExperimentGrid {
    DGPConfig base;
    std::vector<double> r_values;
    std::vector<double> sigma12_values;
};

struct CoverageCell {
    double r = 0.0;
    double sigma12 = 0.0;
    ExperimentResult result;
};

/// Coverage of beta* by naive and conditional intervals among replications on
/// the branch: randomized pre-test passed (TSLS) or plain F-test failed (CLR).
ExperimentResult coverage_experiment(const DGPConfig& config, double c0, int reps, Branch branch,
                                     const ExperimentSettings& settings);

std::vector<CoverageCell> coverage_experiment(const ExperimentGrid& grid, double c0, int reps, Branch branch,
                                              const ExperimentSettings& settings);

/// Columns r,sigma12,passing_rate,naive_cov,cond_cov,se.
void write_coverage_csv(std::ostream& out, const std::vector<CoverageCell>& cells);
/// Columns p_sorted,ecdf.
void write_pvalue_cdf_csv(std::ostream& out, std::vector<double> pvalues);

/// Where a retained replication's pre-test direction and sufficient statistic must fall.
struct OracleNeighborhood {
    std::optional<Eigen::VectorXd> u_ref;
    double cos_min = -1.0;
    std::optional<Eigen::VectorXd> o_ref;
    double o_radius = std::numeric_limits<double>::infinity();
    std::optional<double> lambda_ref;
    double lambda_tol = std::numeric_limits<double>::infinity();
};

struct OracleResult {
    std::vector<double> statistics;
    long attempts = 0;
    long passed = 0;
    double retention_rate = 0.0;
};

/// Brute-force conditional null sample of the TSLS statistic: with Z held
/// fixed, redraw errors under beta* = beta0 and a fresh omega per replication,
/// keep T from replications that pass and land in the neighborhood. Throws
/// retention_too_low when fewer than min_retained survive.
OracleResult rejection_oracle(const DGPConfig& config, const Eigen::MatrixXd& z, double beta0, double c0,
                              const RandomizationLaw& law, long reps, const OracleNeighborhood& hood = {},
                              std::size_t min_retained = 500, unsigned threads = 1);

} // namespace selectiv
