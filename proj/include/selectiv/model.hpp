#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace selectiv {

/// Outcome, treatment, instruments and optional exogenous covariates for one
/// IV analysis. Column names are carried only for error messages and reports.
struct IVDataset {
    Eigen::VectorXd y;
    Eigen::VectorXd d;
    Eigen::MatrixXd z;
    std::optional<Eigen::MatrixXd> x;
    std::vector<std::string> z_names;
    std::vector<std::string> x_names;

    Eigen::Index n() const { return y.size(); }
    Eigen::Index p() const { return z.cols(); }
};

/// Centers Y, D, Z and partials the covariates X out of all three
/// (Frisch-Waugh-Lovell). Constant covariate columns are absorbed by the
/// centering. Throws rank_deficient naming the dependent columns of [Z X].
IVDataset prepare(const IVDataset& raw);

/// Column names of [Z X] that are linear combinations of earlier columns,
/// using the singular-value-ratio threshold of prepare().
std::vector<std::string> dependent_columns(const Eigen::MatrixXd& m, const std::vector<std::string>& names);

/// (Z'Z)^(-1/2) Z'D: the instrument-space coordinates of the treatment.
struct SufficientS {
    Eigen::VectorXd value;
};

/// Cached reductions of a prepared dataset. Every statistic in the library is a
/// function of these p-vectors and three scalars, which keeps the per-beta0
/// work in confidence-interval inversion at O(p).
struct IVSummary {
    Eigen::Index n = 0;
    Eigen::Index p = 0;
    Eigen::VectorXd s_y;          // (Z'Z)^(-1/2) Z'Y
    Eigen::VectorXd s_d;          // (Z'Z)^(-1/2) Z'D
    Eigen::MatrixXd ztz_inv_sqrt; // symmetric root, eigenvalue floor 1e-12
    Eigen::VectorXd gamma_hat;    // (Z'Z)^(-1) Z'D
    double yy = 0.0;
    double dd = 0.0;
    double yd = 0.0;

    double dpzd() const { return s_d.squaredNorm(); }
    double dpzy() const { return s_d.dot(s_y); }
    double ypzy() const { return s_y.squaredNorm(); }
    /// First-stage residual sum of squares D'(I - P_Z)D.
    double first_stage_rss() const { return dd - dpzd(); }
    double dof() const { return static_cast<double>(n - p); }
    SufficientS sufficient_s() const { return {s_d}; }
};

IVSummary summarize(const IVDataset& prepared);

/// Symmetric inverse square root via eigendecomposition, eigenvalues floored at 1e-12.
Eigen::MatrixXd inverse_sqrt_spd(const Eigen::MatrixXd& a);

struct ModelEstimates {
    double beta_tsls = 0.0;
    Eigen::Matrix2d omega_hat = Eigen::Matrix2d::Zero();
    Eigen::Matrix2d sigma_hat = Eigen::Matrix2d::Zero();
    double sigma_beta = 0.0; // the beta at which sigma_hat was evaluated
    Eigen::VectorXd gamma_hat;
};

/// D'P_Z Y / D'P_Z D. Throws degenerate_first_stage when D'P_Z D is numerically zero.
double tsls_estimate(const IVSummary& s);

/// Omega-hat, Sigma-hat(beta0) and gamma-hat. Throws not_positive_definite.
ModelEstimates covariance_estimates(const IVSummary& s, double beta0);

/// Sigma(beta) = B^-1 Omega B^-T with B = [[1, beta], [0, 1]].
Eigen::Matrix2d sigma_from_omega(const Eigen::Matrix2d& omega, double beta);
Eigen::Matrix2d omega_from_sigma(const Eigen::Matrix2d& sigma, double beta);

/// Conventional Wald standard error of the TSLS estimate, sqrt(Sigma11(beta_tsls) / D'P_Z D).
double tsls_standard_error(const IVSummary& s);

} // namespace selectiv
