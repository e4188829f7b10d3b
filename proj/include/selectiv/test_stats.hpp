#pragma once

#include "selectiv/model.hpp"

#include <Eigen/Dense>

#include <string_view>
#include <utility>

namespace selectiv {

enum class TestKind { tsls, ar, clr };

std::string_view to_string(TestKind kind);

struct TestValue {
    double statistic = 0.0;
    TestKind kind = TestKind::tsls;
    double beta0 = 0.0;
    double naive_pvalue = 1.0;
};

/// Plug-in sufficient statistics of the CLR test at one null value.
struct ClrComponents {
    Eigen::VectorXd u_hat;
    Eigen::VectorXd r_hat;
    Eigen::Matrix2d q_hat = Eigen::Matrix2d::Zero(); // (Q_U, Q_UR; Q_UR, Q_R)
    Eigen::Vector2d a0 = Eigen::Vector2d::Zero();    // (beta0, 1)
    Eigen::Vector2d b0 = Eigen::Vector2d::Zero();    // (1, -beta0)

    double q_u() const { return q_hat(0, 0); }
    double q_ur() const { return q_hat(0, 1); }
    double q_r() const { return q_hat(1, 1); }
};

/// Standardized TSLS statistic D'P_Z(Y - D beta0) / (sqrt(Sigma11) sqrt(D'P_Z D)).
/// Sigma11 is taken from `est` at whatever beta it was evaluated; the naive
/// p-value is two-sided normal.
TestValue tsls_stat(const IVSummary& s, double beta0, const ModelEstimates& est);

/// Anderson-Rubin statistic with its F(p, n-p) upper-tail p-value.
TestValue ar_stat(const IVSummary& s, double beta0);

/// The likelihood-ratio form of the CLR statistic; always >= 0.
double clr_lr(double q_u, double q_r, double q_ur);

/// CLR statistic and components. The naive p-value integrates the
/// conditional-on-Q_R law with no truncation (default quadrature settings).
std::pair<TestValue, ClrComponents> clr_stat(const IVSummary& s, double beta0, const ModelEstimates& est);

/// Components only, no p-value (for the inner loop of CI inversion).
ClrComponents clr_components(const IVSummary& s, double beta0, const Eigen::Matrix2d& omega);

} // namespace selectiv
