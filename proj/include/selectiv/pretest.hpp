#pragma once

#include "selectiv/model.hpp"

#include <Eigen/Dense>

#include <cstdint>

namespace selectiv {

/// Gaussian randomization: omega ~ N(0, scale^2 I_p), drawn from the Philox
/// stream (seed, stream).
struct RandomizationLaw {
    double scale = 1.0;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
};

struct PretestOutcome {
    double f_stat = 0.0;
    double threshold_c0 = 10.0;
    double lambda = 0.0;
    Eigen::VectorXd s;     // the sufficient statistic the program was solved at
    Eigen::VectorXd omega;
    Eigen::VectorXd v_hat;
    double d = 0.0;
    Eigen::VectorXd u;     // zero vector when not passed
    bool passed = false;
    RandomizationLaw law;
};

/// (||S||^2 / p) / (RSS / (n - p)). Throws zero_residual on a perfect first-stage fit.
double f_statistic(const IVSummary& s);

/// sqrt(C0 * p / (n - p) * RSS), so that F >= C0 exactly when ||S|| >= lambda.
double penalty_lambda(const IVSummary& s, double c0);

/// 0.5 sqrt(n/(n-1)) times the standard deviation of the entries of S. With a
/// single instrument that deviation is undefined and 0.5 sqrt(RSS/(n-p)) is used.
double default_randomization_scale(const IVSummary& s);

/// Exact minimizer of 0.5||v - S||^2 + lambda ||v|| - omega'v with omega drawn from `law`.
PretestOutcome solve_randomized(const SufficientS& s, double lambda, const RandomizationLaw& law);

/// Same program with an explicit omega (use a zero vector for the plain F-test).
PretestOutcome solve_randomized(const SufficientS& s, double lambda, const Eigen::VectorXd& omega);

double randomized_objective(const Eigen::VectorXd& v, const Eigen::VectorXd& s, double lambda,
                            const Eigen::VectorXd& omega);

/// F-statistic, penalty and randomized program in one call.
PretestOutcome run_pretest(const IVSummary& s, double c0, const RandomizationLaw& law);

} // namespace selectiv
