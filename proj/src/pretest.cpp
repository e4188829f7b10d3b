#include "selectiv/pretest.hpp"

#include "selectiv/error.hpp"
#include "selectiv/random.hpp"

#include <cmath>

namespace selectiv {

double f_statistic(const IVSummary& s) {
    const double rss = s.first_stage_rss();
    if (!(rss > 1e-14 * std::max(s.dd, 1e-300))) {
        throw Error(ErrorCode::zero_residual, "first-stage residual sum of squares vanishes");
    }
    return (s.dpzd() / static_cast<double>(s.p)) / (rss / s.dof());
}

double penalty_lambda(const IVSummary& s, double c0) {
    if (!(c0 >= 0.0)) throw Error(ErrorCode::invalid_argument, "C0 must be non-negative");
    return std::sqrt(c0 * static_cast<double>(s.p) / s.dof() * std::max(0.0, s.first_stage_rss()));
}

double default_randomization_scale(const IVSummary& s) {
    const double n = static_cast<double>(s.n);
    if (s.p < 2) return 0.5 * std::sqrt(std::max(0.0, s.first_stage_rss()) / s.dof());
    const double mean = s.s_d.mean();
    const double sd = std::sqrt((s.s_d.array() - mean).square().mean());
    return 0.5 * std::sqrt(n / (n - 1.0)) * sd;
}

double randomized_objective(const Eigen::VectorXd& v, const Eigen::VectorXd& s, double lambda,
                            const Eigen::VectorXd& omega) {
    return 0.5 * (v - s).squaredNorm() + lambda * v.norm() - omega.dot(v);
}

PretestOutcome solve_randomized(const SufficientS& s, double lambda, const Eigen::VectorXd& omega) {
    if (!(lambda >= 0.0)) throw Error(ErrorCode::invalid_argument, "lambda must be non-negative");
    if (omega.size() != s.value.size()) throw Error(ErrorCode::dimension_mismatch, "omega and S differ in length");
    PretestOutcome out;
    out.lambda = lambda;
    out.s = s.value;
    out.omega = omega;
    const Eigen::VectorXd w = s.value + omega;
    const double norm = w.norm();
    if (norm > lambda) {
        out.passed = true;
        out.d = norm - lambda;
        out.u = w / norm;
        out.v_hat = out.d * out.u;
    } else {
        out.passed = false;
        out.d = 0.0;
        out.u = Eigen::VectorXd::Zero(w.size());
        out.v_hat = Eigen::VectorXd::Zero(w.size());
    }
    return out;
}

PretestOutcome solve_randomized(const SufficientS& s, double lambda, const RandomizationLaw& law) {
    if (!(law.scale > 0.0)) throw Error(ErrorCode::invalid_argument, "randomization scale must be positive");
    Rng rng(law.seed, law.stream);
    const Eigen::VectorXd omega = law.scale * rng.normal_vector(s.value.size());
    PretestOutcome out = solve_randomized(s, lambda, omega);
    out.law = law;
    return out;
}

PretestOutcome run_pretest(const IVSummary& s, double c0, const RandomizationLaw& law) {
    PretestOutcome out = solve_randomized(s.sufficient_s(), penalty_lambda(s, c0), law);
    out.f_stat = f_statistic(s);
    out.threshold_c0 = c0;
    return out;
}

} // namespace selectiv
