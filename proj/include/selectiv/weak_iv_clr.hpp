#pragma once

#include "selectiv/inversion.hpp"
#include "selectiv/model.hpp"

#include <optional>
#include <string_view>

namespace selectiv {

/// Event {d0 q_U + d1 u2 sqrt(q_R q_U) + d2 q_R <= lambda_sq}, i.e. ||S||^2 <= lambda^2
/// written in the CLR coordinates at one null value.
struct ClrTruncation {
    double d0 = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
    double lambda_sq = 0.0;
    double q_r = 0.0;
    int p = 1;
};

/// How the truncated inner probability is normalized over u2.
///  joint: ratio of the integrated numerator and integrated conditioning
///         probability, the conditional probability of the whole event.
///  per_direction: integrate P(tail | event, u2) directly, u2 values whose
///         event is empty get zero weight.
enum class TruncationMode { joint, per_direction };

std::string_view to_string(TruncationMode mode);

struct QuadratureConfig {
    int panels = 2048;               // even
    bool endpoint_substitution = true;
    double tol = 1e-7;
    int max_panels = 1 << 16;
    TruncationMode mode = TruncationMode::joint;
};

/// Gamma(p/2) / (sqrt(pi) Gamma((p-1)/2)); requires p >= 2.
double k4_constant(int p);

/// P(LR >= t | Q_R = q_R [, truncation]) under the null, by composite Simpson
/// integration over u2 with Richardson panel doubling. t <= 0 returns 1.
double clr_tail(double t, double q_r, int p, const std::optional<ClrTruncation>& trunc, const QuadratureConfig& quad);

/// Panel count at which the last clr_tail call on this thread converged (diagnostics).
int last_clr_panels();

/// Truncation coefficients at beta0 from Omega-hat and the non-randomized penalty.
ClrTruncation clr_truncation(const IVSummary& s, double beta0, const Eigen::Matrix2d& omega, double c0, double q_r);

/// Interval [lo, hi] in sqrt(q_U) satisfying the truncation at direction u2.
/// Returns false when the set is empty (or a single point).
bool truncation_interval(const ClrTruncation& tr, double u2, double& lo, double& hi);

struct ClrInference {
    double beta0 = 0.0;
    double statistic = 0.0;
    double q_r = 0.0;
    double f_stat = 0.0;
    double naive_pvalue = 1.0;
    double conditional_pvalue = 1.0;
    ClrTruncation truncation;
    InversionResult naive_ci;
    InversionResult conditional_ci;
};

/// CLR inference conditional on failing the plain F-test F < C0. Throws
/// pretest_passed when F >= C0.
ClrInference clr_conditional_inference(const IVSummary& s, double beta0, double c0, double alpha,
                                       const QuadratureConfig& quad = {}, const GridSpec& grid = {},
                                       unsigned threads = 1);

/// CLR p-value at beta0, naive (c0 absent) or conditional on F < c0.
double clr_pvalue(const IVSummary& s, const Eigen::Matrix2d& omega, double beta0, std::optional<double> c0,
                  const QuadratureConfig& quad);

} // namespace selectiv
