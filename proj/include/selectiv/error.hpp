#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace selectiv {

enum class ErrorCode {
    invalid_argument,
    dimension_mismatch,
    rank_deficient,
    degenerate_first_stage,
    zero_residual,
    not_positive_definite,
    pretest_not_passed,
    pretest_passed,
    zero_s,
    empty_truncation,
    quadrature_nonconvergence,
    sampler_init,
    sampler_stuck,
    grid_exhausted,
    parse_error,
    missing_column,
    missing_value,
    empty_support,
    nonconvergence,
    insufficient_replications,
    retention_too_low,
    branch_mismatch,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a machine-readable code so
/// callers (and the CLI) can branch on the kind of failure.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::dimension_mismatch: return "dimension mismatch";
    case ErrorCode::rank_deficient: return "rank deficient";
    case ErrorCode::degenerate_first_stage: return "degenerate first stage";
    case ErrorCode::zero_residual: return "zero residual";
    case ErrorCode::not_positive_definite: return "not positive definite";
    case ErrorCode::pretest_not_passed: return "pre-test not passed";
    case ErrorCode::pretest_passed: return "pre-test passed";
    case ErrorCode::zero_s: return "zero S";
    case ErrorCode::empty_truncation: return "empty truncation";
    case ErrorCode::quadrature_nonconvergence: return "quadrature nonconvergence";
    case ErrorCode::sampler_init: return "sampler initialization";
    case ErrorCode::sampler_stuck: return "sampler stuck";
    case ErrorCode::grid_exhausted: return "grid exhausted";
    case ErrorCode::parse_error: return "parse error";
    case ErrorCode::missing_column: return "missing column";
    case ErrorCode::missing_value: return "missing value";
    case ErrorCode::empty_support: return "empty support";
    case ErrorCode::nonconvergence: return "nonconvergence";
    case ErrorCode::insufficient_replications: return "insufficient replications";
    case ErrorCode::retention_too_low: return "retention too low";
    case ErrorCode::branch_mismatch: return "branch mismatch";
    }
    return "error";
}

} // namespace selectiv
