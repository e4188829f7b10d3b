#pragma once

#include "selectiv/inversion.hpp"
#include "selectiv/lasso.hpp"
#include "selectiv/model.hpp"
#include "selectiv/pretest.hpp"
#include "selectiv/sampler.hpp"
#include "selectiv/test_stats.hpp"
#include "selectiv/weak_iv_clr.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace selectiv {

enum class TestChoice { tsls, ar, clr, automatic };

std::string_view to_string(TestChoice choice);
/// "tsls", "ar", "clr" or "auto". Throws invalid_argument.
TestChoice parse_test_choice(const std::string& name);

struct AnalysisConfig {
    double c0 = 10.0;
    double alpha = 0.05;
    TestChoice test = TestChoice::automatic;
    double beta0 = 0.0;
    std::optional<double> randomization_scale;
    SamplerConfig sampler;
    GridSpec grid;
    QuadratureConfig quad;
    std::uint64_t seed = 0;
    bool allow_branch_override = false;
    bool lasso = false; // select instruments with the randomized lasso first
    std::optional<double> lasso_lambda;
    std::string draws_path; // empty: no draw dump
    unsigned threads = 1;
};

enum class BranchKind { tsls, clr };
std::string_view to_string(BranchKind branch);

struct LassoReport {
    LassoSelection selection;
    std::vector<std::string> selected_names;
};

struct InferenceReport {
    BranchKind branch = BranchKind::tsls;
    BranchKind natural_branch = BranchKind::tsls; // what auto mode would pick
    TestKind test = TestKind::tsls;
    AnalysisConfig config;
    double randomization_scale = 0.0;
    Eigen::Index n = 0;
    Eigen::Index p = 0;
    double f_stat = 0.0;
    double beta_tsls = 0.0;
    double se_tsls = 0.0;
    double statistic = 0.0;
    double naive_pvalue = 1.0;
    std::optional<double> conditional_pvalue;
    Interval naive_ci;
    std::optional<InversionResult> conditional_ci;
    PretestOutcome pretest;
    std::optional<ClrTruncation> truncation;
    std::vector<ChainDiagnostics> diagnostics;
    double ess = 0.0;
    std::optional<LassoReport> lasso;
    std::vector<std::string> notes;
};

/// Pre-test, branch choice and inference on a prepared dataset. Throws
/// branch_mismatch when the requested test contradicts the pre-test outcome
/// and the override is not set.
InferenceReport analyze(const IVDataset& prepared, const AnalysisConfig& config);

} // namespace selectiv
