#include "selectiv/analysis.hpp"

#include "selectiv/error.hpp"
#include "selectiv/random.hpp"

#include <limits>

namespace selectiv {

namespace {

constexpr std::uint64_t lasso_key = std::numeric_limits<std::uint64_t>::max();

InversionResult naive_clr_ci(const IVSummary& s, const Eigen::Matrix2d& omega, const AnalysisConfig& c) {
    const PvalueFunction f = [&](double b, std::uint64_t) { return clr_pvalue(s, omega, b, std::nullopt, c.quad); };
    return invert_pvalue(f, tsls_estimate(s), tsls_standard_error(s), c.alpha, c.grid, c.threads);
}

void run_tsls(const IVSummary& s, const AnalysisConfig& c, double scale, InferenceReport& r) {
    r.naive_ci = naive_tsls_ci(s, c.alpha);
    if (!r.pretest.passed) {
        r.statistic = tsls_stat(s, c.beta0, covariance_estimates(s, c.beta0)).statistic;
        r.naive_pvalue = tsls_stat(s, c.beta0, covariance_estimates(s, tsls_estimate(s))).naive_pvalue;
        r.notes.push_back("randomized pre-test not passed: the conditional TSLS law is undefined, naive results only");
        return;
    }
    SamplerConfig sampler = c.sampler;
    sampler.seed = c.seed;
    sampler.threads = c.threads;
    const TslsInference inf =
        invert_ci(s, r.pretest, c.beta0, c.alpha, RandomizationDensity::gaussian(scale), sampler, c.grid);
    r.statistic = inf.t_obs;
    r.naive_pvalue = inf.naive_pvalue;
    r.conditional_pvalue = inf.conditional_pvalue;
    r.conditional_ci = inf.conditional_ci;
    r.diagnostics = inf.draws.chains;
    r.ess = inf.draws.ess();
    if (!c.draws_path.empty()) write_draws_csv(c.draws_path, inf.draws);
}

void run_clr(const IVSummary& s, const AnalysisConfig& c, InferenceReport& r) {
    const ModelEstimates est = covariance_estimates(s, tsls_estimate(s));
    const auto [tv, comp] = clr_stat(s, c.beta0, est);
    r.statistic = tv.statistic;
    r.naive_pvalue = clr_pvalue(s, est.omega_hat, c.beta0, std::nullopt, c.quad);
    if (r.f_stat >= c.c0) {
        r.naive_ci = naive_clr_ci(s, est.omega_hat, c).interval;
        r.notes.push_back("plain F-test passed (F >= C0): the conditional CLR law given F < C0 does not apply, naive results only");
        return;
    }
    const ClrInference inf = clr_conditional_inference(s, c.beta0, c.c0, c.alpha, c.quad, c.grid, c.threads);
    r.naive_ci = inf.naive_ci.interval;
    r.conditional_pvalue = inf.conditional_pvalue;
    r.conditional_ci = inf.conditional_ci;
    r.truncation = inf.truncation;
    r.notes.push_back(std::string("CLR truncation mode: ") + std::string(to_string(c.quad.mode)) +
                      "; directions u2 with an empty event get zero weight and the tail is renormalized by the total "
                      "conditioning probability");
}

void run_ar(const IVSummary& s, const AnalysisConfig& c, InferenceReport& r) {
    const TestValue tv = ar_stat(s, c.beta0);
    r.statistic = tv.statistic;
    r.naive_pvalue = tv.naive_pvalue;
    const PvalueFunction f = [&](double b, std::uint64_t) { return ar_stat(s, b).naive_pvalue; };
    r.naive_ci = invert_pvalue(f, tsls_estimate(s), tsls_standard_error(s), c.alpha, c.grid, c.threads).interval;
    r.notes.push_back("no conditional law is implemented for the AR statistic, naive results only");
}

void run_lasso(const IVDataset& prepared, const AnalysisConfig& c, InferenceReport& r) {
    Rng rng(c.seed, derive_stream(lasso_key, 1));
    const double lambda_l = c.lasso_lambda.value_or(default_lasso_lambda(prepared, rng));
    const double scale = c.randomization_scale.value_or(default_lasso_scale(prepared));
    const LassoSelection sel = solve_randomized_lasso(prepared, lambda_l, RandomizationLaw{scale, c.seed, 2});
    LassoReport lr{sel, {}};
    for (int j : sel.support) lr.selected_names.push_back(prepared.z_names.at(static_cast<std::size_t>(j)));
    r.lasso = lr;
    r.randomization_scale = scale;
    if (sel.support.empty()) throw Error(ErrorCode::empty_support, "the randomized lasso selected no instruments");

    SamplerConfig sampler = c.sampler;
    sampler.seed = c.seed;
    sampler.threads = 1;
    const RandomizationDensity g = RandomizationDensity::gaussian(scale);
    const LassoInference inf = lasso_conditional_inference(prepared, c.beta0, sel, g, sampler);
    const IVSummary ss = summarize(select_instruments(prepared, sel.support));
    r.test = TestKind::tsls;
    r.statistic = inf.t_obs;
    r.naive_pvalue = inf.naive_pvalue;
    r.conditional_pvalue = inf.conditional_pvalue;
    r.naive_ci = naive_tsls_ci(ss, c.alpha);
    sampler.threads = c.threads;
    r.conditional_ci = lasso_conditional_ci(prepared, sel, c.alpha, g, sampler, {}, c.grid);
    r.diagnostics = inf.draws.chains;
    r.ess = inf.draws.ess();
    r.beta_tsls = tsls_estimate(ss);
    r.se_tsls = tsls_standard_error(ss);
    r.notes.push_back("instruments selected by the randomized lasso; inference conditions on the selected support and signs");
}

} // namespace

std::string_view to_string(TestChoice choice) {
    switch (choice) {
    case TestChoice::tsls: return "tsls";
    case TestChoice::ar: return "ar";
    case TestChoice::clr: return "clr";
    case TestChoice::automatic: return "auto";
    }
    return "?";
}

TestChoice parse_test_choice(const std::string& name) {
    if (name == "tsls") return TestChoice::tsls;
    if (name == "ar") return TestChoice::ar;
    if (name == "clr") return TestChoice::clr;
    if (name == "auto") return TestChoice::automatic;
    throw Error(ErrorCode::invalid_argument, "unknown test \"" + name + "\" (expected tsls, ar, clr or auto)");
}

std::string_view to_string(BranchKind branch) { return branch == BranchKind::tsls ? "tsls" : "clr"; }

InferenceReport analyze(const IVDataset& prepared, const AnalysisConfig& config) {
    if (!(config.alpha > 0.0 && config.alpha < 1.0)) throw Error(ErrorCode::invalid_argument, "alpha must lie in (0, 1)");
    if (!(config.c0 >= 0.0)) throw Error(ErrorCode::invalid_argument, "C0 must be non-negative");
    InferenceReport r;
    r.config = config;
    const IVSummary s = summarize(prepared);
    r.n = s.n;
    r.p = s.p;
    r.f_stat = f_statistic(s);
    r.beta_tsls = tsls_estimate(s);
    r.se_tsls = tsls_standard_error(s);

    if (config.lasso) {
        run_lasso(prepared, config, r);
        return r;
    }

    r.randomization_scale = config.randomization_scale.value_or(default_randomization_scale(s));
    r.pretest = run_pretest(s, config.c0, RandomizationLaw{r.randomization_scale, config.seed, 0});
    r.natural_branch = r.pretest.passed ? BranchKind::tsls : BranchKind::clr;

    switch (config.test) {
    case TestChoice::automatic:
        r.branch = r.natural_branch;
        r.test = r.branch == BranchKind::tsls ? TestKind::tsls : TestKind::clr;
        break;
    case TestChoice::tsls:
        r.branch = BranchKind::tsls;
        r.test = TestKind::tsls;
        break;
    case TestChoice::clr:
        r.branch = BranchKind::clr;
        r.test = TestKind::clr;
        break;
    case TestChoice::ar:
        r.branch = r.natural_branch;
        r.test = TestKind::ar;
        break;
    }
    if (r.branch != r.natural_branch) {
        if (!config.allow_branch_override) {
            throw Error(ErrorCode::branch_mismatch,
                        std::string("the pre-test ") + (r.pretest.passed ? "passed" : "failed") + " but the " +
                            std::string(to_string(r.branch)) + " branch was requested; pass the override flag to force it");
        }
        r.notes.push_back("branch forced against the pre-test outcome");
    }

    if (r.test == TestKind::ar) {
        run_ar(s, config, r);
    } else if (r.branch == BranchKind::tsls) {
        run_tsls(s, config, r.randomization_scale, r);
    } else {
        run_clr(s, config, r);
    }
    return r;
}

} // namespace selectiv
