#include "selectiv/report.hpp"

#include <cmath>

namespace selectiv {

using nlohmann::json;

namespace {

json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json vec(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number(v(i)));
    return out;
}

json ints(const std::vector<int>& v) { return json(v); }

json to_json(const InversionResult& r) {
    json grid = json::array();
    for (const auto& g : r.evaluated) grid.push_back({number(g.beta0), number(g.pvalue)});
    return {{"interval", to_json(r.interval)}, {"degenerate", r.degenerate}, {"grid", grid}};
}

json to_json(const ChainDiagnostics& c) {
    return {{"acceptance_t", number(c.acceptance_t)}, {"acceptance_d", number(c.acceptance_d)},
            {"step_t", number(c.step_t)},             {"step_d", number(c.step_d)},
            {"ess", number(c.ess)},                   {"geweke_z", number(c.geweke_z)}};
}

json to_json(const AnalysisConfig& c) {
    return {{"c0", number(c.c0)},
            {"alpha", number(c.alpha)},
            {"test", std::string(to_string(c.test))},
            {"beta0", number(c.beta0)},
            {"randomization_scale", c.randomization_scale ? number(*c.randomization_scale) : json(nullptr)},
            {"seed", c.seed},
            {"allow_branch_override", c.allow_branch_override},
            {"lasso", c.lasso},
            {"sampler",
             {{"n_samples", c.sampler.n_samples},
              {"burn_in", c.sampler.burn_in},
              {"chains", c.sampler.chains},
              {"step_t", number(c.sampler.step_t)},
              {"step_d", number(c.sampler.step_d)},
              {"adapt_target", number(c.sampler.adapt_target)},
              {"exact_gaussian", c.sampler.exact_gaussian}}},
            {"grid",
             {{"points", c.grid.points},
              {"half_width_se", number(c.grid.half_width_se)},
              {"expansion", number(c.grid.expansion)},
              {"unbounded_at", number(c.grid.unbounded_at)},
              {"max_rounds", c.grid.max_rounds},
              {"expansion_points", c.grid.expansion_points},
              {"refine_steps", c.grid.refine_steps}}},
            {"quadrature",
             {{"panels", c.quad.panels},
              {"tol", number(c.quad.tol)},
              {"max_panels", c.quad.max_panels},
              {"endpoint_substitution", c.quad.endpoint_substitution},
              {"mode", std::string(to_string(c.quad.mode))}}}};
}

} // namespace

json to_json(const Interval& ci) {
    return {{"lower", number(ci.lower_unbounded ? -INFINITY : ci.lower)},
            {"upper", number(ci.upper_unbounded ? INFINITY : ci.upper)},
            {"lower_unbounded", ci.lower_unbounded},
            {"upper_unbounded", ci.upper_unbounded}};
}

json to_json(const PretestOutcome& pre) {
    return {{"f_stat", number(pre.f_stat)},
            {"c0", number(pre.threshold_c0)},
            {"lambda", number(pre.lambda)},
            {"s", vec(pre.s)},
            {"omega", vec(pre.omega)},
            {"v_hat", vec(pre.v_hat)},
            {"d", number(pre.d)},
            {"u", vec(pre.u)},
            {"passed", pre.passed},
            {"randomization", {{"scale", number(pre.law.scale)}, {"seed", pre.law.seed}, {"stream", pre.law.stream}}}};
}

json to_json(const InferenceReport& r) {
    json doc;
    doc["schema_version"] = report_schema_version;
    doc["config"] = to_json(r.config);
    doc["n"] = r.n;
    doc["p"] = r.p;
    doc["branch"] = std::string(to_string(r.branch));
    doc["natural_branch"] = std::string(to_string(r.natural_branch));
    doc["test"] = std::string(to_string(r.test));
    doc["beta0"] = number(r.config.beta0);
    doc["f_stat"] = number(r.f_stat);
    doc["beta_tsls"] = number(r.beta_tsls);
    doc["se_tsls"] = number(r.se_tsls);
    doc["randomization_scale"] = number(r.randomization_scale);
    doc["naive"] = {{"statistic", number(r.statistic)}, {"pvalue", number(r.naive_pvalue)}, {"ci", to_json(r.naive_ci)}};
    json cond;
    cond["pvalue"] = r.conditional_pvalue ? number(*r.conditional_pvalue) : json(nullptr);
    cond["ci"] = r.conditional_ci ? to_json(*r.conditional_ci) : json(nullptr);
    doc["conditional"] = cond;
    if (r.config.lasso) {
        doc["pretest"] = nullptr;
    } else {
        doc["pretest"] = to_json(r.pretest);
    }
    if (r.truncation) {
        doc["clr_truncation"] = {{"d0", number(r.truncation->d0)},
                                 {"d1", number(r.truncation->d1)},
                                 {"d2", number(r.truncation->d2)},
                                 {"lambda_sq", number(r.truncation->lambda_sq)},
                                 {"q_r", number(r.truncation->q_r)},
                                 {"p", r.truncation->p}};
    }
    json diag = json::array();
    for (const auto& c : r.diagnostics) diag.push_back(to_json(c));
    doc["diagnostics"] = {{"chains", diag.size()}, {"ess", number(r.ess)}, {"per_chain", diag}};
    if (r.lasso) {
        const LassoSelection& sel = r.lasso->selection;
        doc["lasso"] = {{"lambda", number(sel.lambda_l)},
                        {"omega", vec(sel.omega)},
                        {"support", ints(sel.support)},
                        {"selected", r.lasso->selected_names},
                        {"signs", ints(sel.signs)},
                        {"gamma", vec(sel.gamma)},
                        {"subgradient", vec(sel.subgradient)},
                        {"duality_gap", number(sel.duality_gap)},
                        {"randomization",
                         {{"scale", number(sel.law.scale)}, {"seed", sel.law.seed}, {"stream", sel.law.stream}}}};
    }
    doc["notes"] = r.notes;
    return doc;
}

json to_json(const ExperimentResult& e) {
    return {{"reps", e.reps},
            {"branch_reps", e.branch_reps},
            {"passing_rate", number(e.passing_rate)},
            {"passing_se", number(e.passing_se)},
            {"naive_coverage", number(e.naive_coverage)},
            {"naive_se", number(e.naive_se)},
            {"conditional_coverage", number(e.conditional_coverage)},
            {"conditional_se", number(e.conditional_se)},
            {"ks", {{"statistic", number(e.ks.statistic)}, {"pvalue", number(e.ks.pvalue)}}},
            {"naive_ks", {{"statistic", number(e.naive_ks.statistic)}, {"pvalue", number(e.naive_ks.pvalue)}}}};
}

std::string render(const json& doc) { return doc.dump(2) + "\n"; }

} // namespace selectiv
