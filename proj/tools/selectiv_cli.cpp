#include "selectiv/analysis.hpp"
#include "selectiv/csv.hpp"
#include "selectiv/error.hpp"
#include "selectiv/report.hpp"
#include "selectiv/simulation.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

using namespace selectiv;

namespace {

void emit(const std::string& text, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::invalid_argument, "cannot write " + path);
    out << text;
}

struct DataOptions {
    std::string path;
    ColumnSpec columns;
};

void add_data_options(CLI::App* app, DataOptions& o) {
    app->add_option("data", o.path, "input CSV with a header row")->required()->check(CLI::ExistingFile);
    app->add_option("--y", o.columns.y, "outcome column")->capture_default_str();
    app->add_option("--d", o.columns.d, "treatment column")->capture_default_str();
    app->add_option("--z", o.columns.z, "instrument columns (default: every column with the z prefix)")->delimiter(',');
    app->add_option("--x", o.columns.x, "exogenous covariate columns")->delimiter(',');
    app->add_option("--z-prefix", o.columns.z_prefix, "instrument name prefix")->capture_default_str();
    app->add_option("--x-prefix", o.columns.x_prefix, "covariate name prefix (empty: none)");
}

void add_sampler_options(CLI::App* app, SamplerConfig& s) {
    app->add_option("--samples", s.n_samples, "post-burn-in draws pooled over chains")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--burn-in", s.burn_in, "burn-in per chain")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--chains", s.chains, "independent chains")->capture_default_str()->check(CLI::PositiveNumber);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Selective inference after an instrument-strength pre-test"};
    app.set_config("--config", "", "key-value config file (command-line flags override it)");
    app.require_subcommand(1);

    // analyze
    DataOptions data;
    AnalysisConfig cfg;
    std::string test = "auto", out, truncation = "joint";
    std::optional<double> scale, lasso_lambda;
    auto* analyze_cmd = app.add_subcommand("analyze", "pre-test, branch and conditional inference; writes a JSON report");
    add_data_options(analyze_cmd, data);
    add_sampler_options(analyze_cmd, cfg.sampler);
    analyze_cmd->add_option("--c0", cfg.c0, "F-test threshold")->capture_default_str();
    analyze_cmd->add_option("--alpha", cfg.alpha, "level of the confidence intervals")->capture_default_str();
    analyze_cmd->add_option("--test", test, "tsls, ar, clr or auto")->capture_default_str();
    analyze_cmd->add_option("--beta0", cfg.beta0, "null value")->capture_default_str();
    analyze_cmd->add_option("--seed", cfg.seed, "seed for the randomization and the sampler")->capture_default_str();
    analyze_cmd->add_option("--scale", scale, "randomization standard deviation (default: data driven)");
    analyze_cmd->add_option("--grid-points", cfg.grid.points, "initial CI grid size")->capture_default_str();
    analyze_cmd->add_option("--truncation", truncation, "CLR truncation: joint or per_direction")->capture_default_str();
    analyze_cmd->add_flag("--override", cfg.allow_branch_override, "allow a test that contradicts the pre-test outcome");
    analyze_cmd->add_flag("--lasso", cfg.lasso, "select instruments with the randomized lasso first");
    analyze_cmd->add_option("--lasso-lambda", lasso_lambda, "lasso penalty (default: bootstrap rule)");
    analyze_cmd->add_option("--draws", cfg.draws_path, "CSV dump of the sampler draws at beta0");
    analyze_cmd->add_option("--threads", cfg.threads, "worker threads")->capture_default_str();
    analyze_cmd->add_option("--out", out, "report path (default stdout)");

    // pretest
    DataOptions pdata;
    double p_c0 = 10.0;
    std::uint64_t p_seed = 0;
    std::optional<double> p_scale;
    std::string p_out;
    auto* pretest = app.add_subcommand("pretest", "F statistic and the randomized pre-test; writes JSON");
    add_data_options(pretest, pdata);
    pretest->add_option("--c0", p_c0, "F-test threshold")->capture_default_str();
    pretest->add_option("--seed", p_seed, "randomization seed")->capture_default_str();
    pretest->add_option("--scale", p_scale, "randomization standard deviation (default: data driven)");
    pretest->add_option("--out", p_out, "output path (default stdout)");

    // simulate
    std::string kind = "uniformity", branch = "tsls", s_out, s_csv;
    std::vector<double> r_values{0.3}, s12_values{0.8};
    int n = 1000, p = 10, reps = 500;
    double s_c0 = 10.0, s_alpha = 0.05;
    std::uint64_t s_seed = 0;
    unsigned s_threads = 1;
    ExperimentSettings settings;
    auto* simulate = app.add_subcommand("simulate", "uniformity or coverage experiments on the equal-strength design");
    simulate->add_option("--kind", kind, "uniformity or coverage")->capture_default_str();
    simulate->add_option("--branch", branch, "tsls (pre-test passed) or clr (F-test failed)")->capture_default_str();
    simulate->add_option("--r", r_values, "first-stage coefficients")->delimiter(',');
    simulate->add_option("--sigma12", s12_values, "error correlations")->delimiter(',');
    simulate->add_option("--n", n)->capture_default_str();
    simulate->add_option("--p", p)->capture_default_str();
    simulate->add_option("--reps", reps)->capture_default_str();
    simulate->add_option("--c0", s_c0)->capture_default_str();
    simulate->add_option("--alpha", s_alpha)->capture_default_str();
    simulate->add_option("--seed", s_seed)->capture_default_str();
    simulate->add_option("--threads", s_threads)->capture_default_str();
    simulate->add_option("--min-branch", settings.min_branch, "minimum replications on the branch")->capture_default_str();
    add_sampler_options(simulate, settings.sampler);
    simulate->add_option("--csv", s_csv, "coverage table or p-value ECDF as CSV");
    simulate->add_option("--out", s_out, "JSON summary path (default stdout)");

    // oracle
    int o_n = 200, o_p = 3;
    long o_reps = 100000;
    double o_r = 0.3, o_s12 = 0.8, o_beta0 = 1.0, o_c0 = 10.0, o_scale = 0.5;
    std::uint64_t o_seed = 0;
    unsigned o_threads = 1;
    std::string o_out;
    auto* oracle = app.add_subcommand("oracle", "rejection sampler for the conditional null of the TSLS statistic");
    oracle->add_option("--n", o_n)->capture_default_str();
    oracle->add_option("--p", o_p)->capture_default_str();
    oracle->add_option("--r", o_r)->capture_default_str();
    oracle->add_option("--sigma12", o_s12)->capture_default_str();
    oracle->add_option("--beta0", o_beta0)->capture_default_str();
    oracle->add_option("--c0", o_c0)->capture_default_str();
    oracle->add_option("--scale", o_scale, "randomization standard deviation")->capture_default_str();
    oracle->add_option("--reps", o_reps)->capture_default_str();
    oracle->add_option("--seed", o_seed)->capture_default_str();
    oracle->add_option("--threads", o_threads)->capture_default_str();
    oracle->add_option("--out", o_out, "CSV of retained statistics (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*analyze_cmd) {
            cfg.test = parse_test_choice(test);
            cfg.randomization_scale = scale;
            cfg.lasso_lambda = lasso_lambda;
            if (truncation == "joint") {
                cfg.quad.mode = TruncationMode::joint;
            } else if (truncation == "per_direction") {
                cfg.quad.mode = TruncationMode::per_direction;
            } else {
                throw Error(ErrorCode::invalid_argument, "unknown truncation mode \"" + truncation + "\"");
            }
            const IVDataset prepared = ingest(data.path, data.columns);
            emit(render(to_json(selectiv::analyze(prepared, cfg))), out);
        } else if (*pretest) {
            const IVSummary s = summarize(ingest(pdata.path, pdata.columns));
            const double sc = p_scale.value_or(default_randomization_scale(s));
            emit(render(to_json(run_pretest(s, p_c0, RandomizationLaw{sc, p_seed, 0}))), p_out);
        } else if (*simulate) {
            settings.alpha = s_alpha;
            settings.threads = s_threads;
            settings.sampler.seed = s_seed;
            const Branch br = branch == "clr" ? Branch::clr_fail : Branch::tsls_pass;
            if (branch != "clr" && branch != "tsls") throw Error(ErrorCode::invalid_argument, "branch must be tsls or clr");
            nlohmann::json doc;
            doc["schema_version"] = report_schema_version;
            doc["kind"] = kind;
            doc["branch"] = branch;
            doc["reps"] = reps;
            doc["seed"] = s_seed;
            if (kind == "uniformity") {
                if (r_values.size() != 1 || s12_values.size() != 1) {
                    throw Error(ErrorCode::invalid_argument, "uniformity takes a single --r and --sigma12");
                }
                const DGPConfig dgp = DGPConfig::equal_strength(r_values[0], s12_values[0], n, p, 1.0, s_seed);
                const ExperimentResult res = uniformity_experiment(dgp, s_c0, reps, settings);
                doc["result"] = to_json(res);
                if (!s_csv.empty()) {
                    std::ofstream csv(s_csv, std::ios::binary);
                    write_pvalue_cdf_csv(csv, res.pvalue_samples);
                }
            } else if (kind == "coverage") {
                ExperimentGrid grid{DGPConfig::equal_strength(0.0, 0.0, n, p, 1.0, s_seed), r_values, s12_values};
                const auto cells = coverage_experiment(grid, s_c0, reps, br, settings);
                doc["cells"] = nlohmann::json::array();
                for (const auto& c : cells) doc["cells"].push_back({{"r", c.r}, {"sigma12", c.sigma12}, {"result", to_json(c.result)}});
                if (!s_csv.empty()) {
                    std::ofstream csv(s_csv, std::ios::binary);
                    write_coverage_csv(csv, cells);
                }
            } else {
                throw Error(ErrorCode::invalid_argument, "kind must be uniformity or coverage");
            }
            emit(render(doc), s_out);
        } else if (*oracle) {
            const DGPConfig dgp = DGPConfig::equal_strength(o_r, o_s12, o_n, o_p, o_beta0, o_seed);
            Rng zr(o_seed, derive_stream(std::numeric_limits<std::uint64_t>::max(), 0));
            const Eigen::MatrixXd z = draw_instruments(dgp, zr);
            const OracleResult res =
                rejection_oracle(dgp, z, o_beta0, o_c0, RandomizationLaw{o_scale, o_seed, 1}, o_reps, {}, 1, o_threads);
            std::ostringstream csv;
            csv.precision(17);
            csv << "t\n";
            for (double t : res.statistics) csv << t << '\n';
            emit(csv.str(), o_out);
            std::cerr << "retained " << res.statistics.size() << " of " << res.attempts << " (passed " << res.passed << ")\n";
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
