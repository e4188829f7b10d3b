#include "selectiv/simulation.hpp"

#include "selectiv/error.hpp"
#include "selectiv/parallel.hpp"
#include "selectiv/test_stats.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace selectiv {

namespace {

double binomial_se(double rate, int count) {
    return count > 0 ? std::sqrt(rate * (1.0 - rate) / count) : 0.0;
}

struct RepOutcome {
    bool on_branch = false;
    bool naive_covered = false;
    bool conditional_covered = false;
    double pvalue = 0.0;
    double naive_pvalue = 0.0;
};

ExperimentResult summarize_reps(const std::vector<RepOutcome>& reps, Branch branch, bool coverage) {
    ExperimentResult out;
    out.reps = static_cast<int>(reps.size());
    int naive = 0, cond = 0;
    for (const auto& r : reps) {
        if (!r.on_branch) continue;
        ++out.branch_reps;
        naive += r.naive_covered;
        cond += r.conditional_covered;
        out.pvalue_samples.push_back(r.pvalue);
        out.naive_pvalue_samples.push_back(r.naive_pvalue);
    }
    const double on = static_cast<double>(out.branch_reps) / std::max(1, out.reps);
    out.passing_rate = branch == Branch::tsls_pass ? on : 1.0 - on;
    out.passing_se = binomial_se(out.passing_rate, out.reps);
    if (coverage && out.branch_reps > 0) {
        out.naive_coverage = static_cast<double>(naive) / out.branch_reps;
        out.conditional_coverage = static_cast<double>(cond) / out.branch_reps;
        out.naive_se = binomial_se(out.naive_coverage, out.branch_reps);
        out.conditional_se = binomial_se(out.conditional_coverage, out.branch_reps);
    }
    if (!out.pvalue_samples.empty()) {
        out.ks = ks_uniform_test(out.pvalue_samples);
        out.naive_ks = ks_uniform_test(out.naive_pvalue_samples);
    }
    return out;
}

// Covered when p(beta*) >= alpha; otherwise beta* can still fall inside the
// hull of the retained set, which needs the full inversion.
bool covers(const PvalueFunction& pvalue, double p_at_truth, double truth, double center, double se, double alpha,
            const GridSpec& grid) {
    if (p_at_truth >= alpha) return true;
    return invert_pvalue(pvalue, center, se, alpha, grid, 1).interval.contains(truth);
}

RepOutcome run_rep(const DGPConfig& config, double c0, Branch branch, bool coverage, const ExperimentSettings& settings,
                   std::uint64_t rep) {
    Rng data_rng(config.seed, derive_stream(rep, 0));
    const IVDataset data = generate(config, data_rng);
    const IVSummary s = summarize(data);
    const double truth = config.beta_star;
    RepOutcome out;
    SamplerConfig sampler = settings.sampler;
    sampler.seed = config.seed;
    sampler.threads = 1;
    const std::uint64_t rep_key = derive_stream(rep, 2);

    if (branch == Branch::tsls_pass) {
        const double scale = settings.randomization_scale.value_or(default_randomization_scale(s));
        const PretestOutcome pre = run_pretest(s, c0, RandomizationLaw{scale, config.seed, derive_stream(rep, 1)});
        if (!pre.passed) return out;
        out.on_branch = true;
        const RandomizationDensity g = RandomizationDensity::gaussian(scale);
        out.naive_pvalue = tsls_stat(s, truth, covariance_estimates(s, tsls_estimate(s))).naive_pvalue;
        out.pvalue = tsls_conditional_pvalue(s, truth, pre, g, sampler, rep_key);
        if (coverage) {
            out.naive_covered = naive_tsls_ci(s, settings.alpha).contains(truth);
            const PvalueFunction f = [&](double b, std::uint64_t key) {
                return tsls_conditional_pvalue(s, b, pre, g, sampler, derive_stream(rep_key, key + 1));
            };
            out.conditional_covered =
                covers(f, out.pvalue, truth, tsls_estimate(s), tsls_standard_error(s), settings.alpha, settings.grid);
        }
        return out;
    }

    if (f_statistic(s) >= c0) return out;
    out.on_branch = true;
    const Eigen::Matrix2d omega = covariance_estimates(s, tsls_estimate(s)).omega_hat;
    out.naive_pvalue = clr_pvalue(s, omega, truth, std::nullopt, settings.quad);
    out.pvalue = clr_pvalue(s, omega, truth, c0, settings.quad);
    if (coverage) {
        const double center = tsls_estimate(s);
        const double se = tsls_standard_error(s);
        const PvalueFunction naive = [&](double b, std::uint64_t) { return clr_pvalue(s, omega, b, std::nullopt, settings.quad); };
        const PvalueFunction cond = [&](double b, std::uint64_t) { return clr_pvalue(s, omega, b, c0, settings.quad); };
        out.naive_covered = covers(naive, out.naive_pvalue, truth, center, se, settings.alpha, settings.grid);
        out.conditional_covered = covers(cond, out.pvalue, truth, center, se, settings.alpha, settings.grid);
    }
    return out;
}

std::vector<RepOutcome> run_reps(const DGPConfig& config, double c0, int reps, Branch branch, bool coverage,
                                 const ExperimentSettings& settings) {
    config.validate();
    if (reps < 1) throw Error(ErrorCode::invalid_argument, "need at least one replication");
    std::vector<RepOutcome> out(static_cast<std::size_t>(reps));
    parallel_for(out.size(), settings.threads, [&](std::size_t i) {
        out[i] = run_rep(config, c0, branch, coverage, settings, static_cast<std::uint64_t>(i));
    });
    return out;
}

} // namespace

DGPConfig DGPConfig::equal_strength(double r, double sigma12, Eigen::Index n, Eigen::Index p, double beta_star,
                                    std::uint64_t seed) {
    DGPConfig c;
    c.n = n;
    c.p = p;
    c.beta_star = beta_star;
    c.gamma_star = Eigen::VectorXd::Constant(p, r);
    c.sigma_star << 1.0, sigma12, sigma12, 1.0;
    c.seed = seed;
    return c;
}

void DGPConfig::validate() const {
    if (n < 2 || p < 1 || n <= p) throw Error(ErrorCode::invalid_argument, "DGP needs n > p >= 1");
    if (gamma_star.size() != p) throw Error(ErrorCode::dimension_mismatch, "gamma* must have length p");
    const double s11 = sigma_star(0, 0), s22 = sigma_star(1, 1), s12 = sigma_star(0, 1);
    if (!(s11 > 0.0 && s22 > 0.0 && std::abs(s12) < std::sqrt(s11 * s22)) || s12 != sigma_star(1, 0)) {
        throw Error(ErrorCode::not_positive_definite, "Sigma* must be symmetric positive definite");
    }
}

Eigen::MatrixXd draw_instruments(const DGPConfig& config, Rng& rng) {
    Eigen::MatrixXd z(config.n, config.p);
    for (Eigen::Index i = 0; i < config.n; ++i) {
        for (Eigen::Index j = 0; j < config.p; ++j) z(i, j) = rng.normal();
    }
    return z;
}

IVDataset generate_with_z(const DGPConfig& config, const Eigen::MatrixXd& z, Rng& rng) {
    config.validate();
    const double l00 = std::sqrt(config.sigma_star(0, 0));
    const double l10 = config.sigma_star(1, 0) / l00;
    const double l11 = std::sqrt(config.sigma_star(1, 1) - l10 * l10);
    IVDataset raw;
    raw.z = z;
    raw.d = z * config.gamma_star;
    raw.y.resize(config.n);
    for (Eigen::Index i = 0; i < config.n; ++i) {
        const double e1 = rng.normal();
        const double e2 = rng.normal();
        raw.d(i) += l10 * e1 + l11 * e2;
        raw.y(i) = raw.d(i) * config.beta_star + l00 * e1;
    }
    return prepare(raw);
}

IVDataset generate(const DGPConfig& config, Rng& rng) {
    const Eigen::MatrixXd z = draw_instruments(config, rng);
    return generate_with_z(config, z, rng);
}

IVDataset generate(const DGPConfig& config) {
    Rng rng(config.seed, 0);
    return generate(config, rng);
}

ExperimentResult uniformity_experiment(const DGPConfig& config, double c0, int reps, const ExperimentSettings& settings) {
    const auto outcomes = run_reps(config, c0, reps, Branch::tsls_pass, false, settings);
    ExperimentResult out = summarize_reps(outcomes, Branch::tsls_pass, false);
    if (out.branch_reps < settings.min_branch) {
        throw Error(ErrorCode::insufficient_replications,
                    std::to_string(out.branch_reps) + " of " + std::to_string(reps) + " replications passed the pre-test");
    }
    return out;
}

ExperimentResult coverage_experiment(const DGPConfig& config, double c0, int reps, Branch branch,
                                     const ExperimentSettings& settings) {
    const auto outcomes = run_reps(config, c0, reps, branch, true, settings);
    ExperimentResult out = summarize_reps(outcomes, branch, true);
    if (out.branch_reps < settings.min_branch) {
        throw Error(ErrorCode::insufficient_replications,
                    std::to_string(out.branch_reps) + " of " + std::to_string(reps) + " replications on the branch");
    }
    return out;
}

std::vector<CoverageCell> coverage_experiment(const ExperimentGrid& grid, double c0, int reps, Branch branch,
                                              const ExperimentSettings& settings) {
    std::vector<CoverageCell> cells;
    for (double r : grid.r_values) {
        for (double s12 : grid.sigma12_values) {
            DGPConfig cfg = DGPConfig::equal_strength(r, s12, grid.base.n, grid.base.p, grid.base.beta_star,
                                                      derive_stream(grid.base.seed, cells.size()));
            cells.push_back({r, s12, coverage_experiment(cfg, c0, reps, branch, settings)});
        }
    }
    return cells;
}

void write_coverage_csv(std::ostream& out, const std::vector<CoverageCell>& cells) {
    const auto old = out.precision(10);
    out << "r,sigma12,passing_rate,naive_cov,cond_cov,se\n";
    for (const auto& c : cells) {
        out << c.r << ',' << c.sigma12 << ',' << c.result.passing_rate << ',' << c.result.naive_coverage << ','
            << c.result.conditional_coverage << ',' << c.result.conditional_se << '\n';
    }
    out.precision(old);
}

void write_pvalue_cdf_csv(std::ostream& out, std::vector<double> pvalues) {
    std::sort(pvalues.begin(), pvalues.end());
    const auto old = out.precision(10);
    out << "p_sorted,ecdf\n";
    for (std::size_t i = 0; i < pvalues.size(); ++i) {
        out << pvalues[i] << ',' << static_cast<double>(i + 1) / static_cast<double>(pvalues.size()) << '\n';
    }
    out.precision(old);
}

OracleResult rejection_oracle(const DGPConfig& config, const Eigen::MatrixXd& z, double beta0, double c0,
                              const RandomizationLaw& law, long reps, const OracleNeighborhood& hood,
                              std::size_t min_retained, unsigned threads) {
    DGPConfig null_config = config;
    null_config.beta_star = beta0;
    null_config.validate();
    if (z.rows() != config.n || z.cols() != config.p) throw Error(ErrorCode::dimension_mismatch, "Z does not match the DGP");
    if (reps < 1) throw Error(ErrorCode::invalid_argument, "need at least one replication");

    // Z is fixed, so its centering, root and Gram pieces are computed once.
    const Eigen::MatrixXd zc = z.rowwise() - z.colwise().mean();
    const Eigen::MatrixXd root = inverse_sqrt_spd(zc.transpose() * zc);
    const Eigen::MatrixXd proj = root * zc.transpose(); // p x n
    const Eigen::VectorXd mean_d = zc * config.gamma_star;
    const double l00 = std::sqrt(config.sigma_star(0, 0));
    const double l10 = config.sigma_star(1, 0) / l00;
    const double l11 = std::sqrt(config.sigma_star(1, 1) - l10 * l10);

    std::vector<double> kept(static_cast<std::size_t>(reps), std::numeric_limits<double>::quiet_NaN());
    std::vector<char> passed(static_cast<std::size_t>(reps), 0);
    parallel_for(kept.size(), threads, [&](std::size_t rep) {
        Rng rng(config.seed, derive_stream(rep, 7));
        Eigen::VectorXd d(config.n), y(config.n);
        for (Eigen::Index i = 0; i < config.n; ++i) {
            const double e1 = rng.normal();
            const double e2 = rng.normal();
            d(i) = mean_d(i) + l10 * e1 + l11 * e2;
            y(i) = d(i) * beta0 + l00 * e1;
        }
        d.array() -= d.mean();
        y.array() -= y.mean();
        IVSummary s;
        s.n = config.n;
        s.p = config.p;
        s.s_y = proj * y;
        s.s_d = proj * d;
        s.yy = y.squaredNorm();
        s.dd = d.squaredNorm();
        s.yd = y.dot(d);
        const RandomizationLaw rep_law{law.scale, law.seed, derive_stream(law.stream, rep)};
        const PretestOutcome pre = solve_randomized(s.sufficient_s(), penalty_lambda(s, c0), rep_law);
        if (!pre.passed) return;
        passed[rep] = 1;
        if (hood.u_ref && pre.u.dot(*hood.u_ref) < hood.cos_min) return;
        if (hood.lambda_ref && std::abs(pre.lambda - *hood.lambda_ref) > hood.lambda_tol) return;
        const ModelEstimates est = covariance_estimates(s, beta0);
        const double t = tsls_stat(s, beta0, est).statistic;
        if (hood.o_ref) {
            const Eigen::VectorXd w = est.sigma_hat(0, 1) * s.s_d / std::sqrt(est.sigma_hat(0, 0) * s.dpzd());
            if ((s.s_d - w * t - *hood.o_ref).norm() > hood.o_radius) return;
        }
        kept[rep] = t;
    });

    OracleResult out;
    out.attempts = reps;
    for (std::size_t i = 0; i < kept.size(); ++i) {
        out.passed += passed[i];
        if (!std::isnan(kept[i])) out.statistics.push_back(kept[i]);
    }
    out.retention_rate = static_cast<double>(out.statistics.size()) / static_cast<double>(reps);
    if (out.statistics.size() < min_retained) {
        throw Error(ErrorCode::retention_too_low, "retained " + std::to_string(out.statistics.size()) + " of " +
                                                      std::to_string(reps) + " (rate " +
                                                      std::to_string(out.retention_rate) + ")");
    }
    return out;
}

} // namespace selectiv
