#include "selectiv/lasso.hpp"

#include "selectiv/distributions.hpp"
#include "selectiv/error.hpp"
#include "selectiv/parallel.hpp"
#include "selectiv/test_stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace selectiv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double soft_threshold(double x, double lambda) {
    if (x > lambda) return x - lambda;
    if (x < -lambda) return x + lambda;
    return 0.0;
}

// Lasso pieces expressed through the Gram matrix so that no n-vector is touched per sweep.
struct GramProblem {
    Eigen::MatrixXd gram;
    Eigen::VectorXd c;  // Z'D
    Eigen::VectorXd cw; // Z'D + omega
    Eigen::VectorXd omega;
    double dd = 0.0;
    double lambda = 0.0;
    double dtilde_sq = 0.0; // ||D + Z G^-1 omega||^2

    double objective(const Eigen::VectorXd& g) const {
        return 0.5 * (dd - 2 * g.dot(c) + g.dot(gram * g)) + lambda * g.lpNorm<1>() - omega.dot(g);
    }

    // Gap of the equivalent lasso with response D + Z G^-1 omega, dual point a scaled residual.
    double gap(const Eigen::VectorXd& g, const Eigen::VectorXd& corr) const {
        const double ggg = g.dot(gram * g);
        const double gcw = g.dot(cw);
        const double r2 = dtilde_sq - 2 * gcw + ggg;
        const double cmax = corr.lpNorm<Eigen::Infinity>();
        const double s = cmax > lambda ? lambda / cmax : 1.0;
        const double dual_dist = (1 - s) * (1 - s) * dtilde_sq + 2 * s * (1 - s) * gcw + s * s * ggg;
        const double primal = 0.5 * r2 + lambda * g.lpNorm<1>();
        const double dual = 0.5 * dtilde_sq - 0.5 * dual_dist;
        return std::max(0.0, primal - dual);
    }
};

void fill_selection(LassoSelection& sel, const GramProblem& prob) {
    sel.support.clear();
    sel.signs.clear();
    for (Eigen::Index j = 0; j < sel.gamma.size(); ++j) {
        if (sel.gamma(j) != 0.0) {
            sel.support.push_back(static_cast<int>(j));
            sel.signs.push_back(sel.gamma(j) > 0 ? 1 : -1);
        }
    }
    sel.subgradient = (prob.cw - prob.gram * sel.gamma) / prob.lambda;
    for (std::size_t k = 0; k < sel.support.size(); ++k) sel.subgradient(sel.support[k]) = sel.signs[k];
    sel.objective = prob.objective(sel.gamma);
}

// Exact solve on the active set; kept only if signs and inactive KKT conditions hold.
bool polish(LassoSelection& sel, const GramProblem& prob) {
    std::vector<int> active;
    for (Eigen::Index j = 0; j < sel.gamma.size(); ++j) {
        if (sel.gamma(j) != 0.0) active.push_back(static_cast<int>(j));
    }
    if (active.empty()) return true;
    const Eigen::Index m = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd gee(m, m);
    Eigen::VectorXd rhs(m);
    for (Eigen::Index a = 0; a < m; ++a) {
        for (Eigen::Index b = 0; b < m; ++b) gee(a, b) = prob.gram(active[a], active[b]);
        rhs(a) = prob.cw(active[a]) - prob.lambda * (sel.gamma(active[a]) > 0 ? 1.0 : -1.0);
    }
    const Eigen::VectorXd ge = gee.ldlt().solve(rhs);
    Eigen::VectorXd candidate = Eigen::VectorXd::Zero(sel.gamma.size());
    for (Eigen::Index a = 0; a < m; ++a) {
        if ((ge(a) > 0) != (sel.gamma(active[a]) > 0) || ge(a) == 0.0) return false;
        candidate(active[a]) = ge(a);
    }
    const Eigen::VectorXd corr = prob.cw - prob.gram * candidate;
    for (Eigen::Index j = 0; j < candidate.size(); ++j) {
        if (candidate(j) == 0.0 && std::abs(corr(j)) > prob.lambda * (1 + 1e-12)) return false;
    }
    if (prob.objective(candidate) > prob.objective(sel.gamma) + 1e-12 * std::max(1.0, std::abs(sel.objective))) {
        return false;
    }
    sel.gamma = candidate;
    sel.duality_gap = prob.gap(candidate, corr);
    return true;
}

std::pair<double, double> coordinate_bounds(const LassoLaw& law, Eigen::Index k) {
    const Eigen::Index m = static_cast<Eigen::Index>(law.support.size());
    if (k == 0) return {-kInf, kInf};
    if (k <= m) return law.signs[static_cast<std::size_t>(k - 1)] > 0 ? std::pair{0.0, kInf} : std::pair{-kInf, 0.0};
    return {-1.0, 1.0};
}

LassoSampleResult lasso_chain(const LassoLaw& law, const SamplerConfig& config, Rng rng, bool keep_states) {
    const Eigen::Index dim = law.dim();
    Eigen::VectorXd v = law.init;
    double current = law.log_density(v);
    if (!std::isfinite(current)) throw Error(ErrorCode::sampler_init, "lasso law has zero density at the start");
    const int total = config.burn_in + config.n_samples;
    LassoSampleResult out;
    out.t.reserve(static_cast<std::size_t>(config.n_samples));
    if (keep_states) out.states.resize(config.n_samples, dim);
    ChainDiagnostics diag;

    if (law.g.gaussian_scale && config.exact_gaussian) {
        const double c2 = *law.g.gaussian_scale * *law.g.gaussian_scale;
        Eigen::MatrixXd q = law.a.transpose() * law.a / c2;
        q(0, 0) += 1.0;
        const Eigen::VectorXd h = -law.a.transpose() * law.b / c2;
        Eigen::VectorXd qv = q * v;
        for (int it = 0; it < total; ++it) {
            for (Eigen::Index k = 0; k < dim; ++k) {
                const double qkk = q(k, k);
                const double mean = (h(k) - (qv(k) - qkk * v(k))) / qkk;
                const auto [lo, hi] = coordinate_bounds(law, k);
                double next = truncated_normal(rng, mean, 1.0 / std::sqrt(qkk), lo, hi);
                // Open sign constraint: a draw landing exactly on 0 is nudged back inside.
                if (k > 0 && k <= static_cast<Eigen::Index>(law.support.size()) && next == 0.0) next = v(k);
                qv += q.col(k) * (next - v(k));
                v(k) = next;
            }
            if (it >= config.burn_in) {
                if (keep_states) out.states.row(it - config.burn_in) = v.transpose();
                out.t.push_back(v(0));
            }
        }
        diag.acceptance_t = 1.0;
        diag.acceptance_d = 1.0;
    } else {
        Eigen::VectorXd steps(dim);
        steps(0) = config.step_t;
        for (Eigen::Index k = 1; k < dim; ++k) steps(k) = k <= static_cast<Eigen::Index>(law.support.size()) ? config.step_d : 0.5;
        std::vector<long> burn_acc(static_cast<std::size_t>(dim), 0), acc(static_cast<std::size_t>(dim), 0);
        for (int it = 0; it < total; ++it) {
            const bool burning = it < config.burn_in;
            for (Eigen::Index k = 0; k < dim; ++k) {
                Eigen::VectorXd prop = v;
                prop(k) += steps(k) * rng.normal();
                double a = 0.0;
                if (law.feasible(prop)) {
                    const double lp = law.log_density(prop);
                    if (std::isfinite(lp)) {
                        a = std::min(1.0, std::exp(lp - current));
                        if (rng.uniform() < a) {
                            v = prop;
                            current = lp;
                            ++(burning ? burn_acc : acc)[static_cast<std::size_t>(k)];
                        }
                    }
                }
                if (burning) steps(k) *= std::exp(1.0 / std::pow(it + 1.0, 0.6) * (a - config.adapt_target));
            }
            if (!burning) {
                if (keep_states) out.states.row(it - config.burn_in) = v.transpose();
                out.t.push_back(v(0));
            }
        }
        if (config.burn_in > 0 && std::any_of(burn_acc.begin(), burn_acc.end(), [](long a) { return a == 0; })) {
            throw Error(ErrorCode::sampler_stuck, "a lasso-law coordinate accepted nothing during burn-in");
        }
        diag.acceptance_t = static_cast<double>(acc[0]) / config.n_samples;
        double rest = 0.0;
        for (Eigen::Index k = 1; k < dim; ++k) rest += static_cast<double>(acc[static_cast<std::size_t>(k)]);
        diag.acceptance_d = dim > 1 ? rest / (config.n_samples * static_cast<double>(dim - 1)) : 0.0;
        diag.step_t = steps(0);
        diag.step_d = dim > 1 ? steps(1) : 0.0;
    }
    diag.ess = effective_sample_size(out.t);
    diag.geweke_z = geweke_z(out.t);
    out.chains.push_back(diag);
    return out;
}

} // namespace

double lasso_objective(const Eigen::MatrixXd& z, const Eigen::VectorXd& d, double lambda, const Eigen::VectorXd& omega,
                       const Eigen::VectorXd& gamma) {
    return 0.5 * (d - z * gamma).squaredNorm() + lambda * gamma.lpNorm<1>() - omega.dot(gamma);
}

LassoSelection solve_randomized_lasso(const Eigen::MatrixXd& z, const Eigen::VectorXd& d, double lambda_l,
                                      const Eigen::VectorXd& omega, const LassoSolverOptions& options) {
    if (!(lambda_l > 0.0)) throw Error(ErrorCode::invalid_argument, "lasso penalty must be positive");
    if (z.rows() != d.size() || omega.size() != z.cols()) {
        throw Error(ErrorCode::dimension_mismatch, "lasso inputs have inconsistent sizes");
    }
    GramProblem prob;
    prob.gram = z.transpose() * z;
    prob.c = z.transpose() * d;
    prob.omega = omega;
    prob.cw = prob.c + omega;
    prob.dd = d.squaredNorm();
    prob.lambda = lambda_l;
    const Eigen::VectorXd ginv_omega = prob.gram.ldlt().solve(omega);
    prob.dtilde_sq = prob.dd + 2 * prob.c.dot(ginv_omega) + omega.dot(ginv_omega);
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        if (!(prob.gram(j, j) > 0.0)) throw Error(ErrorCode::rank_deficient, "instrument column with zero norm");
    }

    LassoSelection sel;
    sel.lambda_l = lambda_l;
    sel.omega = omega;
    sel.gamma = Eigen::VectorXd::Zero(z.cols());
    Eigen::VectorXd corr = prob.cw; // Z'(D~ - Z gamma)
    for (int sweep = 1;; ++sweep) {
        for (Eigen::Index j = 0; j < z.cols(); ++j) {
            const double old = sel.gamma(j);
            const double next = soft_threshold(corr(j) + prob.gram(j, j) * old, lambda_l) / prob.gram(j, j);
            if (next != old) {
                corr -= prob.gram.col(j) * (next - old);
                sel.gamma(j) = next;
            }
        }
        sel.sweeps = sweep;
        corr = prob.cw - prob.gram * sel.gamma;
        sel.duality_gap = prob.gap(sel.gamma, corr);
        const double obj = prob.objective(sel.gamma);
        if (sel.duality_gap < options.gap_tol * std::max(1.0, std::abs(obj))) break;
        if (sweep >= options.max_sweeps) {
            throw Error(ErrorCode::nonconvergence, "coordinate descent stopped with duality gap " +
                                                       std::to_string(sel.duality_gap));
        }
    }
    fill_selection(sel, prob);
    if (polish(sel, prob)) fill_selection(sel, prob);
    return sel;
}

LassoSelection solve_randomized_lasso(const IVDataset& prepared, double lambda_l, const RandomizationLaw& law,
                                      const LassoSolverOptions& options) {
    if (!(law.scale > 0.0)) throw Error(ErrorCode::invalid_argument, "randomization scale must be positive");
    Rng rng(law.seed, law.stream);
    const Eigen::VectorXd omega = law.scale * rng.normal_vector(prepared.p());
    LassoSelection sel = solve_randomized_lasso(prepared.z, prepared.d, lambda_l, omega, options);
    sel.law = law;
    return sel;
}

double default_lasso_lambda(const IVDataset& prepared, Rng& rng, int draws) {
    if (draws < 1) throw Error(ErrorCode::invalid_argument, "need at least one bootstrap draw");
    const Eigen::VectorXd gamma = (prepared.z.transpose() * prepared.z).ldlt().solve(prepared.z.transpose() * prepared.d);
    const Eigen::VectorXd resid = prepared.d - prepared.z * gamma;
    const Eigen::Index n = resid.size();
    std::vector<double> norms;
    norms.reserve(static_cast<std::size_t>(draws));
    Eigen::VectorXd e(n);
    for (int b = 0; b < draws; ++b) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto idx = std::min<Eigen::Index>(n - 1, static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(n)));
            e(i) = resid(idx);
        }
        norms.push_back((prepared.z.transpose() * e).lpNorm<Eigen::Infinity>());
    }
    std::sort(norms.begin(), norms.end());
    const std::size_t mid = norms.size() / 2;
    const double median = norms.size() % 2 ? norms[mid] : 0.5 * (norms[mid - 1] + norms[mid]);
    return 1.1 * median;
}

double default_lasso_scale(const IVDataset& prepared) {
    const IVSummary s = summarize(prepared);
    const double sigma22 = s.first_stage_rss() / s.dof();
    const double trace = prepared.z.colwise().squaredNorm().sum();
    return 0.5 * std::sqrt(sigma22 * trace / static_cast<double>(s.p));
}

IVDataset select_instruments(const IVDataset& prepared, const std::vector<int>& columns) {
    IVDataset out;
    out.y = prepared.y;
    out.d = prepared.d;
    out.z.resize(prepared.n(), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t k = 0; k < columns.size(); ++k) {
        if (columns[k] < 0 || columns[k] >= prepared.p()) throw Error(ErrorCode::invalid_argument, "instrument index out of range");
        out.z.col(static_cast<Eigen::Index>(k)) = prepared.z.col(columns[k]);
        if (static_cast<std::size_t>(columns[k]) < prepared.z_names.size()) out.z_names.push_back(prepared.z_names[columns[k]]);
    }
    return out;
}

bool LassoLaw::feasible(const Eigen::VectorXd& v) const {
    const std::size_t m = support.size();
    for (std::size_t k = 0; k < m; ++k) {
        if (signs[k] * v(static_cast<Eigen::Index>(k + 1)) <= 0.0) return false;
    }
    for (Eigen::Index k = static_cast<Eigen::Index>(m) + 1; k < v.size(); ++k) {
        if (std::abs(v(k)) > 1.0) return false;
    }
    return true;
}

double LassoLaw::log_density(const Eigen::VectorXd& v) const {
    if (!feasible(v)) return -kInf;
    return -0.5 * v(0) * v(0) + g.log_density(a * v + b);
}

LassoLaw build_lasso_law(const IVDataset& prepared, double beta0, const LassoSelection& sel,
                         const RandomizationDensity& g, const LassoLawOptions& options) {
    if (sel.support.empty()) throw Error(ErrorCode::empty_support, "the lasso selected no instruments");
    const Eigen::Index p = prepared.p();
    const Eigen::Index m = static_cast<Eigen::Index>(sel.support.size());
    LassoLaw law;
    law.support = sel.support;
    law.signs = sel.signs;
    for (Eigen::Index j = 0; j < p; ++j) {
        if (std::find(sel.support.begin(), sel.support.end(), static_cast<int>(j)) == sel.support.end()) {
            law.inactive.push_back(static_cast<int>(j));
        }
    }
    law.lambda_l = sel.lambda_l;
    law.g = g;
    law.beta0 = beta0;

    const IVDataset stat_data = options.full_z_statistic ? prepared : select_instruments(prepared, sel.support);
    const IVSummary ss = summarize(stat_data);
    const ModelEstimates est = covariance_estimates(ss, beta0);
    law.t_obs = tsls_stat(ss, beta0, est).statistic;
    // Z' P D on the instruments the statistic uses.
    const Eigen::VectorXd fitted = stat_data.z * ss.gamma_hat;
    const double fitted_norm = fitted.norm();
    if (!(fitted_norm > 0.0)) throw Error(ErrorCode::zero_s, "projection of D on the selected instruments vanishes");
    law.w_st = est.sigma_hat(0, 1) * (prepared.z.transpose() * fitted) / (std::sqrt(est.sigma_hat(0, 0)) * fitted_norm);
    const Eigen::MatrixXd gram = prepared.z.transpose() * prepared.z;
    const Eigen::VectorXd s_l = prepared.z.transpose() * prepared.d;
    law.o = s_l - law.w_st * law.t_obs;

    const Eigen::Index q = p - m;
    law.a.resize(p, 1 + m + q);
    law.a.col(0) = -law.w_st;
    law.b = -law.o;
    for (Eigen::Index k = 0; k < m; ++k) {
        law.a.col(1 + k) = gram.col(sel.support[static_cast<std::size_t>(k)]);
        law.b(sel.support[static_cast<std::size_t>(k)]) += sel.lambda_l * sel.signs[static_cast<std::size_t>(k)];
    }
    for (Eigen::Index k = 0; k < q; ++k) {
        law.a.col(1 + m + k) = Eigen::VectorXd::Zero(p);
        law.a(law.inactive[static_cast<std::size_t>(k)], 1 + m + k) = sel.lambda_l;
    }
    law.init.resize(1 + m + q);
    law.init(0) = law.t_obs;
    for (Eigen::Index k = 0; k < m; ++k) law.init(1 + k) = sel.gamma(sel.support[static_cast<std::size_t>(k)]);
    for (Eigen::Index k = 0; k < q; ++k) {
        law.init(1 + m + k) = std::clamp(sel.subgradient(law.inactive[static_cast<std::size_t>(k)]), -1.0, 1.0);
    }
    return law;
}

double LassoSampleResult::ess() const {
    double total = 0.0;
    for (const auto& c : chains) total += c.ess;
    return total;
}

LassoSampleResult sample_lasso_law(const LassoLaw& law, const SamplerConfig& config, std::uint64_t key, bool keep_states) {
    if (config.chains < 1 || config.n_samples < 1) throw Error(ErrorCode::invalid_argument, "invalid sampler sizes");
    SamplerConfig per = config;
    per.n_samples = std::max(1, config.n_samples / config.chains);
    std::vector<LassoSampleResult> parts(static_cast<std::size_t>(config.chains));
    parallel_for(parts.size(), config.threads, [&](std::size_t c) {
        parts[c] = lasso_chain(law, per, Rng(config.seed, derive_stream(key, c)), keep_states);
    });
    LassoSampleResult out;
    if (keep_states) out.states.resize(per.n_samples * config.chains, law.dim());
    for (std::size_t c = 0; c < parts.size(); ++c) {
        out.t.insert(out.t.end(), parts[c].t.begin(), parts[c].t.end());
        if (keep_states) out.states.middleRows(static_cast<Eigen::Index>(c) * per.n_samples, per.n_samples) = parts[c].states;
        out.chains.push_back(parts[c].chains.front());
    }
    return out;
}

LassoInference lasso_conditional_inference(const IVDataset& prepared, double beta0, const LassoSelection& sel,
                                           const RandomizationDensity& g, const SamplerConfig& config,
                                           const LassoLawOptions& options) {
    const LassoLaw law = build_lasso_law(prepared, beta0, sel, g, options);
    LassoInference out;
    out.beta0 = beta0;
    out.t_obs = law.t_obs;
    const IVSummary ss = summarize(options.full_z_statistic ? prepared : select_instruments(prepared, sel.support));
    out.naive_pvalue = tsls_stat(ss, beta0, covariance_estimates(ss, tsls_estimate(ss))).naive_pvalue;
    out.draws = sample_lasso_law(law, config, std::numeric_limits<std::uint64_t>::max(), options.keep_states);
    out.conditional_pvalue = conditional_pvalue(out.draws.t, law.t_obs, Sided::two_sided);
    return out;
}

InversionResult lasso_conditional_ci(const IVDataset& prepared, const LassoSelection& sel, double alpha,
                                     const RandomizationDensity& g, const SamplerConfig& config,
                                     const LassoLawOptions& options, const GridSpec& grid) {
    if (sel.support.empty()) throw Error(ErrorCode::empty_support, "the lasso selected no instruments");
    const IVSummary ss = summarize(options.full_z_statistic ? prepared : select_instruments(prepared, sel.support));
    SamplerConfig sequential = config;
    sequential.threads = 1;
    auto pvalue = [&](double b, std::uint64_t key) {
        const LassoLaw law = build_lasso_law(prepared, b, sel, g, options);
        const LassoSampleResult r = sample_lasso_law(law, sequential, key, false);
        return conditional_pvalue(r.t, law.t_obs, Sided::two_sided);
    };
    return invert_pvalue(pvalue, tsls_estimate(ss), tsls_standard_error(ss), alpha, grid, config.threads);
}

} // namespace selectiv
