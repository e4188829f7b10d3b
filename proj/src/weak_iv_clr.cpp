#include "selectiv/weak_iv_clr.hpp"

#include "selectiv/distributions.hpp"
#include "selectiv/error.hpp"
#include "selectiv/pretest.hpp"
#include "selectiv/test_stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace selectiv {

namespace {

thread_local int g_last_panels = 0;

// Only an event whose probability underflows is treated as empty; the joint
// ratio stays accurate for tiny but representable probabilities.
constexpr double kEmptyTruncation = 1e-250;

double tail_threshold(double t, double q_r, double u2) {
    return (q_r + t) / (1.0 + q_r * u2 * u2 / t);
}

// Numerator and denominator of the inner probability at one u2.
struct Inner {
    double num = 0.0;
    double den = 0.0;
};

Inner inner_probability(double t, double q_r, int p, const std::optional<ClrTruncation>& trunc, double u2) {
    const double thr = tail_threshold(t, q_r, u2);
    const double df = static_cast<double>(p);
    if (!trunc) return {chi2_sf(thr, df), 1.0};
    double lo = 0.0, hi = 0.0;
    if (!truncation_interval(*trunc, u2, lo, hi)) return {0.0, 0.0};
    const double qlo = lo * lo;
    const double qhi = std::isinf(hi) ? hi : hi * hi;
    return {chi2_interval_probability(std::max(thr, qlo), qhi, df), chi2_interval_probability(qlo, qhi, df)};
}

struct Sums {
    double num = 0.0;
    double den = 0.0;
};

// Composite Simpson over the sample values f[0..N] with spacing h.
template <class Get>
double simpson(std::size_t n, double h, Get get) {
    double s = get(0) + get(n);
    for (std::size_t i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * get(i);
    return s * h / 3.0;
}

} // namespace

std::string_view to_string(TruncationMode mode) {
    return mode == TruncationMode::joint ? "joint" : "per_direction";
}

double k4_constant(int p) {
    if (p < 2) throw Error(ErrorCode::invalid_argument, "K4 is defined for p >= 2");
    return std::exp(std::lgamma(p / 2.0) - std::lgamma((p - 1) / 2.0)) / std::sqrt(std::numbers::pi);
}

int last_clr_panels() { return g_last_panels; }

bool truncation_interval(const ClrTruncation& tr, double u2, double& lo, double& hi) {
    const double a = tr.d0;
    const double b = tr.d1 * u2 * std::sqrt(tr.q_r);
    const double c = tr.d2 * tr.q_r - tr.lambda_sq;
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (!(a > 0.0)) {
        if (b > 0.0) {
            hi = -c / b;
            lo = 0.0;
            return hi > 0.0;
        }
        if (b < 0.0) {
            lo = std::max(0.0, -c / b);
            hi = inf;
            return true;
        }
        lo = 0.0;
        hi = inf;
        return c <= 0.0;
    }
    const double disc = b * b - 4.0 * a * c;
    if (disc <= 0.0) return false;
    const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
    if (q == 0.0) return false;
    double r1 = q / a;
    double r2 = c / q;
    if (r1 > r2) std::swap(r1, r2);
    if (r2 <= 0.0) return false;
    lo = std::max(0.0, r1);
    hi = r2;
    return true;
}

double clr_tail(double t, double q_r, int p, const std::optional<ClrTruncation>& trunc, const QuadratureConfig& quad) {
    if (p < 1) throw Error(ErrorCode::invalid_argument, "p must be positive");
    if (!(q_r >= 0.0)) throw Error(ErrorCode::invalid_argument, "q_R must be non-negative");
    if (quad.panels < 2 || quad.panels % 2 != 0 || !(quad.tol > 0.0)) {
        throw Error(ErrorCode::invalid_argument, "quadrature needs an even panel count and positive tolerance");
    }
    const bool joint = quad.mode == TruncationMode::joint;

    // The conditioning probability does not depend on t, and LR >= 0 always
    // holds, so t <= 0 makes the tail equal to the conditioning probability.
    auto inner_at = [&](double u2) -> Inner {
        if (t > 0.0) return inner_probability(t, q_r, p, trunc, u2);
        if (!trunc) return {1.0, 1.0};
        const Inner in = inner_probability(1.0, q_r, p, trunc, u2);
        return {in.den, in.den};
    };

    // A single instrument: U and R are scalars, so u2 = +-1 with equal probability.
    if (p == 1) {
        g_last_panels = 0;
        Sums s;
        for (double u2 : {-1.0, 1.0}) {
            const Inner in = inner_at(u2);
            s.den += 0.5 * in.den;
            if (joint || !trunc) s.num += 0.5 * in.num;
            else s.num += in.den > 0.0 ? 0.5 * in.num / in.den : 0.0;
        }
        if (trunc && s.den < kEmptyTruncation) {
            throw Error(ErrorCode::empty_truncation, "conditioning event has negligible probability");
        }
        const double v = (joint && trunc) ? s.num / s.den : s.num;
        return std::clamp(v, 0.0, 1.0);
    }

    const double k4 = k4_constant(p);
    const bool subst = quad.endpoint_substitution;
    if (!subst && p < 3) {
        throw Error(ErrorCode::invalid_argument, "the weight is singular at u2 = +-1 for p = 2; use the sine substitution");
    }
    const double a = subst ? -std::numbers::pi / 2 : -1.0;
    const double b = -a;

    // Integrand samples: weight, numerator and denominator of the inner probability.
    struct Sample {
        double w, num, den;
    };
    auto sample = [&](double x) -> Sample {
        double u2, w;
        if (subst) {
            u2 = std::sin(x);
            const double c = std::cos(x);
            w = k4 * (p == 2 ? 1.0 : std::pow(std::max(c, 0.0), p - 2));
        } else {
            u2 = x;
            w = k4 * std::pow(std::max(0.0, 1.0 - x * x), 0.5 * (p - 3));
        }
        const Inner in = inner_at(u2);
        return {w, in.num, in.den};
    };

    auto integrate = [&](const std::vector<Sample>& f, std::size_t stride, double h) -> Sums {
        const std::size_t n = (f.size() - 1) / stride;
        Sums s;
        s.den = simpson(n, h, [&](std::size_t i) { return f[i * stride].w * f[i * stride].den; });
        if (joint || !trunc) {
            s.num = simpson(n, h, [&](std::size_t i) { return f[i * stride].w * f[i * stride].num; });
        } else {
            s.num = simpson(n, h, [&](std::size_t i) {
                const Sample& v = f[i * stride];
                return v.den > 0.0 ? v.w * v.num / v.den : 0.0;
            });
        }
        return s;
    };
    auto value = [&](const Sums& s) {
        if (!trunc) return s.num;
        if (joint) return s.den > 0.0 ? s.num / s.den : 0.0;
        return s.num;
    };

    // Pieces split where the integrand changes character: for t << q_R the
    // inner probability dips on |u2| of order sqrt(t / q_R), and the
    // truncation event can open up at +-u2* with a square-root edge.
    std::vector<double> cuts;
    if (t > 0.0 && q_r > 0.0) {
        const double width = 8.0 * std::sqrt(t / q_r);
        if (width < 0.5) cuts.insert(cuts.end(), {-width, width});
    }
    if (trunc && trunc->d1 != 0.0 && q_r > 0.0) {
        const double edge = 4.0 * trunc->d0 * (trunc->d2 * q_r - trunc->lambda_sq) / (trunc->d1 * trunc->d1 * q_r);
        if (edge > 0.0 && edge < 1.0) cuts.insert(cuts.end(), {-std::sqrt(edge), std::sqrt(edge)});
    }
    std::vector<double> breaks{a};
    std::sort(cuts.begin(), cuts.end());
    for (double c : cuts) {
        const double x = subst ? std::asin(c) : c;
        if (x > breaks.back() + 1e-12 && x < b - 1e-12) breaks.push_back(x);
    }
    breaks.push_back(b);
    const std::size_t pieces = breaks.size() - 1;

    // On each piece x = lo + (hi - lo)(1 - cos(pi s)) / 2 for s in [0, 1]: the
    // map is flat at both ends, which turns square-root edges into smooth ones.
    auto sample_piece = [&](std::size_t k, double sv) {
        const double lo = breaks[k], hi = breaks[k + 1];
        const double x = lo + 0.5 * (hi - lo) * (1.0 - std::cos(std::numbers::pi * sv));
        Sample v = sample(x);
        v.w *= 0.5 * (hi - lo) * std::numbers::pi * std::sin(std::numbers::pi * sv);
        return v;
    };

    std::size_t n = static_cast<std::size_t>(quad.panels);
    std::vector<std::vector<Sample>> f(pieces);
    for (std::size_t k = 0; k < pieces; ++k) {
        f[k].resize(n + 1);
        for (std::size_t i = 0; i <= n; ++i) f[k][i] = sample_piece(k, static_cast<double>(i) / static_cast<double>(n));
    }
    for (;;) {
        Sums fine, coarse;
        for (std::size_t k = 0; k < pieces; ++k) {
            const double h = 1.0 / static_cast<double>(n);
            const Sums sf = integrate(f[k], 1, h);
            const Sums sc = integrate(f[k], 2, 2 * h);
            fine.num += sf.num;
            fine.den += sf.den;
            coarse.num += sc.num;
            coarse.den += sc.den;
        }
        if (trunc && fine.den < kEmptyTruncation) {
            throw Error(ErrorCode::empty_truncation, "conditioning event has negligible probability");
        }
        const double vf = value(fine);
        const double vc = value(coarse);
        if (std::abs(vf - vc) < quad.tol) {
            g_last_panels = static_cast<int>(n * pieces);
            return std::clamp(vf, 0.0, 1.0);
        }
        if (2 * n > static_cast<std::size_t>(quad.max_panels)) {
            throw Error(ErrorCode::quadrature_nonconvergence,
                        "Simpson estimates still differ by " + std::to_string(std::abs(vf - vc)) + " at " +
                            std::to_string(n * pieces) + " panels");
        }
        for (std::size_t k = 0; k < pieces; ++k) {
            std::vector<Sample> refined(2 * n + 1);
            for (std::size_t i = 0; i <= n; ++i) refined[2 * i] = f[k][i];
            for (std::size_t i = 0; i < n; ++i) {
                refined[2 * i + 1] = sample_piece(k, static_cast<double>(2 * i + 1) / static_cast<double>(2 * n));
            }
            f[k].swap(refined);
        }
        n *= 2;
    }
}

ClrTruncation clr_truncation(const IVSummary& s, double beta0, const Eigen::Matrix2d& omega, double c0, double q_r) {
    const Eigen::Vector2d a0(beta0, 1.0);
    const Eigen::Vector2d b0(1.0, -beta0);
    const double det = omega.determinant();
    if (!(det > 0.0)) throw Error(ErrorCode::not_positive_definite, "Omega-hat is not positive definite");
    Eigen::Matrix2d inv;
    inv << omega(1, 1), -omega(0, 1), -omega(1, 0), omega(0, 0);
    inv /= det;
    const double c_u = (omega(0, 1) - beta0 * omega(1, 1)) / std::sqrt(b0.dot(omega * b0));
    const double c_r = 1.0 / std::sqrt(a0.dot(inv * a0));
    const double lambda = penalty_lambda(s, c0);
    ClrTruncation tr;
    tr.d0 = c_u * c_u;
    tr.d1 = 2.0 * c_u * c_r;
    tr.d2 = c_r * c_r;
    tr.lambda_sq = lambda * lambda;
    tr.q_r = q_r;
    tr.p = static_cast<int>(s.p);
    return tr;
}

double clr_pvalue(const IVSummary& s, const Eigen::Matrix2d& omega, double beta0, std::optional<double> c0,
                  const QuadratureConfig& quad) {
    const ClrComponents c = clr_components(s, beta0, omega);
    const double lr = clr_lr(c.q_u(), c.q_r(), c.q_ur());
    std::optional<ClrTruncation> trunc;
    if (c0) trunc = clr_truncation(s, beta0, omega, *c0, c.q_r());
    return clr_tail(lr, c.q_r(), static_cast<int>(s.p), trunc, quad);
}

ClrInference clr_conditional_inference(const IVSummary& s, double beta0, double c0, double alpha,
                                       const QuadratureConfig& quad, const GridSpec& grid, unsigned threads) {
    ClrInference out;
    out.f_stat = f_statistic(s);
    if (out.f_stat >= c0) {
        throw Error(ErrorCode::pretest_passed, "F = " + std::to_string(out.f_stat) +
                                                   " is not below C0; use the TSLS branch");
    }
    const ModelEstimates est = covariance_estimates(s, tsls_estimate(s));
    const Eigen::Matrix2d omega = est.omega_hat;
    const ClrComponents comps = clr_components(s, beta0, omega);
    out.beta0 = beta0;
    out.statistic = clr_lr(comps.q_u(), comps.q_r(), comps.q_ur());
    out.q_r = comps.q_r();
    out.truncation = clr_truncation(s, beta0, omega, c0, comps.q_r());
    out.naive_pvalue = clr_tail(out.statistic, out.q_r, static_cast<int>(s.p), std::nullopt, quad);
    out.conditional_pvalue = clr_tail(out.statistic, out.q_r, static_cast<int>(s.p), out.truncation, quad);

    const double center = est.beta_tsls;
    const double se = tsls_standard_error(s);
    out.naive_ci = invert_pvalue([&](double b, std::uint64_t) { return clr_pvalue(s, omega, b, std::nullopt, quad); },
                                 center, se, alpha, grid, threads);
    out.conditional_ci = invert_pvalue([&](double b, std::uint64_t) { return clr_pvalue(s, omega, b, c0, quad); },
                                       center, se, alpha, grid, threads);
    return out;
}

} // namespace selectiv
