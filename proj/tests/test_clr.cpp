#include "selectiv/distributions.hpp"
#include "selectiv/error.hpp"
#include "selectiv/pretest.hpp"
#include "selectiv/test_stats.hpp"
#include "selectiv/weak_iv_clr.hpp"
#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

using namespace selectiv;
using namespace selectiv::testing;
using Catch::Approx;

namespace {

struct McTail {
    double tail;
    double conditioning;
};

// Monte Carlo of the limiting law: U ~ N(0, I_p), R fixed with ||R||^2 = q_r.
// With a truncation, the event ||c_u U + c_r R||^2 <= lambda^2 is imposed jointly.
McTail mc_tail(double t, double q_r, int p, const std::optional<ClrTruncation>& tr, long draws, std::uint64_t seed) {
    Rng rng(seed, 0);
    const double r = std::sqrt(q_r);
    long hit = 0, kept = 0;
    for (long i = 0; i < draws; ++i) {
        double qu = 0.0, u1 = 0.0;
        for (int j = 0; j < p; ++j) {
            const double z = rng.normal();
            qu += z * z;
            if (j == 0) u1 = z;
        }
        const double qur = u1 * r;
        if (tr && tr->d0 * qu + tr->d1 * qur + tr->d2 * q_r > tr->lambda_sq) continue;
        ++kept;
        if (clr_lr(qu, q_r, qur) >= t) ++hit;
    }
    return {static_cast<double>(hit) / kept, static_cast<double>(kept) / draws};
}

double simpson(const std::function<double(double)>& f, double a, double b, int panels) {
    const double h = (b - a) / panels;
    double sum = f(a) + f(b);
    for (int i = 1; i < panels; ++i) sum += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
    return sum * h / 3.0;
}

} // namespace

TEST_CASE("direction weight constant") {
    CHECK(k4_constant(3) == Approx(0.5).epsilon(1e-14));
    CHECK(k4_constant(2) == Approx(1.0 / std::numbers::pi).epsilon(1e-14));
    for (int p = 2; p <= 10; ++p) {
        // u = sin(theta) removes the endpoint singularity at p = 2.
        const double integral = simpson([p](double th) { return std::pow(std::cos(th), p - 2); },
                                        -std::numbers::pi / 2, std::numbers::pi / 2, 2000);
        CHECK(k4_constant(p) * integral == Approx(1.0).margin(1e-8));
    }
    CHECK_THROWS_AS(k4_constant(1), Error);
}

TEST_CASE("untruncated tail: limits and monotonicity") {
    const QuadratureConfig quad;
    CHECK(clr_tail(1e-10, 2.0, 4, std::nullopt, quad) == Approx(1.0).margin(1e-6));
    for (int p : {1, 2, 5, 10}) {
        for (double t : {0.5, 2.0, 7.0}) {
            CHECK(clr_tail(t, 0.0, p, std::nullopt, quad) == Approx(chi2_sf(t, p)).epsilon(1e-9));
            CHECK(clr_tail(t, 1e7, p, std::nullopt, quad) == Approx(chi2_sf(t, 1)).margin(2e-3));
        }
    }
    for (int p : {2, 5}) {
        double prev = 1.0;
        for (int i = 1; i <= 50; ++i) {
            const double v = clr_tail(0.3 * i, 3.0, p, std::nullopt, quad);
            REQUIRE(v >= 0.0);
            REQUIRE(v < prev);
            prev = v;
        }
    }
}

TEST_CASE("untruncated tail against Monte Carlo of the limiting law") {
    const QuadratureConfig quad;
    const double q = clr_tail(2.0, 3.0, 5, std::nullopt, quad);
    CHECK(std::abs(q - mc_tail(2.0, 3.0, 5, std::nullopt, 1000000, 1).tail) < 0.003);
    QuadratureConfig doubled = quad;
    doubled.panels *= 2;
    CHECK(std::abs(clr_tail(2.0, 3.0, 5, std::nullopt, doubled) - q) < 1e-6);
}

TEST_CASE("truncated tail against Monte Carlo of the conditioned law") {
    // c_u, c_r with lambda^2 cutting a sizeable share of the U-space.
    const double cu = 0.8, cr = 0.6;
    for (int p : {1, 3, 6}) {
        const double q_r = 2.0;
        ClrTruncation tr{cu * cu, 2 * cu * cr, cr * cr, 0.0, q_r, p};
        tr.lambda_sq = 0.8 * p + cr * cr * q_r;
        const QuadratureConfig quad;
        for (double t : {0.5, 2.0}) {
            const McTail mc = mc_tail(t, q_r, p, tr, 1000000, 2 + p);
            INFO("p " << p << " t " << t << " conditioning " << mc.conditioning);
            REQUIRE(mc.conditioning > 0.05);
            CHECK(std::abs(clr_tail(t, q_r, p, tr, quad) - mc.tail) < 0.004);
        }
    }
}

TEST_CASE("tiny conditioning probability: ratio against importance sampling") {
    // ||S||^2 is a perfect square in (U, R), so the event is a ball far from
    // the origin of U-space with probability near 1e-13.
    const int p = 10;
    const double q_r = 360.0, d0 = 0.4, d1 = 0.95;
    const ClrTruncation tr{d0, d1, d1 * d1 / (4 * d0), 97.0, q_r, p};
    const double t = 60.0;
    const double quad = clr_tail(t, q_r, p, tr, QuadratureConfig{});

    Eigen::VectorXd r = Eigen::VectorXd::Zero(p);
    r(0) = std::sqrt(q_r);
    const Eigen::VectorXd c = -(d1 / (2 * d0)) * r;
    const double radius = std::sqrt((tr.lambda_sq - tr.d2 * q_r + d1 * d1 * q_r / (4 * d0)) / d0);
    const Eigen::VectorXd m = c.normalized() * (c.norm() - radius);
    Rng rng(17, 0);
    double wsum = 0.0, whit = 0.0;
    for (int i = 0; i < 400000; ++i) {
        const Eigen::VectorXd u = m + rng.normal_vector(p);
        const double qu = u.squaredNorm(), qur = u.dot(r);
        if (d0 * qu + d1 * qur + tr.d2 * q_r > tr.lambda_sq) continue;
        const double w = std::exp(-m.dot(u) + 0.5 * m.squaredNorm());
        wsum += w;
        if (clr_lr(qu, q_r, qur) >= t) whit += w;
    }
    INFO("event probability " << wsum / 400000);
    REQUIRE(wsum / 400000 < 1e-10);
    CHECK(std::abs(quad - whit / wsum) < 0.01);
}

TEST_CASE("truncation coefficients reproduce ||S||^2") {
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
        const IVSummary s = simulated_summary(0.05, 0.7, 300, 2 + rep % 5, 3, rep);
        const Eigen::Matrix2d omega = covariance_estimates(s, tsls_estimate(s)).omega_hat;
        for (double b : {-1.0, 0.0, 1.3}) {
            const ClrComponents comp = clr_components(s, b, omega);
            const ClrTruncation tr = clr_truncation(s, b, omega, 10.0, comp.q_r());
            REQUIRE(tr.d0 * comp.q_u() + tr.d1 * comp.q_ur() + tr.d2 * comp.q_r() ==
                    Approx(s.s_d.squaredNorm()).epsilon(1e-9));
            REQUIRE(tr.lambda_sq == Approx(std::pow(penalty_lambda(s, 10.0), 2)).epsilon(1e-12));
        }
    }
}

TEST_CASE("far below the threshold the conditional and naive CLR agree") {
    int checked = 0;
    for (std::uint64_t rep = 0; rep < 40 && checked < 10; ++rep) {
        const IVSummary s = simulated_summary(0.0, 0.8, 500, 5, 4, rep);
        if (f_statistic(s) >= 3.0) continue;
        ++checked;
        const Eigen::Matrix2d omega = covariance_estimates(s, tsls_estimate(s)).omega_hat;
        const QuadratureConfig quad;
        for (double b : {0.0, 1.0, 3.0}) {
            const double naive = clr_pvalue(s, omega, b, std::nullopt, quad);
            const double cond = clr_pvalue(s, omega, b, 10.0, quad);
            REQUIRE(std::abs(naive - cond) < 0.005);
        }
    }
    CHECK(checked == 10);
}

TEST_CASE("tail stays in the unit interval in both truncation modes") {
    for (auto mode : {TruncationMode::joint, TruncationMode::per_direction}) {
        QuadratureConfig quad;
        quad.mode = mode;
        ClrTruncation tr{0.5, 0.4, 0.3, 4.0, 1.5, 4};
        for (double t : {0.1, 1.0, 5.0, 20.0}) {
            const double v = clr_tail(t, 1.5, 4, tr, quad);
            REQUIRE(v >= 0.0);
            REQUIRE(v <= 1.0);
        }
    }
}

TEST_CASE("CLR inference errors and interval") {
    const IVSummary strong = simulated_summary(1.0, 0.5, 500, 4, 5);
    try {
        clr_conditional_inference(strong, 1.0, 10.0, 0.05);
        FAIL("expected pretest_passed");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::pretest_passed);
    }
    ClrTruncation empty{1.0, 0.0, 1.0, 1e-30, 1.0, 3};
    empty.lambda_sq = -1.0;
    try {
        clr_tail(1.0, 1.0, 3, empty, QuadratureConfig{});
        FAIL("expected empty_truncation");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::empty_truncation);
    }
    const IVSummary weak = simulated_summary(0.05, 0.5, 500, 4, 6);
    REQUIRE(f_statistic(weak) < 10.0);
    const ClrInference inf = clr_conditional_inference(weak, 1.0, 10.0, 0.05);
    CHECK(inf.conditional_pvalue >= 0.0);
    CHECK(inf.conditional_pvalue <= 1.0);
    for (const auto& gp : inf.conditional_ci.evaluated) {
        if (gp.pvalue >= 0.05) CHECK(inf.conditional_ci.interval.contains(gp.beta0));
    }
}
