#include "selectiv/distributions.hpp"
#include "selectiv/error.hpp"
#include "selectiv/test_stats.hpp"
#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>

using namespace selectiv;
using namespace selectiv::testing;
using Catch::Approx;

TEST_CASE("TSLS statistic vanishes at the TSLS estimate") {
    const IVSummary s = simulated_summary(0.3, 0.5, 300, 4, 1);
    const double b = tsls_estimate(s);
    const TestValue v = tsls_stat(s, b, covariance_estimates(s, b));
    CHECK(v.statistic == Approx(0.0).margin(1e-10));
    CHECK(v.naive_pvalue == Approx(1.0).margin(1e-10));
}

TEST_CASE("TSLS statistic is standard normal under the null") {
    std::vector<double> t;
    for (int r = 0; r < 1000; ++r) {
        const IVSummary s = simulated_summary(0.5, 0.5, 500, 3, 2, static_cast<std::uint64_t>(r));
        t.push_back(tsls_stat(s, 1.0, covariance_estimates(s, 1.0)).statistic);
    }
    CHECK(ks_test(t, normal_cdf).statistic < 0.08);
}

TEST_CASE("AR statistic on the three-point instance") {
    // Y - D beta0 = (-2, 1, 1) at beta0 = 0: Z'e = 3, e'P e = 9/2, RSS = 6 - 4.5.
    const IVSummary s = summarize(prepare(hand_instance({-2, 1, 1}, {-2, 1, 1})));
    const TestValue v = ar_stat(s, 0.0);
    const double numerator = 4.5 / 1.0, denominator = 1.5 / 2.0;
    CHECK(v.statistic == Approx(numerator / denominator).epsilon(1e-12));
    CHECK(v.statistic == Approx(6.0).epsilon(1e-12));
    CHECK(v.naive_pvalue == Approx(f_sf(6.0, 1, 2)).epsilon(1e-12));
}

TEST_CASE("AR statistic is zero when the null residual is orthogonal to Z") {
    const IVSummary s = summarize(prepare(hand_instance({1, -2, 1}, {-1, 0.5, 1})));
    const TestValue v = ar_stat(s, 0.0);
    CHECK(v.statistic == Approx(0.0).margin(1e-12));
    CHECK(v.naive_pvalue == Approx(1.0).margin(1e-12));
}

TEST_CASE("AR statistic follows F(p, n-p) under the null whatever the instrument strength") {
    for (double r : {0.0, 0.05, 1.0}) {
        std::vector<double> f;
        for (int rep = 0; rep < 1000; ++rep) {
            const IVSummary s = simulated_summary(r, 0.8, 200, 5, 3, static_cast<std::uint64_t>(rep));
            f.push_back(ar_stat(s, 1.0).statistic);
        }
        const KsResult ks = ks_test(f, [](double x) { return 1.0 - f_sf(x, 5, 195); });
        INFO("r = " << r);
        CHECK(ks.statistic < 0.08);
    }
}

TEST_CASE("CLR statistic collapses when Q_UR vanishes") {
    CHECK(clr_lr(5.0, 2.0, 0.0) == Approx(3.0));
    CHECK(clr_lr(2.0, 5.0, 0.0) == Approx(0.0).margin(1e-15));
    Rng rng(4, 0);
    for (int i = 0; i < 10000; ++i) {
        const Eigen::Vector2d a(rng.normal(), rng.normal()), b(rng.normal(), rng.normal());
        const double qu = a.squaredNorm() * 3, qr = b.squaredNorm(), qur = a.dot(b) * std::sqrt(3.0);
        REQUIRE(clr_lr(qu, qr, qur) >= 0.0);
        REQUIRE(clr_lr(qu, qr, qur) <= qu + 1e-12);
    }
}

TEST_CASE("statistics are invariant to recombining the instruments") {
    Rng rng(5, 0);
    const DGPConfig cfg = DGPConfig::equal_strength(0.2, 0.6, 150, 3, 1.0, 5);
    const IVDataset data = generate(cfg, rng);
    Eigen::MatrixXd a = gaussian_matrix(rng, 3, 3) + 3.0 * Eigen::MatrixXd::Identity(3, 3);
    const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(gaussian_matrix(rng, 3, 3)).householderQ();
    IVDataset mixed = data, rotated = data;
    mixed.z = data.z * a;
    rotated.z = data.z * q;
    const IVSummary s0 = summarize(data), s1 = summarize(mixed), s2 = summarize(rotated);
    for (double b : {-1.0, 0.3, 1.0, 2.5}) {
        CHECK(ar_stat(s1, b).statistic == Approx(ar_stat(s0, b).statistic).epsilon(1e-8));
        CHECK(tsls_stat(s1, b, covariance_estimates(s1, b)).statistic ==
              Approx(tsls_stat(s0, b, covariance_estimates(s0, b)).statistic).epsilon(1e-8));
        const auto c0 = clr_stat(s0, b, covariance_estimates(s0, tsls_estimate(s0)));
        const auto c2 = clr_stat(s2, b, covariance_estimates(s2, tsls_estimate(s2)));
        CHECK(c2.first.statistic == Approx(c0.first.statistic).epsilon(1e-8));
        CHECK(c2.second.q_r() == Approx(c0.second.q_r()).epsilon(1e-8));
    }
}

TEST_CASE("p-values lie in the unit interval") {
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
        const IVSummary s = simulated_summary(0.05, 0.9, 200, 4, 6, rep);
        const ModelEstimates est = covariance_estimates(s, tsls_estimate(s));
        for (double b : {-5.0, 0.0, 1.0, 10.0}) {
            const double pt = tsls_stat(s, b, est).naive_pvalue;
            const double pa = ar_stat(s, b).naive_pvalue;
            const double pc = clr_stat(s, b, est).first.naive_pvalue;
            REQUIRE((pt >= 0.0 && pt <= 1.0));
            REQUIRE((pa >= 0.0 && pa <= 1.0));
            REQUIRE((pc >= 0.0 && pc <= 1.0));
        }
    }
}

TEST_CASE("degenerate inputs raise typed errors") {
    // A perfect fit of Y - D beta0 on Z leaves no residual.
    const IVSummary s = summarize(prepare(hand_instance({-1, 0, 1}, {-2, 1, 1})));
    try {
        ar_stat(s, 0.0);
        FAIL("expected zero_residual");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::zero_residual);
    }
}
