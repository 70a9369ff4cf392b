#include "fab/multiplicity.hpp"
#include "fab/pipelines.hpp"
#include "fab/pvalue.hpp"
#include "fab/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace fab;

// The FAB p-value is never smaller than half the UMPU p-value: on the
// favorable side the best case drops exactly one of the two tail terms.
TEST_CASE("property: p(z, b) >= p(z, 0) / 2 everywhere") {
    const CounterRng rng(31415);
    for (int trial = 0; trial < 20000; ++trial) {
        const double z = 12.0 * (rng.uniform(2 * trial) - 0.5);
        const double b = 30.0 * (rng.uniform(2 * trial + 1) - 0.5);
        const double fab = fab_p_normal(z, b);
        const double umpu = fab_p_normal(z, 0.0);
        CHECK(fab >= 0.5 * umpu - 1e-15);
        CHECK(fab > 0.0);
        CHECK(fab <= 1.0);
    }
}

TEST_CASE("property: alt_cdf is nondecreasing in u and dominated by power monotonicity") {
    for (double theta : {-2.0, 0.0, 0.7}) {
        for (double b : {-1.0, 0.0, 0.5}) {
            double prev = 0.0;
            for (double u = 0.02; u < 1.0; u += 0.02) {
                const double f = alt_cdf(u, theta, b);
                CHECK(f >= prev - 1e-12);
                prev = f;
            }
        }
    }
    // Larger |theta| in the direction of b yields more power at fixed u.
    CHECK(alt_cdf(0.05, 2.0, 1.0) > alt_cdf(0.05, 1.0, 1.0));
    CHECK(alt_cdf(0.05, 1.0, 1.0) > alt_cdf(0.05, 0.0, 1.0));
}

TEST_CASE("property: blocked mode sits between exact and shared in fit sharing") {
    const CounterRng rng(2024);
    const int p = 24;
    Vector y(p);
    double level = 1.0;
    for (int i = 0; i < p; ++i) {
        if (i == p / 2) level = -1.0;
        y(i) = level + rng.normal(i);
    }
    const Vector var = Vector::Ones(p);
    const Vector nulls = Vector::Zero(p);
    const LinkingChoice car{FitFamily{LinkingFamily::car_path()}};

    const auto exact = fab_means_z(y, DiagonalKnown{var}, car, Mode::exact(), nulls, 2);
    const auto blocked = fab_means_z(y, DiagonalKnown{var}, car, Mode::blocked(4), nulls, 2);
    const auto shared = fab_means_z(y, DiagonalKnown{var}, car, Mode::shared(), nulls, 2);
    for (int j = 0; j < p; ++j) {
        CHECK(blocked[j].status == ResultStatus::Ok);
        CHECK(blocked[j].p_fab > 0.0);
        CHECK(blocked[j].p_fab <= 1.0);
        // All three agree on the direct statistic and UMPU value.
        CHECK(blocked[j].stat == exact[j].stat);
        CHECK(blocked[j].p_umpu == exact[j].p_umpu);
        CHECK(blocked[j].p_umpu == shared[j].p_umpu);
    }
    // Blocked measurability: the shift for j never reads y_j, because the
    // fit excludes j's whole block and the moments exclude coordinate j.
    Vector y2 = y;
    y2(2) += 7.5;
    const auto blocked2 = fab_means_z(y2, DiagonalKnown{var}, car, Mode::blocked(4), nulls, 2);
    CHECK(blocked2[2].shift == blocked[2].shift);
}

TEST_CASE("property: bh threshold reported consistently with the rejection set") {
    const CounterRng rng(555);
    for (int trial = 0; trial < 50; ++trial) {
        const CounterRng sub = rng.substream(trial);
        std::vector<double> pvals(25);
        for (int i = 0; i < 25; ++i) pvals[i] = std::pow(sub.uniform(i), 1.5);
        const MultiplicityReport rep = bh_reject(pvals, 0.15);
        for (int j = 0; j < 25; ++j) {
            const bool in = std::find(rep.rejected.begin(), rep.rejected.end(), j) !=
                            rep.rejected.end();
            CHECK(in == (rep.threshold > 0.0 && pvals[j] <= rep.threshold));
        }
    }
}

TEST_CASE("property: blocked with k = p reduces to exact across pipelines") {
    const CounterRng rng(64001);
    // Group means.
    {
        const int p = 10;
        Vector ybar(p), s2(p), n(p);
        for (int i = 0; i < p; ++i) {
            ybar(i) = 2.0 + rng.normal(i);
            s2(i) = 1.0 + rng.uniform(100 + i);
            n(i) = 6 + (i % 5);
        }
        const auto exact = fab_means_t(ybar, s2, n, Matrix(), 0.0, Mode::exact(), 1);
        const auto blocked = fab_means_t(ybar, s2, n, Matrix(), 0.0, Mode::blocked(p), 1);
        for (int j = 0; j < p; ++j) {
            CHECK(exact[j].shift == blocked[j].shift);
            CHECK(exact[j].p_fab == blocked[j].p_fab);
        }
    }
    // Regression coefficients.
    {
        const int n = 90, p = 7;
        const CounterRng xr = rng.substream(1);
        Matrix x(n, p);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < p; ++k)
                x(i, k) = xr.normal(static_cast<std::uint64_t>(i) * p + k);
        Vector y = x * Vector::Constant(p, 0.8);
        const CounterRng er = rng.substream(2);
        for (int i = 0; i < n; ++i) y(i) += er.normal(i);
        const LinkingChoice exch{FitFamily{LinkingFamily::exchangeable()}};
        const auto exact = fab_lm(x, y, exch, Mode::exact(), 1);
        const auto blocked = fab_lm(x, y, exch, Mode::blocked(p), 1);
        for (int j = 0; j < p; ++j) {
            CHECK(exact[j].shift == blocked[j].shift);
            CHECK(exact[j].p_fab == blocked[j].p_fab);
        }
    }
    // Asymptotic estimates.
    {
        const int p = 9;
        Vector theta(p);
        for (int i = 0; i < p; ++i) theta(i) = (i < 4 ? 0.5 : 0.0) + 0.1 * rng.normal(300 + i);
        Matrix sigma = Matrix::Identity(p, p);
        sigma.diagonal().array() += 0.2;
        const LinkingChoice ss{FitFamily{LinkingFamily::spike_slab()}};
        const auto exact = fab_asymptotic(theta, sigma, 400.0, ss, Mode::exact(), 1);
        const auto blocked = fab_asymptotic(theta, sigma, 400.0, ss, Mode::blocked(p), 1);
        for (int j = 0; j < p; ++j) {
            CHECK(exact[j].shift == blocked[j].shift);
            CHECK(exact[j].p_fab == blocked[j].p_fab);
        }
    }
}
