#include <doctest.h>

#include <cmath>
#include <vector>

#include "lqg/rng.hpp"
#include "lqg/stats.hpp"

using namespace lqg;

TEST_CASE("mean_se") {
    CHECK_THROWS_AS(mean_se({1.0}), std::invalid_argument);
    const auto c = mean_se({3.0, 3.0, 3.0});
    CHECK(c.mean == doctest::Approx(3.0));
    CHECK(c.se == doctest::Approx(0.0));
    const auto m = mean_se({0.0, 2.0});
    CHECK(m.mean == doctest::Approx(1.0));
    CHECK(m.se == doctest::Approx(1.0));

    // calibration: mean of N(0,1) inside 3 SE in the vast majority of runs
    Rng rng(21, 0);
    int hits = 0;
    for (int r = 0; r < 200; ++r) {
        std::vector<double> xs(2000);
        for (auto& x : xs) x = rng.normal();
        const auto ms = mean_se(xs);
        if (std::fabs(ms.mean) < 3.0 * ms.se) ++hits;
    }
    CHECK(hits >= 195);
}

TEST_CASE("ks two-sample: identity, calibration, power") {
    Rng rng(22, 0);
    std::vector<double> a(5000);
    for (auto& x : a) x = rng.uniform();
    const auto same = ks_two_sample(a, a);
    CHECK(same.statistic == doctest::Approx(0.0));
    CHECK(same.p_value == doctest::Approx(1.0));

    int rejects = 0;
    for (int r = 0; r < 100; ++r) {
        std::vector<double> u(10000), v(10000);
        for (auto& x : u) x = rng.uniform();
        for (auto& x : v) x = rng.uniform();
        if (ks_two_sample(u, v).p_value <= 0.01) ++rejects;
    }
    CHECK(rejects <= 5);  // nominal 1 of 100

    std::vector<double> u(10000), w(10000);
    for (auto& x : u) x = rng.uniform();
    for (auto& x : w) x = rng.uniform(0.0, 1.2);
    CHECK(ks_two_sample(u, w).p_value < 1e-6);

    CHECK_THROWS_AS(ks_two_sample({1.0}, {2.0}), std::invalid_argument);
}

TEST_CASE("ks one-sample uniform") {
    Rng rng(23, 0);
    std::vector<double> u(20000);
    for (auto& x : u) x = rng.uniform();
    CHECK(ks_uniform(u).p_value > 0.01);
    for (auto& x : u) x = std::pow(rng.uniform(), 1.15);
    CHECK(ks_uniform(u).p_value < 1e-4);
}

TEST_CASE("chi-square poisson gof") {
    Rng rng(24, 0);
    std::vector<long> good(4000), bad(4000);
    for (auto& c : good) c = rng.poisson(3.0);
    for (auto& c : bad) c = rng.poisson(rng.uniform() < 0.5 ? 1.0 : 6.0);  // overdispersed
    CHECK(chi_square_poisson(good).p_value > 0.01);
    CHECK(chi_square_poisson(bad).p_value < 1e-6);
}

TEST_CASE("tail exponent: pareto recovery, coverage, misfit flag") {
    Rng rng(25, 0);
    const double theta = 1.6;  // density exponent -(1+theta)
    int covered = 0;
    double last_fit = 0.0;
    for (int r = 0; r < 100; ++r) {
        std::vector<double> xs(20000);
        for (auto& x : xs) x = std::pow(rng.uniform(), -1.0 / theta);  // Pareto(theta) on [1,inf)
        const auto fit = tail_exponent(xs, 1.0, 50.0, rng);
        if (fit.ci_lo <= -(1.0 + theta) && -(1.0 + theta) <= fit.ci_hi) ++covered;
        last_fit = fit.exponent;
    }
    INFO("last fitted exponent " << last_fit);
    CHECK(covered >= 85);  // nominal 95 of 100

    // Hill cross-check on one big sample
    std::vector<double> xs(200000);
    for (auto& x : xs) x = std::pow(rng.uniform(), -1.0 / theta);
    const auto fit = tail_exponent(xs, 1.0, 50.0, rng);
    CHECK(std::fabs(fit.exponent + (1.0 + theta)) < 0.05);
    CHECK(fit.hill == doctest::Approx(theta).epsilon(0.05));
    CHECK_FALSE(fit.poor_fit);

    // exponential samples are a poor power-law fit
    std::vector<double> ex(100000);
    for (auto& x : ex) x = 1.0 + rng.exponential();
    const auto bad = tail_exponent(ex, 1.0, 15.0, rng);
    CHECK(bad.poor_fit);

    CHECK_THROWS_AS(tail_exponent(std::vector<double>(1000, 2.0), 1.0, 10.0, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(tail_exponent({1.0, 2.0}, 1.0, 10.0, rng), std::invalid_argument);
}
