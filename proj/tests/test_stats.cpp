#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "kappasim/rng.hpp"
#include "kappasim/stats.hpp"

using namespace kappasim;
using Catch::Approx;

TEST_CASE("histogram construction", "[stats]") {
    SECTION("single value widens the degenerate range") {
        const Histogram h = build_histogram({2.0}, 1);
        REQUIRE(h.n_bins() == 1);
        REQUIRE(h.counts[0] == 1);
        REQUIRE(h.edges.front() < 2.0);
        REQUIRE(h.edges.back() > 2.0);
    }
    SECTION("interior edges belong to the lower bin") {
        const Histogram h = build_histogram({0.0, 0.5, 1.0}, 2);
        REQUIRE(h.edges == std::vector<double>{0.0, 0.5, 1.0});
        REQUIRE(h.counts == std::vector<long long>{2, 1});
    }
    SECTION("minimum clamps into the first bin, maximum into the last") {
        const Histogram h = build_histogram({1.0, 2.0, 3.0, 4.0}, 3);
        REQUIRE(h.counts == std::vector<long long>{2, 1, 1});
        REQUIRE(h.total() == 4);
    }
    SECTION("uniform data spreads evenly") {
        CounterRng rng(8);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::vector<double> data(100000);
        for (double& v : data) v = u(rng);
        const Histogram h = build_histogram(data, 10);
        REQUIRE(h.total() == 100000);
        // Binomial(1e5, 0.1): sigma ~ 94.9.
        for (long long c : h.counts) REQUIRE(std::abs(static_cast<double>(c) - 10000.0) <= 400.0);
    }
    SECTION("invalid inputs") {
        REQUIRE_THROWS_AS(build_histogram({}, 5), DomainError);
        REQUIRE_THROWS_AS(build_histogram({1.0, 2.0}, 0), DomainError);
        REQUIRE_THROWS_AS(build_histogram({1.0, std::nan("")}, 2), DomainError);
    }
}

TEST_CASE("automatic bin count", "[stats]") {
    REQUIRE(freedman_diaconis_bins({1.0}) == 10);
    REQUIRE(freedman_diaconis_bins({3.0, 3.0, 3.0, 3.0}) == 10);
    CounterRng rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> data(10000);
    for (double& v : data) v = u(rng);
    // IQR 0.5, n = 1e4: width ~ 0.046, so ~22 bins.
    const std::size_t bins = freedman_diaconis_bins(data);
    REQUIRE(bins >= 15);
    REQUIRE(bins <= 30);
}

TEST_CASE("summary statistics", "[stats]") {
    const Summary s = summary({1.0, 1.0, 1.0, 3.0});
    REQUIRE(s.mean == Approx(1.5));
    REQUIRE(s.std_dev == Approx(1.0));
    REQUIRE(s.std_error == Approx(0.5));
    REQUIRE(s.n == 4);
    REQUIRE(summary({-7.25, 7.25}).mean == Approx(0.0).margin(1e-15));
    REQUIRE_THROWS_AS(summary({1.0}), DomainError);
    REQUIRE_THROWS_AS(summary({1.0, std::nan("")}), DomainError);
}

TEST_CASE("moment fit of raw samples", "[stats]") {
    std::vector<double> data;
    for (int i = 0; i < 100; ++i) data.push_back(i % 2 == 0 ? -1.0 : 1.0);
    const NormalFit fit = fit_normal(data, FitMethod::MomentsOnData);
    REQUIRE(fit.mu == Approx(0.0).margin(1e-15));
    REQUIRE(fit.sigma == Approx(std::sqrt(100.0 / 99.0)));
    REQUIRE(fit.method == FitMethod::MomentsOnData);
    REQUIRE(fit.n == 100);
    REQUIRE_THROWS_AS(fit_normal({5.0, 5.0, 5.0}, FitMethod::MomentsOnData), IllConditionedError);
}

TEST_CASE("histogram fit needs three occupied bins", "[stats]") {
    const Histogram h = build_histogram({0.0, 0.0, 1.0, 1.0}, 2);
    REQUIRE_THROWS_AS(fit_normal(h), IllConditionedError);
}

TEST_CASE("the two fit methods agree on clean normal samples", "[stats]") {
    const double mu = 3.96e-4, sigma = 5.23e-4;
    CounterRng rng(55);
    std::normal_distribution<double> normal(mu, sigma);
    std::vector<double> data(5000);
    for (double& v : data) v = normal(rng);

    const NormalFit moments = fit_normal(data, FitMethod::MomentsOnData);
    const NormalFit lsq = fit_normal(data, FitMethod::LeastSquaresOnHistogram);
    REQUIRE(lsq.method == FitMethod::LeastSquaresOnHistogram);
    REQUIRE(lsq.n == 5000);
    REQUIRE(std::abs(moments.mu - lsq.mu) <= 0.1 * sigma);
    REQUIRE(lsq.sigma == Approx(moments.sigma).epsilon(0.1));
    REQUIRE(moments.mu == Approx(mu).margin(4.0 * sigma / std::sqrt(5000.0)));
    REQUIRE(moments.sigma == Approx(sigma).epsilon(0.05));

    // Peak height of a normalized Gaussian times n and bin width.
    const Histogram h = build_histogram(data, freedman_diaconis_bins(data));
    const double expected_peak =
        5000.0 * h.bin_width() / (sigma * std::sqrt(2.0 * std::numbers::pi));
    REQUIRE(lsq.amplitude == Approx(expected_peak).epsilon(0.15));
}

TEST_CASE("fits are affine-equivariant", "[stats]") {
    CounterRng rng(66);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> x(3000);
    for (double& v : x) v = normal(rng);
    const double a = -2.5, b = 7.0;
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = a * x[i] + b;

    const NormalFit mx = fit_normal(x, FitMethod::MomentsOnData);
    const NormalFit my = fit_normal(y, FitMethod::MomentsOnData);
    REQUIRE(my.mu == Approx(a * mx.mu + b).margin(1e-12));
    REQUIRE(my.sigma == Approx(std::abs(a) * mx.sigma).epsilon(1e-12));

    const NormalFit hx = fit_normal(x, FitMethod::LeastSquaresOnHistogram);
    const NormalFit hy = fit_normal(y, FitMethod::LeastSquaresOnHistogram);
    REQUIRE(hy.mu == Approx(a * hx.mu + b).margin(1e-4 * std::abs(a) * hx.sigma));
    REQUIRE(hy.sigma == Approx(std::abs(a) * hx.sigma).epsilon(1e-4));
}

TEST_CASE("running-mean convergence check", "[stats]") {
    SECTION("hand-computed increments") {
        const ConvergenceTrace t = convergence_check({1.0, 2.0, 3.0}, 0.6);
        REQUIRE(t.increments.size() == 2);
        REQUIRE(t.increments[0] == Approx(0.5));
        REQUIRE(t.increments[1] == Approx(0.5));
        REQUIRE(t.converged);
        REQUIRE_FALSE(convergence_check({1.0, 2.0, 3.0}, 0.4).converged);
    }
    SECTION("constant samples converge immediately") {
        const ConvergenceTrace t = convergence_check(std::vector<double>(50, 2.5), 1e-12);
        REQUIRE(t.converged);
        for (double inc : t.increments) REQUIRE(inc == 0.0);
    }
    SECTION("the increment shrinks as 1/n for bounded samples") {
        CounterRng rng(77);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::vector<double> data(20000);
        for (double& v : data) v = u(rng);
        const ConvergenceTrace t = convergence_check(data, 1e-3);
        REQUIRE(t.converged);
        // |mean_{n+1} - mean_n| <= |x - mean_n| / (n + 1) <= 2 / (n + 1).
        REQUIRE(t.increments.back() <= 2.0 / 20000.0);
    }
    SECTION("invalid inputs") {
        REQUIRE_THROWS_AS(convergence_check({1.0}, 0.1), DomainError);
        REQUIRE_THROWS_AS(convergence_check({1.0, 2.0}, 0.0), DomainError);
    }
}
