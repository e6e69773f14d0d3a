#include "sepp/parallel.hpp"
#include "sepp/statistics.hpp"

#include <gtest/gtest.h>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/gamma.hpp>

#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

using namespace sepp;

TEST(Summary, MomentsAndQuantiles)
{
    std::vector<double> x(101);
    std::iota(x.begin(), x.end(), 0.0);
    const stats::Summary s = stats::summarize(x);
    EXPECT_EQ(s.n, 101u);
    EXPECT_DOUBLE_EQ(s.mean, 50.0);
    // sample variance of 0..n-1 is n(n+1)/12
    EXPECT_NEAR(s.variance, 101.0 * 102.0 / 12.0, 1e-9);
    EXPECT_DOUBLE_EQ(s.q50, 50.0);
    EXPECT_DOUBLE_EQ(s.q05, 5.0);
    EXPECT_DOUBLE_EQ(s.q95, 95.0);
    EXPECT_NEAR(s.std_error, std::sqrt(s.variance / 101.0), 1e-12);
}

TEST(Summary, PairwiseSumIsAccurate)
{
    std::vector<double> x(1'000'000, 0.1);
    EXPECT_NEAR(stats::pairwise_sum(x), 100000.0, 1e-8);
}

TEST(Covariance, MatchesDefinition)
{
    const std::vector<double> a{1, 2, 3, 4, 5}, b{2, 1, 4, 3, 6};
    // sum (a - 3)(b - 3.2) / 4
    EXPECT_NEAR(stats::covariance(a, b), (-2 * -1.2 + -1 * -2.2 + 0 + 1 * -0.2 + 2 * 2.8) / 4.0, 1e-14);
}

TEST(Distributions, GammaCdfMatchesBoost)
{
    const boost::math::gamma_distribution<double> g(2.0, 1.0);
    for (double x : {0.1, 1.0, 2.5, 7.0}) EXPECT_NEAR(stats::gamma_cdf(x, 2.0), boost::math::cdf(g, x), 1e-14);
    // shape 2, scale 1: 1 - e^-x (1 + x)
    EXPECT_NEAR(stats::gamma_cdf(1.0, 2.0), 1.0 - 2.0 / std::exp(1.0), 1e-14);
}

TEST(Distributions, NormalCdf)
{
    EXPECT_DOUBLE_EQ(stats::normal_cdf(0.0), 0.5);
    EXPECT_NEAR(stats::normal_cdf(1.959963984540054), 0.975, 1e-12);
    EXPECT_NEAR(stats::normal_cdf(3.0, 1.0, 2.0), stats::normal_cdf(1.0), 1e-15);
}

TEST(KolmogorovSmirnov, OneSampleStatistic)
{
    // sample {0.1, 0.5, 0.9} against U(0,1): largest gap is at 0.9 -> 2/3 vs 0.9 is 0.2333, at 0.5: 0.5 - 1/3
    EXPECT_NEAR(stats::ks_statistic({0.5, 0.9, 0.1}, [](double x) { return x; }), 0.2333333333333333, 1e-12);
}

TEST(KolmogorovSmirnov, TwoSampleStatistic)
{
    EXPECT_DOUBLE_EQ(stats::ks_two_sample({1, 2, 3}, {1, 2, 3}), 0.0);
    EXPECT_DOUBLE_EQ(stats::ks_two_sample({1, 2}, {3, 4}), 1.0);
}

TEST(KolmogorovSmirnov, AsymptoticPValue)
{
    // Kolmogorov distribution: P(sqrt(n) D > 1.3581) = 0.05
    EXPECT_NEAR(stats::ks_p_value(1.3581 / std::sqrt(1e6), 1e6), 0.05, 1e-3);
}

TEST(TotalVariation, HalfL1Distance)
{
    const std::vector<double> p{0.5, 0.5}, q{0.25, 0.25, 0.5};
    EXPECT_DOUBLE_EQ(stats::total_variation(p, q), 0.5);
}

TEST(EmpiricalPmf, CountsFrequencies)
{
    const std::vector<std::size_t> c{0, 2, 2, 3};
    const auto p = stats::empirical_pmf(c);
    ASSERT_EQ(p.size(), 4u);
    EXPECT_DOUBLE_EQ(p[0], 0.25);
    EXPECT_DOUBLE_EQ(p[1], 0.0);
    EXPECT_DOUBLE_EQ(p[2], 0.5);
}

TEST(LineFit, RecoversExactLine)
{
    const std::vector<double> x{0, 1, 2, 3}, y{1, 3, 5, 7};
    const auto f = stats::fit_line(x, y);
    EXPECT_NEAR(f.slope, 2.0, 1e-14);
    EXPECT_NEAR(f.intercept, 1.0, 1e-14);
    EXPECT_NEAR(f.slope_std_error, 0.0, 1e-12);
}

TEST(Isotonic, PoolsAdjacentViolators)
{
    const std::vector<double> y{1.0, 0.5, 0.7, 0.2}, w{1, 1, 1, 1};
    const auto r = stats::isotonic_decreasing(y, w);
    EXPECT_DOUBLE_EQ(r[0], 1.0);
    EXPECT_DOUBLE_EQ(r[1], 0.6);
    EXPECT_DOUBLE_EQ(r[2], 0.6);
    EXPECT_DOUBLE_EQ(r[3], 0.2);
}

TEST(ClopperPearson, MatchesBetaQuantiles)
{
    const auto ci = stats::clopper_pearson(7, 50, 0.99);
    EXPECT_NEAR(ci.lo, boost::math::quantile(boost::math::beta_distribution<double>(7, 44), 0.005), 1e-12);
    EXPECT_NEAR(ci.hi, boost::math::quantile(boost::math::beta_distribution<double>(8, 43), 0.995), 1e-12);
    const auto all = stats::clopper_pearson(50, 50, 0.99);
    EXPECT_DOUBLE_EQ(all.hi, 1.0);
    // exact: (0.005)^(1/50)
    EXPECT_NEAR(all.lo, std::pow(0.005, 1.0 / 50.0), 1e-12);
    EXPECT_DOUBLE_EQ(stats::clopper_pearson(0, 50, 0.99).lo, 0.0);
}

TEST(Parallel, MapIsIndexOrderedForAnyWorkerCount)
{
    for (std::size_t w : {1u, 2u, 3u, 8u}) {
        const auto out = par::map_replications(1000, w, [](std::size_t i) { return i * i; });
        for (std::size_t i = 0; i < out.size(); ++i) ASSERT_EQ(out[i], i * i);
    }
}

TEST(Parallel, ForVisitsEveryIndexOnce)
{
    std::vector<std::atomic<int>> hits(5000);
    par::parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i]++; }, 7);
    for (const auto& h : hits) ASSERT_EQ(h.load(), 1);
}

TEST(Parallel, PropagatesExceptions)
{
    EXPECT_THROW(par::parallel_for(100, 3, [](std::size_t i) {
                     if (i == 42) throw std::runtime_error("boom");
                 }),
                 std::runtime_error);
}

TEST(Parallel, EnvironmentCapsWorkers)
{
    ::setenv("SEPP_THREADS", "2", 1);
    EXPECT_EQ(par::resolve_workers(8), 2u);
    EXPECT_EQ(par::resolve_workers(0), 2u);
    EXPECT_EQ(par::resolve_workers(1), 1u);
    ::unsetenv("SEPP_THREADS");
    EXPECT_EQ(par::resolve_workers(3), 3u);
}
