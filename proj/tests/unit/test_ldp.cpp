#include "sepp/ldp.hpp"

#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/numeric/odeint.hpp>

#include <cmath>
#include <random>

using namespace sepp;
using namespace sepp::ldp;

namespace {

const double kGolden = (1.0 + std::sqrt(5.0)) / 2.0;

double poisson_rate(double x, double lam) { return x * std::log(x / lam) - x + lam; }

} // namespace

TEST(Lagrangian, ZeroOnTheFlow)
{
    const RateFunction rf(SqrtShift{});
    EXPECT_NEAR(lagrangian(rf, 0.4, 0.8, rf(2.0)), 0.0, 1e-15);
}

TEST(Lagrangian, ConstantRateIsPoissonEntropy)
{
    const RateFunction rf(Constant{2.0});
    EXPECT_NEAR(lagrangian(rf, 0.7, 1.3, 5.0), poisson_rate(5.0, 2.0), 1e-14);
}

TEST(Lagrangian, ZeroSlopeCostsTheIntensity)
{
    const RateFunction rf(Affine{0.5, 1.0});
    EXPECT_DOUBLE_EQ(lagrangian(rf, 0.5, 1.0, 0.0), rf(2.0));
}

TEST(Lagrangian, BoundaryConventions)
{
    const RateFunction lin(Affine{1.0, 0.0});
    EXPECT_TRUE(std::isinf(lagrangian(lin, 0.5, 0.0, 1.0)));
    EXPECT_DOUBLE_EQ(lagrangian(lin, 0.5, 0.0, 0.0), 0.0);
    EXPECT_THROW(lagrangian(lin, 0.0, 0.0, 1.0), std::domain_error);
    EXPECT_THROW(lagrangian(lin, 1.5, 0.0, 1.0), std::domain_error);
}

TEST(RateOfPath, FixedPointLineCostsNothing)
{
    EXPECT_NEAR(rate_of_path(RateFunction(SqrtShift{}), Path::straight_line(kGolden, 64)).value, 0.0, 1e-10);
}

TEST(RateOfPath, PoissonReduction)
{
    const RateValue v = rate_of_path(RateFunction(Constant{2.0}), Path::straight_line(3.0, 16));
    EXPECT_NEAR(v.value, 3.0 * std::log(1.5) - 1.0, 1e-8);
    EXPECT_NEAR(v.value, 0.21640, 1e-5);
    EXPECT_FALSE(v.formal);
}

TEST(RateOfPath, FlatPathGivesVoidExponent)
{
    EXPECT_NEAR(rate_of_path(RateFunction(Constant{1.7}), Path::straight_line(0.0, 8)).value, 1.7, 1e-12);
}

TEST(RateOfPath, InfiniteWhenIntensityVanishes)
{
    // lambda vanishes below z = 1 while the path keeps f/alpha = 1/2 with positive slope
    const RateFunction rf(PiecewiseLinear{{{0, 0}, {1, 0}, {2, 1}}, 1.0});
    EXPECT_TRUE(rate_of_path(rf, Path::straight_line(0.5, 8)).infinite);
    EXPECT_FALSE(rate_of_path(rf, Path::straight_line(3.0, 8)).infinite);
}

TEST(RateOfPath, AgreesWithAdaptiveQuadratureOnSmoothIntegrand)
{
    // f = x alpha^2 on a fine grid versus Gauss-Kronrod on the exact curve
    const RateFunction rf(SqrtShift{});
    const double x = 2.5;
    const std::size_t n = 2000;
    Path p;
    for (std::size_t i = 0; i <= n; ++i) {
        const double a = static_cast<double>(i) / n;
        p.grid.push_back(a);
        p.values.push_back(x * a * a);
    }
    auto L = [&](double a) { return lagrangian(rf, a, x * a * a, 2.0 * x * a); };
    const double ref = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(L, 0.0, 1.0, 15, 1e-13);
    EXPECT_NEAR(rate_of_path(rf, p).value, ref, 1e-5);
}

TEST(ScalarRate, ZeroAtTheFixedPoint)
{
    const RateValue v = scalar_rate(RateFunction(SqrtShift{}), kGolden, 32);
    EXPECT_LT(v.value, 1e-6);
    EXPECT_TRUE(v.converged);
    for (std::size_t i = 0; i < v.minimizer.grid.size(); ++i) {
        EXPECT_NEAR(v.minimizer.values[i], kGolden * v.minimizer.grid[i], 1e-4);
    }
}

TEST(ScalarRate, PoissonReductionFromStraightLine)
{
    const RateValue v = scalar_rate(RateFunction(Constant{2.0}), 3.0, 32);
    EXPECT_NEAR(v.value, poisson_rate(3.0, 2.0), 1e-4);
    EXPECT_NEAR(scalar_rate(RateFunction(Constant{2.0}), 0.0, 16).value, 2.0, 1e-10);
}

TEST(ScalarRate, QuadraticNearTheStableFixedPoint)
{
    // Linearizing dY = (lambda(Y) - Y)/(t+1) dt + noise around x* gives an Ornstein-Uhlenbeck
    // process in log time whose stationary variance is x*/(1 - 2 lambda'(x*)), so
    // I(x* + d) = d^2 / (2 v) + O(d^3).
    const RateFunction rf(SqrtShift{});
    const double v = kGolden / (1.0 - 2.0 * derivative(rf, kGolden));
    for (double d : {0.01, 0.02, -0.02}) {
        const double I = scalar_rate(rf, kGolden + d, 64).value;
        EXPECT_NEAR(I / (d * d / (2.0 * v)), 1.0, 0.05) << d;
    }
}

TEST(ScalarRate, IndependentOfTheStartingPath)
{
    std::mt19937_64 gen(12345);
    std::uniform_real_distribution<double> u(0.2, 3.0);
    const std::size_t n = 24;
    const std::pair<RateFunction, double> cases[] = {{RateFunction(SqrtShift{}), 3.0},
                                                     {RateFunction(SqrtShift{}), 0.7},
                                                     {RateFunction(SineMix{0.9, 0.6, 0.5}), 0.5}};
    for (const auto& [rf, x] : cases) {
        const double ref = scalar_rate(rf, x, n).value;
        for (int trial = 0; trial < 5; ++trial) {
            // random monotone start on the same nodes: segment increments scaled by random factors
            Path p = Path::graded(x, n, MinimizeOptions{}.grading);
            std::vector<double> inc(n);
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) total += (inc[i] = (p.grid[i + 1] - p.grid[i]) * u(gen));
            double acc = 0.0;
            for (std::size_t i = 1; i < n; ++i) p.values[i] = x * (acc += inc[i - 1]) / total;
            const RateValue v = scalar_rate(rf, x, n, {}, p);
            EXPECT_TRUE(v.converged);
            EXPECT_NEAR(v.value, ref, 1e-8 * (1.0 + ref)) << x << " trial " << trial;
        }
    }
}

TEST(ScalarRate, ConvergesUnderGridRefinement)
{
    const RateFunction rf(SqrtShift{});
    std::vector<double> v;
    for (std::size_t n : {8, 16, 32, 64}) v.push_back(scalar_rate(rf, 3.0, n).value);
    for (std::size_t i = 2; i < v.size(); ++i) {
        // successive differences shrink by about 4 per halving on the graded grid
        EXPECT_LT(std::abs(v[i] - v[i - 1]), 0.4 * std::abs(v[i - 1] - v[i - 2])) << i;
    }
    EXPECT_LT(std::abs(v[3] - v[2]), 1e-3 * v[3]);
    // the uniform grid converges to the same limit, only more slowly
    MinimizeOptions uniform;
    uniform.grading = 1.0;
    const double u = scalar_rate(rf, 3.0, 256, uniform).value;
    EXPECT_GT(u, v[3]);
    EXPECT_LT(u - v[3], 0.03 * v[3]);
}

TEST(ScalarRate, NonnegativeAcrossAScan)
{
    const RateFunction rf(SineMix{0.9, 0.6, 0.5});
    for (double x = 0.0; x <= 12.0; x += 0.5) {
        const RateValue v = scalar_rate(rf, x, 16);
        EXPECT_GE(v.value, 0.0) << x;
        EXPECT_TRUE(v.converged) << x;
    }
}

TEST(ScalarRate, VanishesOnAnIntervalOfFixedPoints)
{
    const RateFunction rf(PiecewiseLinear{{{0, 1}, {1, 1.5}, {2, 2}, {3, 3}, {4, 3.5}}, 0.25});
    EXPECT_LT(scalar_rate(rf, 2.5, 32).value, 1e-8);
    EXPECT_GT(scalar_rate(rf, 4.5, 32).value, 1e-3);
}

namespace {

// Zero-cost path ending at x: in u = log(alpha), y = f/alpha follows dy/du = lambda(y) - y,
// integrated backward from y(0) = x to every grid node.
Path flow_path(const RateFunction& rf, double x, std::size_t n)
{
    Path p = Path::graded(x, n, MinimizeOptions{}.grading);
    for (std::size_t i = 1; i < n; ++i) {
        double y = x;
        boost::numeric::odeint::integrate_adaptive(
            boost::numeric::odeint::make_controlled<boost::numeric::odeint::runge_kutta_dopri5<double>>(1e-12, 1e-12),
            [&](double v, double& dv, double) { dv = rf(std::max(0.0, v)) - v; }, y, 0.0, std::log(p.grid[i]), -1e-3);
        p.values[i] = p.grid[i] * y;
    }
    return p;
}

} // namespace

TEST(ScalarRate, SineMixVanishesAboveTheLowerStablePoint)
{
    // The flow leaves the unstable point along y - x_u ~ c alpha^(lambda'(x_u) - 1), and above the
    // upper stable point it comes in from infinity like alpha^-(1 - 0.9); both give f(0) = 0 at no cost.
    const RateFunction rf(SineMix{0.9, 0.6, 0.5});
    for (double x : {1.0, 3.0, 7.0, 12.0}) {
        const double coarse = rate_of_path(rf, flow_path(rf, x, 32)).value;
        const double fine = rate_of_path(rf, flow_path(rf, x, 256)).value;
        EXPECT_LT(fine, coarse / 30.0) << x;
        EXPECT_LT(fine, 2e-5) << x;
        // the minimizer does at least as well as the explicit path on the same nodes
        const RateValue m = scalar_rate(rf, x, 32, MinimizeOptions{500, false});
        EXPECT_LE(m.value, coarse * (1.0 + 1e-12)) << x;
        EXPECT_LT(scalar_rate(rf, x, 128).value, 2e-5) << x;
    }
    // below the lower stable point the backward flow hits zero, and the rate stays positive
    const double a = scalar_rate(rf, 0.5, 32).value, b = scalar_rate(rf, 0.5, 128).value;
    EXPECT_GT(b, 1e-2);
    EXPECT_NEAR(a, b, 1e-3 * b);
}

TEST(ScalarRate, SqrtShiftPositiveAwayFromTheFixedPoint)
{
    const RateFunction rf(SqrtShift{});
    for (double x : {0.0, 0.5, 1.0, 2.5, 4.0}) EXPECT_GT(scalar_rate(rf, x, 32).value, 1e-3) << x;
}

TEST(EulerLagrange, StationaryAlongTheFixedPointLine)
{
    EXPECT_LT(euler_lagrange_residual(RateFunction(SqrtShift{}), Path::straight_line(kGolden, 64)).max_abs, 1e-6);
}

TEST(EulerLagrange, StraightLineAwayFromFixedPointIsNotStationary)
{
    EXPECT_GT(euler_lagrange_residual(RateFunction(SqrtShift{}), Path::straight_line(3.0, 64)).max_abs, 1e-2);
}

TEST(EulerLagrange, MinimizerIsStationaryAwayFromTheOrigin)
{
    // The minimizer has a boundary layer at alpha = 0 (the 1/alpha in lambda(f/alpha)), so the
    // discrete residual is checked where the grid resolves the path.
    const RateValue v = scalar_rate(RateFunction(SqrtShift{}), 3.0, 64);
    const ElResidual r = euler_lagrange_residual(RateFunction(SqrtShift{}), v.minimizer);
    EXPECT_TRUE(r.skipped.empty());
    double worst = 0.0;
    for (std::size_t i = 0; i < r.residuals.size(); ++i) {
        if (v.minimizer.grid[i + 1] >= 0.25) worst = std::max(worst, std::abs(r.residuals[i]));
    }
    EXPECT_LT(worst, 1e-3);
}

TEST(EulerLagrange, ZeroSlopeNodesAreSkipped)
{
    const ElResidual r = euler_lagrange_residual(RateFunction(Constant{1.0}), Path::straight_line(0.0, 8));
    EXPECT_EQ(r.skipped.size(), 7u);
    EXPECT_TRUE(std::isnan(r.residuals[0]));
}
