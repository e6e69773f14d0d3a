#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>

namespace sepp::quad {

/// Gauss-Legendre rule on [0, 1] with N nodes, computed by Newton iteration on P_N.
template <std::size_t N>
struct GaussLegendre {
    std::array<double, N> nodes{};
    std::array<double, N> weights{};

    GaussLegendre()
    {
        const std::size_t half = (N + 1) / 2;
        for (std::size_t i = 0; i < half; ++i) {
            double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(N) + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = 0.0;
                for (std::size_t j = 1; j <= N; ++j) {
                    const double p2 = p1;
                    p1 = p0;
                    p0 = ((2.0 * static_cast<double>(j) - 1.0) * z * p1 - (static_cast<double>(j) - 1.0) * p2) /
                         static_cast<double>(j);
                }
                dp = static_cast<double>(N) * (z * p0 - p1) / (z * z - 1.0);
                const double dz = p0 / dp;
                z -= dz;
                if (std::abs(dz) < 1e-16) break;
            }
            const double w = 2.0 / ((1.0 - z * z) * dp * dp);
            // map [-1, 1] -> [0, 1]
            nodes[i] = 0.5 * (1.0 - z);
            nodes[N - 1 - i] = 0.5 * (1.0 + z);
            weights[i] = 0.5 * w;
            weights[N - 1 - i] = 0.5 * w;
        }
    }

    static const GaussLegendre& instance()
    {
        static const GaussLegendre rule;
        return rule;
    }
};

namespace detail {

template <class F>
double integrate_gk(F& f, double a, double b, double abs_tol, int depth)
{
    double err = 0.0;
    const double rel = 1e-14;
    const double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 30, rel, &err);
    if (depth < 16 && err > abs_tol && err > rel * std::abs(v)) {
        const double m = 0.5 * (a + b);
        return integrate_gk(f, a, m, 0.5 * abs_tol, depth + 1) + integrate_gk(f, m, b, 0.5 * abs_tol, depth + 1);
    }
    return v;
}

} // namespace detail

/// Adaptive Gauss-Kronrod (15-point) integral of f over [a, b].
template <class F>
double integrate(F f, double a, double b, double abs_tol = 1e-12)
{
    if (b <= a) return 0.0;
    return detail::integrate_gk(f, a, b, abs_tol, 0);
}

} // namespace sepp::quad
