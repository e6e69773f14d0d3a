#pragma once

#include "sepp/ode.hpp"
#include "sepp/quadrature.hpp"
#include "sepp/rate_function.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace sepp::analytic {

// Width of the explicit branches at the removable singularities alpha = 1/2 and alpha = 1.
inline constexpr double kBranchWindow = 1e-9;

struct Scaling {
    /// "t", "t_log_t", "t^alpha", "t^2alpha", "t^2"
    std::string label;
    /// exponent of t in the scaling (1 for t log t)
    double exponent = 1.0;
    bool log_factor = false;
    double constant = 0.0;

    double scale(double t) const
    {
        const double s = std::pow(t, exponent);
        return log_factor ? s * std::log(t) : s;
    }
};

struct MomentReport {
    double t = 0.0;
    double mean = 0.0;
    double variance = 0.0;
    Scaling mean_scaling;
    Scaling variance_scaling;
};

namespace detail {

inline void require_affine_params(double alpha, double beta, double t)
{
    if (!(alpha >= 0.0) || !(beta >= 0.0)) throw std::invalid_argument("affine moments: alpha, beta must be >= 0");
    if (!(t >= 0.0)) throw std::domain_error("affine moments: t must be >= 0");
}

} // namespace detail

/// E[N_t] for lambda(z) = beta + alpha z, gamma = 0.
inline double mean_affine(double alpha, double beta, double t)
{
    detail::require_affine_params(alpha, beta, t);
    const double u = t + 1.0;
    const double L = std::log1p(t);
    if (std::abs(alpha - 1.0) < kBranchWindow) return beta * u * L;
    // (t+1) beta/(1-alpha) [1 - (t+1)^(alpha-1)], written with expm1 to stay accurate near alpha = 1
    return -u * beta * std::expm1((alpha - 1.0) * L) / (1.0 - alpha);
}

/// Var[N_t] for lambda(z) = beta + alpha z, gamma = 0.
inline double variance_affine(double alpha, double beta, double t)
{
    detail::require_affine_params(alpha, beta, t);
    const double u = t + 1.0;
    const double L = std::log1p(t);
    if (std::abs(alpha - 1.0) < kBranchWindow) return -beta * u * L + 2.0 * beta * t * u;
    if (std::abs(alpha - 0.5) < kBranchWindow) return 2.0 * beta * u * (L - 1.0) + 2.0 * beta * std::sqrt(u);
    const double c1 = beta / ((1.0 - 2.0 * alpha) * (1.0 - alpha));
    const double c2 = beta / (1.0 - alpha);
    const double c3 = 2.0 * beta / (1.0 - 2.0 * alpha);
    return c1 * u + c2 * std::pow(u, alpha) - c3 * std::pow(u, 2.0 * alpha);
}

inline Scaling mean_scaling_affine(double alpha, double beta)
{
    if (std::abs(alpha - 1.0) < kBranchWindow) return {"t_log_t", 1.0, true, beta};
    if (alpha < 1.0) return {"t", 1.0, false, beta / (1.0 - alpha)};
    return {"t^alpha", alpha, false, beta / (alpha - 1.0)};
}

inline Scaling variance_scaling_affine(double alpha, double beta)
{
    if (std::abs(alpha - 1.0) < kBranchWindow) return {"t^2", 2.0, false, 2.0 * beta};
    if (std::abs(alpha - 0.5) < kBranchWindow) return {"t_log_t", 1.0, true, 2.0 * beta};
    if (alpha < 0.5) return {"t", 1.0, false, beta / ((1.0 - 2.0 * alpha) * (1.0 - alpha))};
    return {"t^2alpha", 2.0 * alpha, false, 2.0 * beta / (2.0 * alpha - 1.0)};
}

inline MomentReport moments_affine(double alpha, double beta, double t)
{
    return {t, mean_affine(alpha, beta, t), variance_affine(alpha, beta, t), mean_scaling_affine(alpha, beta),
            variance_scaling_affine(alpha, beta)};
}

/// Cov[N_t, N_s] for t > s >= 0, lambda(z) = beta + alpha z, gamma = 0.
inline double covariance_affine(double alpha, double beta, double t, double s)
{
    detail::require_affine_params(alpha, beta, s);
    if (!(t > s)) throw std::domain_error("covariance_affine: requires t > s (covariance is symmetric)");
    const double u = t + 1.0, v = s + 1.0;
    if (std::abs(alpha - 1.0) < kBranchWindow) return -beta * u * std::log(v) + 2.0 * beta * s * u;
    if (std::abs(alpha - 0.5) < kBranchWindow) {
        const double su = std::sqrt(u), sv = std::sqrt(v);
        return 2.0 * beta * (-su * sv + su + su * sv * std::log(v));
    }
    const double c1 = beta / ((1.0 - 2.0 * alpha) * (1.0 - alpha));
    const double c2 = beta / (1.0 - alpha);
    const double c3 = 2.0 * beta / (1.0 - 2.0 * alpha);
    return std::pow(u, alpha) * (c1 * std::pow(v, 1.0 - alpha) + c2 - c3 * std::pow(v, alpha));
}

struct LinearGammaStats {
    double mean;
    double variance;
};

/// Moments for lambda(z) = alpha z started from offset gamma.
inline LinearGammaStats linear_gamma_stats(double alpha, double gamma, double t)
{
    if (!(alpha > 0.0) || !(gamma > 0.0)) throw std::invalid_argument("linear_gamma_stats: alpha, gamma must be > 0");
    if (!(t >= 0.0)) throw std::domain_error("linear_gamma_stats: t must be >= 0");
    const double a = std::pow(t + 1.0, alpha);
    return {gamma * (a - 1.0), gamma * (a * a - a)};
}

/// Cov[N_t, N_s], t > s, for lambda(z) = alpha z with offset gamma. (N_t + gamma)/(t+1)^alpha
/// is a martingale, so E[N_t | N_s] = (N_s + gamma)((t+1)/(s+1))^alpha - gamma and the
/// covariance is ((t+1)/(s+1))^alpha Var[N_s] = gamma (t+1)^alpha ((s+1)^alpha - 1).
inline double covariance_linear_gamma(double alpha, double gamma, double t, double s)
{
    if (!(alpha > 0.0) || !(gamma > 0.0)) throw std::invalid_argument("covariance_linear_gamma: alpha, gamma must be > 0");
    if (!(s >= 0.0) || !(t > s)) throw std::domain_error("covariance_linear_gamma: requires t > s >= 0");
    return gamma * std::pow(t + 1.0, alpha) * (std::pow(s + 1.0, alpha) - 1.0);
}

namespace detail {

// log of the generalized binomial coefficient C(k + size - 1, k) = Gamma(k+size)/(Gamma(size) k!)
inline double log_negbin_coefficient(double size, std::size_t k)
{
    const double kd = static_cast<double>(k);
    return std::lgamma(kd + size) - std::lgamma(size) - std::lgamma(kd + 1.0);
}

// P(K = k) for K ~ NegBin(size, success probability q): C(k+size-1,k) q^size (1-q)^k
inline double negbin_log_pmf(double size, double log_q, std::size_t k)
{
    if (k == 0) return size * log_q;
    const double log_fail = std::log(-std::expm1(log_q));
    return log_negbin_coefficient(size, k) + static_cast<double>(k) * log_fail + size * log_q;
}

} // namespace detail

/// P(N_t = k) for lambda(z) = alpha z with offset gamma (negative binomial law).
inline double negbin_pmf(double alpha, double gamma, double t, std::size_t k)
{
    if (!(alpha > 0.0) || !(gamma > 0.0)) throw std::invalid_argument("negbin_pmf: alpha, gamma must be > 0");
    if (!(t >= 0.0)) throw std::domain_error("negbin_pmf: t must be >= 0");
    if (t == 0.0) return k == 0 ? 1.0 : 0.0;
    return std::exp(detail::negbin_log_pmf(gamma, -alpha * std::log1p(t), k));
}

/// P(N_t = k + m | N_s = m) for lambda(z) = alpha z with offset gamma, t > s >= 0.
inline double negbin_conditional_pmf(double alpha, double gamma, double t, double s, std::size_t m, std::size_t k)
{
    if (!(alpha > 0.0) || !(gamma > 0.0)) throw std::invalid_argument("negbin_conditional_pmf: alpha, gamma must be > 0");
    if (!(s >= 0.0) || !(t > s)) throw std::domain_error("negbin_conditional_pmf: requires t > s >= 0");
    const double log_q = alpha * (std::log1p(s) - std::log1p(t));
    return std::exp(detail::negbin_log_pmf(gamma + static_cast<double>(m), log_q, k));
}

// ---------------------------------------------------------------------------
// Forward-equation ladder

struct LadderOptions {
    double atol = 1e-10;
    double rtol = 1e-8;
    /// truncation mass above which the result is flagged
    double warn_mass = 0.01;
};

struct PmfLadder {
    double t = 0.0;
    double gamma = 0.0;
    /// p_k = P(N_t = k), k = 0..K_max
    std::vector<double> probs;
    /// P(N_t > K_max), integrated as its own absorbing component
    double truncation_mass = 0.0;
    /// exp(-int_0^t lambda(gamma/(s+1)) ds) by adaptive quadrature
    double void_probability = 0.0;
    bool truncation_warning = false;
    ode::Stats stats;

    /// P(N_t >= ell) for ell <= K_max + 1, summed from the top so small tails keep full precision.
    double tail(std::size_t ell) const
    {
        if (ell > probs.size()) throw std::out_of_range("PmfLadder::tail: ell exceeds K_max + 1");
        double s = truncation_mass;
        for (std::size_t k = probs.size(); k-- > ell;) s += probs[k];
        return s;
    }
};

/// exp(-int_0^t lambda(gamma/(s+1)) ds)
inline double void_probability(const RateFunction& rf, double gamma, double t)
{
    if (!(t >= 0.0)) throw std::domain_error("void_probability: t must be >= 0");
    const double integral = quad::integrate([&](double s) { return rf(gamma / (s + 1.0)); }, 0.0, t, 1e-12);
    return std::exp(-integral);
}

/// Integrates dp_k/dt = lambda((gamma+k-1)/(t+1)) p_{k-1} - lambda((gamma+k)/(t+1)) p_k, p_0(0) = 1,
/// with the escape flux out of state K_max collected in an absorbing component.
inline PmfLadder pmf_ladder(const RateFunction& rf, double gamma, double t, std::size_t k_max,
                            const LadderOptions& opt = {})
{
    if (!(gamma >= 0.0)) throw std::invalid_argument("pmf_ladder: gamma must be >= 0");
    if (!(t >= 0.0)) throw std::domain_error("pmf_ladder: t must be >= 0");
    const std::size_t n = k_max + 1;
    std::vector<double> y(n + 1, 0.0);
    y[0] = 1.0;
    std::vector<double> rate(n);
    auto rhs = [&](double s, const std::vector<double>& p, std::vector<double>& dp) {
        const double inv = 1.0 / (s + 1.0);
        for (std::size_t k = 0; k < n; ++k) rate[k] = rf((gamma + static_cast<double>(k)) * inv);
        dp[0] = -rate[0] * p[0];
        for (std::size_t k = 1; k < n; ++k) dp[k] = rate[k - 1] * p[k - 1] - rate[k] * p[k];
        dp[n] = rate[n - 1] * p[n - 1];
    };
    ode::Tolerances tol;
    tol.atol = opt.atol;
    tol.rtol = opt.rtol;
    ode::DormandPrince solver(rhs, tol);
    PmfLadder out;
    out.t = t;
    out.gamma = gamma;
    out.stats = solver.integrate(y, 0.0, t);
    out.truncation_mass = y[n];
    y.pop_back();
    out.probs = std::move(y);
    out.void_probability = void_probability(rf, gamma, t);
    out.truncation_warning = out.truncation_mass > opt.warn_mass;
    return out;
}

// ---------------------------------------------------------------------------
// Tail asymptotics

struct ExponentialTail {
    /// lim (1/ell) log P(N_t >= ell) = log(1 - (t+1)^-alpha)
    double limit;
};
struct PoissonTypeTail {
    /// lim (1/(ell log ell)) log P(N_t >= ell) = -(1 - beta)
    double limit;
};
struct NoDecayTail {};

using TailLaw = std::variant<ExponentialTail, PoissonTypeTail, NoDecayTail>;

inline TailLaw tail_asymptote(const RateFunction& rf, double t)
{
    if (!(t > 0.0)) throw std::domain_error("tail_asymptote: t must be > 0");
    const GrowthClass g = classify_growth(rf);
    switch (g.regime) {
    case GrowthClass::Regime::AsymptoticallyLinear:
        return ExponentialTail{std::log(-std::expm1(-g.constant * std::log1p(t)))};
    case GrowthClass::Regime::Sublinear: return PoissonTypeTail{-(1.0 - g.exponent)};
    case GrowthClass::Regime::Bounded: return PoissonTypeTail{-1.0};
    case GrowthClass::Regime::Superlinear: return NoDecayTail{};
    }
    return NoDecayTail{};
}

// ---------------------------------------------------------------------------
// Deterministic mean-field flow dY/dt = (lambda(Y) - Y)/(t+1)

struct FlowCurve {
    std::vector<double> t;
    std::vector<double> y;
};

/// Integrates the flow in u = log(1+t), where it is autonomous: dY/du = lambda(Y) - Y.
/// With no sample times, 256 points uniform in u are recorded up to t_max.
inline FlowCurve deterministic_flow(const RateFunction& rf, double y0, double t_max,
                                    std::span<const double> sample_times = {}, double rtol = 1e-10)
{
    if (!(y0 >= 0.0)) throw std::domain_error("deterministic_flow: y0 must be >= 0");
    if (!(t_max >= 0.0)) throw std::domain_error("deterministic_flow: t_max must be >= 0");
    auto rhs = [&](double, const std::vector<double>& y, std::vector<double>& dy) {
        const double v = std::max(0.0, y[0]);
        dy[0] = rf(v) - v;
    };
    ode::Tolerances tol;
    tol.atol = 1e-14;
    tol.rtol = rtol;
    ode::DormandPrince solver(rhs, tol);
    FlowCurve curve;
    std::vector<double> y{y0};
    double u = 0.0;
    curve.t.push_back(0.0);
    curve.y.push_back(y0);
    if (sample_times.empty()) {
        const double u_end = std::log1p(t_max);
        const std::size_t samples = 256;
        for (std::size_t i = 1; i <= samples; ++i) {
            const double u_next = u_end * static_cast<double>(i) / samples;
            solver.integrate(y, u, u_next);
            u = u_next;
            curve.t.push_back(std::expm1(u));
            curve.y.push_back(y[0]);
        }
        curve.t.back() = t_max;
        return curve;
    }
    for (double ts : sample_times) {
        if (!(ts >= 0.0) || ts > t_max) throw std::domain_error("deterministic_flow: sample times must lie in [0, t_max]");
        const double u_next = std::log1p(ts);
        if (u_next < u) throw std::invalid_argument("deterministic_flow: sample times must be sorted");
        solver.integrate(y, u, u_next);
        u = u_next;
        if (ts == 0.0 && curve.t.size() == 1) continue;
        curve.t.push_back(ts);
        curve.y.push_back(y[0]);
    }
    return curve;
}

/// Fluid curve for N_s/gamma (alpha = lim lambda(z)/z) or N_s/gamma^beta (sublinear).
inline double fluid_curve(const GrowthClass& g, double s)
{
    if (g.regime == GrowthClass::Regime::AsymptoticallyLinear) return std::pow(s + 1.0, g.constant) - 1.0;
    if (g.regime == GrowthClass::Regime::Sublinear) {
        return g.constant / (1.0 - g.exponent) * (std::pow(s + 1.0, 1.0 - g.exponent) - 1.0);
    }
    throw std::invalid_argument("fluid_curve: requires an asymptotically linear or sublinear rate");
}

} // namespace sepp::analytic
