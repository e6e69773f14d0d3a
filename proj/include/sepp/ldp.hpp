#pragma once

#include "sepp/quadrature.hpp"
#include "sepp/rate_function.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace sepp::ldp {

/// Piecewise-linear nondecreasing path on [0, 1] with f(0) = 0.
struct Path {
    std::vector<double> grid;   // 0 = a_0 < a_1 < ... < a_n = 1
    std::vector<double> values; // f(a_i)

    static Path straight_line(double x, std::size_t n_grid)
    {
        Path p;
        p.grid.resize(n_grid + 1);
        p.values.resize(n_grid + 1);
        for (std::size_t i = 0; i <= n_grid; ++i) {
            p.grid[i] = static_cast<double>(i) / static_cast<double>(n_grid);
            p.values[i] = x * p.grid[i];
        }
        p.grid.back() = 1.0;
        p.values.back() = x;
        return p;
    }

    /// Nodes a_i = (i/n)^power. The minimizer behaves like a fractional power of alpha
    /// near 0, and a uniform grid (power 1) resolves that only at rate h^0.4 or so.
    static Path graded(double x, std::size_t n_grid, double power)
    {
        Path p = straight_line(x, n_grid);
        for (std::size_t i = 1; i < n_grid; ++i) {
            p.grid[i] = std::pow(static_cast<double>(i) / static_cast<double>(n_grid), power);
            p.values[i] = x * p.grid[i];
        }
        return p;
    }

    std::size_t segments() const noexcept { return grid.size() - 1; }
    double slope(std::size_t i) const { return (values[i + 1] - values[i]) / (grid[i + 1] - grid[i]); }
    double end_value() const { return values.back(); }

    /// Linear interpolation at alpha in [0, 1].
    double operator()(double alpha) const
    {
        const auto it = std::upper_bound(grid.begin(), grid.end(), alpha);
        const std::size_t i = std::min<std::size_t>(std::max<std::ptrdiff_t>(1, it - grid.begin()) - 1, segments() - 1);
        return values[i] + slope(i) * (alpha - grid[i]);
    }

    void validate() const
    {
        if (grid.size() < 2 || grid.size() != values.size()) throw std::invalid_argument("Path: need >= 2 matching nodes");
        if (grid.front() != 0.0 || grid.back() != 1.0) throw std::invalid_argument("Path: grid must span [0, 1]");
        if (values.front() != 0.0) throw std::invalid_argument("Path: f(0) must be 0");
        for (std::size_t i = 1; i < grid.size(); ++i) {
            if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("Path: grid must be strictly increasing");
            if (!(values[i] >= values[i - 1])) throw std::invalid_argument("Path: values must be nondecreasing");
        }
    }
};

struct RateValue {
    double value = 0.0;
    bool infinite = false;
    /// (alpha, L) at segment midpoints
    std::vector<std::pair<double, double>> integrand_samples;
    Path minimizer;
    bool converged = true;
    std::size_t iterations = 0;
    std::size_t n_grid = 0;
    /// lambda is unbounded: the functional is evaluated without an LDP guarantee
    bool formal = false;
};

/// L(alpha, f, f') = f' log(f'/lambda(f/alpha)) - f' + lambda(f/alpha), with 0 log 0 = 0.
inline double lagrangian(const RateFunction& rf, double alpha, double f_val, double f_slope)
{
    if (!(alpha > 0.0) || alpha > 1.0) throw std::domain_error("lagrangian: alpha must lie in (0, 1]");
    if (!(f_val >= 0.0) || !(f_slope >= 0.0)) throw std::domain_error("lagrangian: f and f' must be >= 0");
    const double lam = rf(f_val / alpha);
    if (f_slope == 0.0) return lam;
    if (lam <= 0.0) return std::numeric_limits<double>::infinity();
    return f_slope * std::log(f_slope / lam) - f_slope + lam;
}

namespace detail {

struct Local {
    double L, P, Q, Laa, Laz, Lzz;
    bool infinite;
};

// L and its partial derivatives in (a, z) = (f', f/alpha).
inline Local local_terms(const RateFunction& rf, double a, double z, bool second_order)
{
    Local r{};
    const double lam = rf(z);
    if (a <= 0.0) {
        r.L = lam;
        r.P = -std::numeric_limits<double>::infinity();
        return r;
    }
    if (lam <= 0.0) {
        r.infinite = true;
        r.L = std::numeric_limits<double>::infinity();
        return r;
    }
    const double la = std::log(a), ll = std::log(lam);
    r.L = a * (la - ll) - a + lam;
    if (second_order) {
        const double d1 = derivative(rf, z);
        const double d2 = second_derivative(rf, z);
        r.P = la - ll;
        r.Q = d1 * (1.0 - a / lam);
        r.Laa = 1.0 / a;
        r.Laz = -d1 / lam;
        r.Lzz = d2 * (1.0 - a / lam) + a * d1 * d1 / (lam * lam);
    }
    return r;
}

inline constexpr std::size_t kNodes = 32;

struct ActionEval {
    double value = 0.0;
    bool infinite = false;
    std::vector<double> grad; // d/df_i, i = 1..n-1 stored at i-1
    std::vector<double> diag;
    std::vector<double> off; // H(i, i+1)
};

// Discretized action over a piecewise-linear path; first segment uses f/alpha = slope exactly.
inline ActionEval evaluate_action(const RateFunction& rf, const Path& p, bool derivatives)
{
    const auto& gl = quad::GaussLegendre<kNodes>::instance();
    const std::size_t n = p.segments();
    ActionEval ev;
    if (derivatives) {
        ev.grad.assign(n - 1, 0.0);
        ev.diag.assign(n - 1, 0.0);
        ev.off.assign(n > 2 ? n - 2 : 0, 0.0);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double a0 = p.grid[i];
        const double h = p.grid[i + 1] - a0;
        const double slope = p.slope(i);
        if (i == 0) {
            const Local loc = local_terms(rf, slope, slope, derivatives);
            if (loc.infinite) {
                ev.infinite = true;
                ev.value = std::numeric_limits<double>::infinity();
                return ev;
            }
            total += h * loc.L;
            if (derivatives && n > 1) {
                ev.grad[0] += loc.P + loc.Q;
                ev.diag[0] += (loc.Laa + 2.0 * loc.Laz + loc.Lzz) / h;
            }
            continue;
        }
        double seg = 0.0;
        double g_l = 0.0, g_r = 0.0, h_ll = 0.0, h_lr = 0.0, h_rr = 0.0;
        for (std::size_t q = 0; q < kNodes; ++q) {
            const double xi = gl.nodes[q];
            const double alpha = a0 + h * xi;
            const double f = (1.0 - xi) * p.values[i] + xi * p.values[i + 1];
            const Local loc = local_terms(rf, slope, f / alpha, derivatives);
            if (loc.infinite) {
                ev.infinite = true;
                ev.value = std::numeric_limits<double>::infinity();
                return ev;
            }
            const double w = gl.weights[q] * h;
            seg += w * loc.L;
            if (derivatives) {
                // da/df_l = -1/h, da/df_r = 1/h; dz/df_l = (1-xi)/alpha, dz/df_r = xi/alpha
                const double al = -1.0 / h, ar = 1.0 / h;
                const double zl = (1.0 - xi) / alpha, zr = xi / alpha;
                g_l += w * (loc.P * al + loc.Q * zl);
                g_r += w * (loc.P * ar + loc.Q * zr);
                h_ll += w * (loc.Laa * al * al + 2.0 * loc.Laz * al * zl + loc.Lzz * zl * zl);
                h_rr += w * (loc.Laa * ar * ar + 2.0 * loc.Laz * ar * zr + loc.Lzz * zr * zr);
                h_lr += w * (loc.Laa * al * ar + loc.Laz * (al * zr + ar * zl) + loc.Lzz * zl * zr);
            }
        }
        total += seg;
        if (derivatives) {
            // variables are f_1..f_{n-1}; f_n is pinned
            const std::size_t l = i - 1, r = i;
            ev.grad[l] += g_l;
            ev.diag[l] += h_ll;
            if (i + 1 < n) {
                ev.grad[r] += g_r;
                ev.diag[r] += h_rr;
                ev.off[l] += h_lr;
            }
        }
    }
    ev.value = total;
    return ev;
}

// Solves (T + mu I) d = rhs for symmetric tridiagonal T by LDL^T; false if not positive definite.
inline bool solve_tridiagonal(const std::vector<double>& diag, const std::vector<double>& off, double mu,
                              const std::vector<double>& rhs, std::vector<double>& out)
{
    const std::size_t m = diag.size();
    std::vector<double> d(m), l(m > 0 ? m - 1 : 0), z(m);
    for (std::size_t i = 0; i < m; ++i) {
        d[i] = diag[i] + mu - (i > 0 ? l[i - 1] * l[i - 1] * d[i - 1] : 0.0);
        if (!(d[i] > 0.0) || !std::isfinite(d[i])) return false;
        if (i + 1 < m) l[i] = off[i] / d[i];
    }
    for (std::size_t i = 0; i < m; ++i) z[i] = rhs[i] - (i > 0 ? l[i - 1] * z[i - 1] : 0.0);
    out.assign(m, 0.0);
    for (std::size_t i = m; i-- > 0;) {
        out[i] = z[i] / d[i] - (i + 1 < m ? l[i] * out[i + 1] : 0.0);
    }
    return true;
}

} // namespace detail

/// I(f) for a piecewise-linear path, by 32-point Gauss-Legendre per segment.
inline RateValue rate_of_path(const RateFunction& rf, const Path& f)
{
    f.validate();
    RateValue rv;
    rv.n_grid = f.segments();
    rv.formal = classify_growth(rf).regime != GrowthClass::Regime::Bounded;
    const detail::ActionEval ev = detail::evaluate_action(rf, f, false);
    rv.value = ev.value;
    rv.infinite = ev.infinite;
    for (std::size_t i = 0; i < f.segments(); ++i) {
        const double mid = 0.5 * (f.grid[i] + f.grid[i + 1]);
        const double fv = 0.5 * (f.values[i] + f.values[i + 1]);
        rv.integrand_samples.emplace_back(mid, lagrangian(rf, mid, fv, f.slope(i)));
    }
    rv.minimizer = f;
    return rv;
}

struct MinimizeOptions {
    std::size_t max_iters = 500;
    /// polish by re-optimizing on the grid with every segment halved
    bool refine = true;
    /// convergence threshold on the Newton decrement g^T H^-1 g
    double decrement_tol = 1e-16;
    /// node placement a_i = (i/n)^grading for the default start path
    double grading = 5.0;
};

/// Newton descent on the interior node values with a tridiagonal Hessian. Steps keep every
/// slope above 1% of its current value, so iterates stay inside the monotone cone.
inline RateValue minimize_path(const RateFunction& rf, Path path, const MinimizeOptions& opt = {})
{
    path.validate();
    const std::size_t n = path.segments();
    RateValue rv;
    rv.n_grid = n;
    rv.formal = classify_growth(rf).regime != GrowthClass::Regime::Bounded;
    const double x = path.end_value();
    if (x == 0.0 || n < 2) {
        rv = rate_of_path(rf, path);
        rv.converged = true;
        return rv;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!(path.slope(i) > 0.0)) throw std::invalid_argument("minimize_path: start path needs positive slopes");
    }

    detail::ActionEval ev = detail::evaluate_action(rf, path, true);
    double mu = 0.0;
    std::vector<double> step, neg_grad;
    Path trial = path;
    bool converged = false;
    std::size_t iter = 0;
    for (; iter < opt.max_iters && !ev.infinite; ++iter) {
        neg_grad.resize(ev.grad.size());
        for (std::size_t i = 0; i < ev.grad.size(); ++i) neg_grad[i] = -ev.grad[i];
        double scale = 0.0;
        for (double d : ev.diag) scale = std::max(scale, std::abs(d));
        while (!detail::solve_tridiagonal(ev.diag, ev.off, mu, neg_grad, step)) {
            mu = mu == 0.0 ? 1e-10 * (1.0 + scale) : 4.0 * mu;
            if (mu > 1e12 * (1.0 + scale)) break;
        }
        double decrement = 0.0;
        for (std::size_t i = 0; i < step.size(); ++i) decrement += -ev.grad[i] * step[i];
        if (!(decrement > opt.decrement_tol * (1.0 + std::abs(ev.value)))) {
            converged = true;
            break;
        }
        // fraction to the boundary of the monotone cone
        double s_max = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d_l = i == 0 ? 0.0 : step[i - 1];
            const double d_r = i + 1 == n ? 0.0 : step[i];
            const double h = path.grid[i + 1] - path.grid[i];
            const double da = (d_r - d_l) / h;
            if (da < 0.0) s_max = std::min(s_max, 0.99 * path.slope(i) / -da);
        }
        double s = s_max;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            for (std::size_t i = 1; i < n; ++i) trial.values[i] = path.values[i] + s * step[i - 1];
            const detail::ActionEval tv = detail::evaluate_action(rf, trial, false);
            if (!tv.infinite && tv.value <= ev.value - 1e-4 * s * decrement) {
                accepted = true;
                break;
            }
            if (!tv.infinite && tv.value <= ev.value && s * decrement < 1e-15 * (1.0 + std::abs(ev.value))) {
                accepted = true; // at rounding level; take it and let the decrement test decide
                break;
            }
            s *= 0.5;
        }
        if (!accepted) {
            if (mu < 1e8 * (1.0 + scale)) {
                mu = mu == 0.0 ? 1e-6 * (1.0 + scale) : 10.0 * mu;
                continue;
            }
            converged = decrement < 1e-14 * (1.0 + std::abs(ev.value));
            break;
        }
        path.values = trial.values;
        ev = detail::evaluate_action(rf, path, true);
        mu *= 0.1;
        if (mu < 1e-14) mu = 0.0;
    }
    rv.value = ev.value;
    rv.infinite = ev.infinite;
    rv.converged = converged;
    rv.iterations = iter;
    rv.minimizer = std::move(path);
    return rv;
}

inline Path refine_path(const Path& p)
{
    Path out;
    for (std::size_t i = 0; i < p.segments(); ++i) {
        out.grid.push_back(p.grid[i]);
        out.values.push_back(p.values[i]);
        out.grid.push_back(0.5 * (p.grid[i] + p.grid[i + 1]));
        out.values.push_back(0.5 * (p.values[i] + p.values[i + 1]));
    }
    out.grid.push_back(1.0);
    out.values.push_back(p.values.back());
    return out;
}

/// I(x) = inf { I(f) : f(0) = 0, f(1) = x }, minimized from the straight line f = alpha x
/// (or from `start`) on a graded grid of n_grid segments, then polished on 2 n_grid.
inline RateValue scalar_rate(const RateFunction& rf, double x, std::size_t n_grid, const MinimizeOptions& opt = {},
                             const std::optional<Path>& start = std::nullopt)
{
    if (!(x >= 0.0) || !std::isfinite(x)) throw std::domain_error("scalar_rate: x must be finite and >= 0");
    if (n_grid < 2) throw std::invalid_argument("scalar_rate: n_grid must be >= 2");
    Path p0 = start ? *start : Path::graded(x, n_grid, opt.grading);
    if (start && std::abs(p0.end_value() - x) > 1e-12 * (1.0 + x)) {
        throw std::invalid_argument("scalar_rate: start path must end at x");
    }
    RateValue coarse = minimize_path(rf, std::move(p0), opt);
    if (!opt.refine || coarse.infinite) return coarse;
    RateValue fine = minimize_path(rf, refine_path(coarse.minimizer), opt);
    fine.iterations += coarse.iterations;
    fine.converged = fine.converged && coarse.converged;
    return fine;
}

struct ElResidual {
    double max_abs = 0.0;
    std::vector<double> residuals; // per interior node; NaN where skipped
    std::vector<std::size_t> skipped;
};

/// Discrete Euler-Lagrange residual dL/df - d/dalpha dL/df' at interior nodes, with
/// dL/df' = log f' - log lambda(f/alpha) differenced between neighbouring segment midpoints.
inline ElResidual euler_lagrange_residual(const RateFunction& rf, const Path& f)
{
    f.validate();
    ElResidual out;
    const std::size_t n = f.segments();
    out.residuals.assign(n > 0 ? n - 1 : 0, std::numeric_limits<double>::quiet_NaN());
    auto momentum = [&](std::size_t seg) {
        const double mid = 0.5 * (f.grid[seg] + f.grid[seg + 1]);
        const double fm = 0.5 * (f.values[seg] + f.values[seg + 1]);
        return std::log(f.slope(seg)) - std::log(rf(fm / mid));
    };
    for (std::size_t i = 1; i < n; ++i) {
        const double al = f.slope(i - 1), ar = f.slope(i);
        const double alpha = f.grid[i];
        const double z = f.values[i] / alpha;
        const double lam = rf(z);
        if (!(al > 0.0) || !(ar > 0.0) || !(lam > 0.0)) {
            out.skipped.push_back(i);
            continue;
        }
        const double h_l = f.grid[i] - f.grid[i - 1], h_r = f.grid[i + 1] - f.grid[i];
        const double fprime = (al * h_r + ar * h_l) / (h_l + h_r);
        const double dLdf = derivative(rf, z) * (1.0 - fprime / lam) / alpha;
        const double dPda = (momentum(i) - momentum(i - 1)) / (0.5 * (h_l + h_r));
        const double r = dLdf - dPda;
        out.residuals[i - 1] = r;
        out.max_abs = std::max(out.max_abs, std::abs(r));
    }
    return out;
}

} // namespace sepp::ldp
