#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace sepp {

/// lambda(x) = beta + alpha * x
struct Affine {
    double alpha;
    double beta;
};

/// lambda(x) = alpha * (shift + x)^exponent
struct Power {
    double alpha;
    double exponent;
    double shift;
};

/// lambda(x) = sqrt(1 + x)
struct SqrtShift {};

/// lambda(x) = a*x - sin(b*x) + c
struct SineMix {
    double a;
    double b;
    double c;
};

struct Knot {
    double x;
    double y;
};

/// Linear interpolation through knots (first knot at x = 0), extended past the
/// last knot with terminal_slope.
struct PiecewiseLinear {
    std::vector<Knot> knots;
    double terminal_slope;
};

struct Constant {
    double level;
};

using RateKind = std::variant<Affine, Power, SqrtShift, SineMix, PiecewiseLinear, Constant>;

namespace detail {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline void require_domain(double x, const char* what)
{
    if (!(x >= 0.0)) {
        throw std::domain_error(std::string(what) + ": argument must be >= 0, got " + std::to_string(x));
    }
}

// Index of the segment containing x: knots[i].x <= x < knots[i+1].x, or the
// last index when x is at or beyond the final knot.
inline std::size_t segment_index(const PiecewiseLinear& p, double x)
{
    const auto it = std::upper_bound(p.knots.begin(), p.knots.end(), x,
                                     [](double v, const Knot& k) { return v < k.x; });
    return static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - p.knots.begin()) - 1));
}

inline double segment_slope(const PiecewiseLinear& p, std::size_t i)
{
    if (i + 1 >= p.knots.size()) {
        return p.terminal_slope;
    }
    const Knot& l = p.knots[i];
    const Knot& r = p.knots[i + 1];
    return (r.y - l.y) / (r.x - l.x);
}

inline double eval_kind(const RateKind& kind, double x)
{
    return std::visit(
        overloaded{
            [x](const Affine& k) { return k.beta + k.alpha * x; },
            [x](const Power& k) { return k.alpha * std::pow(k.shift + x, k.exponent); },
            [x](const SqrtShift&) { return std::sqrt(1.0 + x); },
            [x](const SineMix& k) { return k.a * x - std::sin(k.b * x) + k.c; },
            [x](const PiecewiseLinear& k) {
                const std::size_t i = segment_index(k, x);
                return k.knots[i].y + segment_slope(k, i) * (x - k.knots[i].x);
            },
            [](const Constant& k) { return k.level; },
        },
        kind);
}

} // namespace detail

struct GrowthClass {
    enum class Regime { Sublinear, AsymptoticallyLinear, Superlinear, Bounded };
    Regime regime;
    /// Sublinear: growth exponent (< 1). Superlinear: growth exponent (> 1).
    double exponent = 0.0;
    /// Sublinear: lim lambda(z)/z^exponent. AsymptoticallyLinear: lim lambda(z)/z.
    /// Bounded: sup lambda.
    double constant = 0.0;
    /// Superlinear only: integral of 1/lambda over [0, inf) is finite.
    bool explosive = false;
};

/// Immutable rate function. Construction validates nonnegativity and records
/// whether lambda is nondecreasing (required by the thinning sampler).
class RateFunction {
public:
    explicit RateFunction(RateKind kind) : kind_(std::move(kind))
    {
        validate();
        monotone_ = check_monotone();
    }

    const RateKind& kind() const noexcept { return kind_; }
    bool monotone() const noexcept { return monotone_; }
    bool is_affine() const noexcept { return std::holds_alternative<Affine>(kind_); }
    bool is_piecewise_linear() const noexcept { return std::holds_alternative<PiecewiseLinear>(kind_); }

    /// lambda(x) without the domain check; x must be >= 0.
    double operator()(double x) const { return detail::eval_kind(kind_, x); }

    std::string name() const
    {
        return std::visit(detail::overloaded{
                              [](const Affine&) { return std::string("affine"); },
                              [](const Power&) { return std::string("power"); },
                              [](const SqrtShift&) { return std::string("sqrt_shift"); },
                              [](const SineMix&) { return std::string("sine_mix"); },
                              [](const PiecewiseLinear&) { return std::string("piecewise_linear"); },
                              [](const Constant&) { return std::string("constant"); },
                          },
                          kind_);
    }

private:
    void validate() const
    {
        auto fail = [](const std::string& m) { throw std::invalid_argument("rate function: " + m); };
        std::visit(detail::overloaded{
                       [&](const Affine& k) {
                           if (!(k.alpha >= 0.0)) fail("affine alpha must be >= 0");
                           if (!(k.beta >= 0.0)) fail("affine beta must be >= 0");
                       },
                       [&](const Power& k) {
                           if (!(k.alpha > 0.0)) fail("power alpha must be > 0");
                           if (!(k.exponent > 0.0)) fail("power exponent must be > 0");
                           if (!(k.shift >= 0.0)) fail("power shift must be >= 0");
                       },
                       [](const SqrtShift&) {},
                       [&](const SineMix& k) {
                           if (!std::isfinite(k.a) || !std::isfinite(k.b) || !std::isfinite(k.c)) {
                               fail("sine_mix parameters must be finite");
                           }
                           if (k.a < 0.0) fail("sine_mix a must be >= 0");
                       },
                       [&](const PiecewiseLinear& k) {
                           if (k.knots.empty()) fail("piecewise_linear needs at least one knot");
                           if (k.knots.front().x != 0.0) fail("piecewise_linear first knot must be at x = 0");
                           for (std::size_t i = 0; i < k.knots.size(); ++i) {
                               if (!std::isfinite(k.knots[i].x) || !std::isfinite(k.knots[i].y)) {
                                   fail("piecewise_linear knots must be finite");
                               }
                               if (k.knots[i].y < 0.0) fail("piecewise_linear knot values must be >= 0");
                               if (i > 0 && !(k.knots[i].x > k.knots[i - 1].x)) {
                                   fail("piecewise_linear knot abscissae must be strictly increasing");
                               }
                           }
                           if (!(k.terminal_slope >= 0.0)) fail("piecewise_linear terminal_slope must be >= 0");
                       },
                       [&](const Constant& k) {
                           if (!(k.level >= 0.0)) fail("constant level must be >= 0");
                       },
                   },
                   kind_);

        // Dense sampling catches kinds whose sign is not settled by the parameter checks (sine_mix).
        if (std::holds_alternative<SineMix>(kind_)) {
            const auto& k = std::get<SineMix>(kind_);
            // lambda >= a x + c - 1, so negativity can only occur below (1 - c)/a.
            const double span = k.b != 0.0 ? 4.0 * 3.14159265358979323846 / std::abs(k.b) : 1.0;
            const double hi = k.a > 0.0 ? std::max(span, (1.0 - k.c) / k.a + span) : span;
            constexpr int n = 1 << 16;
            for (int i = 0; i <= n; ++i) {
                const double x = hi * i / n;
                if ((*this)(x) < 0.0) fail("sine_mix must be nonnegative on [0, inf)");
            }
        }
    }

    bool check_monotone() const
    {
        return std::visit(detail::overloaded{
                              [](const Affine&) { return true; },
                              [](const Power&) { return true; },
                              [](const SqrtShift&) { return true; },
                              [](const SineMix& k) { return k.a >= std::abs(k.b); },
                              [](const PiecewiseLinear& k) {
                                  for (std::size_t i = 0; i < k.knots.size(); ++i) {
                                      if (detail::segment_slope(k, i) < 0.0) return false;
                                  }
                                  return true;
                              },
                              [](const Constant&) { return true; },
                          },
                          kind_);
    }

    RateKind kind_;
    bool monotone_ = true;
};

/// lambda(x); throws std::domain_error for negative x.
inline double evaluate(const RateFunction& rf, double x)
{
    detail::require_domain(x, "evaluate");
    return rf(x);
}

/// lambda'(x). Piecewise-linear kinds return the right derivative at knots.
inline double derivative(const RateFunction& rf, double x)
{
    detail::require_domain(x, "derivative");
    return std::visit(detail::overloaded{
                          [](const Affine& k) { return k.alpha; },
                          [x](const Power& k) {
                              const double base = k.shift + x;
                              if (k.exponent == 1.0) return k.alpha;
                              if (base == 0.0) {
                                  return k.exponent < 1.0 ? std::numeric_limits<double>::infinity() : 0.0;
                              }
                              return k.alpha * k.exponent * std::pow(base, k.exponent - 1.0);
                          },
                          [x](const SqrtShift&) { return 0.5 / std::sqrt(1.0 + x); },
                          [x](const SineMix& k) { return k.a - k.b * std::cos(k.b * x); },
                          [x](const PiecewiseLinear& k) {
                              return detail::segment_slope(k, detail::segment_index(k, x));
                          },
                          [](const Constant&) { return 0.0; },
                      },
                      rf.kind());
}

/// lambda''(x); zero on linear pieces.
inline double second_derivative(const RateFunction& rf, double x)
{
    detail::require_domain(x, "second_derivative");
    return std::visit(detail::overloaded{
                          [](const Affine&) { return 0.0; },
                          [x](const Power& k) {
                              const double base = k.shift + x;
                              const double e = k.exponent;
                              if (e == 1.0 || e == 2.0) return e == 2.0 ? 2.0 * k.alpha : 0.0;
                              if (base == 0.0) {
                                  return e < 2.0 ? (e < 1.0 ? -std::numeric_limits<double>::infinity()
                                                            : std::numeric_limits<double>::infinity())
                                                 : 0.0;
                              }
                              return k.alpha * e * (e - 1.0) * std::pow(base, e - 2.0);
                          },
                          [x](const SqrtShift&) { return -0.25 * std::pow(1.0 + x, -1.5); },
                          [x](const SineMix& k) { return k.b * k.b * std::sin(k.b * x); },
                          [](const PiecewiseLinear&) { return 0.0; },
                          [](const Constant&) { return 0.0; },
                      },
                      rf.kind());
}

/// Central finite difference with step max(1e-6, 1e-8 x), one-sided at x < h.
inline double finite_difference_derivative(const RateFunction& rf, double x)
{
    detail::require_domain(x, "finite_difference_derivative");
    const double h = std::max(1e-6, 1e-8 * x);
    if (x < h) {
        return (rf(x + h) - rf(x)) / h;
    }
    return (rf(x + h) - rf(x - h)) / (2.0 * h);
}

inline GrowthClass classify_growth(const RateFunction& rf)
{
    using R = GrowthClass::Regime;
    return std::visit(
        detail::overloaded{
            [](const Affine& k) {
                return k.alpha > 0.0 ? GrowthClass{R::AsymptoticallyLinear, 1.0, k.alpha, false}
                                     : GrowthClass{R::Bounded, 0.0, k.beta, false};
            },
            [](const Power& k) {
                if (k.exponent < 1.0) return GrowthClass{R::Sublinear, k.exponent, k.alpha, false};
                if (k.exponent == 1.0) return GrowthClass{R::AsymptoticallyLinear, 1.0, k.alpha, false};
                // 1/(alpha (s+z)^e) is integrable at infinity for e > 1; at z = 0 it needs shift > 0.
                return GrowthClass{R::Superlinear, k.exponent, k.alpha, true};
            },
            [](const SqrtShift&) { return GrowthClass{R::Sublinear, 0.5, 1.0, false}; },
            [](const SineMix& k) {
                return k.a > 0.0 ? GrowthClass{R::AsymptoticallyLinear, 1.0, k.a, false}
                                 : GrowthClass{R::Bounded, 0.0, k.c + 1.0, false};
            },
            [](const PiecewiseLinear& k) {
                if (k.terminal_slope > 0.0) return GrowthClass{R::AsymptoticallyLinear, 1.0, k.terminal_slope, false};
                double sup = 0.0;
                for (const Knot& kn : k.knots) sup = std::max(sup, kn.y);
                return GrowthClass{R::Bounded, 0.0, sup, false};
            },
            [](const Constant& k) { return GrowthClass{R::Bounded, 0.0, k.level, false}; },
        },
        rf.kind());
}

// ---------------------------------------------------------------------------
// Fixed points of x = lambda(x)

enum class FixedPointClass { Stable, Unstable, SaddleLeftStable, SaddleRightStable, Interval };

inline const char* to_string(FixedPointClass c)
{
    switch (c) {
    case FixedPointClass::Stable: return "stable";
    case FixedPointClass::Unstable: return "unstable";
    case FixedPointClass::SaddleLeftStable: return "saddle_left_stable";
    case FixedPointClass::SaddleRightStable: return "saddle_right_stable";
    case FixedPointClass::Interval: return "interval";
    }
    return "unknown";
}

struct FixedPoint {
    double location;
    double slope;
    FixedPointClass cls;
    /// Upper end of the fixed-point set; equals location except for intervals.
    double upper;
};

struct FixedPointReport {
    std::vector<FixedPoint> points;
    bool complete = true;
    double search_hi = 0.0;

    std::vector<double> stable_locations() const
    {
        std::vector<double> out;
        for (const auto& p : points) {
            if (p.cls == FixedPointClass::Stable) out.push_back(p.location);
        }
        return out;
    }
};

struct FixedPointOptions {
    double fp_tol = 1e-12;
    double class_margin = 1e-6;
    double probe_delta = 1e-4;
    double identity_tol = 1e-9;
    std::size_t initial_cells = 4096;
    std::size_t max_cells = std::size_t{1} << 20;
};

/// Default bracket: 10 (lambda(0)+1)/(1-alpha) for asymptotically linear rates with
/// alpha < 1, otherwise 100.
inline double default_search_hi(const RateFunction& rf)
{
    const GrowthClass g = classify_growth(rf);
    if (g.regime == GrowthClass::Regime::AsymptoticallyLinear && g.constant < 1.0) {
        return 10.0 * (rf(0.0) + 1.0) / (1.0 - g.constant);
    }
    return 100.0;
}

namespace detail {

inline FixedPointClass classify_by_probe(const RateFunction& rf, double x, double delta)
{
    const double right = rf(x + delta) - (x + delta);
    const double xl = std::max(0.0, x - delta);
    // At x = 0 there is no left side; treat the left as feeding in (lambda >= 0 pushes upward).
    const double left = x - delta >= 0.0 ? rf(xl) - xl : 1.0;
    const bool left_up = left > 0.0;
    const bool right_up = right > 0.0;
    if (left_up && !right_up) return FixedPointClass::Stable;
    if (!left_up && right_up) return FixedPointClass::Unstable;
    return left_up ? FixedPointClass::SaddleLeftStable : FixedPointClass::SaddleRightStable;
}

inline FixedPointClass classify_point(const RateFunction& rf, double x, double slope, bool smooth,
                                      const FixedPointOptions& opt)
{
    if (smooth && slope < 1.0 - opt.class_margin) return FixedPointClass::Stable;
    if (smooth && slope > 1.0 + opt.class_margin) return FixedPointClass::Unstable;
    return classify_by_probe(rf, x, opt.probe_delta);
}

inline std::size_t count_sign_changes(const RateFunction& rf, double hi, std::size_t cells)
{
    std::size_t count = 0;
    double prev = rf(0.0);
    for (std::size_t i = 1; i <= cells; ++i) {
        const double x = hi * static_cast<double>(i) / static_cast<double>(cells);
        const double g = rf(x) - x;
        if ((prev > 0.0 && g <= 0.0) || (prev < 0.0 && g >= 0.0) || prev == 0.0) ++count;
        prev = g;
    }
    return count;
}

inline double bisect_root(const RateFunction& rf, double lo, double hi, double tol)
{
    double glo = rf(lo) - lo;
    for (int it = 0; it < 200 && hi - lo > tol * std::max(1.0, std::abs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double gm = rf(mid) - mid;
        if (gm == 0.0) return mid;
        if ((gm > 0.0) == (glo > 0.0)) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    const double gl = std::abs(rf(lo) - lo);
    const double gh = std::abs(rf(hi) - hi);
    return gl <= gh ? lo : hi;
}

inline FixedPointReport fixed_points_piecewise(const RateFunction& rf, const PiecewiseLinear& p,
                                               double search_hi, const FixedPointOptions& opt)
{
    FixedPointReport rep;
    rep.search_hi = search_hi;
    struct Raw {
        double lo, hi;
        bool interval;
    };
    std::vector<Raw> raw;
    for (std::size_t i = 0; i < p.knots.size(); ++i) {
        const double x0 = p.knots[i].x;
        if (x0 > search_hi) break;
        const double x1 = std::min(search_hi, i + 1 < p.knots.size() ? p.knots[i + 1].x : search_hi);
        const double s = segment_slope(p, i);
        const double g0 = p.knots[i].y - x0; // g(x) = g0 + (s - 1)(x - x0)
        if (std::abs(s - 1.0) < opt.identity_tol && std::abs(g0) < opt.identity_tol) {
            raw.push_back({x0, x1, true});
            continue;
        }
        if (s == 1.0) continue;
        const double root = x0 - g0 / (s - 1.0);
        if (root >= x0 - 1e-15 && root <= x1 + 1e-15) raw.push_back({root, root, false});
    }
    // Merge touching pieces: roots at interval endpoints and adjacent intervals.
    std::sort(raw.begin(), raw.end(), [](const Raw& a, const Raw& b) { return a.lo < b.lo; });
    std::vector<Raw> merged;
    for (const Raw& r : raw) {
        if (!merged.empty() && r.lo <= merged.back().hi + 1e-12) {
            merged.back().hi = std::max(merged.back().hi, r.hi);
            merged.back().interval = merged.back().interval || r.interval;
            continue;
        }
        merged.push_back(r);
    }
    for (const Raw& r : merged) {
        if (r.interval) {
            rep.points.push_back({r.lo, 1.0, FixedPointClass::Interval, r.hi});
        } else {
            const double slope = derivative(rf, r.lo);
            rep.points.push_back({r.lo, slope, classify_by_probe(rf, r.lo, opt.probe_delta), r.lo});
        }
    }
    const double g_hi = rf(search_hi) - search_hi;
    // Past the last knot g is linear, so a further crossing exists iff g(hi) and the
    // terminal drift (slope - 1) have opposite signs.
    rep.complete = search_hi >= p.knots.back().x && !(g_hi * (p.terminal_slope - 1.0) < 0.0);
    return rep;
}

// Whether the scan bracket provably contains every crossing for the built-in kinds.
inline bool bracket_complete(const RateFunction& rf, double hi)
{
    using R = GrowthClass::Regime;
    const GrowthClass gc = classify_growth(rf);
    const double g_hi = rf(hi) - hi;
    const double dg_hi = derivative(rf, hi) - 1.0;
    if (const auto* a = std::get_if<Affine>(&rf.kind())) {
        (void)a;
        return true; // at most one crossing, found if it lies below hi
    }
    if (gc.regime == R::Superlinear) {
        // convex power: g convex, no further crossing once g > 0 and increasing
        return g_hi > 0.0 && dg_hi > 0.0;
    }
    if (g_hi > 0.0) return false;
    if (const auto* s = std::get_if<SineMix>(&rf.kind())) {
        // lambda(x) <= a x + c + 1, so crossings satisfy x <= (c + 1)/(1 - a)
        return s->a < 1.0 && hi >= (s->c + 1.0) / (1.0 - s->a);
    }
    if (gc.regime == R::AsymptoticallyLinear && gc.constant >= 1.0) return false;
    // Remaining kinds (constant, concave power, sqrt_shift) are concave: g is concave,
    // so g(hi) <= 0 with g'(hi) < 0 rules out later crossings.
    return dg_hi < 0.0;
}

} // namespace detail

/// All fixed points of lambda on [0, search_hi], refined by bisection and classified.
inline FixedPointReport find_fixed_points(const RateFunction& rf, double search_hi,
                                          const FixedPointOptions& opt = {})
{
    if (!(search_hi > 0.0) || !std::isfinite(search_hi)) {
        throw std::invalid_argument("find_fixed_points: search_hi must be positive and finite");
    }
    if (const auto* p = std::get_if<PiecewiseLinear>(&rf.kind())) {
        return detail::fixed_points_piecewise(rf, *p, search_hi, opt);
    }

    FixedPointReport rep;
    rep.search_hi = search_hi;

    if (const auto* a = std::get_if<Affine>(&rf.kind()); a && a->alpha == 1.0 && a->beta == 0.0) {
        rep.points.push_back({0.0, 1.0, FixedPointClass::Interval, search_hi});
        rep.complete = false;
        return rep;
    }

    std::size_t cells = opt.initial_cells;
    std::size_t count = detail::count_sign_changes(rf, search_hi, cells);
    while (cells < opt.max_cells) {
        const std::size_t next = detail::count_sign_changes(rf, search_hi, cells * 2);
        cells *= 2;
        if (next == count) break;
        count = next;
    }

    double prev_x = 0.0;
    double prev_g = rf(0.0);
    std::vector<double> roots;
    if (prev_g == 0.0) roots.push_back(0.0);
    for (std::size_t i = 1; i <= cells; ++i) {
        const double x = search_hi * static_cast<double>(i) / static_cast<double>(cells);
        const double g = rf(x) - x;
        if (g == 0.0) {
            roots.push_back(x);
        } else if (prev_g != 0.0 && ((prev_g > 0.0) != (g > 0.0))) {
            roots.push_back(detail::bisect_root(rf, prev_x, x, opt.fp_tol));
        }
        prev_x = x;
        prev_g = g;
    }
    for (double r : roots) {
        const double slope = derivative(rf, r);
        rep.points.push_back({r, slope, detail::classify_point(rf, r, slope, true, opt), r});
    }
    rep.complete = detail::bracket_complete(rf, search_hi);
    return rep;
}

inline FixedPointReport find_fixed_points(const RateFunction& rf)
{
    return find_fixed_points(rf, default_search_hi(rf));
}

} // namespace sepp
