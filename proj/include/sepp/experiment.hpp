#pragma once

#include "sepp/analytic.hpp"
#include "sepp/parallel.hpp"
#include "sepp/random.hpp"
#include "sepp/rate_function.hpp"
#include "sepp/simulation.hpp"
#include "sepp/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sepp::mc {

enum class ExperimentKind { Lln, Clt, GammaLimit, Basin, L2Rate, FluidLimit, Tail, Explosion, SteadyScan };

inline const char* to_string(ExperimentKind k)
{
    switch (k) {
    case ExperimentKind::Lln: return "lln";
    case ExperimentKind::Clt: return "clt";
    case ExperimentKind::GammaLimit: return "gamma_limit";
    case ExperimentKind::Basin: return "basin";
    case ExperimentKind::L2Rate: return "l2_rate";
    case ExperimentKind::FluidLimit: return "fluid_limit";
    case ExperimentKind::Tail: return "tail";
    case ExperimentKind::Explosion: return "explosion";
    case ExperimentKind::SteadyScan: return "steady_scan";
    }
    return "unknown";
}

inline std::optional<ExperimentKind> parse_kind(const std::string& s)
{
    for (auto k : {ExperimentKind::Lln, ExperimentKind::Clt, ExperimentKind::GammaLimit, ExperimentKind::Basin,
                   ExperimentKind::L2Rate, ExperimentKind::FluidLimit, ExperimentKind::Tail, ExperimentKind::Explosion,
                   ExperimentKind::SteadyScan}) {
        if (s == to_string(k)) return k;
    }
    return std::nullopt;
}

struct ExperimentSpec {
    ExperimentKind kind = ExperimentKind::Lln;
    RateFunction rf = RateFunction(Constant{1.0});
    double gamma = 0.0;
    /// initial-condition grid (Basin, FluidLimit)
    std::vector<double> gammas;
    /// sorted horizons; single-horizon kinds use the last one
    std::vector<double> horizons{1000.0};
    std::size_t replications = 1000;
    std::uint64_t master_seed = 0;
    std::size_t max_events = 10'000'000;
    SimMethod method = SimMethod::Auto;
    /// LLN: half-width of the window around a fixed point
    double tolerance = 0.1;
    /// L2Rate: observation times (default: four per decade from 10 to the horizon)
    std::vector<double> checkpoints;
    /// Tail: thresholds ell
    std::vector<std::size_t> ells;
    /// worker threads; 0 picks the default. Not part of the report.
    std::size_t workers = 0;

    /// Every violated constraint, not just the first.
    std::vector<std::string> errors() const
    {
        std::vector<std::string> e;
        if (replications < 1) e.emplace_back("replications must be >= 1");
        if (max_events < 1) e.emplace_back("max_events must be >= 1");
        if (!(gamma >= 0.0) || !std::isfinite(gamma)) e.emplace_back("gamma must be finite and >= 0");
        if (horizons.empty()) e.emplace_back("horizons must not be empty");
        for (std::size_t i = 0; i < horizons.size(); ++i) {
            if (!(horizons[i] > 0.0) || !std::isfinite(horizons[i])) e.emplace_back("horizons must be finite and > 0");
            if (i > 0 && !(horizons[i] > horizons[i - 1])) e.emplace_back("horizons must be strictly increasing");
        }
        for (double g : gammas) {
            if (!(g >= 0.0) || !std::isfinite(g)) e.emplace_back("gammas must be finite and >= 0");
        }
        for (std::size_t i = 1; i < checkpoints.size(); ++i) {
            if (!(checkpoints[i] > checkpoints[i - 1])) e.emplace_back("checkpoints must be strictly increasing");
        }
        if (!checkpoints.empty() && !(checkpoints.front() > 0.0)) e.emplace_back("checkpoints must be > 0");
        if (!(tolerance > 0.0)) e.emplace_back("tolerance must be > 0");
        if (!rf.is_affine() && !rf.monotone() && kind != ExperimentKind::Tail) {
            e.emplace_back("rate function must be nondecreasing for simulation");
        }
        const GrowthClass g = classify_growth(rf);
        const auto* aff = std::get_if<Affine>(&rf.kind());
        switch (kind) {
        case ExperimentKind::Lln:
            if (g.regime == GrowthClass::Regime::Superlinear) e.emplace_back("lln: explosive rate function rejected");
            break;
        case ExperimentKind::Clt:
            if (aff == nullptr) e.emplace_back("clt: affine rate function required");
            else if (!(aff->alpha < 0.5)) e.emplace_back("clt: alpha must be < 1/2");
            break;
        case ExperimentKind::GammaLimit:
            if (aff == nullptr || aff->beta != 0.0 || !(aff->alpha > 0.0)) {
                e.emplace_back("gamma_limit: linear rate alpha*z with alpha > 0 required");
            }
            if (!(gamma > 0.0)) e.emplace_back("gamma_limit: gamma must be > 0");
            break;
        case ExperimentKind::Basin:
            if (gammas.empty()) e.emplace_back("basin: gammas must not be empty");
            break;
        case ExperimentKind::L2Rate:
            if (aff == nullptr) e.emplace_back("l2_rate: affine rate function required");
            else if (!(aff->alpha < 1.0)) e.emplace_back("l2_rate: alpha must be < 1");
            if (!checkpoints.empty() && checkpoints.back() > horizons.back()) {
                e.emplace_back("l2_rate: checkpoints must not exceed the horizon");
            }
            break;
        case ExperimentKind::FluidLimit:
            if (g.regime != GrowthClass::Regime::AsymptoticallyLinear && g.regime != GrowthClass::Regime::Sublinear) {
                e.emplace_back("fluid_limit: asymptotically linear or sublinear rate function required");
            }
            if (gammas.empty()) e.emplace_back("fluid_limit: gammas must not be empty");
            for (std::size_t i = 1; i < gammas.size(); ++i) {
                if (!(gammas[i] > gammas[i - 1])) e.emplace_back("fluid_limit: gammas must be increasing");
            }
            for (double gm : gammas) {
                if (!(gm > 0.0)) e.emplace_back("fluid_limit: gammas must be > 0");
            }
            break;
        case ExperimentKind::Tail:
            if (g.regime == GrowthClass::Regime::Superlinear) e.emplace_back("tail: superlinear rate function rejected");
            for (std::size_t ell : ells) {
                if (ell < 2) e.emplace_back("tail: ells must be >= 2");
            }
            break;
        case ExperimentKind::Explosion: break;
        case ExperimentKind::SteadyScan:
            if (aff == nullptr || !(aff->alpha > 0.0)) e.emplace_back("steady_scan: affine rate with alpha > 0 required");
            break;
        }
        return e;
    }

    void validate() const
    {
        const auto e = errors();
        if (e.empty()) return;
        std::string msg = "experiment spec invalid:";
        for (const auto& s : e) msg += " " + s + ";";
        throw std::invalid_argument(msg);
    }
};

struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
};

struct Metric {
    std::string name;
    double value;
};

struct ExperimentReport {
    std::string kind;
    std::string rate_function;
    std::uint64_t master_seed = 0;
    std::size_t replications = 0;
    /// first table is the per-checkpoint extract
    std::vector<Table> tables;
    /// derived scalars in insertion order
    std::vector<Metric> metrics;
    /// columns x, y, y_lo, y_hi; empty name when the kind has no figure
    Table plot;
    std::vector<std::string> flags;
    /// descriptive key/value strings (e.g. the normalization used)
    std::vector<std::pair<std::string, std::string>> annotations;

    bool flagged() const noexcept { return !flags.empty(); }
    void add(std::string name, double value) { metrics.push_back({std::move(name), value}); }

    double metric(const std::string& name) const
    {
        for (const auto& m : metrics) {
            if (m.name == name) return m.value;
        }
        throw std::out_of_range("report has no metric '" + name + "'");
    }
};

// ---------------------------------------------------------------------------
// Replication engine

struct CountSample {
    /// counts[rep][checkpoint]
    std::vector<std::vector<std::size_t>> counts;
    std::vector<std::uint8_t> exploded;
    std::size_t exploded_total = 0;

    std::vector<double> column(std::size_t j, double scale = 1.0, double shift = 0.0) const
    {
        std::vector<double> out(counts.size());
        for (std::size_t i = 0; i < counts.size(); ++i) out[i] = (static_cast<double>(counts[i][j]) + shift) / scale;
        return out;
    }
};

/// N at sorted checkpoints for `reps` independent paths; replication i draws from
/// split(master_seed, stream_offset + i), so results do not depend on the worker count.
inline CountSample replicate_counts(const RateFunction& rf, double gamma, std::span<const double> checkpoints,
                                    std::size_t reps, std::uint64_t master_seed, std::uint64_t stream_offset,
                                    std::size_t max_events, SimMethod method, std::size_t workers)
{
    if (checkpoints.empty()) throw std::invalid_argument("replicate_counts: no checkpoints");
    SimConfig cfg{rf, gamma, checkpoints.back(), max_events, master_seed, method};
    cfg.validate();
    struct One {
        std::vector<std::size_t> counts;
        bool exploded = false;
    };
    auto runs = par::map_replications(reps, par::resolve_workers(workers), [&](std::size_t i) {
        Philox4x32 rng = split(master_seed, stream_offset + i);
        CheckpointCounts c = counts_at(cfg, rng, checkpoints);
        return One{std::move(c.counts), c.exploded};
    });
    CountSample s;
    s.counts.reserve(reps);
    s.exploded.reserve(reps);
    for (auto& r : runs) {
        s.counts.push_back(std::move(r.counts));
        s.exploded.push_back(r.exploded ? 1 : 0);
        s.exploded_total += r.exploded ? 1 : 0;
    }
    return s;
}

namespace detail {

inline const std::vector<std::string>& summary_columns()
{
    static const std::vector<std::string> cols{"n", "mean", "variance", "std_error", "q05", "q25", "q50", "q75", "q95"};
    return cols;
}

inline std::vector<double> summary_row(double x, const stats::Summary& s)
{
    return {x, static_cast<double>(s.n), s.mean, s.variance, s.std_error, s.q05, s.q25, s.q50, s.q75, s.q95};
}

inline Table summary_table(std::string name, std::string x_label)
{
    Table t{std::move(name), {std::move(x_label)}, {}};
    for (const auto& c : summary_columns()) t.columns.push_back(c);
    return t;
}

inline ExperimentReport new_report(const ExperimentSpec& spec)
{
    ExperimentReport r;
    r.kind = to_string(spec.kind);
    r.rate_function = spec.rf.name();
    r.master_seed = spec.master_seed;
    r.replications = spec.replications;
    return r;
}

inline void flag_explosions(ExperimentReport& r, const CountSample& s, const std::string& where)
{
    if (s.exploded_total > 0) {
        r.flags.push_back(where + ": " + std::to_string(s.exploded_total) + " runs hit the event guard");
    }
}

// A run near a fixed-point interval counts as near its closest end.
inline double distance_to(const FixedPoint& p, double y)
{
    if (y < p.location) return p.location - y;
    if (y > p.upper) return y - p.upper;
    return 0.0;
}

inline std::vector<double> default_l2_checkpoints(double horizon)
{
    std::vector<double> cps;
    for (int i = 4;; ++i) {
        const double t = std::pow(10.0, i / 4.0);
        if (t > horizon * (1.0 + 1e-12)) break;
        cps.push_back(t);
    }
    if (cps.empty() || cps.back() < horizon) cps.push_back(horizon);
    return cps;
}

inline double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    return stats::quantile_sorted(v, 0.5);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Experiments

/// Fraction of runs with N_T/T near a stable fixed point, near an unstable one, or in
/// a fixed-point-free region, at every horizon.
inline ExperimentReport run_lln(const ExperimentSpec& spec)
{
    spec.validate();
    const FixedPointReport fp = find_fixed_points(spec.rf);
    if (!fp.complete) throw std::invalid_argument("lln: fixed-point search is not complete for this rate function");
    if (fp.stable_locations().empty()) throw std::invalid_argument("lln: rate function has no stable fixed point");
    const CountSample s = replicate_counts(spec.rf, spec.gamma, spec.horizons, spec.replications, spec.master_seed, 0,
                                           spec.max_events, spec.method, spec.workers);
    ExperimentReport r = detail::new_report(spec);
    Table t = detail::summary_table("lln", "T");
    for (const char* c : {"frac_within_tol", "frac_near_unstable", "frac_fixed_point_free"}) t.columns.emplace_back(c);
    r.plot = {"lln_plot", {"x", "y", "y_lo", "y_hi"}, {}};
    double within = 0.0, unstable = 0.0, free = 0.0;
    for (std::size_t j = 0; j < spec.horizons.size(); ++j) {
        const double T = spec.horizons[j];
        const std::vector<double> y = s.column(j, T);
        std::size_t n_within = 0, n_unstable = 0, n_free = 0;
        for (double v : y) {
            bool near_any = false, near_stable = false, near_unstable = false;
            for (const auto& p : fp.points) {
                if (detail::distance_to(p, v) < spec.tolerance) {
                    near_any = true;
                    if (p.cls == FixedPointClass::Stable) near_stable = true;
                    if (p.cls == FixedPointClass::Unstable) near_unstable = true;
                }
            }
            n_within += near_stable;
            n_unstable += near_unstable;
            n_free += !near_any;
        }
        const double n = static_cast<double>(y.size());
        within = n_within / n;
        unstable = n_unstable / n;
        free = n_free / n;
        const stats::Summary sm = stats::summarize(y);
        auto row = detail::summary_row(T, sm);
        row.insert(row.end(), {within, unstable, free});
        t.rows.push_back(std::move(row));
        r.plot.rows.push_back({T, sm.mean, sm.q05, sm.q95});
    }
    r.tables.push_back(std::move(t));
    r.add("frac_within_tol", within);
    r.add("frac_near_unstable", unstable);
    r.add("frac_fixed_point_free", free);
    r.add("tolerance", spec.tolerance);
    detail::flag_explosions(r, s, "lln");
    return r;
}

/// (N_T - beta T/(1-alpha))/sqrt(T) against N(0, beta/((1-2 alpha)(1-alpha))).
inline ExperimentReport run_clt(const ExperimentSpec& spec)
{
    spec.validate();
    const Affine a = std::get<Affine>(spec.rf.kind());
    const double T = spec.horizons.back();
    const std::vector<double> cp{T};
    const CountSample s = replicate_counts(spec.rf, spec.gamma, cp, spec.replications, spec.master_seed, 0,
                                           spec.max_events, spec.method, spec.workers);
    const double sigma2 = a.beta / ((1.0 - 2.0 * a.alpha) * (1.0 - a.alpha));
    const double center = a.beta * T / (1.0 - a.alpha);
    const double root = std::sqrt(T);
    const std::vector<double> z = s.column(0, root, -center);
    const stats::Summary sm = stats::summarize(z);
    const double sigma = std::sqrt(sigma2);
    auto gauss = [sigma](double x) { return stats::normal_cdf(x, 0.0, sigma); };
    const double ks = stats::ks_statistic(z, gauss);

    ExperimentReport r = detail::new_report(spec);
    Table t = detail::summary_table("clt", "T");
    t.rows.push_back(detail::summary_row(T, sm));
    r.tables.push_back(std::move(t));
    r.add("horizon", T);
    r.add("sample_variance", sm.variance);
    r.add("limit_variance", sigma2);
    r.add("variance_rel_error", std::abs(sm.variance - sigma2) / sigma2);
    r.add("sample_mean", sm.mean);
    r.add("ks_distance", ks);
    r.add("ks_p_value", stats::ks_p_value(ks, static_cast<double>(z.size())));
    if (spec.gamma == 0.0) {
        // Same statistic centred at the exact finite-T mean: isolates the O(T^(alpha-1/2)) bias.
        const double shift = analytic::mean_affine(a.alpha, a.beta, T) - center;
        std::vector<double> zc(z);
        for (double& v : zc) v -= shift / root;
        r.add("ks_distance_exact_centering", stats::ks_statistic(zc, gauss));
        r.add("exact_variance_over_T", analytic::variance_affine(a.alpha, a.beta, T) / T);
    }
    detail::flag_explosions(r, s, "clt");
    return r;
}

/// N_T / T^alpha against Gamma(gamma, 1) for lambda(z) = alpha z, plus the exact
/// negative-binomial law of N_T as a finite-T oracle.
inline ExperimentReport run_gamma_limit(const ExperimentSpec& spec)
{
    spec.validate();
    const Affine a = std::get<Affine>(spec.rf.kind());
    const double T = spec.horizons.back();
    const std::vector<double> cp{T};
    const CountSample s = replicate_counts(spec.rf, spec.gamma, cp, spec.replications, spec.master_seed, 0,
                                           spec.max_events, spec.method, spec.workers);
    const std::vector<double> y = s.column(0, std::pow(T, a.alpha));
    const stats::Summary sm = stats::summarize(y);
    const double shape = spec.gamma;
    const double ks = stats::ks_statistic(y, [shape](double x) { return stats::gamma_cdf(x, shape); });

    std::vector<std::size_t> counts(s.counts.size());
    std::size_t top = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        counts[i] = s.counts[i][0];
        top = std::max(top, counts[i]);
    }
    const std::vector<double> emp = stats::empirical_pmf(counts);
    std::vector<double> exact;
    double mass = 0.0;
    for (std::size_t k = 0; k <= top || mass < 1.0 - 1e-13; ++k) {
        exact.push_back(analytic::negbin_pmf(a.alpha, spec.gamma, T, k));
        mass += exact.back();
        if (k > 100 * (top + 10)) break;
    }

    ExperimentReport r = detail::new_report(spec);
    Table t = detail::summary_table("gamma_limit", "T");
    t.rows.push_back(detail::summary_row(T, sm));
    r.tables.push_back(std::move(t));
    Table law{"gamma_limit_law", {"k", "empirical", "exact"}, {}};
    for (std::size_t k = 0; k < std::max(emp.size(), exact.size()) && k <= top; ++k) {
        law.rows.push_back({static_cast<double>(k), k < emp.size() ? emp[k] : 0.0, k < exact.size() ? exact[k] : 0.0});
    }
    r.tables.push_back(std::move(law));
    r.add("horizon", T);
    r.add("ks_distance", ks);
    r.add("ks_p_value", stats::ks_p_value(ks, static_cast<double>(y.size())));
    r.add("sample_mean", sm.mean);
    r.add("mean_z_score", (sm.mean - shape) / sm.std_error);
    r.add("sample_variance", sm.variance);
    r.add("variance_rel_error", std::abs(sm.variance - shape) / shape);
    r.add("tv_exact_law", stats::total_variation(emp, exact));
    detail::flag_explosions(r, s, "gamma_limit");
    return r;
}

/// Attribution of N_T/T to the stable fixed points across a gamma grid.
inline ExperimentReport run_basin(const ExperimentSpec& spec)
{
    spec.validate();
    const FixedPointReport fp = find_fixed_points(spec.rf);
    const std::vector<double> stable = fp.stable_locations();
    if (stable.size() < 2) throw std::invalid_argument("basin: at least two stable fixed points required");
    // attribution window: half the gap to the nearest other fixed point, capped at 0.25
    std::vector<double> window(stable.size(), 0.25);
    for (std::size_t k = 0; k < stable.size(); ++k) {
        for (const auto& p : fp.points) {
            if (p.cls == FixedPointClass::Stable && p.location == stable[k]) continue;
            window[k] = std::min(window[k], 0.5 * detail::distance_to(p, stable[k]));
        }
    }
    const double T = spec.horizons.back();
    const std::vector<double> cp{T};
    const std::size_t K = stable.size();
    const double n = static_cast<double>(spec.replications);

    ExperimentReport r = detail::new_report(spec);
    Table t{"basin", {"gamma"}, {}};
    for (std::size_t k = 0; k < K; ++k) t.columns.push_back("p" + std::to_string(k + 1));
    t.columns.emplace_back("unresolved");
    t.columns.emplace_back("se_p1");
    t.columns.emplace_back("mean_ratio");
    r.plot = {"basin_plot", {"x", "y", "y_lo", "y_hi"}, {}};

    std::vector<double> p1, w1, se1;
    double worst_unresolved = 0.0;
    long bookkeeping = 0;
    std::size_t explosions = 0;
    for (std::size_t g = 0; g < spec.gammas.size(); ++g) {
        const CountSample s = replicate_counts(spec.rf, spec.gammas[g], cp, spec.replications, spec.master_seed,
                                               g * spec.replications, spec.max_events, spec.method, spec.workers);
        explosions += s.exploded_total;
        std::vector<std::size_t> hits(K, 0);
        std::size_t unresolved = 0;
        const std::vector<double> y = s.column(0, T);
        for (double v : y) {
            std::size_t best = 0;
            for (std::size_t k = 1; k < K; ++k) {
                if (std::abs(v - stable[k]) < std::abs(v - stable[best])) best = k;
            }
            if (std::abs(v - stable[best]) <= window[best]) ++hits[best];
            else ++unresolved;
        }
        std::size_t total = unresolved;
        for (std::size_t h : hits) total += h;
        bookkeeping = std::max<long>(bookkeeping, std::labs(static_cast<long>(total) - static_cast<long>(spec.replications)));
        std::vector<double> row{spec.gammas[g]};
        for (std::size_t h : hits) row.push_back(static_cast<double>(h) / n);
        const double un = static_cast<double>(unresolved) / n;
        row.push_back(un);
        // Laplace-smoothed standard error keeps the band open at p = 0 or 1
        const double pt = (static_cast<double>(hits[0]) + 1.0) / (n + 2.0);
        const double se = std::sqrt(pt * (1.0 - pt) / n);
        row.push_back(se);
        row.push_back(stats::mean(y));
        t.rows.push_back(row);
        p1.push_back(static_cast<double>(hits[0]) / n);
        se1.push_back(se);
        w1.push_back(1.0 / (se * se));
        worst_unresolved = std::max(worst_unresolved, un);
        const auto ci = stats::clopper_pearson(hits[0], spec.replications, 0.95);
        r.plot.rows.push_back({spec.gammas[g], p1.back(), ci.lo, ci.hi});
    }
    const std::vector<double> iso = stats::isotonic_decreasing(p1, w1);
    double violation = 0.0;
    for (std::size_t g = 0; g < p1.size(); ++g) violation = std::max(violation, std::abs(p1[g] - iso[g]) / se1[g]);
    // positivity at every grid point strictly inside the grid
    bool interior_positive = spec.gammas.size() > 2;
    double min_p1 = 1.0, min_p2 = 1.0;
    for (std::size_t g = 1; g + 1 < spec.gammas.size(); ++g) {
        const double a = t.rows[g][1], b = t.rows[g][2];
        min_p1 = std::min(min_p1, a);
        min_p2 = std::min(min_p2, b);
        interior_positive = interior_positive && a > 0.0 && b > 0.0;
    }
    r.tables.push_back(std::move(t));
    r.add("horizon", T);
    for (std::size_t k = 0; k < K; ++k) {
        r.add("stable_point_" + std::to_string(k + 1), stable[k]);
        r.add("attribution_window_" + std::to_string(k + 1), window[k]);
    }
    r.add("bookkeeping_max_abs_count_error", static_cast<double>(bookkeeping));
    r.add("max_unresolved", worst_unresolved);
    r.add("isotonic_violation_se", violation);
    r.add("interior_positive", interior_positive ? 1.0 : 0.0);
    r.add("min_interior_p1", min_p1);
    r.add("min_interior_p2", min_p2);
    if (worst_unresolved > 0.10) r.flags.emplace_back("basin: unresolved fraction above 10%; horizon too short");
    if (explosions > 0) r.flags.push_back("basin: " + std::to_string(explosions) + " runs hit the event guard");
    return r;
}

/// E[(Y_t - Ybar_t)^2] at checkpoints, with a log-log slope fit on the last decade.
inline ExperimentReport run_l2_rate(const ExperimentSpec& spec)
{
    spec.validate();
    const Affine a = std::get<Affine>(spec.rf.kind());
    const double T = spec.horizons.back();
    const std::vector<double> cps = spec.checkpoints.empty() ? detail::default_l2_checkpoints(T) : spec.checkpoints;
    const CountSample s = replicate_counts(spec.rf, spec.gamma, cps, spec.replications, spec.master_seed, 0,
                                           spec.max_events, spec.method, spec.workers);
    const analytic::FlowCurve flow = analytic::deterministic_flow(spec.rf, spec.gamma, cps.back(), cps);
    // flow.t starts with t = 0
    ExperimentReport r = detail::new_report(spec);
    Table t{"l2_rate", {"t", "m_hat", "m_se", "m_exact", "ybar"}, {}};
    std::vector<double> log_t, log_m, log_m_exact, ratio_t, ratio_v;
    const bool exact_available = spec.gamma == 0.0;
    const bool half = std::abs(a.alpha - 0.5) < analytic::kBranchWindow;
    for (std::size_t j = 0; j < cps.size(); ++j) {
        const double tj = cps[j];
        const double ybar = flow.y[j + 1];
        std::vector<double> sq(s.counts.size());
        for (std::size_t i = 0; i < sq.size(); ++i) {
            const double y = (static_cast<double>(s.counts[i][j]) + spec.gamma) / (tj + 1.0);
            sq[i] = (y - ybar) * (y - ybar);
        }
        const stats::Summary sm = stats::summarize(sq);
        const double exact = exact_available
                                 ? analytic::variance_affine(a.alpha, a.beta, tj) / ((tj + 1.0) * (tj + 1.0))
                                 : std::numeric_limits<double>::quiet_NaN();
        t.rows.push_back({tj, sm.mean, sm.std_error, exact, ybar});
        if (tj >= T / 10.0 * (1.0 - 1e-12)) {
            log_t.push_back(std::log(tj));
            log_m.push_back(std::log(sm.mean));
            if (exact_available) log_m_exact.push_back(std::log(exact));
            ratio_t.push_back(tj);
            ratio_v.push_back(sm.mean * tj / std::log(tj));
        }
    }
    r.tables.push_back(std::move(t));
    const double predicted = a.alpha < 0.5 ? -1.0 : -2.0 * (1.0 - a.alpha);
    r.add("predicted_exponent", half ? -1.0 : predicted);
    if (log_t.size() >= 2) {
        const stats::LineFit fit = stats::fit_line(log_t, log_m);
        r.add("fitted_slope", fit.slope);
        r.add("fitted_slope_se", fit.slope_std_error);
        r.add("slope_error", std::abs(fit.slope - (half ? -1.0 : predicted)));
        if (exact_available) r.add("exact_slope", stats::fit_line(log_t, log_m_exact).slope);
    } else {
        r.flags.emplace_back("l2_rate: fewer than two checkpoints in the last decade");
    }
    if (half && !ratio_v.empty()) {
        // m(t) t / log t relative to its value at the largest checkpoint
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (double v : ratio_v) {
            lo = std::min(lo, v / ratio_v.back());
            hi = std::max(hi, v / ratio_v.back());
        }
        r.add("log_model_constant", ratio_v.back());
        r.add("log_model_ratio_min", lo);
        r.add("log_model_ratio_max", hi);
    }
    detail::flag_explosions(r, s, "l2_rate");
    return r;
}

/// Median sup-norm distance between N_s/scale and the fluid curve on [0, T], per gamma.
/// The supremum is taken exactly over the jump times, where the step path is extremal.
inline ExperimentReport run_fluid_limit(const ExperimentSpec& spec)
{
    spec.validate();
    const GrowthClass g = classify_growth(spec.rf);
    const double T = spec.horizons.back();
    ExperimentReport r = detail::new_report(spec);
    Table t{"fluid_limit", {"gamma", "scale", "median_sup_dev", "q25", "q75", "mean_sup_dev"}, {}};
    r.plot = {"fluid_plot", {"x", "y", "y_lo", "y_hi"}, {}};
    std::vector<double> medians;
    std::size_t explosions = 0;
    for (std::size_t gi = 0; gi < spec.gammas.size(); ++gi) {
        const double gamma = spec.gammas[gi];
        const double scale =
            g.regime == GrowthClass::Regime::Sublinear ? std::pow(gamma, g.exponent) : gamma;
        SimConfig cfg{spec.rf, gamma, T, spec.max_events, spec.master_seed, spec.method};
        cfg.validate();
        struct One {
            double sup;
            bool exploded;
        };
        auto runs = par::map_replications(spec.replications, par::resolve_workers(spec.workers), [&](std::size_t i) {
            Philox4x32 rng = split(spec.master_seed, gi * spec.replications + i);
            double sup = 0.0;
            const PathOutcome out = run_path(cfg, rng, [&](double s, std::size_t k) {
                const double phi = analytic::fluid_curve(g, s);
                sup = std::max({sup, std::abs(static_cast<double>(k - 1) / scale - phi),
                                std::abs(static_cast<double>(k) / scale - phi)});
            });
            sup = std::max(sup, std::abs(static_cast<double>(out.events) / scale - analytic::fluid_curve(g, T)));
            return One{sup, out.exploded};
        });
        std::vector<double> sups(runs.size());
        for (std::size_t i = 0; i < runs.size(); ++i) {
            sups[i] = runs[i].sup;
            explosions += runs[i].exploded;
        }
        std::vector<double> sorted(sups);
        std::sort(sorted.begin(), sorted.end());
        const double med = stats::quantile_sorted(sorted, 0.5);
        const double q25 = stats::quantile_sorted(sorted, 0.25), q75 = stats::quantile_sorted(sorted, 0.75);
        medians.push_back(med);
        t.rows.push_back({gamma, scale, med, q25, q75, stats::mean(sups)});
        r.plot.rows.push_back({gamma, med, q25, q75});
    }
    bool decreasing = true;
    for (std::size_t i = 1; i < medians.size(); ++i) decreasing = decreasing && medians[i] < medians[i - 1];
    r.tables.push_back(std::move(t));
    r.add("horizon", T);
    r.add("medians_decreasing", decreasing ? 1.0 : 0.0);
    r.add("final_median_sup_dev", medians.back());
    r.add("regime_exponent", g.regime == GrowthClass::Regime::Sublinear ? g.exponent : 1.0);
    if (explosions > 0) r.flags.push_back("fluid_limit: " + std::to_string(explosions) + " runs hit the event guard");
    return r;
}

/// Normalized log-tail of N_t from the forward-equation ladder against the predicted law.
inline ExperimentReport run_tail(const ExperimentSpec& spec)
{
    spec.validate();
    const double T = spec.horizons.back();
    std::vector<std::size_t> ells = spec.ells.empty() ? std::vector<std::size_t>{25, 50, 100, 150, 200} : spec.ells;
    std::sort(ells.begin(), ells.end());
    const analytic::TailLaw law = analytic::tail_asymptote(spec.rf, T);
    const bool exponential = std::holds_alternative<analytic::ExponentialTail>(law);
    const double limit = exponential ? std::get<analytic::ExponentialTail>(law).limit
                                     : std::get<analytic::PoissonTypeTail>(law).limit;
    analytic::LadderOptions lo;
    // pure relative error control: tails near 1e-100 must keep their digits
    lo.atol = 1e-300;
    lo.rtol = 1e-10;
    const analytic::PmfLadder ladder = analytic::pmf_ladder(spec.rf, spec.gamma, T, ells.back(), lo);

    ExperimentReport r = detail::new_report(spec);
    Table t{"tail", {"ell", "tail_prob", "log_tail", "normalized", "limit", "rel_error"}, {}};
    r.plot = {"tail_plot", {"x", "y", "y_lo", "y_hi"}, {}};
    std::vector<double> errs;
    for (std::size_t ell : ells) {
        const double p = ladder.tail(ell);
        const double lp = std::log(p);
        const double l = static_cast<double>(ell);
        const double norm = exponential ? lp / l : lp / (l * std::log(l));
        const double err = std::abs(norm - limit) / std::abs(limit);
        if (!(p > 0.0)) r.flags.push_back("tail: P(N >= " + std::to_string(ell) + ") underflows");
        t.rows.push_back({l, p, lp, norm, limit, err});
        r.plot.rows.push_back({l, norm, limit, limit});
        errs.push_back(err);
    }
    bool improving = true;
    for (std::size_t i = 1; i < errs.size(); ++i) improving = improving && errs[i] <= errs[i - 1];
    r.tables.push_back(std::move(t));
    r.add("horizon", T);
    r.add("law_exponential", exponential ? 1.0 : 0.0);
    r.add("limit", limit);
    r.add("max_ell", static_cast<double>(ells.back()));
    r.add("rel_error_at_max_ell", errs.back());
    r.add("rel_error_improving", improving ? 1.0 : 0.0);
    r.add("truncation_mass", ladder.truncation_mass);
    if (const auto* a = std::get_if<Affine>(&spec.rf.kind()); a && a->beta == 0.0 && spec.gamma > 0.0) {
        // closed-form negative-binomial tail summed from the top as a ladder cross-check
        double tail = 0.0;
        for (std::size_t k = ells.back() + 20000; k-- > ells.back();) {
            tail += analytic::negbin_pmf(a->alpha, spec.gamma, T, k);
        }
        r.add("closed_form_log_tail_at_max_ell", std::log(tail));
    }
    return r;
}

/// Fraction of runs that hit the event guard before the horizon.
inline ExperimentReport run_explosion(const ExperimentSpec& spec)
{
    spec.validate();
    const double T = spec.horizons.back();
    SimConfig cfg{spec.rf, spec.gamma, T, spec.max_events, spec.master_seed, spec.method};
    cfg.validate();
    struct One {
        bool exploded;
        double time;
        std::size_t events;
    };
    auto runs = par::map_replications(spec.replications, par::resolve_workers(spec.workers), [&](std::size_t i) {
        Philox4x32 rng = split(spec.master_seed, i);
        const PathOutcome out = run_path(cfg, rng, [](double, std::size_t) {});
        return One{out.exploded, out.last_time, out.events};
    });
    std::size_t k = 0;
    std::vector<double> times;
    for (const auto& o : runs) {
        if (o.exploded) {
            ++k;
            times.push_back(o.time);
        }
    }
    const double n = static_cast<double>(runs.size());
    const double frac = static_cast<double>(k) / n;
    const auto ci = stats::clopper_pearson(k, runs.size(), 0.99);
    const double void_bound = analytic::void_probability(spec.rf, spec.gamma, T);
    const double se = std::sqrt(std::max(frac * (1.0 - frac), 1.0 / n) / n);
    const GrowthClass g = classify_growth(spec.rf);

    ExperimentReport r = detail::new_report(spec);
    Table t = detail::summary_table("explosion_times", "horizon");
    if (!times.empty()) t.rows.push_back(detail::summary_row(T, stats::summarize(times)));
    r.tables.push_back(std::move(t));
    r.add("horizon", T);
    r.add("max_events", static_cast<double>(spec.max_events));
    r.add("superlinear", g.regime == GrowthClass::Regime::Superlinear ? 1.0 : 0.0);
    r.add("exploded_count", static_cast<double>(k));
    r.add("exploded_fraction", frac);
    r.add("ci99_lo", ci.lo);
    r.add("ci99_hi", ci.hi);
    r.add("ci_inside_open_unit", ci.lo > 0.0 && ci.hi < 1.0 ? 1.0 : 0.0);
    r.add("void_lower_bound", void_bound);
    r.add("nonexploded_minus_void_bound_in_se", ((1.0 - frac) - void_bound) / se);
    return r;
}

/// Regime-normalized N_T/s(T) against its limit constant, at every horizon.
inline ExperimentReport run_steady_scan(const ExperimentSpec& spec)
{
    spec.validate();
    const Affine a = std::get<Affine>(spec.rf.kind());
    const CountSample s = replicate_counts(spec.rf, spec.gamma, spec.horizons, spec.replications, spec.master_seed, 0,
                                           spec.max_events, spec.method, spec.workers);
    std::string label;
    double constant = 0.0;
    auto scale = [&](double T) {
        if (std::abs(a.alpha - 1.0) < analytic::kBranchWindow) return T * std::log(T);
        if (a.alpha < 1.0) return T;
        return std::pow(T, a.alpha);
    };
    if (std::abs(a.alpha - 1.0) < analytic::kBranchWindow) {
        label = "T log T";
        constant = a.beta;
    } else if (a.alpha < 1.0) {
        label = "T";
        constant = a.beta / (1.0 - a.alpha);
    } else {
        label = "T^alpha";
        constant = a.beta / (a.alpha - 1.0);
    }
    ExperimentReport r = detail::new_report(spec);
    Table t = detail::summary_table("steady_scan", "T");
    t.columns.emplace_back("rel_error");
    double rel = 0.0, z = 0.0;
    for (std::size_t j = 0; j < spec.horizons.size(); ++j) {
        const double T = spec.horizons[j];
        const stats::Summary sm = stats::summarize(s.column(j, scale(T)));
        rel = std::abs(sm.mean - constant) / constant;
        z = sm.std_error > 0.0 ? (sm.mean - constant) / sm.std_error : 0.0;
        auto row = detail::summary_row(T, sm);
        row.push_back(rel);
        t.rows.push_back(std::move(row));
    }
    r.tables.push_back(std::move(t));
    r.add("limit_constant", constant);
    r.add("rel_error", rel);
    r.add("z_score", z);
    r.add("mean", r.tables[0].rows.back()[2]);
    r.add("exact_mean_ratio",
          spec.gamma == 0.0 ? analytic::mean_affine(a.alpha, a.beta, spec.horizons.back()) / scale(spec.horizons.back())
                            : std::numeric_limits<double>::quiet_NaN());
    r.annotations.emplace_back("scaling", label);
    detail::flag_explosions(r, s, "steady_scan");
    return r;
}

inline ExperimentReport run(const ExperimentSpec& spec)
{
    switch (spec.kind) {
    case ExperimentKind::Lln: return run_lln(spec);
    case ExperimentKind::Clt: return run_clt(spec);
    case ExperimentKind::GammaLimit: return run_gamma_limit(spec);
    case ExperimentKind::Basin: return run_basin(spec);
    case ExperimentKind::L2Rate: return run_l2_rate(spec);
    case ExperimentKind::FluidLimit: return run_fluid_limit(spec);
    case ExperimentKind::Tail: return run_tail(spec);
    case ExperimentKind::Explosion: return run_explosion(spec);
    case ExperimentKind::SteadyScan: return run_steady_scan(spec);
    }
    throw std::invalid_argument("unknown experiment kind");
}

} // namespace sepp::mc
