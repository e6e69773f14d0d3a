#pragma once

#include "sepp/random.hpp"
#include "sepp/rate_function.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sepp {

enum class SimMethod { Inversion, Thinning, Auto };

inline const char* to_string(SimMethod m)
{
    switch (m) {
    case SimMethod::Inversion: return "inversion";
    case SimMethod::Thinning: return "thinning";
    case SimMethod::Auto: return "auto";
    }
    return "auto";
}

struct SimConfig {
    RateFunction rf;
    double gamma = 0.0;
    double horizon = 1.0;
    std::size_t max_events = 10'000'000;
    std::uint64_t seed = 0;
    SimMethod method = SimMethod::Auto;

    void validate() const
    {
        if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("sim: gamma must be finite and >= 0");
        if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("sim: horizon must be finite and > 0");
        if (max_events < 1) throw std::invalid_argument("sim: max_events must be >= 1");
        if (method == SimMethod::Inversion && !rf.is_affine()) {
            throw std::invalid_argument("sim: inversion requires an affine rate function");
        }
        if (method != SimMethod::Inversion && !rf.is_affine() && !rf.monotone()) {
            throw std::invalid_argument("sim: thinning requires a nondecreasing rate function");
        }
    }
};

struct Trajectory {
    std::uint64_t seed = 0;
    double gamma = 0.0;
    double horizon = 0.0;
    std::vector<double> jump_times;
    bool exploded = false;
    /// Time of the last recorded event when the event guard tripped.
    double explosion_time = std::numeric_limits<double>::infinity();
};

/// N_t for 0 <= t <= horizon (right-continuous).
inline std::size_t count_at(const Trajectory& traj, double t)
{
    if (!(t >= 0.0) || t > traj.horizon) {
        throw std::domain_error("count_at: t must lie in [0, horizon]");
    }
    return static_cast<std::size_t>(std::upper_bound(traj.jump_times.begin(), traj.jump_times.end(), t) -
                                    traj.jump_times.begin());
}

namespace detail {

// Solves beta*d + c*log1p(d/(t_now+1)) = target for d >= 0. The left side is concave
// and increasing, so Newton from d = 0 increases monotonically to the root.
inline double affine_waiting_time(double alpha, double beta, double load, double t_now, double target)
{
    const double c = alpha * load;
    const double base = t_now + 1.0;
    if (c <= 0.0) {
        return beta > 0.0 ? target / beta : std::numeric_limits<double>::infinity();
    }
    if (beta <= 0.0) {
        return base * std::expm1(target / c);
    }
    double d = 0.0;
    double hi = target / beta;
    for (int it = 0; it < 100; ++it) {
        const double f = beta * d + c * std::log1p(d / base) - target;
        if (std::abs(f) <= 1e-12) break;
        const double fp = beta + c / (base + d);
        double next = d - f / fp;
        if (f > 0.0) hi = std::min(hi, d);
        if (!(next > d) && f < 0.0) next = 0.5 * (d + hi); // Newton stalled: bisect
        if (next > hi) next = 0.5 * (d + hi);
        if (next == d) break;
        d = next;
    }
    return d;
}

} // namespace detail

/// Next jump time after t_now for affine lambda by inverting the compensator
/// against -log(u). Returns +inf when the intensity is identically zero.
inline double next_jump_inversion(const RateFunction& rf, double n, double gamma, double t_now, double u)
{
    const auto* a = std::get_if<Affine>(&rf.kind());
    if (a == nullptr) throw std::invalid_argument("next_jump_inversion: affine rate function required");
    if (!(u > 0.0 && u <= 1.0)) throw std::domain_error("next_jump_inversion: u must lie in (0, 1]");
    return t_now + detail::affine_waiting_time(a->alpha, a->beta, n + gamma, t_now, -std::log(u));
}

/// Next jump time after t_now by thinning against the decreasing bound
/// lambda((n+gamma)/(t+1)); nullopt when no jump occurs before the horizon.
inline std::optional<double> next_jump_thinning(const RateFunction& rf, double n, double gamma, double t_now,
                                                double horizon, Philox4x32& rng)
{
    const double load = n + gamma;
    double bound = rf(load / (t_now + 1.0));
    double s = t_now;
    while (bound > 0.0) {
        s += rng.exponential() / bound;
        if (s > horizon) return std::nullopt;
        const double lam = rf(load / (s + 1.0));
        if (rng.uniform() * bound <= lam) return s;
        bound = lam;
    }
    return std::nullopt;
}

struct PathOutcome {
    std::size_t events = 0;
    bool exploded = false;
    double last_time = 0.0;
};

/// Runs one path, calling on_jump(time, count_after_jump) for every event.
template <class OnJump>
PathOutcome run_path(const SimConfig& cfg, Philox4x32& rng, OnJump&& on_jump)
{
    const bool inversion =
        cfg.method == SimMethod::Inversion || (cfg.method == SimMethod::Auto && cfg.rf.is_affine());
    PathOutcome out;
    double t = 0.0;
    if (inversion) {
        const Affine& a = std::get<Affine>(cfg.rf.kind());
        while (out.events < cfg.max_events) {
            const double load = static_cast<double>(out.events) + cfg.gamma;
            const double next = t + detail::affine_waiting_time(a.alpha, a.beta, load, t, rng.exponential());
            if (!(next <= cfg.horizon)) break;
            t = next;
            ++out.events;
            on_jump(t, out.events);
        }
    } else {
        while (out.events < cfg.max_events) {
            const auto next = next_jump_thinning(cfg.rf, static_cast<double>(out.events), cfg.gamma, t, cfg.horizon, rng);
            if (!next) break;
            t = *next;
            ++out.events;
            on_jump(t, out.events);
        }
    }
    out.last_time = t;
    out.exploded = out.events >= cfg.max_events;
    return out;
}

/// One trajectory from the given stream of cfg.seed; a pure function of (cfg, stream).
inline Trajectory simulate(const SimConfig& cfg, std::uint64_t stream = 0)
{
    cfg.validate();
    Philox4x32 rng = split(cfg.seed, stream);
    Trajectory traj;
    traj.seed = cfg.seed;
    traj.gamma = cfg.gamma;
    traj.horizon = cfg.horizon;
    const PathOutcome out = run_path(cfg, rng, [&](double t, std::size_t) { traj.jump_times.push_back(t); });
    traj.exploded = out.exploded;
    if (out.exploded) traj.explosion_time = out.last_time;
    return traj;
}

struct CheckpointCounts {
    std::vector<std::size_t> counts;
    bool exploded = false;
    double explosion_time = std::numeric_limits<double>::infinity();
};

/// Counts N_t at sorted checkpoints without storing jump times. After an explosion
/// the counts at later checkpoints are the event guard (max_events).
inline CheckpointCounts counts_at(const SimConfig& cfg, Philox4x32& rng, std::span<const double> checkpoints)
{
    CheckpointCounts res;
    res.counts.assign(checkpoints.size(), 0);
    std::size_t next_cp = 0;
    const PathOutcome out = run_path(cfg, rng, [&](double t, std::size_t count) {
        while (next_cp < checkpoints.size() && checkpoints[next_cp] < t) {
            res.counts[next_cp++] = count - 1;
        }
    });
    for (; next_cp < checkpoints.size(); ++next_cp) res.counts[next_cp] = out.events;
    res.exploded = out.exploded;
    if (out.exploded) res.explosion_time = out.last_time;
    return res;
}

} // namespace sepp
