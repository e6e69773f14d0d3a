#pragma once

#include "sepp/experiment.hpp"
#include "sepp/rate_function.hpp"
#include "sepp/simulation.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sepp::io {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

struct FieldError {
    std::string field;
    std::string message;
};
using Errors = std::vector<FieldError>;

// ---------------------------------------------------------------------------
// Formatting and hashing

/// CSV number: %.12g, with nan/inf spelled out.
inline std::string csv_number(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline std::string sha256_hex(const std::string& data)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256: digest failed");
    }
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return out.str();
}

// Non-finite doubles have no JSON literal; they are written as strings.
inline json number_or_string(double v)
{
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

// ---------------------------------------------------------------------------
// Reading helpers that collect every problem instead of stopping at the first

namespace detail {

inline std::string join(const std::string& prefix, const std::string& key)
{
    return prefix.empty() ? key : prefix + "." + key;
}

inline std::optional<double> number(const json& obj, const std::string& key, const std::string& prefix, Errors& errs,
                                    bool required)
{
    const auto it = obj.find(key);
    if (it == obj.end()) {
        if (required) errs.push_back({join(prefix, key), "missing required field"});
        return std::nullopt;
    }
    if (!it->is_number()) {
        errs.push_back({join(prefix, key), "must be a number"});
        return std::nullopt;
    }
    return it->get<double>();
}

inline std::optional<std::uint64_t> unsigned_int(const json& obj, const std::string& key, const std::string& prefix,
                                                 Errors& errs, bool required)
{
    const auto it = obj.find(key);
    if (it == obj.end()) {
        if (required) errs.push_back({join(prefix, key), "missing required field"});
        return std::nullopt;
    }
    if (it->is_number_unsigned()) return it->get<std::uint64_t>();
    if (it->is_number_integer() && it->get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(it->get<std::int64_t>());
    if (it->is_number_float()) {
        const double d = it->get<double>();
        if (d >= 0.0 && d == std::floor(d) && d < 1.8e19) return static_cast<std::uint64_t>(d);
    }
    errs.push_back({join(prefix, key), "must be a nonnegative integer"});
    return std::nullopt;
}

inline std::optional<std::vector<double>> number_list(const json& obj, const std::string& key,
                                                      const std::string& prefix, Errors& errs)
{
    const auto it = obj.find(key);
    if (it == obj.end()) return std::nullopt;
    std::vector<double> out;
    if (it->is_number()) {
        out.push_back(it->get<double>());
        return out;
    }
    if (!it->is_array()) {
        errs.push_back({join(prefix, key), "must be a number or an array of numbers"});
        return std::nullopt;
    }
    for (const auto& v : *it) {
        if (!v.is_number()) {
            errs.push_back({join(prefix, key), "must contain only numbers"});
            return std::nullopt;
        }
        out.push_back(v.get<double>());
    }
    return out;
}

inline void require(bool ok, const std::string& field, const std::string& message, Errors& errs)
{
    if (!ok) errs.push_back({field, message});
}

} // namespace detail

// ---------------------------------------------------------------------------
// Rate functions

inline json to_json(const RateFunction& rf)
{
    return std::visit(sepp::detail::overloaded{
                          [](const Affine& k) { return json{{"kind", "affine"}, {"alpha", k.alpha}, {"beta", k.beta}}; },
                          [](const Power& k) {
                              return json{{"kind", "power"}, {"alpha", k.alpha}, {"exponent", k.exponent}, {"shift", k.shift}};
                          },
                          [](const SqrtShift&) { return json{{"kind", "sqrt_shift"}}; },
                          [](const SineMix& k) { return json{{"kind", "sine_mix"}, {"a", k.a}, {"b", k.b}, {"c", k.c}}; },
                          [](const PiecewiseLinear& k) {
                              json knots = json::array();
                              for (const Knot& kn : k.knots) knots.push_back(json::array({kn.x, kn.y}));
                              return json{{"kind", "piecewise_linear"}, {"knots", knots}, {"terminal_slope", k.terminal_slope}};
                          },
                          [](const Constant& k) { return json{{"kind", "constant"}, {"level", k.level}}; },
                      },
                      rf.kind());
}

/// Parses a tagged rate-function record; on any problem returns nullopt with every
/// violation appended to errs.
inline std::optional<RateFunction> parse_rate_function(const json& j, Errors& errs,
                                                       const std::string& prefix = "rate_function")
{
    using detail::number;
    using detail::require;
    if (!j.is_object()) {
        errs.push_back({prefix, "must be an object with a \"kind\" tag"});
        return std::nullopt;
    }
    const auto kind_it = j.find("kind");
    if (kind_it == j.end() || !kind_it->is_string()) {
        errs.push_back({detail::join(prefix, "kind"), "missing or non-string kind tag"});
        return std::nullopt;
    }
    const std::string kind = kind_it->get<std::string>();
    const std::size_t before = errs.size();
    auto f = [&](const char* key) { return detail::join(prefix, key); };
    std::optional<RateKind> rk;
    if (kind == "affine") {
        const auto a = number(j, "alpha", prefix, errs, true);
        const auto b = number(j, "beta", prefix, errs, true);
        if (a) require(*a >= 0.0, f("alpha"), "must be >= 0", errs);
        if (b) require(*b >= 0.0, f("beta"), "must be >= 0", errs);
        if (a && b) rk = Affine{*a, *b};
    } else if (kind == "power") {
        const auto a = number(j, "alpha", prefix, errs, true);
        const auto e = number(j, "exponent", prefix, errs, true);
        const auto s = number(j, "shift", prefix, errs, false);
        if (a) require(*a > 0.0, f("alpha"), "must be > 0", errs);
        if (e) require(*e > 0.0, f("exponent"), "must be > 0", errs);
        if (s) require(*s >= 0.0, f("shift"), "must be >= 0", errs);
        if (a && e) rk = Power{*a, *e, s.value_or(0.0)};
    } else if (kind == "sqrt_shift") {
        rk = SqrtShift{};
    } else if (kind == "sine_mix") {
        const auto a = number(j, "a", prefix, errs, true);
        const auto b = number(j, "b", prefix, errs, true);
        const auto c = number(j, "c", prefix, errs, true);
        if (a && b && c) rk = SineMix{*a, *b, *c};
    } else if (kind == "piecewise_linear") {
        const auto ts = number(j, "terminal_slope", prefix, errs, true);
        if (ts) require(*ts >= 0.0, f("terminal_slope"), "must be >= 0", errs);
        PiecewiseLinear p;
        const auto kn = j.find("knots");
        if (kn == j.end() || !kn->is_array() || kn->empty()) {
            errs.push_back({f("knots"), "must be a nonempty array of [x, y] pairs"});
        } else {
            for (std::size_t i = 0; i < kn->size(); ++i) {
                const json& pair = (*kn)[i];
                if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number() || !pair[1].is_number()) {
                    errs.push_back({f("knots") + "[" + std::to_string(i) + "]", "must be an [x, y] pair of numbers"});
                    continue;
                }
                p.knots.push_back({pair[0].get<double>(), pair[1].get<double>()});
            }
        }
        if (ts) p.terminal_slope = *ts;
        if (errs.size() == before) rk = p;
    } else if (kind == "constant") {
        const auto l = number(j, "level", prefix, errs, true);
        if (l) require(*l >= 0.0, f("level"), "must be >= 0", errs);
        if (l) rk = Constant{*l};
    } else {
        errs.push_back({f("kind"), "unknown rate function kind '" + kind + "'"});
        return std::nullopt;
    }
    if (errs.size() != before || !rk) return std::nullopt;
    try {
        return RateFunction(*rk);
    } catch (const std::invalid_argument& e) {
        errs.push_back({prefix, e.what()});
        return std::nullopt;
    }
}

inline std::optional<SimMethod> parse_method(const std::string& s)
{
    if (s == "inversion") return SimMethod::Inversion;
    if (s == "thinning") return SimMethod::Thinning;
    if (s == "auto") return SimMethod::Auto;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Experiment specs

inline json to_json(const mc::ExperimentSpec& s)
{
    json ells = json::array();
    for (std::size_t l : s.ells) ells.push_back(l);
    return json{{"kind", mc::to_string(s.kind)},
                {"rate_function", to_json(s.rf)},
                {"gamma", s.gamma},
                {"gammas", s.gammas},
                {"horizons", s.horizons},
                {"replications", s.replications},
                {"master_seed", s.master_seed},
                {"max_events", s.max_events},
                {"method", to_string(s.method)},
                {"tolerance", s.tolerance},
                {"checkpoints", s.checkpoints},
                {"ells", ells}};
}

/// Reads an experiment from a flat config object ("kind", "rate_function", ...).
inline std::optional<mc::ExperimentSpec> parse_experiment(const json& j, Errors& errs)
{
    const std::size_t before = errs.size();
    mc::ExperimentSpec s;
    const auto kind_it = j.find("kind");
    if (kind_it == j.end() || !kind_it->is_string()) {
        errs.push_back({"kind", "missing experiment kind"});
    } else if (auto k = mc::parse_kind(kind_it->get<std::string>())) {
        s.kind = *k;
    } else {
        errs.push_back({"kind", "unknown experiment kind '" + kind_it->get<std::string>() + "'"});
    }
    std::optional<RateFunction> rf;
    if (const auto it = j.find("rate_function"); it == j.end()) {
        errs.push_back({"rate_function", "missing required field"});
    } else {
        rf = parse_rate_function(*it, errs);
    }
    if (auto v = detail::number(j, "gamma", "", errs, false)) s.gamma = *v;
    if (auto v = detail::number_list(j, "gammas", "", errs)) s.gammas = *v;
    if (auto v = detail::number_list(j, "horizons", "", errs)) s.horizons = *v;
    if (auto v = detail::number_list(j, "horizon", "", errs)) s.horizons = *v;
    if (auto v = detail::unsigned_int(j, "replications", "", errs, false)) s.replications = *v;
    if (auto v = detail::unsigned_int(j, "master_seed", "", errs, false)) s.master_seed = *v;
    if (auto v = detail::unsigned_int(j, "max_events", "", errs, false)) s.max_events = *v;
    if (auto v = detail::number(j, "tolerance", "", errs, false)) s.tolerance = *v;
    if (auto v = detail::number_list(j, "checkpoints", "", errs)) s.checkpoints = *v;
    if (auto v = detail::unsigned_int(j, "workers", "", errs, false)) s.workers = *v;
    if (auto v = detail::number_list(j, "ells", "", errs)) {
        for (double d : *v) {
            if (!(d >= 0.0) || d != std::floor(d)) errs.push_back({"ells", "must contain nonnegative integers"});
            else s.ells.push_back(static_cast<std::size_t>(d));
        }
    }
    if (const auto it = j.find("method"); it != j.end()) {
        const auto m = it->is_string() ? parse_method(it->get<std::string>()) : std::nullopt;
        if (m) s.method = *m;
        else errs.push_back({"method", "must be one of inversion, thinning, auto"});
    }
    if (!rf) return std::nullopt;
    s.rf = *rf;
    for (const auto& e : s.errors()) errs.push_back({"experiment", e});
    if (errs.size() != before) return std::nullopt;
    return s;
}

// ---------------------------------------------------------------------------
// Reports

inline json to_json(const mc::Table& t)
{
    json rows = json::array();
    for (const auto& r : t.rows) {
        json row = json::array();
        for (double v : r) row.push_back(number_or_string(v));
        rows.push_back(std::move(row));
    }
    return json{{"name", t.name}, {"columns", t.columns}, {"rows", rows}};
}

inline json to_json(const mc::ExperimentReport& r, const std::string& spec_hash)
{
    json metrics = json::object();
    for (const auto& m : r.metrics) metrics[m.name] = number_or_string(m.value);
    json tables = json::array();
    for (const auto& t : r.tables) tables.push_back(to_json(t));
    json notes = json::object();
    for (const auto& [k, v] : r.annotations) notes[k] = v;
    json out{{"schema_version", kSchemaVersion},
             {"kind", r.kind},
             {"rate_function", r.rate_function},
             {"metadata",
              {{"spec_sha256", spec_hash},
               {"master_seed", r.master_seed},
               {"replications", r.replications},
               {"stream_rule", "replication i of grid point g uses Philox stream g*replications+i keyed by master_seed"}}},
             {"metrics", metrics},
             {"annotations", notes},
             {"tables", tables},
             {"flags", r.flags}};
    if (!r.plot.name.empty()) out["plot"] = to_json(r.plot);
    return out;
}

inline std::string to_csv(const mc::Table& t)
{
    std::string out;
    for (std::size_t i = 0; i < t.columns.size(); ++i) out += (i ? "," : "") + t.columns[i];
    out += "\n";
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + csv_number(row[i]);
        out += "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Trajectories

/// One JSON line: {"seed", "gamma", "horizon", "exploded", "jump_times"}.
inline std::string to_jsonl(const Trajectory& tr)
{
    json j{{"seed", tr.seed},
           {"gamma", tr.gamma},
           {"horizon", tr.horizon},
           {"exploded", tr.exploded},
           {"jump_times", tr.jump_times}};
    if (tr.exploded) j["explosion_time"] = tr.explosion_time;
    return j.dump() + "\n";
}

inline Trajectory trajectory_from_json(const json& j)
{
    Trajectory tr;
    tr.seed = j.at("seed").get<std::uint64_t>();
    tr.gamma = j.at("gamma").get<double>();
    tr.horizon = j.at("horizon").get<double>();
    tr.exploded = j.at("exploded").get<bool>();
    tr.jump_times = j.at("jump_times").get<std::vector<double>>();
    if (tr.exploded && j.contains("explosion_time")) tr.explosion_time = j.at("explosion_time").get<double>();
    return tr;
}

inline const char* kTrajectoryCsvHeader = "seed,k,t_k\n";

/// Rows (seed, k, t_k) with k counting from 1.
inline std::string to_csv_rows(const Trajectory& tr)
{
    std::string out;
    for (std::size_t k = 0; k < tr.jump_times.size(); ++k) {
        out += std::to_string(tr.seed) + "," + std::to_string(k + 1) + "," + csv_number(tr.jump_times[k]) + "\n";
    }
    return out;
}

} // namespace sepp::io
