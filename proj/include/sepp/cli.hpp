#pragma once

#include "sepp/analytic.hpp"
#include "sepp/experiment.hpp"
#include "sepp/io.hpp"
#include "sepp/ldp.hpp"
#include "sepp/rate_function.hpp"
#include "sepp/simulation.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace sepp::cli {

using io::json;

inline constexpr const char* kToolVersion = "1.0.0";

enum ExitCode : int { kOk = 0, kRuntimeFailure = 1, kValidationError = 2, kFlagged = 3 };

struct SimulatePlan {
    SimConfig cfg;
    std::size_t trajectories = 1;
    std::string format = "jsonl";
};

struct AnalyzePlan {
    RateFunction rf = RateFunction(Constant{1.0});
    double gamma = 0.0;
    std::vector<double> moment_times;
    std::optional<double> pmf_t;
    std::size_t k_max = 50;
    std::optional<double> flow_t_max;
    double flow_y0 = 0.0;
};

struct LdpPlan {
    RateFunction rf = RateFunction(Constant{1.0});
    double x_min = 0.0, x_max = 4.0, x_step = 0.1;
    std::size_t n_grid = 64;
    bool write_paths = false;
};

struct FixedPointsPlan {
    RateFunction rf = RateFunction(Constant{1.0});
    std::optional<double> search_hi;
};

using Plan = std::variant<SimulatePlan, AnalyzePlan, LdpPlan, mc::ExperimentSpec, FixedPointsPlan>;

struct CliInvocation {
    std::string subcommand;
    std::string config_path;
    std::string output_dir = "out";
    std::vector<std::string> overrides;
    int verbosity = 0;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    bool errors_json = false;
    /// config after overrides; hashed into the manifest
    json config;
    Plan plan = FixedPointsPlan{};
};

struct ParseResult {
    std::optional<CliInvocation> invocation;
    io::Errors errors;
    /// set when parsing ends the run by itself (help, usage errors)
    std::optional<int> exit_code;
    std::string message;
};

// ---------------------------------------------------------------------------
// Overrides

/// Applies "a.b.c=value"; the value is read as JSON when it parses, else as a string.
inline void apply_override(json& config, const std::string& kv, io::Errors& errs)
{
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
        errs.push_back({"--set", "expected key=value, got '" + kv + "'"});
        return;
    }
    const std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    json* node = &config;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) {
            errs.push_back({"--set", "empty path component in '" + key + "'"});
            return;
        }
        if (!node->is_object()) {
            errs.push_back({"--set", "'" + key + "' descends into a non-object"});
            return;
        }
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

// ---------------------------------------------------------------------------
// Per-subcommand validation

namespace detail {

inline std::optional<RateFunction> rate_function_field(const json& cfg, io::Errors& errs)
{
    const auto it = cfg.find("rate_function");
    if (it == cfg.end()) {
        errs.push_back({"rate_function", "missing required field"});
        return std::nullopt;
    }
    return io::parse_rate_function(*it, errs);
}

inline void positive(const std::optional<double>& v, const char* field, io::Errors& errs)
{
    if (v && !(*v > 0.0 && std::isfinite(*v))) errs.push_back({field, "must be finite and > 0"});
}

inline void nonnegative(const std::optional<double>& v, const char* field, io::Errors& errs)
{
    if (v && !(*v >= 0.0 && std::isfinite(*v))) errs.push_back({field, "must be finite and >= 0"});
}

inline std::optional<Plan> plan_simulate(const json& cfg, io::Errors& errs)
{
    const auto rf = rate_function_field(cfg, errs);
    const auto gamma = io::detail::number(cfg, "gamma", "", errs, false);
    const auto horizon = io::detail::number(cfg, "horizon", "", errs, true);
    const auto max_events = io::detail::unsigned_int(cfg, "max_events", "", errs, false);
    const auto seed = io::detail::unsigned_int(cfg, "seed", "", errs, false);
    const auto n = io::detail::unsigned_int(cfg, "trajectories", "", errs, false);
    nonnegative(gamma, "gamma", errs);
    positive(horizon, "horizon", errs);
    if (max_events && *max_events < 1) errs.push_back({"max_events", "must be >= 1"});
    if (n && *n < 1) errs.push_back({"trajectories", "must be >= 1"});
    SimulatePlan p{SimConfig{rf.value_or(RateFunction(Constant{1.0})), gamma.value_or(0.0), horizon.value_or(1.0),
                             max_events.value_or(10'000'000), seed.value_or(0), SimMethod::Auto},
                   n.value_or(1), "jsonl"};
    if (const auto it = cfg.find("method"); it != cfg.end()) {
        const auto m = it->is_string() ? io::parse_method(it->get<std::string>()) : std::nullopt;
        if (m) p.cfg.method = *m;
        else errs.push_back({"method", "must be one of inversion, thinning, auto"});
    }
    if (const auto it = cfg.find("format"); it != cfg.end()) {
        if (it->is_string() && (*it == "jsonl" || *it == "csv")) p.format = it->get<std::string>();
        else errs.push_back({"format", "must be \"jsonl\" or \"csv\""});
    }
    if (rf) {
        try {
            p.cfg.validate();
        } catch (const std::invalid_argument& e) {
            errs.push_back({"simulate", e.what()});
        }
    }
    if (!errs.empty()) return std::nullopt;
    return p;
}

inline std::optional<Plan> plan_analyze(const json& cfg, io::Errors& errs)
{
    const auto rf = rate_function_field(cfg, errs);
    AnalyzePlan p;
    const auto gamma = io::detail::number(cfg, "gamma", "", errs, false);
    nonnegative(gamma, "gamma", errs);
    p.gamma = gamma.value_or(0.0);
    if (auto ts = io::detail::number_list(cfg, "moment_times", "", errs)) {
        for (double t : *ts) {
            if (!(t > 0.0 && std::isfinite(t))) errs.push_back({"moment_times", "must contain finite values > 0"});
        }
        p.moment_times = *ts;
    }
    if (const auto it = cfg.find("pmf"); it != cfg.end()) {
        const auto t = io::detail::number(*it, "t", "pmf", errs, true);
        const auto k = io::detail::unsigned_int(*it, "k_max", "pmf", errs, false);
        positive(t, "pmf.t", errs);
        p.pmf_t = t;
        p.k_max = k.value_or(50);
    }
    if (const auto it = cfg.find("flow"); it != cfg.end()) {
        const auto t = io::detail::number(*it, "t_max", "flow", errs, true);
        const auto y0 = io::detail::number(*it, "y0", "flow", errs, false);
        positive(t, "flow.t_max", errs);
        nonnegative(y0, "flow.y0", errs);
        p.flow_t_max = t;
        p.flow_y0 = y0.value_or(0.0);
    }
    if (!errs.empty() || !rf) return std::nullopt;
    p.rf = *rf;
    return p;
}

inline std::optional<Plan> plan_ldp(const json& cfg, io::Errors& errs)
{
    const auto rf = rate_function_field(cfg, errs);
    LdpPlan p;
    const auto lo = io::detail::number(cfg, "x_min", "", errs, false);
    const auto hi = io::detail::number(cfg, "x_max", "", errs, false);
    const auto step = io::detail::number(cfg, "x_step", "", errs, false);
    const auto n = io::detail::unsigned_int(cfg, "n_grid", "", errs, false);
    nonnegative(lo, "x_min", errs);
    nonnegative(hi, "x_max", errs);
    positive(step, "x_step", errs);
    if (n && *n < 2) errs.push_back({"n_grid", "must be >= 2"});
    p.x_min = lo.value_or(0.0);
    p.x_max = hi.value_or(4.0);
    p.x_step = step.value_or(0.1);
    if (p.x_max < p.x_min) errs.push_back({"x_max", "must be >= x_min"});
    p.n_grid = n.value_or(64);
    if (const auto it = cfg.find("write_paths"); it != cfg.end()) {
        if (it->is_boolean()) p.write_paths = it->get<bool>();
        else errs.push_back({"write_paths", "must be a boolean"});
    }
    if (!errs.empty() || !rf) return std::nullopt;
    p.rf = *rf;
    return p;
}

inline std::optional<Plan> plan_fixed_points(const json& cfg, io::Errors& errs)
{
    const auto rf = rate_function_field(cfg, errs);
    FixedPointsPlan p;
    p.search_hi = io::detail::number(cfg, "search_hi", "", errs, false);
    positive(p.search_hi, "search_hi", errs);
    if (!errs.empty() || !rf) return std::nullopt;
    p.rf = *rf;
    return p;
}

} // namespace detail

/// Builds the typed plan for a subcommand from an already-merged config; every
/// violated constraint lands in errs.
inline std::optional<Plan> make_plan(const std::string& subcommand, const json& cfg, io::Errors& errs)
{
    if (!cfg.is_object()) {
        errs.push_back({"config", "top level must be a JSON object"});
        return std::nullopt;
    }
    const auto sv = cfg.find("schema_version");
    if (sv == cfg.end()) errs.push_back({"schema_version", "missing required field"});
    else if (!sv->is_number_integer() || sv->get<int>() != io::kSchemaVersion) {
        errs.push_back({"schema_version", "unsupported schema version (expected " + std::to_string(io::kSchemaVersion) + ")"});
    }
    std::optional<Plan> plan;
    if (subcommand == "simulate") plan = detail::plan_simulate(cfg, errs);
    else if (subcommand == "analyze") plan = detail::plan_analyze(cfg, errs);
    else if (subcommand == "ldp") plan = detail::plan_ldp(cfg, errs);
    else if (subcommand == "fixed-points") plan = detail::plan_fixed_points(cfg, errs);
    else if (subcommand == "experiment") {
        if (auto s = io::parse_experiment(cfg, errs)) plan = *s;
    } else {
        errs.push_back({"subcommand", "unknown subcommand '" + subcommand + "'"});
    }
    if (!errs.empty()) return std::nullopt;
    return plan;
}

inline ParseResult parse_and_validate(int argc, const char* const* argv)
{
    ParseResult res;
    CliInvocation inv;
    CLI::App app{"Simulation and verification toolkit for self-exciting point processes", "sepp"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);
    struct Sub {
        const char* name;
        const char* help;
    };
    const Sub subs[] = {{"simulate", "sample trajectories"},
                        {"analyze", "closed-form moments, pmf ladder, deterministic flow"},
                        {"ldp", "scan the scalar rate function I(x)"},
                        {"experiment", "run a Monte Carlo experiment"},
                        {"fixed-points", "solve x = lambda(x) and classify stability"}};
    for (const auto& s : subs) {
        CLI::App* sc = app.add_subcommand(s.name, s.help);
        sc->add_option("-c,--config", inv.config_path, "JSON config file")->required();
        sc->add_option("-o,--output-dir", inv.output_dir, "output directory")->capture_default_str();
        sc->add_option("--set", inv.overrides, "override a config value: key.path=value (repeatable)");
        sc->add_option("--seed", inv.seed, "seed override (seed or master_seed)");
        sc->add_option("--threads", inv.threads, "worker threads (SEPP_THREADS caps this)");
        sc->add_flag("-v,--verbose", inv.verbosity, "more logging on stderr (repeatable)");
        sc->add_flag("--errors-json", inv.errors_json, "print validation errors as JSON on stdout");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        // help for the right subcommand, or the version string
        std::ostringstream out, err;
        app.exit(e, out, err);
        res.exit_code = kOk;
        res.message = out.str() + err.str();
        return res;
    } catch (const CLI::ParseError& e) {
        res.exit_code = kValidationError;
        res.errors.push_back({"arguments", e.what()});
        return res;
    }
    for (const auto* sc : app.get_subcommands()) inv.subcommand = sc->get_name();

    std::ifstream in(inv.config_path);
    if (!in) {
        res.errors.push_back({"config", "cannot open '" + inv.config_path + "'"});
        res.exit_code = kValidationError;
        return res;
    }
    inv.config = json::parse(in, nullptr, false);
    if (inv.config.is_discarded()) {
        res.errors.push_back({"config", "'" + inv.config_path + "' is not valid JSON"});
        res.exit_code = kValidationError;
        return res;
    }
    for (const auto& kv : inv.overrides) apply_override(inv.config, kv, res.errors);
    if (inv.seed) {
        if (inv.subcommand == "simulate") inv.config["seed"] = *inv.seed;
        else if (inv.subcommand == "experiment") inv.config["master_seed"] = *inv.seed;
        else res.errors.push_back({"--seed", "not used by '" + inv.subcommand + "'"});
    }
    if (inv.threads && *inv.threads < 1) res.errors.push_back({"--threads", "must be >= 1"});
    auto plan = make_plan(inv.subcommand, inv.config, res.errors);
    if (!res.errors.empty() || !plan) {
        res.exit_code = kValidationError;
        res.invocation = std::move(inv);
        return res;
    }
    inv.plan = std::move(*plan);
    if (auto* spec = std::get_if<mc::ExperimentSpec>(&inv.plan); spec && inv.threads) spec->workers = *inv.threads;
    res.invocation = std::move(inv);
    return res;
}

// ---------------------------------------------------------------------------
// Dispatch

class OutputSet {
public:
    explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

    void write(const std::string& name, const std::string& content)
    {
        std::ofstream out(dir_ / name, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write '" + (dir_ / name).string() + "'");
        out << content;
        if (!out) throw std::runtime_error("write failed for '" + (dir_ / name).string() + "'");
        files_.push_back({name, content.size(), io::sha256_hex(content)});
    }

    void write_json(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

    void manifest(const CliInvocation& inv, double wall_seconds, std::size_t workers)
    {
        json files = json::array();
        for (const auto& f : files_) files.push_back({{"name", f.name}, {"bytes", f.bytes}, {"sha256", f.sha256}});
        json m{{"schema_version", io::kSchemaVersion},
               {"tool", "sepp"},
               {"version", kToolVersion},
               {"subcommand", inv.subcommand},
               {"config_path", inv.config_path},
               {"config_sha256", io::sha256_hex(inv.config.dump())},
               {"config", inv.config},
               {"workers", workers},
               {"wall_time_seconds", wall_seconds},
               {"files", files}};
        std::ofstream out(dir_ / "manifest.json", std::ios::binary);
        if (!out) throw std::runtime_error("cannot write manifest.json");
        out << m.dump(2) << "\n";
    }

private:
    struct File {
        std::string name;
        std::size_t bytes;
        std::string sha256;
    };
    std::filesystem::path dir_;
    std::vector<File> files_;
};

namespace detail {

inline void log(const CliInvocation& inv, int level, const std::string& msg)
{
    if (inv.verbosity >= level) std::cerr << "[sepp] " << msg << "\n";
}

inline int run_simulate(const CliInvocation& inv, const SimulatePlan& p, OutputSet& out)
{
    std::string body = p.format == "csv" ? io::kTrajectoryCsvHeader : "";
    std::size_t exploded = 0;
    for (std::size_t i = 0; i < p.trajectories; ++i) {
        SimConfig cfg = p.cfg;
        cfg.seed = p.cfg.seed + i;
        const Trajectory tr = simulate(cfg);
        exploded += tr.exploded;
        body += p.format == "csv" ? io::to_csv_rows(tr) : io::to_jsonl(tr);
        log(inv, 2, "trajectory seed " + std::to_string(cfg.seed) + ": " + std::to_string(tr.jump_times.size()) + " jumps");
    }
    out.write(p.format == "csv" ? "trajectories.csv" : "trajectories.jsonl", body);
    log(inv, 1, std::to_string(p.trajectories) + " trajectories, " + std::to_string(exploded) + " exploded");
    return kOk;
}

inline json growth_json(const GrowthClass& g)
{
    const char* names[] = {"sublinear", "asymptotically_linear", "superlinear", "bounded"};
    return json{{"regime", names[static_cast<int>(g.regime)]},
                {"exponent", g.exponent},
                {"constant", g.constant},
                {"explosive", g.explosive}};
}

inline json fixed_points_json(const FixedPointReport& fp)
{
    json pts = json::array();
    for (const auto& p : fp.points) {
        pts.push_back({{"location", p.location}, {"upper", p.upper}, {"slope", p.slope}, {"class", to_string(p.cls)}});
    }
    return json{{"points", pts}, {"complete", fp.complete}, {"search_hi", fp.search_hi}};
}

inline int run_analyze(const CliInvocation& inv, const AnalyzePlan& p, OutputSet& out)
{
    bool flagged = false;
    json report{{"schema_version", io::kSchemaVersion},
                {"rate_function", io::to_json(p.rf)},
                {"gamma", p.gamma},
                {"growth", growth_json(classify_growth(p.rf))}};
    const auto* aff = std::get_if<Affine>(&p.rf.kind());
    if (!p.moment_times.empty()) {
        std::string csv = "t,mean,var,var_scaled,scaling_label\n";
        std::string method;
        for (double t : p.moment_times) {
            double mean = 0.0, var = 0.0, scaled = 0.0;
            std::string label;
            if (aff && p.gamma == 0.0) {
                const analytic::MomentReport m = analytic::moments_affine(aff->alpha, aff->beta, t);
                mean = m.mean;
                var = m.variance;
                scaled = var / m.variance_scaling.scale(t);
                label = m.variance_scaling.label;
                method = "closed_form";
            } else if (aff && aff->beta == 0.0) {
                const auto s = analytic::linear_gamma_stats(aff->alpha, p.gamma, t);
                mean = s.mean;
                var = s.variance;
                scaled = var / std::pow(t + 1.0, 2.0 * aff->alpha);
                label = "(t+1)^(2alpha)";
                method = "closed_form_gamma";
            } else {
                std::size_t k_max = std::max<std::size_t>(p.k_max, 64);
                analytic::PmfLadder lad = analytic::pmf_ladder(p.rf, p.gamma, t, k_max);
                while (lad.truncation_mass > 1e-12 && k_max < (std::size_t{1} << 16)) {
                    k_max *= 2;
                    lad = analytic::pmf_ladder(p.rf, p.gamma, t, k_max);
                }
                if (lad.truncation_mass > 1e-12) flagged = true;
                double m1 = 0.0, m2 = 0.0;
                for (std::size_t k = 0; k < lad.probs.size(); ++k) {
                    m1 += static_cast<double>(k) * lad.probs[k];
                    m2 += static_cast<double>(k) * static_cast<double>(k) * lad.probs[k];
                }
                mean = m1;
                var = m2 - m1 * m1;
                scaled = var / t;
                label = "t";
                method = "forward_ladder";
            }
            csv += io::csv_number(t) + "," + io::csv_number(mean) + "," + io::csv_number(var) + "," +
                   io::csv_number(scaled) + "," + label + "\n";
        }
        out.write("moments.csv", csv);
        report["moments_method"] = method;
        if (aff && p.gamma == 0.0) {
            const analytic::Scaling s = analytic::variance_scaling_affine(aff->alpha, aff->beta);
            report["variance_scaling"] = {{"label", s.label}, {"constant", s.constant}};
        }
    }
    if (p.pmf_t) {
        const analytic::PmfLadder lad = analytic::pmf_ladder(p.rf, p.gamma, *p.pmf_t, p.k_max);
        std::string csv = "k,p_k\n";
        for (std::size_t k = 0; k < lad.probs.size(); ++k) {
            csv += std::to_string(k) + "," + io::csv_number(lad.probs[k]) + "\n";
        }
        out.write("pmf.csv", csv);
        report["pmf"] = {{"t", *p.pmf_t},
                         {"k_max", p.k_max},
                         {"truncation_mass", lad.truncation_mass},
                         {"truncation_warning", lad.truncation_warning},
                         {"void_probability_quadrature", lad.void_probability},
                         {"void_probability_ladder", lad.probs[0]}};
        if (lad.truncation_warning) flagged = true;
        const GrowthClass g = classify_growth(p.rf);
        if (g.regime != GrowthClass::Regime::Superlinear) {
            const analytic::TailLaw law = analytic::tail_asymptote(p.rf, *p.pmf_t);
            if (const auto* e = std::get_if<analytic::ExponentialTail>(&law)) {
                report["tail_law"] = {{"type", "exponential"}, {"limit", e->limit}};
            } else if (const auto* q = std::get_if<analytic::PoissonTypeTail>(&law)) {
                report["tail_law"] = {{"type", "poisson_type"}, {"limit", q->limit}};
            }
        } else {
            report["tail_law"] = {{"type", "no_decay"}};
        }
    }
    if (p.flow_t_max) {
        const analytic::FlowCurve c = analytic::deterministic_flow(p.rf, p.flow_y0, *p.flow_t_max);
        std::string csv = "t,y\n";
        for (std::size_t i = 0; i < c.t.size(); ++i) csv += io::csv_number(c.t[i]) + "," + io::csv_number(c.y[i]) + "\n";
        out.write("flow.csv", csv);
        report["flow"] = {{"y0", p.flow_y0}, {"t_max", *p.flow_t_max}, {"y_final", c.y.back()}};
    }
    const FixedPointReport fp = find_fixed_points(p.rf);
    report["fixed_points"] = fixed_points_json(fp);
    report["flagged"] = flagged;
    out.write_json("report.json", report);
    log(inv, 1, "analysis written");
    return flagged ? kFlagged : kOk;
}

inline int run_ldp(const CliInvocation& inv, const LdpPlan& p, OutputSet& out)
{
    std::vector<double> xs;
    const auto steps = static_cast<std::size_t>(std::floor((p.x_max - p.x_min) / p.x_step + 1e-9));
    for (std::size_t i = 0; i <= steps; ++i) xs.push_back(p.x_min + static_cast<double>(i) * p.x_step);
    std::vector<ldp::RateValue> values(xs.size());
    par::parallel_for(xs.size(), par::resolve_workers(inv.threads.value_or(0)),
                      [&](std::size_t i) { values[i] = ldp::scalar_rate(p.rf, xs[i], p.n_grid); });
    std::string csv = "x,I,converged,n_grid\n";
    json zeros = json::array();
    json paths = json::array();
    bool all_converged = true;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto& v = values[i];
        const double I = v.infinite ? std::numeric_limits<double>::infinity() : v.value;
        csv += io::csv_number(xs[i]) + "," + io::csv_number(I) + "," + (v.converged ? "1" : "0") + "," +
               std::to_string(v.n_grid) + "\n";
        all_converged = all_converged && v.converged;
        if (p.write_paths) {
            json path = json::array();
            for (std::size_t k = 0; k < v.minimizer.grid.size(); ++k) {
                path.push_back(json::array({v.minimizer.grid[k], v.minimizer.values[k]}));
            }
            paths.push_back({{"x", xs[i]}, {"path", path}});
        }
    }
    // grid points that are local minima of I with I below the threshold
    constexpr double kNearZero = 1e-3;
    auto rate_at = [&](std::size_t i) {
        return values[i].infinite ? std::numeric_limits<double>::infinity() : values[i].value;
    };
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double I = rate_at(i);
        const bool left = i == 0 || I <= rate_at(i - 1);
        const bool right = i + 1 == xs.size() || I <= rate_at(i + 1);
        if (I < kNearZero && left && right) zeros.push_back(xs[i]);
    }
    out.write("rate.csv", csv);
    if (p.write_paths) out.write_json("paths.json", paths);
    const bool formal = classify_growth(p.rf).regime != GrowthClass::Regime::Bounded;
    json report{{"schema_version", io::kSchemaVersion},
                {"rate_function", io::to_json(p.rf)},
                {"n_grid", p.n_grid},
                {"formal", formal},
                {"near_zero_threshold", kNearZero},
                {"near_zero_x", zeros},
                {"all_converged", all_converged},
                {"fixed_points", fixed_points_json(find_fixed_points(p.rf))}};
    out.write_json("report.json", report);
    log(inv, 1, std::to_string(xs.size()) + " rate values written");
    return all_converged ? kOk : kFlagged;
}

inline int run_experiment(const CliInvocation& inv, const mc::ExperimentSpec& spec, OutputSet& out)
{
    log(inv, 1, std::string("running experiment ") + mc::to_string(spec.kind));
    const mc::ExperimentReport r = mc::run(spec);
    const std::string spec_hash = io::sha256_hex(io::to_json(spec).dump());
    out.write_json("report.json", io::to_json(r, spec_hash));
    for (std::size_t i = 0; i < r.tables.size(); ++i) {
        const std::string name = i == 0 ? r.kind : r.tables[i].name;
        out.write(name + ".csv", io::to_csv(r.tables[i]));
    }
    if (!r.plot.name.empty()) out.write(r.plot.name + ".csv", io::to_csv(r.plot));
    for (const auto& f : r.flags) log(inv, 0, "flag: " + f);
    return r.flagged() ? kFlagged : kOk;
}

inline int run_fixed_points(const CliInvocation& inv, const FixedPointsPlan& p, OutputSet& out)
{
    const FixedPointReport fp = p.search_hi ? find_fixed_points(p.rf, *p.search_hi) : find_fixed_points(p.rf);
    std::string csv = "location,upper,slope,class\n";
    std::printf("%-20s %-20s %-14s %s\n", "location", "upper", "slope", "class");
    for (const auto& pt : fp.points) {
        csv += io::csv_number(pt.location) + "," + io::csv_number(pt.upper) + "," + io::csv_number(pt.slope) + "," +
               to_string(pt.cls) + "\n";
        std::printf("%-20.12g %-20.12g %-14.6g %s\n", pt.location, pt.upper, pt.slope, to_string(pt.cls));
    }
    std::printf("complete: %s (search_hi = %g)\n", fp.complete ? "yes" : "no", fp.search_hi);
    out.write("fixed_points.csv", csv);
    json report = fixed_points_json(fp);
    report["schema_version"] = io::kSchemaVersion;
    report["rate_function"] = io::to_json(p.rf);
    out.write_json("report.json", report);
    log(inv, 1, std::to_string(fp.points.size()) + " fixed points");
    return fp.complete ? kOk : kFlagged;
}

} // namespace detail

inline int dispatch(const CliInvocation& inv)
{
    const auto start = std::chrono::steady_clock::now();
    try {
        OutputSet out(inv.output_dir);
        const int code = std::visit(
            sepp::detail::overloaded{
                [&](const SimulatePlan& p) { return detail::run_simulate(inv, p, out); },
                [&](const AnalyzePlan& p) { return detail::run_analyze(inv, p, out); },
                [&](const LdpPlan& p) { return detail::run_ldp(inv, p, out); },
                [&](const mc::ExperimentSpec& p) { return detail::run_experiment(inv, p, out); },
                [&](const FixedPointsPlan& p) { return detail::run_fixed_points(inv, p, out); },
            },
            inv.plan);
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const auto* spec = std::get_if<mc::ExperimentSpec>(&inv.plan);
        out.manifest(inv, wall, par::resolve_workers(spec ? spec->workers : inv.threads.value_or(0)));
        return code;
    } catch (const std::exception& e) {
        std::cerr << "sepp: " << inv.subcommand << " failed: " << e.what() << "\n";
        return kRuntimeFailure;
    }
}

inline void report_errors(const ParseResult& res, bool as_json)
{
    if (as_json) {
        json errs = json::array();
        for (const auto& e : res.errors) errs.push_back({{"field", e.field}, {"message", e.message}});
        std::cout << json{{"errors", errs}}.dump(2) << "\n";
        return;
    }
    for (const auto& e : res.errors) std::cerr << "sepp: " << e.field << ": " << e.message << "\n";
}

inline int main(int argc, const char* const* argv)
{
    ParseResult res = parse_and_validate(argc, argv);
    if (res.exit_code) {
        if (*res.exit_code == kOk) {
            std::cout << res.message;
            return kOk;
        }
        bool as_json = res.invocation && res.invocation->errors_json;
        for (int i = 1; i < argc; ++i) as_json = as_json || std::string(argv[i]) == "--errors-json";
        report_errors(res, as_json);
        return *res.exit_code;
    }
    return dispatch(*res.invocation);
}

} // namespace sepp::cli
