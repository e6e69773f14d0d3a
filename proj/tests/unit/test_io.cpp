#include "sepp/io.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

using namespace sepp;
using io::json;

namespace {

bool has_field(const io::Errors& errs, const std::string& field)
{
    return std::any_of(errs.begin(), errs.end(), [&](const io::FieldError& e) { return e.field == field; });
}

} // namespace

TEST(Hashing, Sha256KnownVectors)
{
    EXPECT_EQ(io::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(io::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(CsvNumber, TwelveSignificantDigitsAndSpecials)
{
    EXPECT_EQ(io::csv_number(0.1), "0.1");
    EXPECT_EQ(io::csv_number(1.0 / 3.0), "0.333333333333");
    EXPECT_EQ(io::csv_number(1e-300), "1e-300");
    EXPECT_EQ(io::csv_number(std::numeric_limits<double>::quiet_NaN()), "nan");
    EXPECT_EQ(io::csv_number(-std::numeric_limits<double>::infinity()), "-inf");
}

TEST(RateFunctionJson, RoundTripsEveryKind)
{
    const std::vector<RateFunction> all{
        RateFunction(Affine{0.5, 1.0}),
        RateFunction(Power{1.0, 2.0, 1.0}),
        RateFunction(SqrtShift{}),
        RateFunction(SineMix{0.9, 0.6, 0.5}),
        RateFunction(PiecewiseLinear{{{0.0, 1.0}, {2.0, 2.0}}, 0.25}),
        RateFunction(Constant{3.0}),
    };
    for (const auto& rf : all) {
        const json j = io::to_json(rf);
        io::Errors errs;
        const auto back = io::parse_rate_function(json::parse(j.dump()), errs);
        ASSERT_TRUE(back) << j.dump();
        EXPECT_TRUE(errs.empty());
        EXPECT_EQ(io::to_json(*back).dump(), j.dump());
        for (double x : {0.0, 0.37, 5.0}) EXPECT_EQ((*back)(x), rf(x));
    }
}

TEST(RateFunctionJson, ReportsEveryOffendingField)
{
    io::Errors errs;
    EXPECT_FALSE(io::parse_rate_function(json{{"kind", "affine"}, {"alpha", -1.0}}, errs));
    EXPECT_TRUE(has_field(errs, "rate_function.alpha"));
    EXPECT_TRUE(has_field(errs, "rate_function.beta"));

    errs.clear();
    EXPECT_FALSE(io::parse_rate_function(json{{"kind", "cubic"}}, errs));
    EXPECT_TRUE(has_field(errs, "rate_function.kind"));

    errs.clear();
    EXPECT_FALSE(io::parse_rate_function(
        json{{"kind", "piecewise_linear"}, {"knots", json::array({json::array({0, 1}), "x"})}, {"terminal_slope", 0}},
        errs));
    EXPECT_TRUE(has_field(errs, "rate_function.knots[1]"));
}

TEST(ExperimentJson, ParsesAndCollectsErrors)
{
    const json ok{{"kind", "lln"},
                  {"rate_function", {{"kind", "affine"}, {"alpha", 0.5}, {"beta", 1.0}}},
                  {"horizons", {10, 100}},
                  {"replications", 20},
                  {"master_seed", 9}};
    io::Errors errs;
    const auto spec = io::parse_experiment(ok, errs);
    ASSERT_TRUE(spec) << (errs.empty() ? "" : errs.front().field + ": " + errs.front().message);
    EXPECT_EQ(spec->kind, mc::ExperimentKind::Lln);
    EXPECT_EQ(spec->replications, 20u);
    EXPECT_EQ(spec->horizons, (std::vector<double>{10, 100}));

    json negative = ok;
    negative["replications"] = -3;
    errs.clear();
    EXPECT_FALSE(io::parse_experiment(negative, errs));
    EXPECT_TRUE(has_field(errs, "replications"));

    json bad = ok;
    bad["kind"] = "nope";
    bad["horizons"] = {100, 10};
    bad["method"] = "rejection";
    bad["rate_function"]["alpha"] = -1;
    errs.clear();
    EXPECT_FALSE(io::parse_experiment(bad, errs));
    EXPECT_TRUE(has_field(errs, "kind"));
    EXPECT_TRUE(has_field(errs, "method"));
    EXPECT_TRUE(has_field(errs, "rate_function.alpha"));
}

TEST(Trajectories, JsonLineRoundTrip)
{
    const SimConfig cfg{RateFunction(Affine{0.5, 1.0}), 0.0, 50.0, 1000, 17, SimMethod::Auto};
    const Trajectory tr = simulate(cfg);
    const Trajectory back = io::trajectory_from_json(json::parse(io::to_jsonl(tr)));
    EXPECT_EQ(back.seed, tr.seed);
    EXPECT_EQ(back.horizon, tr.horizon);
    EXPECT_EQ(back.exploded, tr.exploded);
    EXPECT_EQ(back.jump_times, tr.jump_times); // bitwise: shortest round-trip output
}

TEST(Trajectories, CsvRowsCountFromOne)
{
    Trajectory tr;
    tr.seed = 4;
    tr.jump_times = {0.5, 1.25};
    EXPECT_EQ(io::to_csv_rows(tr), "4,1,0.5\n4,2,1.25\n");
}

TEST(Reports, NonFiniteMetricsBecomeStrings)
{
    mc::ExperimentReport r;
    r.kind = "tail";
    r.add("finite", 1.5);
    r.add("missing", std::numeric_limits<double>::quiet_NaN());
    const json j = io::to_json(r, "abc");
    EXPECT_EQ(j["metrics"]["finite"], 1.5);
    EXPECT_EQ(j["metrics"]["missing"], "nan");
    EXPECT_EQ(j["metadata"]["spec_sha256"], "abc");
    EXPECT_FALSE(j.contains("plot"));
}

TEST(Reports, TableCsv)
{
    const mc::Table t{"t", {"a", "b"}, {{1.0, 0.25}, {2.0, 1e-20}}};
    EXPECT_EQ(io::to_csv(t), "a,b\n1,0.25\n2,1e-20\n");
}
