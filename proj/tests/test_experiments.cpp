// Copyright 2026 The zzq Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numbers>

#include "zzq/experiments.hpp"

namespace zzq::exp {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string &name) {
    const fs::path dir = fs::temp_directory_path() / ("zzq_test_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

TEST(RunConfig, DefaultsMatchReferenceSetup) {
    const RunConfig cfg;
    EXPECT_EQ(cfg.omega1, 1.0);
    EXPECT_EQ(cfg.omega2, 1.0);
    EXPECT_EQ(cfg.gamma, 0.05);
    EXPECT_EQ(cfg.g_true, 0.1);
    EXPECT_EQ(cfg.T, 80.0);
    EXPECT_EQ(cfg.M, 100);
    EXPECT_EQ(cfg.epsilon, 0.01);
    EXPECT_EQ(cfg.iterations, 500);
    EXPECT_EQ(cfg.clip, 0.2);
    EXPECT_EQ(cfg.N, 20);
    EXPECT_EQ(cfg.R, 100);
    EXPECT_DOUBLE_EQ(cfg.lambda, std::numbers::pi / 2);
    EXPECT_NO_THROW(cfg.validate());
}

TEST(RunConfig, UnknownKeysAreRejected) {
    RunConfig cfg;
    EXPECT_THROW(apply_json(cfg, json{{"gamma", 0.04}, {"colour", "red"}}),
                 ConfigError);
    EXPECT_THROW(apply_override(cfg, "omega3=1"), ConfigError);
}

TEST(RunConfig, TypeErrorsAreConfigErrors) {
    RunConfig cfg;
    EXPECT_THROW(cfg.apply("M", json("ten")), ConfigError);
    EXPECT_THROW(cfg.apply("M", json(10.5)), ConfigError);
    EXPECT_THROW(cfg.apply("scheme", json("grape")), ConfigError);
    EXPECT_THROW(cfg.apply("seed", json(-1)), ConfigError);
    EXPECT_THROW(apply_override(cfg, "gamma"), ConfigError);
    EXPECT_THROW(apply_json(cfg, json::array()), ConfigError);
}

TEST(RunConfig, OverridesParseJsonOrBareStrings) {
    RunConfig cfg;
    apply_override(cfg, "scheme=hybrid");
    apply_override(cfg, "clip=null");
    apply_override(cfg, "gamma=0.04");
    apply_override(cfg, "feedback_channels=\"both\"");
    EXPECT_EQ(cfg.scheme, Scheme::Hybrid);
    EXPECT_FALSE(cfg.clip.has_value());
    EXPECT_EQ(cfg.gamma, 0.04);
    EXPECT_EQ(cfg.feedback_channels, FeedbackChannels::Both);
    EXPECT_TRUE(cfg.is_explicit("gamma"));
    EXPECT_FALSE(cfg.is_explicit("omega1"));
}

TEST(RunConfig, ValidationCatchesRanges) {
    RunConfig cfg;
    cfg.eta = 1.5;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.experiment = "fig8";
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.probe = "bell";
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.M = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(RunConfig, JsonRoundTripReproducesConfig) {
    RunConfig cfg;
    apply_override(cfg, "gamma=0.03");
    apply_override(cfg, "clip=null");
    apply_override(cfg, "sample_kind=imperfect");
    RunConfig back;
    apply_json(back, cfg.to_json());
    EXPECT_EQ(back.to_json(), cfg.to_json());
}

TEST(RunConfig, LoadsFileAndReportsErrors) {
    const auto dir = scratch_dir("cfgfile");
    fs::create_directories(dir);
    {
        std::ofstream(dir / "ok.json") << R"({"gamma": 0.02, "seed": 7})";
        std::ofstream(dir / "bad.json") << R"({"gamma": 0.02,)";
    }
    const auto cfg = load_config_file(dir / "ok.json");
    EXPECT_EQ(cfg.gamma, 0.02);
    EXPECT_EQ(cfg.seed, 7u);
    EXPECT_THROW(load_config_file(dir / "bad.json"), ConfigError);
    EXPECT_THROW(load_config_file(dir / "missing.json"), ConfigError);
    fs::remove_all(dir);
}

TEST(Csv, QuotingAndTermination) {
    Table t{"demo", {"name", "value"}, {}};
    t.add("plain", 0.5);
    t.add("a,b", 1.0);
    t.add("say \"hi\"", -2.0);
    EXPECT_EQ(to_csv(t),
              "name,value\nplain,0.5\n\"a,b\",1\n\"say \"\"hi\"\"\",-2\n");
}

TEST(Csv, NumbersRoundTrip) {
    for (double x : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 41.6}) {
        EXPECT_EQ(std::stod(format_number(x)), x);
    }
    EXPECT_EQ(format_number(0.5), "0.5");
}

TEST(Csv, RowWidthIsChecked) {
    Table t{"demo", {"a", "b"}, {}};
    EXPECT_THROW(t.add(1.0), Error);
}

TEST(Checksum, KnownSha256Vector) {
    EXPECT_EQ(sha256_hex("abc"),
              "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(ParallelFor, CoversEveryIndexAndPropagatesErrors) {
    const auto v = parallel_map<int>(100, 4, [](std::size_t i) { return int(i * i); });
    for (std::size_t i = 0; i < 100; ++i) {
        EXPECT_EQ(v[i], int(i * i));
    }
    EXPECT_THROW(parallel_for(10, 3,
                              [](std::size_t i) {
                                  if (i == 7) {
                                      throw Error("boom");
                                  }
                              }),
                 Error);
}

TEST(Scan, AxisParsing) {
    const auto a = parse_axis("t=0:80:5");
    EXPECT_EQ(a.name, "t");
    EXPECT_EQ(a.values, (std::vector<double>{0, 20, 40, 60, 80}));
    const auto b = parse_axis("eta=0,0.5,1");
    EXPECT_EQ(b.values, (std::vector<double>{0, 0.5, 1}));
    EXPECT_THROW(parse_axis("omega=0:1:3"), ConfigError);
    EXPECT_THROW(parse_axis("t=0:1"), ConfigError);
    EXPECT_THROW(parse_axis("t=abc"), ConfigError);
    EXPECT_THROW(parse_axis("t"), ConfigError);
}

TEST(Scan, LambdaZeroRowEqualsFreeMetric) {
    RunConfig cfg;
    const auto res = run_scan(cfg, {parse_axis("lambda=0,1.5707963267948966")}, "qfi");
    const auto &t = res.tables.at(0);
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.columns, (std::vector<std::string>{"lambda", "qfi"}));
    RunConfig free = cfg;
    free.scheme = Scheme::None;
    const double f = scan_point(free, {}, "qfi");
    EXPECT_NEAR(std::stod(t.rows[0][1]), f, 1e-10 * f);
    EXPECT_GT(std::stod(t.rows[1][1]), f);
}

TEST(Scan, EfficiencyEndpointsEqualFreeAndFeedbackExactly) {
    RunConfig cfg;
    const auto res = run_scan(cfg, {parse_axis("eta=0,1")}, "qfi");
    const auto &t = res.tables.at(0);
    RunConfig free = cfg;
    free.scheme = Scheme::None;
    EXPECT_EQ(t.rows[0][1], format_number(scan_point(free, {}, "qfi")));
    EXPECT_EQ(t.rows[1][1], format_number(scan_point(cfg, {}, "qfi")));
}

TEST(Scan, TwoAxesAreRowMajor) {
    RunConfig cfg;
    cfg.threads = 3;
    const auto res =
        run_scan(cfg, {parse_axis("g=0.1,0.2"), parse_axis("t=0,40,80")}, "qfi");
    const auto &t = res.tables.at(0);
    ASSERT_EQ(t.rows.size(), 6u);
    EXPECT_EQ(t.rows[0][0], "0.1");
    EXPECT_EQ(t.rows[2][0], "0.1");
    EXPECT_EQ(t.rows[3][0], "0.2");
    EXPECT_EQ(t.rows[1][1], "40");
    EXPECT_EQ(t.rows[0][2], "0");
}

TEST(Scan, RejectsBadRequests) {
    RunConfig cfg;
    EXPECT_THROW(run_scan(cfg, {}, "qfi"), ConfigError);
    EXPECT_THROW(run_scan(cfg, {parse_axis("t=1,2"), parse_axis("t=3,4")}, "qfi"),
                 ConfigError);
    EXPECT_THROW(run_scan(cfg, {parse_axis("t=1,2")}, "qfi_max"), ConfigError);
    EXPECT_THROW(run_scan(cfg, {parse_axis("t=1,2")}, "cfi"), ConfigError);
    EXPECT_THROW(run_scan(cfg, {parse_axis("lambda=7")}, "qfi"), Error);
    cfg.scheme = Scheme::Hybrid;
    EXPECT_THROW(run_scan(cfg, {parse_axis("t=1,2")}, "qfi"), ConfigError);
}

TEST(Reproduce, Fig1IsByteIdenticalAcrossRuns) {
    RunConfig cfg;
    cfg.experiment = "fig1";
    const auto a = run_experiment(cfg);
    cfg.threads = 2;
    const auto b = run_experiment(cfg);
    ASSERT_EQ(a.tables.size(), 1u);
    EXPECT_EQ(a.tables[0].columns, (std::vector<std::string>{"t", "g_true", "qfi"}));
    EXPECT_EQ(a.tables[0].rows.size(), 2u * 101u);
    EXPECT_EQ(to_csv(a.tables[0]), to_csv(b.tables[0]));
}

TEST(Reproduce, ExplicitCouplingNarrowsCurveSet) {
    RunConfig cfg;
    cfg.experiment = "fig1";
    cfg.apply("g_true", json(0.15));
    const auto res = run_experiment(cfg);
    EXPECT_EQ(res.tables[0].rows.size(), 101u);
    EXPECT_EQ(res.tables[0].rows[0][1], "0.15");
}

TEST(Reproduce, Fig4bEndpointsMatchReferences) {
    RunConfig cfg;
    cfg.experiment = "fig4b";
    const auto res = run_experiment(cfg);
    const auto &rows = res.tables[0].rows;
    ASSERT_EQ(rows.size(), 11u);
    EXPECT_EQ(std::stod(rows.front()[1]), res.summary["free_qfi"].get<double>());
    EXPECT_EQ(std::stod(rows.back()[1]), res.summary["feedback_qfi"].get<double>());
}

TEST(Reproduce, CustomCurveUsesConfiguredScheme) {
    RunConfig cfg;
    cfg.scheme = Scheme::None;
    cfg.M = 20;
    cfg.T = 40;
    const auto res = run_experiment(cfg);
    EXPECT_EQ(res.tables[0].rows.size(), 21u);
    EXPECT_GT(res.summary["qfi_peak"].get<double>(), 0.0);
}

TEST(Reproduce, SmallHybridRunsProduceControlsAndHistory) {
    RunConfig cfg;
    cfg.experiment = "fig5b";
    cfg.iterations = 2;
    cfg.M = 10;
    cfg.T = 20;
    const auto res = run_experiment(cfg);
    ASSERT_EQ(res.tables.size(), 2u);
    EXPECT_EQ(res.tables[0].rows.size(), 60u);
    EXPECT_EQ(res.tables[1].rows.size(), 2u);
    EXPECT_LE(res.summary["max_amplitude"].get<double>(), 0.2);
}

TEST(Reproduce, BayesPipelinesAreSeededAndReproducible) {
    RunConfig cfg;
    cfg.experiment = "fig9";
    cfg.N = 2;
    cfg.R = 20;
    cfg.seed = 3;
    const auto a = run_experiment(cfg);
    const auto b = run_experiment(cfg);
    EXPECT_EQ(to_csv(a.tables[0]), to_csv(b.tables[0]));
    EXPECT_EQ(a.tables[0].rows.size(), 4u * 2u);
    EXPECT_EQ(a.summary["mse"].size(), 4u);
    EXPECT_EQ(a.summary, b.summary);
}

TEST(Output, WritesCsvAndManifestAtomically) {
    const auto root = scratch_dir("out");
    RunConfig cfg;
    cfg.experiment = "custom";
    cfg.scheme = Scheme::None;
    cfg.M = 10;
    const auto res = run_experiment(cfg);
    const auto run = write_run(root / "custom", cfg, res, "reproduce", 0.1);
    EXPECT_TRUE(fs::exists(root / "custom" / "qfi.csv"));
    EXPECT_TRUE(fs::exists(root / "custom" / "manifest.json"));
    EXPECT_FALSE(fs::exists(root / "custom.partial"));
    const auto manifest = json::parse(slurp(root / "custom" / "manifest.json"));
    EXPECT_EQ(manifest["version"], std::string(kVersion));
    EXPECT_EQ(manifest["config"], cfg.to_json());
    EXPECT_EQ(manifest["outputs"][0]["sha256"],
              sha256_hex(slurp(root / "custom" / "qfi.csv")));
    const std::string text = slurp(root / "custom" / "qfi.csv");
    EXPECT_EQ(text.rfind("t,qfi\n", 0), 0u);
    EXPECT_EQ(text.back(), '\n');

    RunConfig again;
    apply_json(again, manifest["config"]);
    EXPECT_EQ(to_csv(run_experiment(again).tables[0]), text);
    fs::remove_all(root);
}

TEST(Output, FailedWriteLeavesNothingBehind) {
    const auto root = scratch_dir("fail");
    RunConfig cfg;
    ExperimentResult res;
    res.tables.push_back(Table{"bad/name", {"a"}, {}});
    EXPECT_ANY_THROW(write_run(root / "custom", cfg, res, "reproduce", 0.0));
    EXPECT_FALSE(fs::exists(root / "custom"));
    EXPECT_FALSE(fs::exists(root / "custom.partial"));
    fs::remove_all(root);
}

TEST(Output, EnvironmentSetsDefaultDirectory) {
    ::setenv("ZZQ_OUTPUT_DIR", "/tmp/zzq-env-test", 1);
    EXPECT_EQ(default_output_dir(), fs::path("/tmp/zzq-env-test"));
    RunConfig cfg;
    cfg.output_dir = "elsewhere";
    EXPECT_EQ(resolve_output_dir(cfg), fs::path("elsewhere"));
    ::unsetenv("ZZQ_OUTPUT_DIR");
    EXPECT_EQ(default_output_dir(), fs::path("zzq-out"));
}

} // namespace
} // namespace zzq::exp
