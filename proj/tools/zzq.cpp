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

// zzq: reproduction and scan front end.
//
//   zzq reproduce <id> [--config FILE] [--set key=value]... [--seed N] [--output DIR]
//   zzq scan --axis name=lo:hi:n [--axis ...] [--metric qfi|qfi_max] [...]
//   zzq config [--config FILE] [--set key=value]...
//
// Exit status: 0 success, 1 configuration error, 2 numerical failure.

#include <chrono>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "zzq/experiments.hpp"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;

struct CommonOptions {
    std::string config_file;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string output;
};

void add_common(CLI::App *cmd, CommonOptions &o) {
    cmd->add_option("--config", o.config_file, "JSON configuration file");
    cmd->add_option("--set", o.overrides, "Override a key, e.g. --set gamma=0.04")
        ->allow_extra_args(false);
    cmd->add_option("--seed", o.seed, "Random seed");
    cmd->add_option("--output", o.output,
                    "Output root directory (default $ZZQ_OUTPUT_DIR or ./zzq-out)");
}

zzq::exp::RunConfig resolve(const CommonOptions &o) {
    zzq::exp::RunConfig cfg = o.config_file.empty()
                                  ? zzq::exp::RunConfig{}
                                  : zzq::exp::load_config_file(o.config_file);
    for (const auto &s : o.overrides) {
        zzq::exp::apply_override(cfg, s);
    }
    if (o.seed) {
        cfg.apply("seed", *o.seed);
    }
    if (!o.output.empty()) {
        cfg.apply("output_dir", o.output);
    }
    return cfg;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
}

void report(const zzq::exp::WrittenRun &run) {
    for (const auto &f : run.files) {
        std::cout << f.string() << '\n';
    }
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Coupling-estimation reproduction toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(zzq::exp::kVersion));

    CommonOptions repro_opts;
    std::string experiment;
    auto *repro = app.add_subcommand("reproduce", "Run a named pipeline");
    repro->add_option("id", experiment, "Experiment id")->required();
    add_common(repro, repro_opts);

    CommonOptions scan_opts;
    std::vector<std::string> axis_specs;
    std::string metric = "qfi";
    auto *scan = app.add_subcommand("scan", "Grid scan over t, lambda, eta, g");
    scan->add_option("--axis", axis_specs, "name=lo:hi:n or name=v1,v2,...")
        ->required();
    scan->add_option("--metric", metric, "qfi (at t or T) or qfi_max");
    add_common(scan, scan_opts);

    CommonOptions show_opts;
    auto *show = app.add_subcommand("config", "Print the resolved configuration");
    add_common(show, show_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    const auto t0 = std::chrono::steady_clock::now();
    try {
        if (*show) {
            std::cout << resolve(show_opts).to_json().dump(2) << '\n';
            return 0;
        }
        if (*repro) {
            auto cfg = resolve(repro_opts);
            if (!zzq::exp::is_experiment_id(experiment)) {
                throw zzq::exp::ConfigError("unknown experiment id '" +
                                            experiment + "'");
            }
            cfg.apply("experiment", experiment);
            if ((experiment == "table1" || experiment == "fig9") &&
                !cfg.is_explicit("seed")) {
                throw zzq::exp::ConfigError(experiment +
                                            " requires an explicit --seed");
            }
            cfg.validate();
            const auto res = zzq::exp::run_experiment(cfg);
            const auto dir = zzq::exp::resolve_output_dir(cfg) / experiment;
            report(zzq::exp::write_run(dir, cfg, res, "reproduce",
                                       seconds_since(t0)));
            return 0;
        }
        auto cfg = resolve(scan_opts);
        std::vector<zzq::exp::Axis> axes;
        zzq::exp::json axis_json = zzq::exp::json::array();
        for (const auto &s : axis_specs) {
            axes.push_back(zzq::exp::parse_axis(s));
            axis_json.push_back(s);
        }
        const auto res = zzq::exp::run_scan(cfg, axes, metric);
        const auto dir = zzq::exp::resolve_output_dir(cfg) / "scan";
        report(zzq::exp::write_run(dir, cfg, res, "scan", seconds_since(t0),
                                   {{"axes", axis_json}, {"metric", metric}}));
        return 0;
    } catch (const zzq::exp::ConfigError &e) {
        std::cerr << "zzq: configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception &e) {
        std::cerr << "zzq: " << e.what() << '\n';
        return kExitNumerical;
    }
}
