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

/**
 * @file
 * Experiment pipelines behind the command-line front end: run
 * configuration, the named reproduction pipelines, parameter scans, CSV
 * tables and the run manifest.
 *
 * Requires nlohmann/json and OpenSSL (libcrypto, for SHA-256 checksums).
 */

#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <openssl/evp.h>

#include "json.hpp"

#include "analytic.hpp"
#include "bayes.hpp"
#include "dynamics.hpp"
#include "fisher.hpp"
#include "grape.hpp"
#include "model.hpp"
#include "qcore.hpp"

namespace zzq::exp {

inline constexpr std::string_view kVersion = "1.0.0";

using json = nlohmann::ordered_json;

/// Bad configuration; the front end maps it to exit status 1.
class ConfigError : public Error {
  public:
    using Error::Error;
};

inline const std::vector<std::string> &experiment_ids() {
    static const std::vector<std::string> ids{
        "fig1",  "fig2",  "fig3a", "fig3b", "fig4a", "fig4b",  "fig5a", "fig5b",
        "fig6a", "fig6b", "fig7a", "fig7b", "fig9",  "table1", "custom"};
    return ids;
}

inline bool is_experiment_id(std::string_view id) {
    const auto &ids = experiment_ids();
    return std::find(ids.begin(), ids.end(), id) != ids.end();
}

// ---------------------------------------------------------------------------
// Probes

inline PureState probe_state(std::string_view name) {
    if (name == "plus_plus") {
        return optimal_probe();
    }
    if (name == "phi_plus") {
        return phi_plus();
    }
    if (name == "psi_plus") {
        return psi_plus();
    }
    throw ConfigError("unknown probe '" + std::string(name) +
                      "' (expected plus_plus, phi_plus or psi_plus)");
}

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
    std::string experiment = "custom";
    double omega1 = 1.0;
    double omega2 = 1.0;
    double gamma = 0.05;
    double g_true = 0.1;
    double lambda = std::numbers::pi / 2;
    double eta = 1.0;
    double T = 80.0;
    int M = 100;
    double epsilon = 0.01;
    int iterations = 500;
    std::optional<double> clip = 0.2;
    int N = 20;
    int R = 100;
    std::uint64_t seed = 0;
    Scheme scheme = Scheme::Feedback;
    SampleKind sample_kind = SampleKind::Perfect;
    FeedbackChannels feedback_channels = FeedbackChannels::First;
    GradientMethod gradient_method = GradientMethod::FiniteDifference;
    int batch_iterations = 50;
    std::string probe = "plus_plus";
    int threads = 0;
    std::string output_dir;

    /// Keys given explicitly by a config file or override.
    std::set<std::string> explicit_keys;

    [[nodiscard]] bool is_explicit(const std::string &key) const {
        return explicit_keys.count(key) != 0;
    }

    [[nodiscard]] SystemParams params() const {
        return {omega1, omega2, g_true, gamma, gamma};
    }

    [[nodiscard]] TimeGrid grid() const { return {T, M}; }

    /// Mode of the configured scheme: Free for none, else feedback at λ, η.
    [[nodiscard]] EvolutionMode mode() const {
        if (scheme == Scheme::None) {
            return EvolutionMode::free();
        }
        if (eta == 1.0) {
            return EvolutionMode::feedback(lambda, feedback_channels);
        }
        return EvolutionMode::imperfect(lambda, eta, feedback_channels);
    }

    [[nodiscard]] DensityMatrix initial_state() const {
        return DensityMatrix(probe_state(probe));
    }

    [[nodiscard]] GrapeConfig grape(const EvolutionMode &m) const {
        GrapeConfig g;
        g.grid = grid();
        g.epsilon = epsilon;
        g.iterations = iterations;
        g.clip = clip;
        g.mode = m;
        g.gradient_method = gradient_method;
        return g;
    }

    [[nodiscard]] BayesConfig bayes(Scheme s, SampleKind k) const {
        BayesConfig b;
        b.batches = N;
        b.copies_per_batch = R;
        b.scheme = s;
        b.sample_kind = k;
        b.seed = seed;
        b.grid = grid();
        b.g_true = g_true;
        b.lambda = lambda;
        b.channels = feedback_channels;
        b.grape_iterations = batch_iterations;
        b.grape_epsilon = epsilon;
        b.grape_clip = clip;
        b.grape_gradient = gradient_method;
        return b;
    }

    void apply(const std::string &key, const json &value);

    void validate() const;

    [[nodiscard]] json to_json() const;
};

namespace detail {

inline double as_number(const std::string &key, const json &v) {
    if (!v.is_number()) {
        throw ConfigError("'" + key + "' must be a number");
    }
    const double x = v.get<double>();
    if (!std::isfinite(x)) {
        throw ConfigError("'" + key + "' must be finite");
    }
    return x;
}

inline int as_int(const std::string &key, const json &v) {
    if (!v.is_number_integer()) {
        throw ConfigError("'" + key + "' must be an integer");
    }
    return v.get<int>();
}

inline std::string as_string(const std::string &key, const json &v) {
    if (!v.is_string()) {
        throw ConfigError("'" + key + "' must be a string");
    }
    return v.get<std::string>();
}

template <typename F>
auto parse_enum(const std::string &key, const json &v, F parse) {
    try {
        return parse(as_string(key, v));
    } catch (const ConfigError &) {
        throw;
    } catch (const Error &e) {
        throw ConfigError(e.what());
    }
}

} // namespace detail

inline void RunConfig::apply(const std::string &key, const json &v) {
    using namespace detail;
    if (key == "experiment") {
        experiment = as_string(key, v);
    } else if (key == "omega1") {
        omega1 = as_number(key, v);
    } else if (key == "omega2") {
        omega2 = as_number(key, v);
    } else if (key == "gamma") {
        gamma = as_number(key, v);
    } else if (key == "g_true") {
        g_true = as_number(key, v);
    } else if (key == "lambda") {
        lambda = as_number(key, v);
    } else if (key == "eta") {
        eta = as_number(key, v);
    } else if (key == "T") {
        T = as_number(key, v);
    } else if (key == "M") {
        M = as_int(key, v);
    } else if (key == "epsilon") {
        epsilon = as_number(key, v);
    } else if (key == "iterations") {
        iterations = as_int(key, v);
    } else if (key == "clip") {
        if (v.is_null()) {
            clip.reset();
        } else {
            clip = as_number(key, v);
        }
    } else if (key == "N") {
        N = as_int(key, v);
    } else if (key == "R") {
        R = as_int(key, v);
    } else if (key == "seed") {
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
            throw ConfigError("'seed' must be a non-negative integer");
        }
        seed = v.get<std::uint64_t>();
    } else if (key == "scheme") {
        scheme = parse_enum(key, v, parse_scheme);
    } else if (key == "sample_kind") {
        sample_kind = parse_enum(key, v, parse_sample_kind);
    } else if (key == "feedback_channels") {
        feedback_channels = parse_enum(key, v, parse_feedback_channels);
    } else if (key == "gradient_method") {
        gradient_method = parse_enum(key, v, parse_gradient_method);
    } else if (key == "batch_iterations") {
        batch_iterations = as_int(key, v);
    } else if (key == "probe") {
        probe = as_string(key, v);
    } else if (key == "threads") {
        threads = as_int(key, v);
    } else if (key == "output_dir") {
        output_dir = as_string(key, v);
    } else {
        throw ConfigError("unknown configuration key '" + key + "'");
    }
    explicit_keys.insert(key);
}

inline void RunConfig::validate() const {
    if (!is_experiment_id(experiment)) {
        throw ConfigError("unknown experiment id '" + experiment + "'");
    }
    if (!(gamma >= 0.0)) {
        throw ConfigError("gamma must be non-negative");
    }
    if (!(T > 0.0)) {
        throw ConfigError("T must be positive");
    }
    if (M < 1) {
        throw ConfigError("M must be at least 1");
    }
    if (!(lambda >= 0.0 && lambda <= 2.0 * std::numbers::pi)) {
        throw ConfigError("lambda must lie in [0, 2π]");
    }
    if (!(eta >= 0.0 && eta <= 1.0)) {
        throw ConfigError("eta must lie in [0, 1]");
    }
    if (!(epsilon > 0.0)) {
        throw ConfigError("epsilon must be positive");
    }
    if (iterations < 0 || batch_iterations < 0) {
        throw ConfigError("iteration counts must be non-negative");
    }
    if (clip && !(*clip > 0.0)) {
        throw ConfigError("clip must be positive or null");
    }
    if (N < 1 || R < 1) {
        throw ConfigError("N and R must be at least 1");
    }
    if (!(g_true >= 0.0 && g_true <= 0.2) &&
        (experiment == "fig9" || experiment == "table1")) {
        throw ConfigError("g_true must lie in the posterior range [0, 0.2]");
    }
    if (threads < 0) {
        throw ConfigError("threads must be non-negative");
    }
    probe_state(probe);
}

inline json RunConfig::to_json() const {
    json j;
    j["experiment"] = experiment;
    j["omega1"] = omega1;
    j["omega2"] = omega2;
    j["gamma"] = gamma;
    j["g_true"] = g_true;
    j["lambda"] = lambda;
    j["eta"] = eta;
    j["T"] = T;
    j["M"] = M;
    j["epsilon"] = epsilon;
    j["iterations"] = iterations;
    j["clip"] = clip ? json(*clip) : json(nullptr);
    j["N"] = N;
    j["R"] = R;
    j["seed"] = seed;
    j["scheme"] = std::string(to_string(scheme));
    j["sample_kind"] = std::string(to_string(sample_kind));
    j["feedback_channels"] = std::string(to_string(feedback_channels));
    j["gradient_method"] = std::string(to_string(gradient_method));
    j["batch_iterations"] = batch_iterations;
    j["probe"] = probe;
    j["threads"] = threads;
    j["output_dir"] = output_dir;
    return j;
}

/// Applies every key of a JSON object; unknown keys are rejected.
inline void apply_json(RunConfig &cfg, const json &obj) {
    if (!obj.is_object()) {
        throw ConfigError("configuration must be a JSON object");
    }
    for (const auto &[key, value] : obj.items()) {
        cfg.apply(key, value);
    }
}

inline RunConfig load_config_file(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path.string());
    }
    json obj;
    try {
        obj = json::parse(in);
    } catch (const json::parse_error &e) {
        throw ConfigError("config file " + path.string() + ": " + e.what());
    }
    RunConfig cfg;
    apply_json(cfg, obj);
    return cfg;
}

/**
 * `key=value` override. The value is read as JSON when it parses as such,
 * otherwise as a bare string, so `scheme=hybrid` and `clip=null` both work.
 */
inline void apply_override(RunConfig &cfg, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw ConfigError("override '" + std::string(assignment) +
                          "' is not of the form key=value");
    }
    const std::string key(assignment.substr(0, eq));
    const std::string text(assignment.substr(eq + 1));
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) {
        value = text;
    }
    cfg.apply(key, value);
}

// ---------------------------------------------------------------------------
// Tables and CSV

/// Shortest round-trip decimal form; locale independent.
inline std::string format_number(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    template <typename... Cells> void add(const Cells &...cells) {
        std::vector<std::string> row;
        row.reserve(sizeof...(cells));
        (row.push_back(cell(cells)), ...);
        if (row.size() != columns.size()) {
            throw Error("table " + name + ": row width mismatch");
        }
        rows.push_back(std::move(row));
    }

  private:
    static std::string cell(double x) { return format_number(x); }
    static std::string cell(int x) { return std::to_string(x); }
    static std::string cell(std::size_t x) { return std::to_string(x); }
    static std::string cell(const std::string &s) { return s; }
    static std::string cell(std::string_view s) { return std::string(s); }
    static std::string cell(const char *s) { return s; }
};

inline std::string csv_field(const std::string &s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    out += '"';
    return out;
}

inline std::string to_csv(const Table &t) {
    std::string out;
    auto line = [&out](const std::vector<std::string> &cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i > 0) {
                out += ',';
            }
            out += csv_field(cells[i]);
        }
        out += '\n';
    };
    line(t.columns);
    for (const auto &r : t.rows) {
        line(r);
    }
    return out;
}

inline std::string sha256_hex(const std::string &data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(),
                   nullptr) != 1) {
        throw Error("SHA-256 digest failed");
    }
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) {
        hex << std::hex << std::setw(2) << std::setfill('0')
            << static_cast<int>(digest[i]);
    }
    return hex.str();
}

// ---------------------------------------------------------------------------
// Worker pool

inline unsigned worker_count(int requested, std::size_t jobs) {
    unsigned n = requested > 0 ? static_cast<unsigned>(requested)
                               : std::max(1u, std::thread::hardware_concurrency());
    return static_cast<unsigned>(
        std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

/**
 * Calls fn(i) for i in [0, n) on up to `threads` workers. Results must be
 * written by index; the first exception is rethrown after all workers stop.
 */
inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t)> &fn) {
    const unsigned workers = worker_count(threads, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n && !failed; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!error) {
                            error = std::current_exception();
                        }
                        failed = true;
                    }
                }
            });
        }
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

template <typename T, typename F>
std::vector<T> parallel_map(std::size_t n, int threads, F fn) {
    std::vector<T> out(n);
    parallel_for(n, threads, [&](std::size_t i) { out[i] = fn(i); });
    return out;
}

// ---------------------------------------------------------------------------
// Shared numerics

inline std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        v[i] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
    }
    return v;
}

/// QFI at every grid time under zero controls.
inline std::vector<double> uncontrolled_curve(const RunConfig &cfg,
                                              const SystemParams &p,
                                              const EvolutionMode &mode) {
    return qfi_curve(cfg.initial_state(), p, zero_controls(cfg.M), mode,
                     cfg.grid());
}

struct Peak {
    double t = 0.0;
    double value = 0.0;
};

/// Global maximum over the grid times; the earliest time wins ties.
inline Peak curve_peak(const std::vector<double> &curve, const TimeGrid &grid) {
    Peak pk{0.0, -std::numeric_limits<double>::infinity()};
    for (std::size_t n = 0; n < curve.size(); ++n) {
        if (curve[n] > pk.value) {
            pk = {grid.time(static_cast<int>(n)), curve[n]};
        }
    }
    return pk;
}

/// Interior local maxima in time order.
inline std::vector<Peak> local_maxima(const std::vector<double> &curve,
                                      const TimeGrid &grid) {
    std::vector<Peak> out;
    for (std::size_t n = 1; n + 1 < curve.size(); ++n) {
        if (curve[n] > curve[n - 1] && curve[n] >= curve[n + 1]) {
            out.push_back({grid.time(static_cast<int>(n)), curve[n]});
        }
    }
    return out;
}

inline std::string channel_label(int c) {
    static const char *axes[] = {"x", "y", "z"};
    return "q" + std::to_string(c / 3 + 1) + "_" + axes[c % 3];
}

// ---------------------------------------------------------------------------
// Experiment results

struct ExperimentResult {
    std::vector<Table> tables;
    json summary = json::object();
};

namespace pipelines {

inline void add_curve(Table &t, const std::vector<double> &curve,
                      const TimeGrid &grid, const std::string &label) {
    for (std::size_t n = 0; n < curve.size(); ++n) {
        t.add(label, grid.time(static_cast<int>(n)), curve[n]);
    }
}

inline std::vector<double> g_values(const RunConfig &cfg,
                                    std::vector<double> defaults) {
    return cfg.is_explicit("g_true") ? std::vector<double>{cfg.g_true}
                                     : defaults;
}

inline ExperimentResult fig1(const RunConfig &cfg) {
    const auto gs = g_values(cfg, {0.1, 0.2});
    const auto curves = parallel_map<std::vector<double>>(
        gs.size(), cfg.threads, [&](std::size_t i) {
            return uncontrolled_curve(cfg, cfg.params().with_g(gs[i]),
                                      EvolutionMode::free());
        });
    ExperimentResult out;
    Table t{"qfi", {"t", "g_true", "qfi"}, {}};
    json peaks = json::array();
    for (std::size_t i = 0; i < gs.size(); ++i) {
        for (std::size_t n = 0; n < curves[i].size(); ++n) {
            t.add(cfg.grid().time(static_cast<int>(n)), gs[i], curves[i][n]);
        }
        const auto pk = curve_peak(curves[i], cfg.grid());
        const auto locals = local_maxima(curves[i], cfg.grid());
        json entry{{"g_true", gs[i]}, {"t_peak", pk.t}, {"qfi_peak", pk.value}};
        if (!locals.empty()) {
            entry["t_last_local_max"] = locals.back().t;
        }
        peaks.push_back(entry);
    }
    out.tables.push_back(std::move(t));
    out.summary["peaks"] = peaks;
    return out;
}

inline ExperimentResult fig2(const RunConfig &cfg) {
    const auto lambdas = linspace(0.0, std::numbers::pi, 49);
    const auto curves = parallel_map<std::vector<double>>(
        lambdas.size(), cfg.threads, [&](std::size_t i) {
            return uncontrolled_curve(
                cfg, cfg.params(),
                EvolutionMode::feedback(lambdas[i], cfg.feedback_channels));
        });
    Table t{"qfi_surface", {"lambda", "t", "qfi"}, {}};
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        for (std::size_t n = 0; n < curves[i].size(); ++n) {
            t.add(lambdas[i], cfg.grid().time(static_cast<int>(n)),
                  curves[i][n]);
        }
    }
    ExperimentResult out;
    out.tables.push_back(std::move(t));
    return out;
}

/// λ = kπ/16 for k = 0..k_max.
inline std::vector<double> lambda_steps(int k_max) {
    std::vector<double> v;
    for (int k = 0; k <= k_max; ++k) {
        v.push_back(k * std::numbers::pi / 16.0);
    }
    return v;
}

inline std::vector<Peak> lambda_peaks(const RunConfig &cfg,
                                      const SystemParams &p,
                                      const std::vector<double> &lambdas) {
    return parallel_map<Peak>(lambdas.size(), cfg.threads, [&](std::size_t i) {
        const auto mode = lambdas[i] == 0.0
                              ? EvolutionMode::free()
                              : EvolutionMode::feedback(lambdas[i],
                                                        cfg.feedback_channels);
        return curve_peak(uncontrolled_curve(cfg, p, mode), cfg.grid());
    });
}

inline ExperimentResult fig3a(const RunConfig &cfg) {
    const auto lambdas = lambda_steps(32);
    const auto peaks = lambda_peaks(cfg, cfg.params(), lambdas);
    const double base = peaks[0].value;
    Table t{"qfi_max", {"lambda", "qfi_max", "t_peak", "improvement"}, {}};
    std::size_t best = 0;
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        t.add(lambdas[i], peaks[i].value, peaks[i].t,
              (peaks[i].value - base) / base);
        if (i <= 16 && peaks[i].value > peaks[best].value) {
            best = i;
        }
    }
    double worst_period = 0.0;
    for (std::size_t i = 0; i + 16 < lambdas.size(); ++i) {
        worst_period = std::max(worst_period,
                                std::abs(peaks[i + 16].value - peaks[i].value) /
                                    peaks[i].value);
    }
    ExperimentResult out;
    out.tables.push_back(std::move(t));
    out.summary["lambda_argmax"] = lambdas[best];
    out.summary["improvement_at_argmax"] = (peaks[best].value - base) / base;
    out.summary["max_period_deviation"] = worst_period;
    return out;
}

inline ExperimentResult fig3b(const RunConfig &cfg) {
    const auto gs = g_values(cfg, {0.1, 0.2, 0.3});
    const auto lambdas = lambda_steps(16);
    Table t{"improvement", {"g_true", "lambda", "qfi_max", "improvement"}, {}};
    json best = json::array();
    for (double g : gs) {
        const auto peaks = lambda_peaks(cfg, cfg.params().with_g(g), lambdas);
        double top = 0.0;
        for (std::size_t i = 0; i < lambdas.size(); ++i) {
            const double imp = (peaks[i].value - peaks[0].value) / peaks[0].value;
            t.add(g, lambdas[i], peaks[i].value, imp);
            top = std::max(top, imp);
        }
        best.push_back({{"g_true", g}, {"max_improvement", top}});
    }
    ExperimentResult out;
    out.tables.push_back(std::move(t));
    out.summary["max_improvement"] = best;
    return out;
}

inline std::vector<double> eta_values(int n) { return linspace(0.0, 1.0, n); }

inline ExperimentResult fig4a(const RunConfig &cfg) {
    const auto etas = eta_values(21);
    const auto curves = parallel_map<std::vector<double>>(
        etas.size(), cfg.threads, [&](std::size_t i) {
            return uncontrolled_curve(
                cfg, cfg.params(),
                EvolutionMode::imperfect(cfg.lambda, etas[i],
                                         cfg.feedback_channels));
        });
    Table t{"qfi_surface", {"eta", "t", "qfi"}, {}};
    for (std::size_t i = 0; i < etas.size(); ++i) {
        for (std::size_t n = 0; n < curves[i].size(); ++n) {
            t.add(etas[i], cfg.grid().time(static_cast<int>(n)), curves[i][n]);
        }
    }
    ExperimentResult out;
    out.tables.push_back(std::move(t));
    return out;
}

/// QFI at t = T for each η, plus the Free and Feedback references.
struct EtaSweep {
    std::vector<double> etas;
    std::vector<double> qfi;
    double free_qfi = 0.0;
    double feedback_qfi = 0.0;
};

inline EtaSweep eta_sweep(const RunConfig &cfg, int points) {
    EtaSweep s;
    s.etas = eta_values(points);
    const auto z = zero_controls(cfg.M);
    const auto rho0 = cfg.initial_state().matrix();
    auto at_t = [&](const EvolutionMode &m) {
        return objective(z, cfg.params(), m, cfg.grid(), rho0);
    };
    s.qfi = parallel_map<double>(s.etas.size(), cfg.threads, [&](std::size_t i) {
        return at_t(EvolutionMode::imperfect(cfg.lambda, s.etas[i],
                                             cfg.feedback_channels));
    });
    s.free_qfi = at_t(EvolutionMode::free());
    s.feedback_qfi =
        at_t(EvolutionMode::feedback(cfg.lambda, cfg.feedback_channels));
    return s;
}

inline ExperimentResult fig4b(const RunConfig &cfg) {
    const auto s = eta_sweep(cfg, 11);
    Table t{"qfi_at_T", {"eta", "qfi"}, {}};
    for (std::size_t i = 0; i < s.etas.size(); ++i) {
        t.add(s.etas[i], s.qfi[i]);
    }
    ExperimentResult out;
    out.tables.push_back(std::move(t));
    out.summary["free_qfi"] = s.free_qfi;
    out.summary["feedback_qfi"] = s.feedback_qfi;
    return out;
}

inline EvolutionMode hybrid_mode(const RunConfig &cfg) {
    return cfg.eta == 1.0 ? EvolutionMode::feedback(cfg.lambda,
                                                    cfg.feedback_channels)
                          : EvolutionMode::imperfect(cfg.lambda, cfg.eta,
                                                     cfg.feedback_channels);
}

inline void add_controls(Table &t, const std::vector<ControlVector> &u,
                         const TimeGrid &grid) {
    for (std::size_t n = 0; n < u.size(); ++n) {
        for (int c = 0; c < kControlChannels; ++c) {
            t.add(static_cast<int>(n), grid.time(static_cast<int>(n)),
                  channel_label(c), u[n][c]);
        }
    }
}

inline void add_history(Table &t, const std::vector<double> &h,
                        const std::string &label) {
    for (std::size_t k = 0; k < h.size(); ++k) {
        t.add(label, static_cast<int>(k + 1), h[k]);
    }
}

inline ExperimentResult fig5(const RunConfig &cfg, bool clipped) {
    auto gcfg = cfg.grape(hybrid_mode(cfg));
    if (!clipped) {
        gcfg.clip.reset();
    }
    const auto res = optimize(gcfg, cfg.params(), cfg.initial_state());
    Table controls{"controls", {"segment", "t", "channel", "amplitude"}, {}};
    add_controls(controls, res.best_controls, cfg.grid());
    Table hist{"history", {"scheme", "iteration", "qfi"}, {}};
    add_history(hist, res.qfi_history, "hybrid");
    ExperimentResult out;
    out.tables.push_back(std::move(controls));
    out.tables.push_back(std::move(hist));
    out.summary["best_qfi"] = res.best_objective;
    double amax = 0.0;
    for (const auto &row : res.best_controls) {
        for (double x : row) {
            amax = std::max(amax, std::abs(x));
        }
    }
    out.summary["max_amplitude"] = amax;
    return out;
}

/// Hybrid optimization followed by the QFI curve under the best controls.
struct HybridRun {
    GrapeResult grape;
    std::vector<double> curve;
};

inline HybridRun hybrid_run(const RunConfig &cfg, const SystemParams &p,
                            const DensityMatrix &rho0,
                            const EvolutionMode &mode) {
    HybridRun r;
    r.grape = optimize(cfg.grape(mode), p, rho0);
    r.curve = qfi_curve(rho0, p, r.grape.best_controls, mode, cfg.grid());
    return r;
}

inline ExperimentResult fig6a(const RunConfig &cfg) {
    const std::vector<std::string> probes{"plus_plus", "phi_plus", "psi_plus"};
    const auto runs = parallel_map<HybridRun>(
        probes.size(), cfg.threads, [&](std::size_t i) {
            return hybrid_run(cfg, cfg.params(),
                              DensityMatrix(probe_state(probes[i])),
                              hybrid_mode(cfg));
        });
    Table t{"qfi", {"probe", "t", "qfi"}, {}};
    json best = json::object();
    for (std::size_t i = 0; i < probes.size(); ++i) {
        add_curve(t, runs[i].curve, cfg.grid(), probes[i]);
        best[probes[i]] = runs[i].grape.best_objective;
    }
    ExperimentResult out;
    out.tables.push_back(std::move(t));
    out.summary["best_qfi"] = best;
    return out;
}

inline ExperimentResult fig6b(const RunConfig &cfg) {
    const auto gs = g_values(cfg, {0.1, 0.2, 0.3});
    const auto runs =
        parallel_map<HybridRun>(gs.size(), cfg.threads, [&](std::size_t i) {
            return hybrid_run(cfg, cfg.params().with_g(gs[i]),
                              cfg.initial_state(), hybrid_mode(cfg));
        });
    Table t{"qfi", {"g_true", "t", "qfi"}, {}};
    json best = json::array();
    for (std::size_t i = 0; i < gs.size(); ++i) {
        for (std::size_t n = 0; n < runs[i].curve.size(); ++n) {
            t.add(gs[i], cfg.grid().time(static_cast<int>(n)), runs[i].curve[n]);
        }
        best.push_back({{"g_true", gs[i]}, {"best_qfi", runs[i].grape.best_objective}});
    }
    ExperimentResult out;
    out.tables.push_back(std::move(t));
    out.summary["best_qfi"] = best;
    return out;
}

inline ExperimentResult fig7a(const RunConfig &cfg) {
    const std::vector<EvolutionMode> modes{hybrid_mode(cfg),
                                           EvolutionMode::free()};
    const std::vector<std::string> labels{"hybrid", "grape"};
    const auto runs = parallel_map<GrapeResult>(
        modes.size(), cfg.threads, [&](std::size_t i) {
            return optimize(cfg.grape(modes[i]), cfg.params(),
                            cfg.initial_state());
        });
    Table t{"history", {"scheme", "iteration", "qfi"}, {}};
    json best = json::object();
    for (std::size_t i = 0; i < modes.size(); ++i) {
        add_history(t, runs[i].qfi_history, labels[i]);
        best[labels[i]] = runs[i].best_objective;
    }
    ExperimentResult out;
    out.tables.push_back(std::move(t));
    out.summary["best_qfi"] = best;
    return out;
}

inline ExperimentResult fig7b(const RunConfig &cfg) {
    const auto p = cfg.params();
    const auto free_curve = uncontrolled_curve(cfg, p, EvolutionMode::free());
    const auto fb_curve = uncontrolled_curve(cfg, p, hybrid_mode(cfg));
    const auto hyb = hybrid_run(cfg, p, cfg.initial_state(), hybrid_mode(cfg));
    Table t{"qfi", {"scheme", "t", "qfi"}, {}};
    add_curve(t, free_curve, cfg.grid(), "none");
    add_curve(t, fb_curve, cfg.grid(), "feedback");
    add_curve(t, hyb.curve, cfg.grid(), "hybrid");
    const auto free_peak = curve_peak(free_curve, cfg.grid());
    ExperimentResult out;
    out.tables.push_back(std::move(t));
    out.summary["free_peak"] = free_peak.value;
    out.summary["feedback_at_T"] = fb_curve.back();
    out.summary["hybrid_best"] = hyb.grape.best_objective;
    out.summary["hybrid_over_free_peak"] = hyb.grape.best_objective / free_peak.value;
    return out;
}

struct BayesCell {
    Scheme scheme;
    SampleKind kind;
    EstimateRecord record;
};

inline std::vector<BayesCell> bayes_cells(const RunConfig &cfg,
                                          const std::vector<Scheme> &schemes) {
    std::vector<BayesCell> cells;
    for (auto s : schemes) {
        for (auto k : {SampleKind::Imperfect, SampleKind::Perfect}) {
            cells.push_back({s, k, {}});
        }
    }
    const auto rho0 = cfg.initial_state();
    parallel_for(cells.size(), cfg.threads, [&](std::size_t i) {
        cells[i].record = run_protocol(cfg.bayes(cells[i].scheme, cells[i].kind),
                                       cfg.params(), rho0);
    });
    return cells;
}

inline ExperimentResult fig9(const RunConfig &cfg) {
    const auto cells = bayes_cells(cfg, {Scheme::None, Scheme::Feedback});
    Table t{"estimates", {"scheme", "sample_kind", "batch", "estimate"}, {}};
    json mse = json::array();
    for (const auto &c : cells) {
        const auto est = c.record.estimates();
        for (std::size_t n = 0; n < est.size(); ++n) {
            t.add(to_string(c.scheme), to_string(c.kind),
                  static_cast<int>(n + 1), est[n]);
        }
        mse.push_back({{"scheme", to_string(c.scheme)},
                       {"sample_kind", to_string(c.kind)},
                       {"mse", c.record.mse}});
    }
    ExperimentResult out;
    out.tables.push_back(std::move(t));
    out.summary["mse"] = mse;
    return out;
}

inline ExperimentResult table1(const RunConfig &cfg) {
    const auto cells =
        bayes_cells(cfg, {Scheme::None, Scheme::Feedback, Scheme::Hybrid});
    Table t{"mse", {"scheme", "sample_kind", "mse"}, {}};
    Table est{"estimates", {"scheme", "sample_kind", "batch", "estimate"}, {}};
    for (const auto &c : cells) {
        t.add(to_string(c.scheme), to_string(c.kind), c.record.mse);
        const auto e = c.record.estimates();
        for (std::size_t n = 0; n < e.size(); ++n) {
            est.add(to_string(c.scheme), to_string(c.kind),
                    static_cast<int>(n + 1), e[n]);
        }
    }
    ExperimentResult out;
    out.tables.push_back(std::move(t));
    out.tables.push_back(std::move(est));
    return out;
}

/// QFI curve of the configured scheme; hybrid optimizes controls first.
inline ExperimentResult custom(const RunConfig &cfg) {
    ExperimentResult out;
    Table t{"qfi", {"t", "qfi"}, {}};
    std::vector<double> curve;
    if (cfg.scheme == Scheme::Hybrid) {
        const auto r =
            hybrid_run(cfg, cfg.params(), cfg.initial_state(), hybrid_mode(cfg));
        curve = r.curve;
        Table controls{"controls", {"segment", "t", "channel", "amplitude"}, {}};
        add_controls(controls, r.grape.best_controls, cfg.grid());
        out.tables.push_back(std::move(controls));
        out.summary["best_qfi"] = r.grape.best_objective;
    } else {
        curve = uncontrolled_curve(cfg, cfg.params(), cfg.mode());
    }
    for (std::size_t n = 0; n < curve.size(); ++n) {
        t.add(cfg.grid().time(static_cast<int>(n)), curve[n]);
    }
    const auto pk = curve_peak(curve, cfg.grid());
    out.summary["t_peak"] = pk.t;
    out.summary["qfi_peak"] = pk.value;
    out.tables.insert(out.tables.begin(), std::move(t));
    return out;
}

} // namespace pipelines

/// Runs a named pipeline entirely in memory.
inline ExperimentResult run_experiment(const RunConfig &cfg) {
    cfg.validate();
    const auto &id = cfg.experiment;
    using namespace pipelines;
    if (id == "fig1") return fig1(cfg);
    if (id == "fig2") return fig2(cfg);
    if (id == "fig3a") return fig3a(cfg);
    if (id == "fig3b") return fig3b(cfg);
    if (id == "fig4a") return fig4a(cfg);
    if (id == "fig4b") return fig4b(cfg);
    if (id == "fig5a") return fig5(cfg, false);
    if (id == "fig5b") return fig5(cfg, true);
    if (id == "fig6a") return fig6a(cfg);
    if (id == "fig6b") return fig6b(cfg);
    if (id == "fig7a") return fig7a(cfg);
    if (id == "fig7b") return fig7b(cfg);
    if (id == "fig9") return fig9(cfg);
    if (id == "table1") return table1(cfg);
    return custom(cfg);
}

// ---------------------------------------------------------------------------
// Scans

struct Axis {
    std::string name;
    std::vector<double> values;
};

/// `name=lo:hi:n` (inclusive linspace) or `name=v1,v2,...`.
inline Axis parse_axis(std::string_view text) {
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) {
        throw ConfigError("axis '" + std::string(text) + "' lacks '='");
    }
    Axis a{std::string(text.substr(0, eq)), {}};
    static const std::set<std::string> names{"t", "lambda", "eta", "g"};
    if (!names.count(a.name)) {
        throw ConfigError("unknown scan axis '" + a.name +
                          "' (expected t, lambda, eta or g)");
    }
    std::string body(text.substr(eq + 1));
    auto number = [&](const std::string &s) {
        double x = 0.0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
            throw ConfigError("axis " + a.name + ": bad number '" + s + "'");
        }
        return x;
    };
    auto split = [](const std::string &s, char sep) {
        std::vector<std::string> parts;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, sep)) {
            parts.push_back(item);
        }
        return parts;
    };
    if (body.find(':') != std::string::npos) {
        const auto parts = split(body, ':');
        if (parts.size() != 3) {
            throw ConfigError("axis " + a.name + ": expected lo:hi:n");
        }
        int n = 0;
        const auto res = std::from_chars(parts[2].data(),
                                         parts[2].data() + parts[2].size(), n);
        if (res.ec != std::errc() || n < 1) {
            throw ConfigError("axis " + a.name + ": bad point count");
        }
        a.values = linspace(number(parts[0]), number(parts[1]), n);
    } else {
        for (const auto &s : split(body, ',')) {
            a.values.push_back(number(s));
        }
    }
    if (a.values.empty()) {
        throw ConfigError("axis " + a.name + " has no points");
    }
    return a;
}

inline std::string_view scan_metric_check(std::string_view metric) {
    if (metric != "qfi" && metric != "qfi_max") {
        throw ConfigError("unknown metric '" + std::string(metric) +
                          "' (expected qfi or qfi_max)");
    }
    return metric;
}

/**
 * Metric at one scan point. A λ or η axis switches the configured scheme to
 * feedback; `qfi` is taken at time t (default T), `qfi_max` is the peak
 * over the configured time grid.
 */
inline double scan_point(const RunConfig &cfg, const std::map<std::string, double> &at,
                         std::string_view metric) {
    const bool has_lambda = at.count("lambda") != 0;
    const bool has_eta = at.count("eta") != 0;
    EvolutionMode mode = cfg.mode();
    if (has_lambda || has_eta) {
        const double lambda = has_lambda ? at.at("lambda") : cfg.lambda;
        mode = has_eta ? EvolutionMode::imperfect(lambda, at.at("eta"),
                                                  cfg.feedback_channels)
                       : EvolutionMode::feedback(lambda, cfg.feedback_channels);
        mode.config.validate();
    }
    SystemParams p = cfg.params();
    if (at.count("g")) {
        p.g = at.at("g");
    }
    if (metric == "qfi_max") {
        return curve_peak(uncontrolled_curve(cfg, p, mode), cfg.grid()).value;
    }
    const double t = at.count("t") ? at.at("t") : cfg.T;
    if (t < 0.0) {
        throw ConfigError("scan time must be non-negative");
    }
    if (t == 0.0) {
        return 0.0;
    }
    const TimeGrid single{t, 1};
    return objective(zero_controls(1), p, mode, single,
                     cfg.initial_state().matrix());
}

inline ExperimentResult run_scan(const RunConfig &cfg,
                                 const std::vector<Axis> &axes,
                                 std::string_view metric) {
    cfg.validate();
    scan_metric_check(metric);
    if (axes.empty() || axes.size() > 2) {
        throw ConfigError("scan takes one or two axes");
    }
    if (axes.size() == 2 && axes[0].name == axes[1].name) {
        throw ConfigError("scan axes must differ");
    }
    if (cfg.scheme == Scheme::Hybrid) {
        throw ConfigError("scan evaluates uncontrolled dynamics; use scheme "
                          "none or feedback");
    }
    for (const auto &a : axes) {
        if (a.name == "t" && metric == "qfi_max") {
            throw ConfigError("metric qfi_max already maximizes over t");
        }
    }
    const std::size_t inner = axes.size() == 2 ? axes[1].values.size() : 1;
    const std::size_t total = axes[0].values.size() * inner;
    const auto values = parallel_map<double>(total, cfg.threads, [&](std::size_t k) {
        std::map<std::string, double> at;
        at[axes[0].name] = axes[0].values[k / inner];
        if (axes.size() == 2) {
            at[axes[1].name] = axes[1].values[k % inner];
        }
        return scan_point(cfg, at, metric);
    });
    Table t{"scan", {}, {}};
    for (const auto &a : axes) {
        t.columns.push_back(a.name);
    }
    t.columns.emplace_back(metric);
    for (std::size_t k = 0; k < total; ++k) {
        std::vector<std::string> row{format_number(axes[0].values[k / inner])};
        if (axes.size() == 2) {
            row.push_back(format_number(axes[1].values[k % inner]));
        }
        row.push_back(format_number(values[k]));
        t.rows.push_back(std::move(row));
    }
    ExperimentResult out;
    out.tables.push_back(std::move(t));
    return out;
}

// ---------------------------------------------------------------------------
// Output

inline std::filesystem::path default_output_dir() {
    if (const char *env = std::getenv("ZZQ_OUTPUT_DIR"); env && *env) {
        return env;
    }
    return "zzq-out";
}

inline std::filesystem::path resolve_output_dir(const RunConfig &cfg) {
    return cfg.output_dir.empty() ? default_output_dir()
                                  : std::filesystem::path(cfg.output_dir);
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(
        std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

struct WrittenRun {
    std::filesystem::path directory;
    std::vector<std::filesystem::path> files;
    json manifest;
};

/**
 * Writes each table as `<name>.csv` plus `manifest.json` into `dir`.
 * Everything is staged in a sibling directory and renamed into place, so
 * a failure leaves no partial output behind.
 */
inline WrittenRun write_run(const std::filesystem::path &dir,
                            const RunConfig &cfg, const ExperimentResult &res,
                            const std::string &command, double wall_seconds,
                            const json &extra = json::object()) {
    namespace fs = std::filesystem;
    const fs::path staging =
        dir.parent_path() / (dir.filename().string() + ".partial");
    WrittenRun run;
    run.directory = dir;
    try {
        fs::remove_all(staging);
        fs::create_directories(staging);
        json outputs = json::array();
        for (const auto &t : res.tables) {
            const std::string text = to_csv(t);
            const fs::path file = staging / (t.name + ".csv");
            std::ofstream out(file, std::ios::binary);
            out << text;
            out.close();
            if (!out) {
                throw Error("failed writing " + file.string());
            }
            outputs.push_back({{"file", t.name + ".csv"},
                               {"rows", t.rows.size()},
                               {"sha256", sha256_hex(text)}});
            run.files.push_back(dir / (t.name + ".csv"));
        }
        json m;
        m["tool"] = "zzq";
        m["version"] = std::string(kVersion);
        m["command"] = command;
        m["experiment"] = cfg.experiment;
        m["seed"] = cfg.seed;
        m["config"] = cfg.to_json();
        for (const auto &[k, v] : extra.items()) {
            m[k] = v;
        }
        m["started_utc"] = utc_timestamp();
        m["wall_clock_seconds"] = wall_seconds;
        m["outputs"] = outputs;
        m["summary"] = res.summary;
        std::ofstream mf(staging / "manifest.json", std::ios::binary);
        mf << m.dump(2) << '\n';
        mf.close();
        if (!mf) {
            throw Error("failed writing manifest");
        }
        run.files.push_back(dir / "manifest.json");
        run.manifest = std::move(m);
        fs::remove_all(dir);
        if (dir.has_parent_path()) {
            fs::create_directories(dir.parent_path());
        }
        fs::rename(staging, dir);
    } catch (...) {
        std::error_code ec;
        fs::remove_all(staging, ec);
        throw;
    }
    return run;
}

} // namespace zzq::exp
