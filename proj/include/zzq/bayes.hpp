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
 * Batch-adaptive Bayesian recovery of the coupling g.
 *
 * Each batch measures R copies of ρ_{g*}(T) with one POVM, updates a grid
 * posterior outcome by outcome, and takes the posterior mean as the batch
 * estimate. The next batch measures in the SLD eigenbasis at that
 * estimate. Under the hybrid scheme the control field is re-optimized at
 * the estimate between batches, warm-started from the previous field.
 */

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dynamics.hpp"
#include "fisher.hpp"
#include "grape.hpp"
#include "model.hpp"
#include "qcore.hpp"

namespace zzq {

class DegeneratePosterior : public Error {
  public:
    using Error::Error;
};

inline constexpr int kOutcomes = 4;
using OutcomeProbs = std::array<double, kOutcomes>;
/// One row per grid value of g, one column per outcome.
using LikelihoodTable = std::vector<OutcomeProbs>;

enum class Scheme { None, Feedback, Hybrid };
enum class SampleKind { Perfect, Imperfect };

inline std::string_view to_string(Scheme s) {
    switch (s) {
    case Scheme::None:
        return "none";
    case Scheme::Feedback:
        return "feedback";
    case Scheme::Hybrid:
        return "hybrid";
    }
    return "none";
}

inline std::string_view to_string(SampleKind k) {
    return k == SampleKind::Perfect ? "perfect" : "imperfect";
}

inline Scheme parse_scheme(std::string_view s) {
    if (s == "none") {
        return Scheme::None;
    }
    if (s == "feedback") {
        return Scheme::Feedback;
    }
    if (s == "hybrid") {
        return Scheme::Hybrid;
    }
    throw Error("unknown scheme '" + std::string(s) + "'");
}

inline SampleKind parse_sample_kind(std::string_view s) {
    if (s == "perfect") {
        return SampleKind::Perfect;
    }
    if (s == "imperfect") {
        return SampleKind::Imperfect;
    }
    throw Error("unknown sample_kind '" + std::string(s) + "'");
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Generator for stream `stream` of a run seeded with `seed`.
inline std::mt19937_64 derive_stream(std::uint64_t seed, std::uint64_t stream) {
    return std::mt19937_64(splitmix64(seed ^ splitmix64(stream)));
}

/// Discretized distribution over candidate couplings.
class PosteriorGrid {
  public:
    PosteriorGrid(std::vector<double> values, std::vector<double> probs)
        : values_(std::move(values)), probs_(std::move(probs)) {
        if (values_.empty() || values_.size() != probs_.size()) {
            throw Error("PosteriorGrid: values/probs size mismatch");
        }
        for (std::size_t i = 1; i < values_.size(); ++i) {
            if (!(values_[i] > values_[i - 1])) {
                throw Error("PosteriorGrid: values not strictly increasing");
            }
        }
        double total = 0.0;
        for (double q : probs_) {
            if (!(q >= 0.0)) {
                throw Error("PosteriorGrid: negative probability");
            }
            total += q;
        }
        if (std::abs(total - 1.0) > 1e-10) {
            throw Error("PosteriorGrid: probabilities do not sum to 1");
        }
    }

    /// n equally spaced values on [lo, hi] inclusive, uniform weights.
    static PosteriorGrid uniform(double lo = 0.0, double hi = 0.2,
                                 int n = 100) {
        if (n < 2 || !(hi > lo)) {
            throw Error("PosteriorGrid::uniform: need n >= 2 and hi > lo");
        }
        std::vector<double> v(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            v[i] = lo + (hi - lo) * i / (n - 1);
        }
        v.back() = hi;
        return {std::move(v), std::vector<double>(n, 1.0 / n)};
    }

    [[nodiscard]] const std::vector<double> &values() const noexcept {
        return values_;
    }
    [[nodiscard]] const std::vector<double> &probs() const noexcept {
        return probs_;
    }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }

  private:
    std::vector<double> values_;
    std::vector<double> probs_;
};

struct BayesConfig {
    int batches = 20;
    int copies_per_batch = 100;
    Scheme scheme = Scheme::Feedback;
    SampleKind sample_kind = SampleKind::Perfect;
    std::uint64_t seed = 0;
    TimeGrid grid{};
    double g_true = 0.1;
    double g_lo = 0.0;
    double g_hi = 0.2;
    int grid_points = 100;
    double lambda = std::numbers::pi / 2;
    FeedbackChannels channels = FeedbackChannels::First;
    /// Per-batch control re-optimization under the hybrid scheme.
    int grape_iterations = 50;
    double grape_epsilon = 0.01;
    std::optional<double> grape_clip = 0.2;
    GradientMethod grape_gradient = GradientMethod::FiniteDifference;

    void validate() const {
        if (batches < 1 || copies_per_batch < 1) {
            throw Error("BayesConfig: batches and copies must be >= 1");
        }
        grid.validate();
        if (grid_points < 2 || !(g_hi > g_lo)) {
            throw Error("BayesConfig: invalid g grid");
        }
    }

    [[nodiscard]] EvolutionMode mode() const {
        return scheme == Scheme::None
                   ? EvolutionMode::free()
                   : EvolutionMode::feedback(lambda, channels);
    }
};

struct BatchRecord {
    double estimate = 0.0;
    std::vector<double> posterior;
    std::vector<Mat4> povm;
    std::vector<int> samples;
    std::array<int, kOutcomes> counts{};
};

struct EstimateRecord {
    std::vector<BatchRecord> batches;
    double mse = 0.0;

    [[nodiscard]] std::vector<double> estimates() const {
        std::vector<double> out;
        out.reserve(batches.size());
        for (const auto &b : batches) {
            out.push_back(b.estimate);
        }
        return out;
    }
};

/// The four fixed rank-1 projectors used before any estimate exists.
inline MeasurementSet initial_povm() {
    const cplx i = kI;
    std::array<Vec4, 4> v;
    // Each element is v vᴴ / 4 for a vector of unit-modulus entries.
    v[0] << 1.0, -i, -i, 1.0;
    v[1] << 1.0, -i, i, -1.0;
    v[2] << 1.0, i, -i, -1.0;
    v[3] << 1.0, i, i, 1.0;
    std::vector<Mat4> elems;
    for (const auto &x : v) {
        elems.push_back(0.25 * x * x.adjoint());
    }
    return MeasurementSet(std::move(elems));
}

/// Tr(ρM_l), negatives clamped to zero, renormalized.
inline OutcomeProbs outcome_probs(const Mat4 &rho, const MeasurementSet &povm) {
    if (povm.size() != kOutcomes) {
        throw DimensionMismatch("outcome_probs: expected four POVM elements");
    }
    OutcomeProbs out{};
    double total = 0.0;
    for (int l = 0; l < kOutcomes; ++l) {
        out[l] = std::max(0.0, (rho * povm[l]).trace().real());
        total += out[l];
    }
    if (!(total > 0.0)) {
        throw InvalidState("outcome_probs: all probabilities vanish");
    }
    for (double &q : out) {
        q /= total;
    }
    return out;
}

inline OutcomeProbs outcome_probs(const DensityMatrix &rho,
                                  const MeasurementSet &povm) {
    return outcome_probs(rho.matrix(), povm);
}

/// Largest-remainder rounding of R·probs; ties go to the lower index.
inline std::array<int, kOutcomes> perfect_counts(const OutcomeProbs &probs,
                                                 int copies) {
    std::array<int, kOutcomes> counts{};
    std::array<double, kOutcomes> frac{};
    int assigned = 0;
    for (int l = 0; l < kOutcomes; ++l) {
        const double exact = probs[l] * copies;
        counts[l] = static_cast<int>(std::floor(exact + 1e-12));
        frac[l] = exact - counts[l];
        assigned += counts[l];
    }
    std::array<int, kOutcomes> order{0, 1, 2, 3};
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return frac[a] > frac[b] + 1e-12; });
    for (int k = 0; assigned < copies; k = (k + 1) % kOutcomes, ++assigned) {
        ++counts[order[k]];
    }
    return counts;
}

/// Outcomes in exact expected proportions, in shuffled order.
inline std::vector<int> sample_perfect(const OutcomeProbs &probs, int copies,
                                       std::mt19937_64 &rng) {
    const auto counts = perfect_counts(probs, copies);
    std::vector<int> seq;
    seq.reserve(copies);
    for (int l = 0; l < kOutcomes; ++l) {
        seq.insert(seq.end(), counts[l], l);
    }
    std::shuffle(seq.begin(), seq.end(), rng);
    return seq;
}

/// Outcome l with u ∈ (d_{l−1}, d_l], d the cumulative probabilities.
inline int roulette_pick(const OutcomeProbs &probs, double u) {
    double cumulative = 0.0;
    for (int l = 0; l < kOutcomes; ++l) {
        cumulative += probs[l];
        if (u <= cumulative) {
            return l;
        }
    }
    // Round-off left the last cumulative just below u.
    for (int l = kOutcomes - 1; l >= 0; --l) {
        if (probs[l] > 0.0) {
            return l;
        }
    }
    return kOutcomes - 1;
}

/// Independent draws by the cumulative-probability roulette wheel.
inline std::vector<int> sample_roulette(const OutcomeProbs &probs, int copies,
                                        std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<int> seq;
    seq.reserve(copies);
    for (int r = 0; r < copies; ++r) {
        seq.push_back(roulette_pick(probs, unit(rng)));
    }
    return seq;
}

/// Likelihoods below this are raised to it inside updates.
inline constexpr double kLikelihoodFloor = 1e-12;

/// One Bayes step: posterior ∝ prior · P(outcome | g).
inline PosteriorGrid posterior_update(const PosteriorGrid &prior, int outcome,
                                      const LikelihoodTable &table) {
    if (table.size() != prior.size()) {
        throw DimensionMismatch("posterior_update: table rows != grid size");
    }
    if (outcome < 0 || outcome >= kOutcomes) {
        throw Error("posterior_update: outcome out of range");
    }
    std::vector<double> post(prior.size());
    double norm = 0.0;
    for (std::size_t i = 0; i < post.size(); ++i) {
        post[i] =
            prior.probs()[i] * std::max(table[i][outcome], kLikelihoodFloor);
        norm += post[i];
    }
    if (!(norm > 1e-300)) {
        throw DegeneratePosterior("posterior_update: evidence vanished");
    }
    for (double &q : post) {
        q /= norm;
    }
    return {prior.values(), std::move(post)};
}

/// Sequential updates over a whole outcome sequence.
inline PosteriorGrid posterior_update(PosteriorGrid grid,
                                      std::span<const int> outcomes,
                                      const LikelihoodTable &table) {
    for (int y : outcomes) {
        grid = posterior_update(grid, y, table);
    }
    return grid;
}

/// Single update with the product of likelihoods, in log space.
inline PosteriorGrid posterior_update_counts(
    const PosteriorGrid &prior, const std::array<int, kOutcomes> &counts,
    const LikelihoodTable &table) {
    if (table.size() != prior.size()) {
        throw DimensionMismatch("posterior_update_counts: table size");
    }
    std::vector<double> logw(prior.size());
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < logw.size(); ++i) {
        double lw = std::log(prior.probs()[i]);
        for (int l = 0; l < kOutcomes; ++l) {
            lw += counts[l] * std::log(std::max(table[i][l], kLikelihoodFloor));
        }
        logw[i] = lw;
        peak = std::max(peak, lw);
    }
    if (!std::isfinite(peak)) {
        throw DegeneratePosterior("posterior_update_counts: evidence vanished");
    }
    double norm = 0.0;
    for (double &w : logw) {
        w = std::exp(w - peak);
        norm += w;
    }
    for (double &w : logw) {
        w /= norm;
    }
    return {prior.values(), std::move(logw)};
}

inline double posterior_mean(const PosteriorGrid &grid) {
    double m = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        m += grid.values()[i] * grid.probs()[i];
    }
    return m;
}

/// SLD eigenbasis of ρ(T) at g = g_hat under the given controls and mode.
inline MeasurementSet refresh_povm(double g_hat, const EvolutionMode &mode,
                                   std::span<const ControlVector> controls,
                                   const SystemParams &p, const TimeGrid &grid,
                                   const DensityMatrix &rho0) {
    const auto sd = final_state_with_sensitivity(
        rho0.matrix(), p.with_g(g_hat), controls, mode, grid);
    return optimal_povm_from_sld(compute_sld(sd.rho, sd.drho));
}

/// ρ_g(T) for every grid value; rows of the likelihood table come from these.
inline std::vector<Mat4> grid_states(const PosteriorGrid &grid,
                                     const EvolutionMode &mode,
                                     std::span<const ControlVector> controls,
                                     const SystemParams &p,
                                     const TimeGrid &tgrid,
                                     const DensityMatrix &rho0) {
    std::vector<Mat4> out;
    out.reserve(grid.size());
    for (double g : grid.values()) {
        out.push_back(
            final_state(rho0.matrix(), p.with_g(g), controls, mode, tgrid));
    }
    return out;
}

inline LikelihoodTable likelihood_table(std::span<const Mat4> states,
                                        const MeasurementSet &povm) {
    LikelihoodTable table;
    table.reserve(states.size());
    for (const auto &rho : states) {
        table.push_back(outcome_probs(rho, povm));
    }
    return table;
}

/**
 * Runs the full batch protocol. `p` supplies ω and γ; its g is ignored in
 * favour of `cfg.g_true` for the truth and of each grid value for the
 * likelihoods.
 */
inline EstimateRecord run_protocol(const BayesConfig &cfg,
                                   const SystemParams &p,
                                   const DensityMatrix &rho0) {
    cfg.validate();
    p.validate();
    const EvolutionMode mode = cfg.mode();
    PosteriorGrid posterior =
        PosteriorGrid::uniform(cfg.g_lo, cfg.g_hi, cfg.grid_points);
    MeasurementSet povm = initial_povm();
    std::vector<ControlVector> controls = zero_controls(cfg.grid.M);

    GrapeConfig grape;
    grape.grid = cfg.grid;
    grape.iterations = cfg.grape_iterations;
    grape.epsilon = cfg.grape_epsilon;
    grape.clip = cfg.grape_clip;
    grape.mode = mode;
    grape.gradient_method = cfg.grape_gradient;

    EstimateRecord rec;
    std::vector<Mat4> states;
    Mat4 truth;
    bool stale = true;
    double g_hat = posterior_mean(posterior);
    for (int n = 0; n < cfg.batches; ++n) {
        if (cfg.scheme == Scheme::Hybrid && n >= 1) {
            controls =
                optimize(grape, p.with_g(g_hat), rho0, controls).best_controls;
            stale = true;
        }
        if (n >= 1) {
            povm = refresh_povm(g_hat, mode, controls, p, cfg.grid, rho0);
        }
        if (stale) {
            states = grid_states(posterior, mode, controls, p, cfg.grid, rho0);
            truth = final_state(rho0.matrix(), p.with_g(cfg.g_true), controls,
                                mode, cfg.grid);
            stale = false;
        }
        const auto table = likelihood_table(states, povm);
        const auto truth_probs = outcome_probs(truth, povm);

        auto rng = derive_stream(cfg.seed, static_cast<std::uint64_t>(n));
        BatchRecord batch;
        batch.samples =
            cfg.sample_kind == SampleKind::Perfect
                ? sample_perfect(truth_probs, cfg.copies_per_batch, rng)
                : sample_roulette(truth_probs, cfg.copies_per_batch, rng);
        for (int y : batch.samples) {
            ++batch.counts[y];
        }
        posterior = posterior_update(std::move(posterior), batch.samples, table);
        g_hat = posterior_mean(posterior);

        batch.estimate = g_hat;
        batch.posterior = posterior.probs();
        batch.povm = povm.elements();
        rec.batches.push_back(std::move(batch));
    }
    double acc = 0.0;
    for (const auto &b : rec.batches) {
        acc += (b.estimate - cfg.g_true) * (b.estimate - cfg.g_true);
    }
    rec.mse = acc / static_cast<double>(rec.batches.size());
    return rec;
}

} // namespace zzq
