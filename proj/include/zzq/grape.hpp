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
 * Gradient ascent on piecewise-constant controls to maximize the QFI of
 * ρ(T) with respect to g.
 *
 * Two gradients are available:
 *  - FiniteDifference: central differences of the exact QFI. A perturbed
 *    segment only changes one propagator, so each evaluation costs one
 *    segment exponential plus a product with a precomputed suffix.
 *  - Adjoint: the fixed-SLD surrogate Tr[ρ(T) L²] with L = L_s(T) held
 *    constant, back-propagated through the adjoint segment maps. Its
 *    segment derivatives use the exact Fréchet derivative of exp.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <cstdint>
#include <random>
#include <tuple>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dynamics.hpp"
#include "fisher.hpp"
#include "model.hpp"
#include "qcore.hpp"

namespace zzq {

enum class GradientMethod { Adjoint, FiniteDifference };

/// How the gradient is scaled before the step u ← u + ε·direction.
enum class StepRule {
    Raw,           // direction = ∇
    MaxNormalized  // direction = ∇ / max|∇|
};

inline std::string_view to_string(GradientMethod m) {
    return m == GradientMethod::Adjoint ? "adjoint" : "finite_difference";
}

inline GradientMethod parse_gradient_method(std::string_view s) {
    if (s == "adjoint") {
        return GradientMethod::Adjoint;
    }
    if (s == "finite_difference" || s == "fd") {
        return GradientMethod::FiniteDifference;
    }
    throw Error("unknown gradient_method '" + std::string(s) + "'");
}

struct GrapeConfig {
    TimeGrid grid{};
    double epsilon = 0.01;
    int iterations = 500;
    std::optional<double> clip = 0.2;
    EvolutionMode mode = EvolutionMode::feedback(std::numbers::pi / 2);
    GradientMethod gradient_method = GradientMethod::FiniteDifference;
    double fd_step = 1e-6;
    StepRule step_rule = StepRule::MaxNormalized;
    /// Extra runs from seeded random starts; 0 keeps the optimizer
    /// deterministic from the supplied (or zero) initial controls.
    int restarts = 0;
    std::uint64_t seed = 0;

    void validate() const {
        grid.validate();
        if (!(epsilon > 0.0)) {
            throw Error("GrapeConfig: epsilon must be positive");
        }
        if (iterations < 0) {
            throw Error("GrapeConfig: iterations must be non-negative");
        }
        if (clip && !(*clip > 0.0)) {
            throw Error("GrapeConfig: clip must be positive");
        }
        if (!(fd_step > 0.0)) {
            throw Error("GrapeConfig: fd_step must be positive");
        }
        mode.config.validate();
    }
};

struct GrapeResult {
    std::vector<ControlVector> controls;
    /// Objective after each ascent step.
    std::vector<double> qfi_history;
    std::vector<ControlVector> best_controls;
    double best_objective = -std::numeric_limits<double>::infinity();
};

using ControlGradient = std::vector<ControlVector>;

/// QFI of ρ(T) with respect to g.
inline double objective(std::span<const ControlVector> controls,
                        const SystemParams &p, const EvolutionMode &mode,
                        const TimeGrid &grid, const Mat4 &rho0) {
    const auto sd = final_state_with_sensitivity(rho0, p, controls, mode, grid);
    return qfi(sd.rho, sd.drho);
}

/// QFI at every segment boundary (index 0 is t = 0, where it is zero).
inline std::vector<double> qfi_curve(const DensityMatrix &rho0,
                                     const SystemParams &p,
                                     std::span<const ControlVector> controls,
                                     const EvolutionMode &mode,
                                     const TimeGrid &grid) {
    const auto traj = propagate_with_sensitivity(rho0, p, controls, mode, grid);
    std::vector<double> out;
    out.reserve(traj.states.size());
    for (std::size_t n = 0; n < traj.states.size(); ++n) {
        out.push_back(n == 0 ? 0.0 : qfi(traj.states[n], traj.sensitivities[n]));
    }
    return out;
}

/// Tr[ρ(T) K] for a fixed Hermitian K (K = L_fix² gives the surrogate).
inline double surrogate_objective(std::span<const ControlVector> controls,
                                  const SystemParams &p,
                                  const EvolutionMode &mode,
                                  const TimeGrid &grid, const Mat4 &rho0,
                                  const Mat4 &weight) {
    const Mat4 rho = final_state(rho0, p, controls, mode, grid);
    return (rho * weight).trace().real();
}

namespace detail {

/// Fréchet derivative of X ↦ exp(X) at `a` in direction `e`, both 16x16.
inline Mat16 exp_frechet(const Mat16 &a, const Mat16 &e) {
    Mat32 block = Mat32::Zero();
    block.topLeftCorner<16, 16>() = a;
    block.topRightCorner<16, 16>() = e;
    block.bottomRightCorner<16, 16>() = a;
    const Mat32 x = mat_exp(block);
    return x.topRightCorner<16, 16>();
}

inline void clip_controls(std::vector<ControlVector> &u,
                          const std::optional<double> &clip) {
    if (!clip) {
        return;
    }
    for (auto &row : u) {
        for (double &x : row) {
            x = std::clamp(x, -*clip, *clip);
        }
    }
}

} // namespace detail

/// Exact-objective gradient by central differences (step h per entry).
inline std::pair<double, ControlGradient>
objective_and_fd_gradient(std::span<const ControlVector> controls,
                          const SystemParams &p, const EvolutionMode &mode,
                          const TimeGrid &grid, const Mat4 &rho0,
                          double h = 1e-6) {
    detail::check_controls(controls, grid);
    const int m_count = grid.M;
    const double dt = grid.dt();
    const auto gens = segment_generators(p, controls, mode);
    const auto &dgen = coupling_generator();
    const auto props = augmented_propagators(gens, dgen, dt);

    std::vector<Vec32> forward(m_count + 1);
    forward[0] = detail::stack(rho0, Mat4::Zero());
    for (int n = 0; n < m_count; ++n) {
        forward[n + 1] = props[n] * forward[n];
    }
    // suffix[n] = P_M ··· P_{n+2}: maps the state after segment n+1 to T.
    std::vector<Mat32> suffix(m_count);
    suffix[m_count - 1] = Mat32::Identity();
    for (int n = m_count - 2; n >= 0; --n) {
        suffix[n] = suffix[n + 1] * props[n + 1];
    }

    auto qfi_of = [](const Vec32 &v) {
        auto sd = detail::unstack(v);
        sd.rho = 0.5 * (sd.rho + sd.rho.adjoint());
        sd.drho = 0.5 * (sd.drho + sd.drho.adjoint());
        return qfi(sd.rho, sd.drho);
    };

    const double base = qfi_of(forward[m_count]);
    const auto &cgens = control_generators();
    ControlGradient grad(static_cast<std::size_t>(m_count));
    std::array<std::array<Mat32, 2>, kControlChannels> perturbed;
    for (int n = 0; n < m_count; ++n) {
        const bool reuse = n > 0 && gens[n] == gens[n - 1];
        for (int c = 0; c < kControlChannels; ++c) {
            if (!reuse) {
                for (int sgn = 0; sgn < 2; ++sgn) {
                    const double step = sgn == 0 ? h : -h;
                    const Superoperator l = gens[n] + step * cgens[c];
                    perturbed[c][sgn] =
                        mat_exp(Mat32(augmented_generator(l, dgen) * dt));
                }
            }
            const Vec32 plus =
                suffix[n] * (perturbed[c][0] * forward[n]);
            const Vec32 minus =
                suffix[n] * (perturbed[c][1] * forward[n]);
            grad[n][c] = (qfi_of(plus) - qfi_of(minus)) / (2.0 * h);
        }
    }
    return {base, std::move(grad)};
}

/// Gradient of Tr[ρ(T) K] for fixed Hermitian K, by the adjoint method.
inline ControlGradient
surrogate_gradient(std::span<const ControlVector> controls,
                   const SystemParams &p, const EvolutionMode &mode,
                   const TimeGrid &grid, const Mat4 &rho0, const Mat4 &weight) {
    detail::check_controls(controls, grid);
    const int m_count = grid.M;
    const double dt = grid.dt();
    const auto gens = segment_generators(p, controls, mode);
    const auto props = segment_propagators(gens, dt);

    std::vector<Vec16> forward(m_count + 1);
    forward[0] = vectorize(rho0);
    for (int n = 0; n < m_count; ++n) {
        forward[n + 1] = props[n] * forward[n];
    }
    // costate[n] pulls back Tr[· K] from T to just after segment n+1.
    std::vector<Vec16> costate(m_count);
    costate[m_count - 1] = vectorize(weight);
    for (int n = m_count - 2; n >= 0; --n) {
        costate[n] = props[n + 1].adjoint() * costate[n + 1];
    }

    const auto &cgens = control_generators();
    ControlGradient grad(static_cast<std::size_t>(m_count));
    std::array<Mat16, kControlChannels> frechet;
    for (int n = 0; n < m_count; ++n) {
        if (n == 0 || gens[n] != gens[n - 1]) {
            const Mat16 a = gens[n] * dt;
            for (int c = 0; c < kControlChannels; ++c) {
                frechet[c] = detail::exp_frechet(a, Mat16(cgens[c] * dt));
            }
        }
        for (int c = 0; c < kControlChannels; ++c) {
            grad[n][c] =
                costate[n].dot(frechet[c] * forward[n]).real();
        }
    }
    return grad;
}

/// Central-difference gradient of the surrogate; test oracle.
inline ControlGradient
surrogate_gradient_fd(std::span<const ControlVector> controls,
                      const SystemParams &p, const EvolutionMode &mode,
                      const TimeGrid &grid, const Mat4 &rho0,
                      const Mat4 &weight, double h = 1e-6) {
    std::vector<ControlVector> u(controls.begin(), controls.end());
    ControlGradient grad(u.size());
    for (std::size_t n = 0; n < u.size(); ++n) {
        for (int c = 0; c < kControlChannels; ++c) {
            const double keep = u[n][c];
            u[n][c] = keep + h;
            const double fp = surrogate_objective(u, p, mode, grid, rho0, weight);
            u[n][c] = keep - h;
            const double fm = surrogate_objective(u, p, mode, grid, rho0, weight);
            u[n][c] = keep;
            grad[n][c] = (fp - fm) / (2.0 * h);
        }
    }
    return grad;
}

/// L_s(T)² at the given controls: the weight of the surrogate objective.
inline Mat4 sld_squared_at_T(std::span<const ControlVector> controls,
                             const SystemParams &p, const EvolutionMode &mode,
                             const TimeGrid &grid, const Mat4 &rho0) {
    const auto sd = final_state_with_sensitivity(rho0, p, controls, mode, grid);
    const auto l = compute_sld(sd.rho, sd.drho);
    return l.matrix * l.matrix;
}

/// Objective and the configured ascent direction at `controls`.
inline std::pair<double, ControlGradient>
objective_and_gradient(std::span<const ControlVector> controls,
                       const SystemParams &p, const GrapeConfig &cfg,
                       const Mat4 &rho0) {
    if (cfg.gradient_method == GradientMethod::FiniteDifference) {
        return objective_and_fd_gradient(controls, p, cfg.mode, cfg.grid, rho0,
                                         cfg.fd_step);
    }
    const auto sd =
        final_state_with_sensitivity(rho0, p, controls, cfg.mode, cfg.grid);
    const auto l = compute_sld(sd.rho, sd.drho);
    const Mat4 weight = l.matrix * l.matrix;
    return {qfi(sd.rho, sd.drho),
            surrogate_gradient(controls, p, cfg.mode, cfg.grid, rho0, weight)};
}

inline ControlGradient gradient(std::span<const ControlVector> controls,
                                const SystemParams &p, const GrapeConfig &cfg,
                                const Mat4 &rho0) {
    return objective_and_gradient(controls, p, cfg, rho0).second;
}

namespace detail {

inline GrapeResult ascend(const GrapeConfig &cfg, const SystemParams &p,
                          const Mat4 &rho0,
                          std::vector<ControlVector> controls) {
    GrapeResult res;
    res.best_controls = controls;
    if (cfg.iterations == 0) {
        res.controls = std::move(controls);
        return res;
    }
    res.qfi_history.reserve(cfg.iterations);
    auto [value, grad] = objective_and_gradient(controls, p, cfg, rho0);
    for (int it = 0; it < cfg.iterations; ++it) {
        double scale = cfg.epsilon;
        if (cfg.step_rule == StepRule::MaxNormalized) {
            double biggest = 0.0;
            for (const auto &row : grad) {
                for (double x : row) {
                    biggest = std::max(biggest, std::abs(x));
                }
            }
            scale = biggest > 0.0 ? cfg.epsilon / biggest : 0.0;
        }
        for (std::size_t n = 0; n < controls.size(); ++n) {
            for (int c = 0; c < kControlChannels; ++c) {
                controls[n][c] += scale * grad[n][c];
            }
        }
        clip_controls(controls, cfg.clip);
        if (it + 1 < cfg.iterations) {
            std::tie(value, grad) = objective_and_gradient(controls, p, cfg, rho0);
        } else {
            value = objective(controls, p, cfg.mode, cfg.grid, rho0);
        }
        res.qfi_history.push_back(value);
        if (value > res.best_objective) {
            res.best_objective = value;
            res.best_controls = controls;
        }
    }
    res.controls = std::move(controls);
    return res;
}

} // namespace detail

/**
 * Runs `cfg.iterations` ascent steps u ← clip(u + ε∇), starting from
 * `initial` (all zeros when empty). The raw history need not be monotone;
 * the best-seen controls are returned alongside the final ones.
 */
inline GrapeResult optimize(const GrapeConfig &cfg, const SystemParams &p,
                            const DensityMatrix &rho0,
                            std::vector<ControlVector> initial = {}) {
    cfg.validate();
    p.validate();
    if (initial.empty()) {
        initial = zero_controls(cfg.grid.M);
    }
    if (static_cast<int>(initial.size()) != cfg.grid.M) {
        throw DimensionMismatch("optimize: initial controls length mismatch");
    }
    detail::clip_controls(initial, cfg.clip);
    GrapeResult best = detail::ascend(cfg, p, rho0.matrix(), initial);

    const double span = cfg.clip.value_or(0.2);
    for (int r = 1; r <= cfg.restarts; ++r) {
        std::mt19937_64 rng(cfg.seed + static_cast<std::uint64_t>(r));
        std::uniform_real_distribution<double> dist(-0.5 * span, 0.5 * span);
        auto start = zero_controls(cfg.grid.M);
        for (auto &row : start) {
            for (double &x : row) {
                x = dist(rng);
            }
        }
        auto res = detail::ascend(cfg, p, rho0.matrix(), std::move(start));
        if (res.best_objective > best.best_objective) {
            best = std::move(res);
        }
    }
    return best;
}

} // namespace zzq
