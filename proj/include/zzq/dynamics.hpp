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
 * Piecewise-constant propagation of density matrices, and of their
 * derivative with respect to the coupling g, by exact segment exponentials.
 *
 * The sensitivity s = ∂ρ/∂g obeys ds/dt = 𝓛s + 𝓛_g ρ, so each segment is
 * advanced with the block-triangular exponential exp(dt·[[𝓛, 0], [𝓛_g, 𝓛]]).
 */

#pragma once

#include <cmath>
#include <span>
#include <sstream>
#include <utility>
#include <vector>

#include "model.hpp"
#include "qcore.hpp"

namespace zzq {

struct TimeGrid {
    double T = 80.0;
    int M = 100;

    [[nodiscard]] double dt() const { return T / M; }
    [[nodiscard]] double time(int n) const { return n * dt(); }

    void validate() const {
        if (!(T > 0.0) || !std::isfinite(T)) {
            throw Error("TimeGrid: T must be positive");
        }
        if (M < 1) {
            throw Error("TimeGrid: M must be at least 1");
        }
    }
};

struct Trajectory {
    std::vector<double> times;
    std::vector<DensityMatrix> states;
    /// ∂ρ/∂g at each time; empty unless requested.
    std::vector<Mat4> sensitivities;
};

/// State and its g-derivative at one instant.
struct StateDerivative {
    Mat4 rho;
    Mat4 drho;
};

inline std::vector<ControlVector> zero_controls(int m) {
    return std::vector<ControlVector>(static_cast<std::size_t>(m),
                                      ControlVector{});
}

/// One generator per segment, in time order.
inline std::vector<Superoperator>
segment_generators(const SystemParams &p,
                   std::span<const ControlVector> controls,
                   const EvolutionMode &mode) {
    std::vector<Superoperator> out;
    out.reserve(controls.size());
    const Superoperator base = build_liouvillian(p, Mat4::Zero(), mode);
    const auto &gens = control_generators();
    for (const auto &u : controls) {
        Superoperator l = base;
        for (int c = 0; c < kControlChannels; ++c) {
            if (u[c] != 0.0) {
                l += u[c] * gens[c];
            }
        }
        out.push_back(l);
    }
    return out;
}

inline Mat32 augmented_generator(const Superoperator &l,
                                 const Superoperator &dl) {
    Mat32 a = Mat32::Zero();
    a.topLeftCorner<16, 16>() = l;
    a.bottomLeftCorner<16, 16>() = dl;
    a.bottomRightCorner<16, 16>() = l;
    return a;
}

/// exp(𝓛ₙ dt) for every segment; repeated generators share one exponential.
inline std::vector<Superoperator>
segment_propagators(std::span<const Superoperator> gens, double dt) {
    std::vector<Superoperator> out;
    out.reserve(gens.size());
    for (std::size_t n = 0; n < gens.size(); ++n) {
        if (n > 0 && gens[n] == gens[n - 1]) {
            out.push_back(out.back());
        } else {
            out.push_back(mat_exp(Superoperator(gens[n] * dt)));
        }
    }
    return out;
}

/// Augmented 32x32 propagators carrying (vec ρ, vec ∂ρ).
inline std::vector<Mat32>
augmented_propagators(std::span<const Superoperator> gens,
                      const Superoperator &dgen, double dt) {
    std::vector<Mat32> out;
    out.reserve(gens.size());
    for (std::size_t n = 0; n < gens.size(); ++n) {
        if (n > 0 && gens[n] == gens[n - 1]) {
            out.push_back(out.back());
        } else {
            out.push_back(mat_exp(Mat32(augmented_generator(gens[n], dgen) * dt)));
        }
    }
    return out;
}

namespace detail {

inline void check_controls(std::span<const ControlVector> controls,
                           const TimeGrid &grid) {
    grid.validate();
    if (static_cast<int>(controls.size()) != grid.M) {
        std::ostringstream msg;
        msg << "controls length " << controls.size()
            << " does not match segment count " << grid.M;
        throw DimensionMismatch(msg.str());
    }
    for (const auto &u : controls) {
        for (double x : u) {
            if (!std::isfinite(x)) {
                throw Error("controls: non-finite amplitude");
            }
        }
    }
}

inline Mat4 checked_sensitivity(const Mat4 &s) {
    const Mat4 h = 0.5 * (s + s.adjoint());
    if (std::abs(h.trace()) > kStructTol) {
        std::ostringstream msg;
        msg << "sensitivity trace drifted to " << std::abs(h.trace());
        throw InvalidState(msg.str());
    }
    return h;
}

inline Vec32 stack(const Mat4 &rho, const Mat4 &drho) {
    Vec32 v;
    v.head<16>() = vectorize(rho);
    v.tail<16>() = vectorize(drho);
    return v;
}

inline StateDerivative unstack(const Vec32 &v) {
    return {unvectorize(Vec16(v.head<16>())), unvectorize(Vec16(v.tail<16>()))};
}

} // namespace detail

/**
 * states[n] = exp(𝓛ₙdt)···exp(𝓛₁dt) ρ0, each re-validated after
 * Hermitian symmetrization. Throws InvalidState on a violated invariant.
 */
inline Trajectory propagate(const DensityMatrix &rho0, const SystemParams &p,
                            std::span<const ControlVector> controls,
                            const EvolutionMode &mode, const TimeGrid &grid) {
    detail::check_controls(controls, grid);
    p.validate();
    const auto gens = segment_generators(p, controls, mode);
    const auto props = segment_propagators(gens, grid.dt());

    Trajectory traj;
    traj.times.reserve(grid.M + 1);
    traj.states.reserve(grid.M + 1);
    traj.times.push_back(0.0);
    traj.states.push_back(rho0);
    Vec16 v = vectorize(rho0.matrix());
    for (int n = 0; n < grid.M; ++n) {
        v = props[n] * v;
        traj.times.push_back(grid.time(n + 1));
        traj.states.push_back(DensityMatrix::hermitized(unvectorize(v)));
        v = vectorize(traj.states.back().matrix());
    }
    return traj;
}

/// Sensitivity propagation against an arbitrary derivative generator.
inline Trajectory
propagate_augmented(const DensityMatrix &rho0,
                    std::span<const Superoperator> gens,
                    const Superoperator &dgen, const TimeGrid &grid) {
    grid.validate();
    if (static_cast<int>(gens.size()) != grid.M) {
        throw DimensionMismatch("generator count does not match grid");
    }
    const auto props = augmented_propagators(gens, dgen, grid.dt());

    Trajectory traj;
    traj.times.reserve(grid.M + 1);
    traj.states.reserve(grid.M + 1);
    traj.sensitivities.reserve(grid.M + 1);
    traj.times.push_back(0.0);
    traj.states.push_back(rho0);
    traj.sensitivities.push_back(Mat4::Zero());
    Vec32 v = detail::stack(rho0.matrix(), Mat4::Zero());
    for (int n = 0; n < grid.M; ++n) {
        v = props[n] * v;
        const auto sd = detail::unstack(v);
        traj.times.push_back(grid.time(n + 1));
        traj.states.push_back(DensityMatrix::hermitized(sd.rho));
        traj.sensitivities.push_back(detail::checked_sensitivity(sd.drho));
        v = detail::stack(traj.states.back().matrix(),
                          traj.sensitivities.back());
    }
    return traj;
}

/// propagate() plus ∂ρ/∂g at every segment boundary (∂ρ0/∂g = 0).
inline Trajectory
propagate_with_sensitivity(const DensityMatrix &rho0, const SystemParams &p,
                           std::span<const ControlVector> controls,
                           const EvolutionMode &mode, const TimeGrid &grid) {
    detail::check_controls(controls, grid);
    p.validate();
    const auto gens = segment_generators(p, controls, mode);
    return propagate_augmented(rho0, gens, coupling_generator(), grid);
}

/// ρ(T) and ∂ρ(T)/∂g only, without per-step validation or storage.
inline StateDerivative
final_state_with_sensitivity(const Mat4 &rho0, const SystemParams &p,
                             std::span<const ControlVector> controls,
                             const EvolutionMode &mode, const TimeGrid &grid) {
    detail::check_controls(controls, grid);
    const auto gens = segment_generators(p, controls, mode);
    const auto props = augmented_propagators(gens, coupling_generator(),
                                             grid.dt());
    Vec32 v = detail::stack(rho0, Mat4::Zero());
    for (const auto &e : props) {
        v = e * v;
    }
    auto sd = detail::unstack(v);
    sd.rho = 0.5 * (sd.rho + sd.rho.adjoint());
    sd.drho = 0.5 * (sd.drho + sd.drho.adjoint());
    return sd;
}

/// ρ(T) only.
inline Mat4 final_state(const Mat4 &rho0, const SystemParams &p,
                        std::span<const ControlVector> controls,
                        const EvolutionMode &mode, const TimeGrid &grid) {
    detail::check_controls(controls, grid);
    const auto gens = segment_generators(p, controls, mode);
    const auto props = segment_propagators(gens, grid.dt());
    Vec16 v = vectorize(rho0);
    for (const auto &e : props) {
        v = e * v;
    }
    const Mat4 rho = unvectorize(v);
    return 0.5 * (rho + rho.adjoint());
}

} // namespace zzq
