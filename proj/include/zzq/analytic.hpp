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
 * Closed-form free evolution of the |++⟩ probe, used as an independent
 * oracle for the numerical propagator.
 *
 * Only entries whose closed forms are validated are provided. ρ24 and ρ34
 * (0-based (1,3) and (2,3)) are masked out; the numerical propagator is
 * the reference for them.
 */

#pragma once

#include <array>
#include <cmath>

#include "model.hpp"
#include "qcore.hpp"

namespace zzq {

struct AnalyticElements {
    Mat4 values = Mat4::Zero();
    /// mask[i][j] is true where values(i, j) holds a closed-form entry.
    std::array<std::array<bool, 4>, 4> mask{};

    [[nodiscard]] bool has(int i, int j) const { return mask[i][j]; }
};

/// ρ(t) from ρ(0) = |++⟩⟨++| under free Lindblad evolution, 0-based entries.
inline AnalyticElements analytic_free_rho(double t, const SystemParams &p) {
    const double g1 = p.gamma1;
    const double g2 = p.gamma2;
    const double w1 = p.omega1;
    const double w2 = p.omega2;
    const double g = p.g;
    auto cexp = [](double re, double im) {
        return std::exp(re) * cplx(std::cos(im), std::sin(im));
    };

    AnalyticElements out;
    auto set = [&out](int i, int j, cplx v) {
        out.values(i, j) = v;
        out.values(j, i) = std::conj(v);
        out.mask[i][j] = true;
        out.mask[j][i] = true;
    };

    // Populations: product of independent single-qubit decays.
    set(0, 0, 0.25 * std::exp(-(g1 + g2) * t));
    set(1, 1, 0.5 * std::exp(-g1 * t) - 0.25 * std::exp(-(g1 + g2) * t));
    set(2, 2, 0.5 * std::exp(-g2 * t) - 0.25 * std::exp(-(g1 + g2) * t));
    set(3, 3, 0.25 * std::exp(-(g1 + g2) * t) - 0.5 * std::exp(-g1 * t) -
                  0.5 * std::exp(-g2 * t) + 1.0);

    // Coherences that no jump feeds: half the summed decay of their levels.
    set(0, 1, 0.25 * cexp(-0.5 * (2.0 * g1 + g2) * t, -(2.0 * w2 + 2.0 * g) * t));
    set(0, 2, 0.25 * cexp(-0.5 * (g1 + 2.0 * g2) * t, -(2.0 * w1 + 2.0 * g) * t));
    set(0, 3, 0.25 * cexp(-0.5 * (g1 + g2) * t, -(2.0 * w1 + 2.0 * w2) * t));
    set(1, 2, 0.25 * cexp(-0.5 * (g1 + g2) * t, -2.0 * (w1 - w2) * t));
    return out;
}

} // namespace zzq
