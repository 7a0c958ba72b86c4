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

// Seeded random generators shared by the test suites.

#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "zzq/dynamics.hpp"
#include "zzq/fisher.hpp"
#include "zzq/model.hpp"
#include "zzq/qcore.hpp"

namespace zzq::testing {

class Gen {
  public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo = 0.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(rng_);
    }

    double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }

    cplx complex_normal() { return {normal(), normal()}; }

    int integer(int lo, int hi) {
        return std::uniform_int_distribution<int>(lo, hi)(rng_);
    }

    template <int N> Eigen::Matrix<cplx, N, N> matrix() {
        Eigen::Matrix<cplx, N, N> m;
        for (int i = 0; i < N; ++i) {
            for (int j = 0; j < N; ++j) {
                m(i, j) = complex_normal();
            }
        }
        return m;
    }

    /// B + Bᴴ with complex Gaussian B.
    template <int N> Eigen::Matrix<cplx, N, N> hermitian() {
        const auto b = matrix<N>();
        return b + b.adjoint();
    }

    /// Full-rank density matrix GGᴴ/Tr with an optional admixture of I/4.
    Mat4 density(double mix = 0.0) {
        const Mat4 g = matrix<4>();
        Mat4 rho = g * g.adjoint();
        rho /= rho.trace().real();
        rho = (1.0 - mix) * rho + mix * 0.25 * Mat4::Identity();
        return 0.5 * (rho + rho.adjoint());
    }

    Vec4 unit_vector() {
        Vec4 v;
        for (int i = 0; i < 4; ++i) {
            v(i) = complex_normal();
        }
        return v / v.norm();
    }

    /// Traceless Hermitian direction.
    Mat4 traceless_hermitian() {
        Mat4 h = hermitian<4>();
        h -= (h.trace() / 4.0) * Mat4::Identity();
        return h;
    }

    /// Random rank-1 projective measurement from a unitary's columns.
    MeasurementSet projective_povm() {
        const Mat4 q = Eigen::HouseholderQR<Mat4>(matrix<4>()).householderQ();
        std::vector<Mat4> elems;
        for (int k = 0; k < 4; ++k) {
            const Vec4 v = q.col(k);
            elems.push_back(v * v.adjoint());
        }
        return MeasurementSet(std::move(elems));
    }

    /// Random POVM Mₖ = S^{-1/2} Aₖ S^{-1/2} with S = Σ Aₖ.
    MeasurementSet general_povm(int n) {
        std::vector<Mat4> raw;
        Mat4 s = Mat4::Zero();
        for (int k = 0; k < n; ++k) {
            const Mat4 g = matrix<4>();
            raw.push_back(g * g.adjoint());
            s += raw.back();
        }
        Eigen::SelfAdjointEigenSolver<Mat4> es(s);
        const Mat4 inv_sqrt = es.eigenvectors() *
                              es.eigenvalues().cwiseInverse().cwiseSqrt().asDiagonal() *
                              es.eigenvectors().adjoint();
        std::vector<Mat4> elems;
        for (const auto &a : raw) {
            Mat4 m = inv_sqrt * a * inv_sqrt;
            elems.push_back(0.5 * (m + m.adjoint()));
        }
        // Absorb round-off so completeness holds to machine precision.
        Mat4 sum = Mat4::Zero();
        for (const auto &m : elems) {
            sum += m;
        }
        elems.back() += Mat4::Identity() - sum;
        return MeasurementSet(std::move(elems));
    }

    SystemParams params() {
        return {uniform(0.0, 2.0), uniform(0.0, 2.0), uniform(0.0, 0.5),
                uniform(0.0, 0.2), uniform(0.0, 0.2)};
    }

    EvolutionMode mode() {
        const auto ch = integer(0, 1) == 0 ? FeedbackChannels::First
                                           : FeedbackChannels::Both;
        switch (integer(0, 2)) {
        case 0:
            return EvolutionMode::free();
        case 1:
            return EvolutionMode::feedback(uniform(0.0, std::numbers::pi), ch);
        default:
            return EvolutionMode::imperfect(uniform(0.0, std::numbers::pi),
                                            uniform(0.0, 1.0), ch);
        }
    }

    std::vector<ControlVector> controls(int m, double amp) {
        std::vector<ControlVector> u(static_cast<std::size_t>(m));
        for (auto &row : u) {
            for (double &x : row) {
                x = uniform(-amp, amp);
            }
        }
        return u;
    }

  private:
    std::mt19937_64 rng_;
};

inline Mat4 plus_plus() { return optimal_probe().projector(); }

} // namespace zzq::testing
