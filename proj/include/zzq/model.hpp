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
 * Operators and Lindblad generators for two ZZ-coupled qubits with local
 * spontaneous emission, optional quantum-jump feedback on the emission
 * channels and a six-channel local control Hamiltonian.
 *
 * Basis convention: |0⟩ is the excited level |e⟩, |1⟩ the ground level
 * |f⟩, and qubit 1 is the left tensor factor. Units have ħ = 1.
 */

#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>

#include "qcore.hpp"

namespace zzq {

struct SystemParams {
    double omega1 = 1.0;
    double omega2 = 1.0;
    double g = 0.1;
    double gamma1 = 0.05;
    double gamma2 = 0.05;

    void validate() const {
        if (!(gamma1 >= 0.0) || !(gamma2 >= 0.0)) {
            throw Error("SystemParams: decay rates must be non-negative");
        }
        if (!std::isfinite(omega1) || !std::isfinite(omega2) ||
            !std::isfinite(g) || !std::isfinite(gamma1) ||
            !std::isfinite(gamma2)) {
            throw Error("SystemParams: non-finite value");
        }
    }

    [[nodiscard]] SystemParams with_g(double coupling) const {
        SystemParams p = *this;
        p.g = coupling;
        return p;
    }
};

/// Which jump channels are dressed by the feedback unitary.
enum class FeedbackChannels { First, Both };

/**
 * Feedback strength and detection efficiency.
 *
 * λ is accepted on [0, 2π] so scans can cover a full second period;
 * the physically distinct range is [0, π].
 */
struct FeedbackConfig {
    double lambda = std::numbers::pi / 2;
    double eta = 1.0;
    FeedbackChannels channels = FeedbackChannels::First;

    void validate() const {
        if (!(lambda >= 0.0 && lambda <= 2.0 * std::numbers::pi + 1e-12)) {
            throw Error("FeedbackConfig: lambda outside [0, 2pi]");
        }
        if (!(eta >= 0.0 && eta <= 1.0)) {
            throw Error("FeedbackConfig: eta outside [0, 1]");
        }
    }
};

/// Control amplitudes (u_x, u_y, u_z) for qubit 1 followed by qubit 2.
using ControlVector = std::array<double, 6>;

inline constexpr int kControlChannels = 6;

enum class ModeTag { Free, Feedback, ImperfectFeedback };

struct EvolutionMode {
    ModeTag tag = ModeTag::Free;
    FeedbackConfig config{};

    static EvolutionMode free() { return {ModeTag::Free, {}}; }

    static EvolutionMode feedback(double lambda,
                                  FeedbackChannels ch = FeedbackChannels::First) {
        return {ModeTag::Feedback, {lambda, 1.0, ch}};
    }

    static EvolutionMode imperfect(double lambda, double eta,
                                   FeedbackChannels ch = FeedbackChannels::First) {
        return {ModeTag::ImperfectFeedback, {lambda, eta, ch}};
    }

    /// Detection efficiency actually used: 0 for Free, 1 for Feedback.
    [[nodiscard]] double effective_eta() const {
        switch (tag) {
        case ModeTag::Free:
            return 0.0;
        case ModeTag::Feedback:
            return 1.0;
        case ModeTag::ImperfectFeedback:
            return config.eta;
        }
        return 0.0;
    }
};

inline std::string_view to_string(FeedbackChannels ch) {
    return ch == FeedbackChannels::Both ? "both" : "first";
}

inline FeedbackChannels parse_feedback_channels(std::string_view s) {
    if (s == "first") {
        return FeedbackChannels::First;
    }
    if (s == "both") {
        return FeedbackChannels::Both;
    }
    throw Error("unknown feedback_channels value '" + std::string(s) + "'");
}

struct Paulis {
    Mat2 x, y, z, minus, plus;
};

inline const Paulis &pauli_ops() {
    static const Paulis p = [] {
        Paulis out;
        out.x << 0, 1, 1, 0;
        out.y << 0, -kI, kI, 0;
        out.z << 1, 0, 0, -1;
        // |f⟩⟨e|: excited (index 0) to ground (index 1).
        out.minus << 0, 0, 1, 0;
        out.plus = out.minus.adjoint();
        return out;
    }();
    return p;
}

/// Single-qubit operator lifted onto qubit k ∈ {0, 1}.
inline Mat4 on_qubit(const Mat2 &op, int k) {
    return k == 0 ? kron2(op, Mat2::Identity()) : kron2(Mat2::Identity(), op);
}

inline Mat4 zz_operator() {
    const auto &s = pauli_ops();
    return kron2(s.z, s.z);
}

/// H0 = ω1 σz⊗I + ω2 I⊗σz + g σz⊗σz.
inline Mat4 build_h0(const SystemParams &p) {
    const auto &s = pauli_ops();
    return p.omega1 * on_qubit(s.z, 0) + p.omega2 * on_qubit(s.z, 1) +
           p.g * zz_operator();
}

/// The Pauli generator paired with control channel c (x, y, z per qubit).
inline Mat4 control_operator(int channel) {
    const auto &s = pauli_ops();
    const Mat2 *axis[3] = {&s.x, &s.y, &s.z};
    return on_qubit(*axis[channel % 3], channel / 3);
}

inline Mat4 build_hc(const ControlVector &u) {
    Mat4 h = Mat4::Zero();
    for (int c = 0; c < kControlChannels; ++c) {
        if (u[c] != 0.0) {
            h += u[c] * control_operator(c);
        }
    }
    return h;
}

/// U_fb = exp(iλσx) ⊗ I = (cos λ I + i sin λ σx) ⊗ I.
inline Mat4 feedback_unitary(double lambda) {
    const auto &s = pauli_ops();
    const Mat2 u =
        std::cos(lambda) * Mat2::Identity() + kI * std::sin(lambda) * s.x;
    return kron2(u, Mat2::Identity());
}

/// Kraus pair of one infinitesimal photodetection step.
struct JumpOps {
    Mat4 no_jump;                 // Ω0
    std::array<Mat4, 2> jump;     // Ω1 for each qubit's emission channel
};

/**
 * Ω1⁽ᵏ⁾ = √(γₖ dt) σ−⁽ᵏ⁾ and Ω0 = I − (iH + ½Σₖ γₖ σ+⁽ᵏ⁾σ−⁽ᵏ⁾) dt.
 * Complete to first order in dt.
 */
inline JumpOps jump_measurement_ops(const Mat4 &h,
                                    const std::array<double, 2> &gammas,
                                    double dt) {
    const auto &s = pauli_ops();
    JumpOps out;
    Mat4 decay = Mat4::Zero();
    for (int k = 0; k < 2; ++k) {
        const Mat4 lower = on_qubit(s.minus, k);
        out.jump[k] = std::sqrt(gammas[k] * dt) * lower;
        decay += 0.5 * gammas[k] * lower.adjoint() * lower;
    }
    out.no_jump = Mat4::Identity() - (kI * h + decay) * dt;
    return out;
}

/// 𝒟[J]ρ = JρJᴴ − ½{JᴴJ, ρ}
inline Mat16 dissipator(const Mat4 &jump) {
    const Mat4 jdj = jump.adjoint() * jump;
    return sandwich(jump, jump.adjoint()) - 0.5 * (spre(jdj) + spost(jdj));
}

/// 𝒟 with a recycled jump: UJρJᴴUᴴ − ½{JᴴJ, ρ}; equals 𝒟[UJ] for unitary U.
inline Mat16 feedback_dissipator(const Mat4 &u, const Mat4 &jump) {
    return dissipator(Mat4(u * jump));
}

/**
 * Generator 𝓛 with dvec(ρ)/dt = 𝓛 vec(ρ).
 *
 * Every mode goes through the same per-channel sum
 *   γₖ[η 𝒟[U σ−⁽ᵏ⁾] + (1 − η) 𝒟[σ−⁽ᵏ⁾]]
 * on dressed channels and γₖ 𝒟[σ−⁽ᵏ⁾] elsewhere, with η = 0 for Free and
 * η = 1 for Feedback, so the limiting cases agree bit for bit.
 */
inline Superoperator build_liouvillian(const SystemParams &p, const Mat4 &hc,
                                       const EvolutionMode &mode) {
    const auto &s = pauli_ops();
    Superoperator l = commutator_generator(build_h0(p) + hc);
    const double eta = mode.effective_eta();
    const bool dressed_any = mode.tag != ModeTag::Free;
    const Mat4 u = feedback_unitary(mode.config.lambda);
    const std::array<double, 2> gammas{p.gamma1, p.gamma2};
    for (int k = 0; k < 2; ++k) {
        const Mat4 lower = on_qubit(s.minus, k);
        const bool dressed =
            dressed_any &&
            (k == 0 || mode.config.channels == FeedbackChannels::Both);
        if (dressed) {
            l += gammas[k] * eta * feedback_dissipator(u, lower) +
                 gammas[k] * (1.0 - eta) * dissipator(lower);
        } else {
            l += gammas[k] * dissipator(lower);
        }
    }
    return l;
}

/// ∂𝓛/∂g = −i[σz⊗σz, ·]
inline const Superoperator &coupling_generator() {
    static const Superoperator l = commutator_generator(zz_operator());
    return l;
}

/// ∂𝓛/∂u_c = −i[σ_c, ·] for each control channel.
inline const std::array<Superoperator, kControlChannels> &
control_generators() {
    static const auto gens = [] {
        std::array<Superoperator, kControlChannels> out;
        for (int c = 0; c < kControlChannels; ++c) {
            out[c] = commutator_generator(control_operator(c));
        }
        return out;
    }();
    return gens;
}

/// vec(I)ᴴ𝓛: the row that gives d(tr ρ)/dt; zero for trace-preserving 𝓛.
inline Eigen::Matrix<cplx, 1, 16> trace_row(const Superoperator &l) {
    return vectorize(Mat4::Identity()).adjoint() * l;
}

} // namespace zzq
