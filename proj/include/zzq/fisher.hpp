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
 * Symmetric logarithmic derivative, quantum and classical Fisher
 * information, the SLD eigenbasis measurement, and the noiseless
 * pure-probe analysis that selects |++⟩.
 */

#pragma once

#include <cmath>
#include <sstream>
#include <utility>
#include <vector>

#include "model.hpp"
#include "qcore.hpp"

namespace zzq {

/// Pairs with λi + λj at or below this are treated as off-support.
inline constexpr double kSupportCutoff = 1e-12;

class DegenerateSupport : public Error {
  public:
    using Error::Error;
};

/// An outcome has vanishing probability but non-vanishing derivative.
class SingularOutcome : public Error {
  public:
    using Error::Error;
};

struct SLDOperator {
    Mat4 matrix;
    HermitianEigen basis_eigen;
};

/// Hermitian PSD elements summing to the identity.
class MeasurementSet {
  public:
    explicit MeasurementSet(std::vector<Mat4> elements)
        : elements_(std::move(elements)) {
        validate();
    }

    [[nodiscard]] const std::vector<Mat4> &elements() const noexcept {
        return elements_;
    }
    [[nodiscard]] std::size_t size() const noexcept { return elements_.size(); }
    [[nodiscard]] const Mat4 &operator[](std::size_t i) const {
        return elements_[i];
    }

    /// max-abs deviation of Σ M_y from I.
    [[nodiscard]] double completeness_error() const {
        Mat4 sum = Mat4::Zero();
        for (const auto &m : elements_) {
            sum += m;
        }
        return detail::max_abs(sum - Mat4::Identity());
    }

  private:
    void validate() const {
        if (elements_.empty()) {
            throw Error("MeasurementSet: no elements");
        }
        for (const auto &m : elements_) {
            if (!is_hermitian(m)) {
                throw Error("MeasurementSet: element is not Hermitian");
            }
            Eigen::SelfAdjointEigenSolver<Mat4> solver(
                Mat4(0.5 * (m + m.adjoint())), Eigen::EigenvaluesOnly);
            if (solver.eigenvalues().minCoeff() < -kStructTol) {
                throw Error("MeasurementSet: element is not PSD");
            }
        }
        if (completeness_error() > kStructTol) {
            throw Error("MeasurementSet: elements do not sum to identity");
        }
    }

    std::vector<Mat4> elements_;
};

namespace detail {

/// ⟨λi|∂ρ|λj⟩ in the eigenbasis of ρ.
inline Mat4 in_eigenbasis(const HermitianEigen &e, const Mat4 &op) {
    return e.vectors.adjoint() * op * e.vectors;
}

inline void check_derivative(const Mat4 &drho) {
    if (!is_hermitian(drho)) {
        throw NotHermitian("state derivative is not Hermitian");
    }
}

} // namespace detail

/// L = Σ_{λi+λj>cutoff} 2⟨λi|∂ρ|λj⟩/(λi+λj) |λi⟩⟨λj|; zero off support.
inline SLDOperator compute_sld(const Mat4 &rho, const Mat4 &drho) {
    detail::check_derivative(drho);
    const auto e = hermitian_eig(rho);
    const Mat4 d = detail::in_eigenbasis(e, drho);
    Mat4 l_eig = Mat4::Zero();
    bool any = false;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            const double s = e.values(i) + e.values(j);
            if (s > kSupportCutoff) {
                l_eig(i, j) = 2.0 * d(i, j) / s;
                any = true;
            }
        }
    }
    if (!any) {
        throw DegenerateSupport("compute_sld: state has no support");
    }
    Mat4 l = e.vectors * l_eig * e.vectors.adjoint();
    l = 0.5 * (l + l.adjoint());
    return {l, hermitian_eig(l)};
}

inline SLDOperator compute_sld(const DensityMatrix &rho, const Mat4 &drho) {
    return compute_sld(rho.matrix(), drho);
}

/// Eigen-sum form Σ 2|⟨λi|∂ρ|λj⟩|²/(λi+λj).
inline double qfi(const Mat4 &rho, const Mat4 &drho) {
    detail::check_derivative(drho);
    const auto e = hermitian_eig(rho);
    const Mat4 d = detail::in_eigenbasis(e, drho);
    double f = 0.0;
    bool any = false;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            const double s = e.values(i) + e.values(j);
            if (s > kSupportCutoff) {
                f += 2.0 * std::norm(d(i, j)) / s;
                any = true;
            }
        }
    }
    if (!any) {
        throw DegenerateSupport("qfi: state has no support");
    }
    return f;
}

inline double qfi(const DensityMatrix &rho, const Mat4 &drho) {
    return qfi(rho.matrix(), drho);
}

/// Tr[ρL²] with L from compute_sld.
inline double qfi_from_sld(const Mat4 &rho, const SLDOperator &l) {
    return (rho * l.matrix * l.matrix).trace().real();
}

/// Residual of ∂ρ = ½(Lρ + ρL) projected onto the support pairs of ρ.
inline double sld_residual(const Mat4 &rho, const Mat4 &drho,
                           const SLDOperator &l) {
    const auto e = hermitian_eig(rho);
    const Mat4 r = detail::in_eigenbasis(
        e, Mat4(drho - 0.5 * (l.matrix * rho + rho * l.matrix)));
    double worst = 0.0;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            if (e.values(i) + e.values(j) > kSupportCutoff) {
                worst = std::max(worst, std::abs(r(i, j)));
            }
        }
    }
    return worst;
}

inline constexpr double kProbFloor = 1e-12;

/// Σ_y (Tr ∂ρM_y)² / Tr ρM_y over outcomes with non-negligible probability.
inline double cfi(const Mat4 &rho, const Mat4 &drho,
                  const MeasurementSet &povm) {
    double f = 0.0;
    for (std::size_t y = 0; y < povm.size(); ++y) {
        const double prob = (rho * povm[y]).trace().real();
        const double dprob = (drho * povm[y]).trace().real();
        if (prob <= kProbFloor) {
            if (std::abs(dprob) > 1e-9) {
                std::ostringstream msg;
                msg << "cfi: outcome " << y << " has p=" << prob
                    << " but dp=" << dprob;
                throw SingularOutcome(msg.str());
            }
            continue;
        }
        f += dprob * dprob / prob;
    }
    return f;
}

/// Rank-1 projectors onto the SLD eigenvectors, ascending eigenvalue order.
inline MeasurementSet optimal_povm_from_sld(const SLDOperator &l) {
    std::vector<Mat4> elems;
    elems.reserve(4);
    for (int k = 0; k < 4; ++k) {
        const Vec4 v = l.basis_eigen.vectors.col(k);
        elems.push_back(v * v.adjoint());
    }
    return MeasurementSet(std::move(elems));
}

/// Noiseless QFI of a pure probe: 4T²(1 − ⟨σz⊗σz⟩²).
inline double pure_state_qfi(const PureState &psi0, const SystemParams &,
                             double t) {
    const Vec4 &a = psi0.amplitudes();
    const double zz = (a.adjoint() * zz_operator() * a)(0, 0).real();
    return 4.0 * t * t * (1.0 - zz * zz);
}

/// |++⟩, which zeroes ⟨σz⊗σz⟩ and so maximizes the noiseless QFI.
inline PureState optimal_probe() { return PureState(0.5, 0.5, 0.5, 0.5); }

/// (|00⟩ + |11⟩)/√2
inline PureState phi_plus() {
    const double r = 1.0 / std::sqrt(2.0);
    return PureState(r, 0.0, 0.0, r);
}

/// (|01⟩ + |10⟩)/√2
inline PureState psi_plus() {
    const double r = 1.0 / std::sqrt(2.0);
    return PureState(0.0, r, r, 0.0);
}

} // namespace zzq
