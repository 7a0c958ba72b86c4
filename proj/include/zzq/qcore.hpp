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
 * Dense complex linear algebra for the two-qubit problem: fixed-size matrix
 * aliases, Kronecker products, column-stacking vectorization, Hermitian
 * eigendecomposition and the matrix exponential, plus the validated
 * quantum-state types every other header builds on.
 */

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <sstream>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

namespace zzq {

using cplx = std::complex<double>;

using Mat2 = Eigen::Matrix<cplx, 2, 2>;
using Mat4 = Eigen::Matrix<cplx, 4, 4>;
using Vec4 = Eigen::Matrix<cplx, 4, 1>;
using Mat16 = Eigen::Matrix<cplx, 16, 16>;
using Vec16 = Eigen::Matrix<cplx, 16, 1>;
using Mat32 = Eigen::Matrix<cplx, 32, 32>;
using Vec32 = Eigen::Matrix<cplx, 32, 1>;
using ComplexMatrix = Eigen::MatrixXcd;

/// A 16x16 generator or propagator acting on column-stacked 4x4 matrices.
using Superoperator = Mat16;

inline constexpr cplx kI{0.0, 1.0};

// Structural checks (Hermiticity, trace) and positivity slack.
inline constexpr double kStructTol = 1e-10;
inline constexpr double kPositivityTol = 1e-8;

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class NotHermitian : public Error {
  public:
    using Error::Error;
};

class DimensionMismatch : public Error {
  public:
    using Error::Error;
};

/// A matrix failed the density-matrix invariants.
class InvalidState : public Error {
  public:
    using Error::Error;
};

namespace detail {

template <class Derived> double max_abs(const Eigen::MatrixBase<Derived> &m) {
    return m.cwiseAbs().maxCoeff();
}

template <class Derived> bool all_finite(const Eigen::MatrixBase<Derived> &m) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            const cplx z = m(i, j);
            if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
                return false;
            }
        }
    }
    return true;
}

} // namespace detail

/// Largest entrywise deviation from Hermiticity.
template <class Derived>
double hermiticity_error(const Eigen::MatrixBase<Derived> &a) {
    return detail::max_abs(a - a.adjoint());
}

template <class Derived>
bool is_hermitian(const Eigen::MatrixBase<Derived> &a,
                  double tol = kStructTol) {
    return a.rows() == a.cols() && hermiticity_error(a) <= tol;
}

/// Standard Kronecker product: (A⊗B)[i·nB+k, j·nB+l] = A[i,j]·B[k,l].
template <class DA, class DB>
ComplexMatrix kron(const Eigen::MatrixBase<DA> &a,
                   const Eigen::MatrixBase<DB> &b) {
    ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) =
                cplx(a(i, j)) * b;
        }
    }
    return out;
}

/// Two 2x2 factors into a fixed-size 4x4 operator.
inline Mat4 kron2(const Mat2 &a, const Mat2 &b) {
    Mat4 out;
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            out.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
        }
    }
    return out;
}

/// Column-stacking vectorization: vec(ρ)[j·4 + i] = ρ[i, j].
inline Vec16 vectorize(const Mat4 &rho) {
    return Eigen::Map<const Vec16>(rho.data());
}

inline Mat4 unvectorize(const Vec16 &v) {
    return Eigen::Map<const Mat4>(v.data());
}

/// Dynamic-size variant; rejects vectors whose length is not a square.
inline ComplexMatrix unvectorize(const Eigen::VectorXcd &v) {
    const auto n = static_cast<Eigen::Index>(
        std::llround(std::sqrt(static_cast<double>(v.size()))));
    if (n * n != v.size()) {
        throw DimensionMismatch("unvectorize: length " +
                                std::to_string(v.size()) +
                                " is not a perfect square");
    }
    return Eigen::Map<const ComplexMatrix>(v.data(), n, n);
}

// Superoperator builders, all under vec(AρB) = (Bᵀ⊗A)vec(ρ).

/// ρ ↦ Aρ
inline Mat16 spre(const Mat4 &a) {
    return kron(Mat4::Identity(), a);
}

/// ρ ↦ ρB
inline Mat16 spost(const Mat4 &b) {
    return kron(b.transpose(), Mat4::Identity());
}

/// ρ ↦ AρB
inline Mat16 sandwich(const Mat4 &a, const Mat4 &b) {
    return kron(b.transpose(), a);
}

/// ρ ↦ -i[H, ρ]
inline Mat16 commutator_generator(const Mat4 &h) {
    return -kI * (spre(h) - spost(h));
}

inline Mat4 apply(const Superoperator &s, const Mat4 &rho) {
    return unvectorize(Vec16(s * vectorize(rho)));
}

/// Eigenpairs of a Hermitian matrix; eigenvalues ascending, column k of
/// `vectors` pairs with `values[k]`.
template <int N> struct HermitianEigenN {
    Eigen::Matrix<double, N, 1> values;
    Eigen::Matrix<cplx, N, N> vectors;
};

using HermitianEigen = HermitianEigenN<4>;

/**
 * Eigendecomposition of a Hermitian matrix.
 *
 * Each eigenvector is phase-fixed so that its first component with modulus
 * above 1e-12 is real and positive, which makes projectors and bases
 * reproducible across runs.
 */
template <int N>
HermitianEigenN<N> hermitian_eig(const Eigen::Matrix<cplx, N, N> &a) {
    if (!is_hermitian(a)) {
        std::ostringstream msg;
        msg << "hermitian_eig: matrix is not Hermitian (deviation "
            << hermiticity_error(a) << ")";
        throw NotHermitian(msg.str());
    }
    const Eigen::Matrix<cplx, N, N> sym = 0.5 * (a + a.adjoint());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<cplx, N, N>> solver(sym);
    HermitianEigenN<N> out{solver.eigenvalues(), solver.eigenvectors()};
    for (int k = 0; k < N; ++k) {
        auto col = out.vectors.col(k);
        for (int i = 0; i < N; ++i) {
            const double mag = std::abs(col(i));
            if (mag > 1e-12) {
                col *= std::conj(col(i)) / mag;
                col(i) = cplx(col(i).real(), 0.0);
                break;
            }
        }
    }
    return out;
}

/// Matrix exponential by scaling and squaring with Padé approximants.
template <class Derived>
typename Derived::PlainObject mat_exp(const Eigen::MatrixBase<Derived> &a) {
    using Plain = typename Derived::PlainObject;
    Plain out = a.derived().exp();
    return out;
}

/// Normalized amplitudes over |00⟩, |01⟩, |10⟩, |11⟩ with |0⟩ the excited
/// level and qubit 1 as the left tensor factor.
class PureState {
  public:
    explicit PureState(const Vec4 &amplitudes) : amps_(amplitudes) {
        if (!detail::all_finite(amps_)) {
            throw InvalidState("PureState: non-finite amplitude");
        }
        const double err = std::abs(amps_.squaredNorm() - 1.0);
        if (err > 1e-12) {
            std::ostringstream msg;
            msg << "PureState: squared norm off by " << err;
            throw InvalidState(msg.str());
        }
    }

    PureState(cplx a, cplx b, cplx c, cplx d)
        : PureState((Vec4() << a, b, c, d).finished()) {}

    [[nodiscard]] const Vec4 &amplitudes() const noexcept { return amps_; }
    [[nodiscard]] Mat4 projector() const { return amps_ * amps_.adjoint(); }

  private:
    Vec4 amps_;
};

/// Hermitian, unit-trace, positive semidefinite 4x4 matrix.
class DensityMatrix {
  public:
    /// Validates without modification.
    explicit DensityMatrix(const Mat4 &m) : rho_(m) { validate(rho_); }

    explicit DensityMatrix(const PureState &psi)
        : DensityMatrix(psi.projector()) {}

    /// Symmetrizes (ρ + ρᴴ)/2 before validating; used after propagation.
    static DensityMatrix hermitized(const Mat4 &m) {
        return DensityMatrix(Mat4(0.5 * (m + m.adjoint())));
    }

    static DensityMatrix maximally_mixed() {
        return DensityMatrix(Mat4(Mat4::Identity() * 0.25));
    }

    [[nodiscard]] const Mat4 &matrix() const noexcept { return rho_; }
    [[nodiscard]] cplx operator()(int i, int j) const { return rho_(i, j); }
    [[nodiscard]] double purity() const { return (rho_ * rho_).trace().real(); }

    /// Throws InvalidState naming the first violated invariant.
    static void validate(const Mat4 &m) {
        if (!detail::all_finite(m)) {
            throw InvalidState("DensityMatrix: non-finite entry");
        }
        const double herm = hermiticity_error(m);
        if (herm > kStructTol) {
            std::ostringstream msg;
            msg << "DensityMatrix: not Hermitian (deviation " << herm << ")";
            throw InvalidState(msg.str());
        }
        const double tr = std::abs(m.trace() - cplx(1.0));
        if (tr > kStructTol) {
            std::ostringstream msg;
            msg << "DensityMatrix: trace off by " << tr;
            throw InvalidState(msg.str());
        }
        const Mat4 sym = 0.5 * (m + m.adjoint());
        Eigen::SelfAdjointEigenSolver<Mat4> solver(sym,
                                                   Eigen::EigenvaluesOnly);
        const double lo = solver.eigenvalues().minCoeff();
        if (lo < -kPositivityTol) {
            std::ostringstream msg;
            msg << "DensityMatrix: negative eigenvalue " << lo;
            throw InvalidState(msg.str());
        }
    }

  private:
    Mat4 rho_;
};

} // namespace zzq
