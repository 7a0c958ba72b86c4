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

#include <gtest/gtest.h>

#include <numbers>

#include "support.hpp"
#include "zzq/model.hpp"
#include "zzq/qcore.hpp"

namespace zzq {
namespace {

using testing::Gen;

Mat4 diag4(double a, double b, double c, double d) {
    Mat4 m = Mat4::Zero();
    m.diagonal() << a, b, c, d;
    return m;
}

TEST(HermitianEig, IdentityHasUnitSpectrumAndOrthonormalBasis) {
    const auto e = hermitian_eig(Mat4(Mat4::Identity()));
    for (int i = 0; i < 4; ++i) {
        EXPECT_NEAR(e.values(i), 1.0, 1e-14);
    }
    EXPECT_LE(detail::max_abs(e.vectors.adjoint() * e.vectors - Mat4::Identity()),
              1e-12);
}

TEST(HermitianEig, ZZHasAscendingSpectrum) {
    const auto e = hermitian_eig(zz_operator());
    EXPECT_NEAR(e.values(0), -1.0, 1e-14);
    EXPECT_NEAR(e.values(1), -1.0, 1e-14);
    EXPECT_NEAR(e.values(2), 1.0, 1e-14);
    EXPECT_NEAR(e.values(3), 1.0, 1e-14);
}

TEST(HermitianEig, ReconstructsRandomHermitian) {
    Gen gen(11);
    for (int trial = 0; trial < 50; ++trial) {
        const Mat4 h = gen.hermitian<4>();
        const auto e = hermitian_eig(h);
        Mat4 rebuilt = Mat4::Zero();
        for (int k = 0; k < 4; ++k) {
            rebuilt += e.values(k) * e.vectors.col(k) * e.vectors.col(k).adjoint();
        }
        EXPECT_LE(detail::max_abs(rebuilt - h), 1e-10);
        EXPECT_LE(detail::max_abs(e.vectors.adjoint() * e.vectors -
                                  Mat4::Identity()),
                  1e-10);
        for (int k = 0; k + 1 < 4; ++k) {
            EXPECT_LE(e.values(k), e.values(k + 1));
        }
    }
}

TEST(HermitianEig, PhaseFixMakesLeadingComponentRealPositive) {
    Gen gen(12);
    const auto e = hermitian_eig(Mat4(gen.hermitian<4>()));
    for (int k = 0; k < 4; ++k) {
        const cplx lead = e.vectors(0, k);
        EXPECT_GT(lead.real(), 0.0);
        EXPECT_EQ(lead.imag(), 0.0);
    }
}

TEST(HermitianEig, DeterministicAcrossCalls) {
    Gen gen(13);
    const Mat4 h = gen.hermitian<4>();
    const auto a = hermitian_eig(h);
    const auto b = hermitian_eig(h);
    EXPECT_TRUE(a.values == b.values);
    EXPECT_TRUE(a.vectors == b.vectors);
}

TEST(HermitianEig, BlockDiagonalMatchesQuadraticRoots) {
    Gen gen(14);
    for (int trial = 0; trial < 20; ++trial) {
        Mat4 m = Mat4::Zero();
        std::vector<double> roots;
        for (int b = 0; b < 2; ++b) {
            const double a = gen.normal();
            const double d = gen.normal();
            const cplx c = gen.complex_normal();
            m(2 * b, 2 * b) = a;
            m(2 * b + 1, 2 * b + 1) = d;
            m(2 * b, 2 * b + 1) = c;
            m(2 * b + 1, 2 * b) = std::conj(c);
            const double mean = 0.5 * (a + d);
            const double rad = std::sqrt(0.25 * (a - d) * (a - d) + std::norm(c));
            roots.push_back(mean - rad);
            roots.push_back(mean + rad);
        }
        std::sort(roots.begin(), roots.end());
        const auto e = hermitian_eig(m);
        for (int k = 0; k < 4; ++k) {
            EXPECT_NEAR(e.values(k), roots[k], 1e-10);
        }
    }
}

TEST(HermitianEig, RejectsNonHermitian) {
    Mat4 m = Mat4::Zero();
    m(0, 1) = 1.0;
    EXPECT_THROW(hermitian_eig(m), NotHermitian);
}

TEST(MatExp, ZeroGivesIdentity) {
    EXPECT_TRUE(mat_exp(Mat4(Mat4::Zero())) == Mat4::Identity());
    EXPECT_TRUE(mat_exp(Mat16(Mat16::Zero())) == Mat16::Identity());
}

TEST(MatExp, EulerIdentityOnEmbeddedSigmaX) {
    const auto &s = pauli_ops();
    const Mat4 sx1 = on_qubit(s.x, 0);
    const Mat4 e = mat_exp(Mat4(kI * (std::numbers::pi / 2) * sx1));
    EXPECT_LE(detail::max_abs(e - kI * sx1), 1e-12);
}

TEST(MatExp, DiagonalMatchesElementwiseExponential) {
    Gen gen(21);
    for (int trial = 0; trial < 10; ++trial) {
        Mat16 d = Mat16::Zero();
        for (int i = 0; i < 16; ++i) {
            d(i, i) = cplx(gen.uniform(-3.0, 3.0), gen.uniform(-3.0, 3.0));
        }
        const Mat16 e = mat_exp(d);
        for (int i = 0; i < 16; ++i) {
            const cplx expect = std::exp(d(i, i));
            EXPECT_LE(std::abs(e(i, i) - expect), 1e-10 * std::abs(expect));
        }
        EXPECT_LE(detail::max_abs(Mat16(e - Mat16(e.diagonal().asDiagonal()))),
                  1e-14);
    }
}

TEST(MatExp, CommutingSumFactorizes) {
    Gen gen(22);
    for (int trial = 0; trial < 10; ++trial) {
        Mat4 a = Mat4::Zero();
        Mat4 b = Mat4::Zero();
        for (int i = 0; i < 4; ++i) {
            a(i, i) = cplx(gen.uniform(-1, 1), gen.uniform(-1, 1));
            b(i, i) = cplx(gen.uniform(-1, 1), gen.uniform(-1, 1));
        }
        // Conjugate by a unitary so the pair is commuting but not diagonal.
        const Mat4 q = Eigen::HouseholderQR<Mat4>(gen.matrix<4>()).householderQ();
        a = q * a * q.adjoint();
        b = q * b * q.adjoint();
        EXPECT_LE(detail::max_abs(Mat4(mat_exp(Mat4(a + b)) -
                                       mat_exp(a) * mat_exp(b))),
                  1e-10);
    }
}

TEST(Vectorize, MaximallyMixedHasQuarterOnStackedDiagonal) {
    const Vec16 v = vectorize(Mat4(0.25 * Mat4::Identity()));
    for (int k = 0; k < 16; ++k) {
        const bool diag = k % 5 == 0;
        EXPECT_EQ(v(k), cplx(diag ? 0.25 : 0.0));
    }
}

TEST(Vectorize, RoundTripIsExact) {
    Gen gen(31);
    const Mat4 h = gen.hermitian<4>();
    EXPECT_TRUE(unvectorize(vectorize(h)) == h);
}

TEST(Vectorize, ColumnStackingProductIdentity) {
    Gen gen(32);
    for (int trial = 0; trial < 20; ++trial) {
        const Mat4 a = gen.matrix<4>();
        const Mat4 b = gen.matrix<4>();
        const Mat4 rho = gen.matrix<4>();
        const Vec16 lhs = vectorize(Mat4(a * rho * b));
        const Vec16 rhs = kron(Mat4(b.transpose()), a) * vectorize(rho);
        EXPECT_LE(detail::max_abs(lhs - rhs), 1e-12);
        EXPECT_LE(detail::max_abs(lhs - sandwich(a, b) * vectorize(rho)), 1e-12);
    }
}

TEST(Vectorize, DynamicUnvectorizeRejectsNonSquareLength) {
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(15);
    EXPECT_THROW(unvectorize(v), DimensionMismatch);
}

TEST(Kron, PauliProductsAreDiagonal) {
    const auto &s = pauli_ops();
    const Mat2 id = Mat2::Identity();
    EXPECT_TRUE(Mat4(kron(s.z, id)) == diag4(1, 1, -1, -1));
    EXPECT_TRUE(Mat4(kron(id, s.z)) == diag4(1, -1, 1, -1));
    EXPECT_TRUE(Mat4(kron(s.z, s.z)) == diag4(1, -1, -1, 1));
    EXPECT_TRUE(kron2(s.z, s.z) == diag4(1, -1, -1, 1));
}

TEST(Kron, IndexFormula) {
    Gen gen(41);
    const Mat2 a = gen.matrix<2>();
    const Mat4 b = gen.matrix<4>();
    const ComplexMatrix k = kron(a, b);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c)
                    EXPECT_EQ(k(i * 4 + r, j * 4 + c), a(i, j) * b(r, c));
}

TEST(PureState, RejectsUnnormalized) {
    EXPECT_THROW(PureState(1.0, 1.0, 0.0, 0.0), InvalidState);
    EXPECT_NO_THROW(PureState(1.0, 0.0, 0.0, 0.0));
}

TEST(DensityMatrix, ValidatesInvariants) {
    EXPECT_NO_THROW(DensityMatrix::maximally_mixed());
    Mat4 m = 0.25 * Mat4::Identity();
    m(0, 1) = 0.1;
    EXPECT_THROW(DensityMatrix{m}, InvalidState);
    EXPECT_THROW(DensityMatrix{Mat4(0.3 * Mat4::Identity())}, InvalidState);
    EXPECT_THROW(DensityMatrix{diag4(1.1, -0.1, 0.0, 0.0)}, InvalidState);
    Mat4 bad = 0.25 * Mat4::Identity();
    bad(2, 2) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(DensityMatrix{bad}, InvalidState);
}

TEST(DensityMatrix, PositivitySlackAllowsTinyNegativeEigenvalue) {
    EXPECT_NO_THROW(DensityMatrix{diag4(1.0 + 5e-9, -5e-9, 0.0, 0.0)});
}

TEST(DensityMatrix, PureProjectorHasUnitPurity) {
    const DensityMatrix rho(optimal_probe());
    EXPECT_NEAR(rho.purity(), 1.0, 1e-14);
    EXPECT_NEAR(DensityMatrix::maximally_mixed().purity(), 0.25, 1e-15);
}

} // namespace
} // namespace zzq
