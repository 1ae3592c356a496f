#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "slimstack/hessian.hpp"
#include "slimstack/rng.hpp"

using namespace slimstack;

namespace {

Matrix random_spd(Rng& rng, std::size_t d) {
    const Matrix x = oracle::random_matrix(rng, d, 2 * d);
    return build_hessian(x, 0.01).h;
}

}  // namespace

TEST(Hessian, IdentityInputGivesDampedTwoI) {
    // X = I (d = N): H = 2I, mean diag 2, damping 0.01 -> 2.02 I.
    const Matrix x = Matrix::identity(8);
    const HessianState hs = build_hessian(x, 0.01);
    for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 8; ++j) {
            EXPECT_NEAR(hs.h(i, j), i == j ? 2.02 : 0.0, 1e-15);
        }
    }
    EXPECT_DOUBLE_EQ(hs.damping_applied, 0.02);
}

TEST(Hessian, AllZeroInputWithoutDampingThrows) {
    try {
        build_hessian(Matrix(4, 8), 0.0);
        FAIL() << "expected singular Hessian error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("singular Hessian"), std::string::npos);
    }
}

TEST(Hessian, MatchesNaiveTripleLoop) {
    Rng rng(21);
    const Matrix x = oracle::random_matrix(rng, 8, 32);
    const HessianState hs = build_hessian(x, 0.01);
    const Matrix ref = oracle::hessian_naive(x, 0.01);
    EXPECT_LE(max_rel_diff(hs.h, ref), 1e-12);
}

TEST(Hessian, DeadColumnsFlagged) {
    Rng rng(22);
    Matrix x = oracle::random_matrix(rng, 6, 24);
    for (std::size_t n = 0; n < x.cols(); ++n) x(2, n) = 0.0;  // input 2 never fires
    const HessianState hs = build_hessian(x, 0.01);
    ASSERT_EQ(hs.dead.size(), 6u);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(hs.dead[i], i == 2);
    EXPECT_GT(hs.h(2, 2), 0.0);  // damping still applies
}

TEST(Hessian, InvertSpdAgainstGaussJordanAndIdentity) {
    Rng rng(23);
    for (int rep = 0; rep < 5; ++rep) {
        const Matrix h = random_spd(rng, 12);
        const Matrix inv = invert_spd(h);
        EXPECT_LE(max_rel_diff(inv, oracle::invert_gauss(h)), 1e-8);
        const Matrix prod = matmul(h, inv);
        EXPECT_LE(max_abs(prod - Matrix::identity(12)), 1e-8);
    }
}

TEST(Hessian, InvertSpdIsInvolution) {
    Rng rng(24);
    const Matrix h = random_spd(rng, 10);
    EXPECT_LE(max_rel_diff(invert_spd(invert_spd(h)), h), 1e-6);
}

TEST(Hessian, InvertNonSpdThrows) {
    Matrix m = Matrix::identity(3);
    m(2, 2) = -1.0;
    try {
        invert_spd(m);
        FAIL() << "expected not-positive-definite error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("not positive definite"), std::string::npos);
    }
}

TEST(Hessian, RemoveRowColPinnedExample) {
    // H = [[1,-1],[-1,2]] has inverse [[2,1],[1,1]]. Deleting index 0 from H
    // leaves [2], whose inverse is 0.5; deleting index 1 leaves [1].
    Matrix inv(2, 2);
    inv(0, 0) = 2.0;
    inv(0, 1) = 1.0;
    inv(1, 0) = 1.0;
    inv(1, 1) = 1.0;
    const Matrix after0 = remove_row_col(inv, 0);
    ASSERT_EQ(after0.rows(), 1u);
    EXPECT_NEAR(after0(0, 0), 0.5, 1e-15);
    const Matrix after1 = remove_row_col(inv, 1);
    ASSERT_EQ(after1.rows(), 1u);
    EXPECT_NEAR(after1(0, 0), 1.0, 1e-15);
}

TEST(Hessian, RemoveRowColIdentityStaysIdentity) {
    const Matrix i3 = Matrix::identity(3);
    for (std::size_t p = 0; p < 3; ++p) {
        EXPECT_TRUE(remove_row_col(i3, p) == Matrix::identity(2));
    }
}

TEST(Hessian, RemoveRowColMatchesSubmatrixInversion) {
    Rng rng(25);
    for (int rep = 0; rep < 20; ++rep) {
        const Matrix h = random_spd(rng, 16);
        const Matrix inv = invert_spd(h);
        const std::size_t p = rng.uniform_index(16);
        const Matrix removed = remove_row_col(inv, p);
        const Matrix direct = oracle::invert_gauss(delete_row_col(h, p));
        EXPECT_LE(max_rel_diff(removed, direct), 1e-8);
    }
}

TEST(Hessian, RemoveRowColZeroPivotThrows) {
    Matrix inv(2, 2);
    inv(0, 1) = inv(1, 0) = 1.0;  // zero diagonal at 0
    try {
        remove_row_col(inv, 0);
        FAIL() << "expected zero pivot error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("zero pivot"), std::string::npos);
    }
}

TEST(Hessian, CholeskyRowsIdentityAndDiagonal) {
    EXPECT_LE(max_abs(cholesky_rows(Matrix::identity(5)) - Matrix::identity(5)), 1e-14);
    Matrix d(3, 3);
    d(0, 0) = 2.0;
    d(1, 1) = 4.0;
    d(2, 2) = 8.0;
    const Matrix hc = cholesky_rows(d);
    EXPECT_NEAR(hc(0, 0), 0.5, 1e-14);
    EXPECT_NEAR(hc(1, 1), 0.25, 1e-14);
    EXPECT_NEAR(hc(2, 2), 0.125, 1e-14);
    EXPECT_EQ(hc(1, 0), 0.0);
    EXPECT_EQ(hc(2, 1), 0.0);
}

TEST(Hessian, CholeskyRowsMatchIterativeRemovalSweep) {
    Rng rng(26);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t d = 4 + rng.uniform_index(61);  // up to 64
        const Matrix h = random_spd(rng, d);
        const Matrix hc = cholesky_rows(h);
        Matrix inv = invert_spd(h);
        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t j = p; j < d; ++j) {
                const double ref = inv(0, j - p);
                const double denom = std::max(std::abs(ref), 1e-12);
                EXPECT_LE(std::abs(hc(p, j) - ref) / denom, 1e-8)
                    << "d=" << d << " p=" << p << " j=" << j;
            }
            EXPECT_GT(hc(p, p), 0.0);
            for (std::size_t j = 0; j < p; ++j) EXPECT_EQ(hc(p, j), 0.0);
            if (p + 1 < d) inv = remove_row_col(inv, 0);
        }
    }
}

TEST(Hessian, PreparedStateIsConsistent) {
    Rng rng(27);
    const Matrix x = oracle::random_matrix(rng, 10, 40);
    const HessianState hs = build_prepared_hessian(x, 0.01);
    EXPECT_EQ(hs.h.rows(), 10u);
    EXPECT_EQ(hs.h_inv.rows(), 10u);
    EXPECT_EQ(hs.hc.rows(), 10u);
    EXPECT_LE(max_abs(matmul(hs.h, hs.h_inv) - Matrix::identity(10)), 1e-8);
    // first row of hc is the first row of the full inverse
    for (std::size_t j = 0; j < 10; ++j) EXPECT_NEAR(hs.hc(0, j), hs.h_inv(0, j), 1e-10);
}
