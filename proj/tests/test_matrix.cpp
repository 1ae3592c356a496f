#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "slimstack/matrix.hpp"
#include "slimstack/rng.hpp"

using namespace slimstack;

TEST(Matrix, ConstructionAndIndexing) {
    Matrix m(2, 3);
    EXPECT_EQ(m.rows(), 2u);
    EXPECT_EQ(m.cols(), 3u);
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(m(i, j), 0.0);
    }
    m(1, 2) = 5.5;
    EXPECT_EQ(m(1, 2), 5.5);
    EXPECT_THROW(Matrix(2, 3, {1.0, 2.0}), std::invalid_argument);
}

TEST(Matrix, IdentityAndEquality) {
    const Matrix i3 = Matrix::identity(3);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(i3(i, j), i == j ? 1.0 : 0.0);
    }
    EXPECT_TRUE(i3 == Matrix::identity(3));
    EXPECT_FALSE(i3 == Matrix::identity(2));
}

TEST(Matrix, MatmulMatchesNaive) {
    Rng rng(11);
    const Matrix a = oracle::random_matrix(rng, 5, 7);
    const Matrix b = oracle::random_matrix(rng, 7, 4);
    const Matrix c = matmul(a, b);
    const Matrix ref = oracle::matmul_naive(a, b);
    EXPECT_LE(max_rel_diff(c, ref), 1e-12);
}

TEST(Matrix, MatmulDimensionMismatchThrows) {
    EXPECT_THROW(matmul(Matrix(2, 3), Matrix(4, 2)), std::invalid_argument);
}

TEST(Matrix, TransposeRoundTrip) {
    Rng rng(12);
    const Matrix a = oracle::random_matrix(rng, 4, 6);
    const Matrix t = transpose(a);
    EXPECT_EQ(t.rows(), 6u);
    EXPECT_EQ(t.cols(), 4u);
    EXPECT_TRUE(transpose(t) == a);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) EXPECT_EQ(t(j, i), a(i, j));
    }
}

TEST(Matrix, FrobeniusNorm) {
    Matrix m(1, 2);
    m(0, 0) = 3.0;
    m(0, 1) = 4.0;
    EXPECT_DOUBLE_EQ(frobenius_norm_sq(m), 25.0);
    EXPECT_DOUBLE_EQ(frobenius_norm(m), 5.0);
}

TEST(Matrix, FiniteChecks) {
    Matrix m(1, 2);
    m(0, 0) = 1.0;
    EXPECT_TRUE(all_finite(m));
    m(0, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_FALSE(all_finite(m));
    EXPECT_THROW(require_finite(m, "payload"), std::runtime_error);
    m(0, 1) = std::numeric_limits<double>::infinity();
    EXPECT_FALSE(all_finite(m));
}

TEST(Matrix, DeleteRowCol) {
    Matrix m(3, 3);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) m(i, j) = static_cast<double>(3 * i + j);
    }
    const Matrix d = delete_row_col(m, 1);
    ASSERT_EQ(d.rows(), 2u);
    ASSERT_EQ(d.cols(), 2u);
    EXPECT_EQ(d(0, 0), 0.0);
    EXPECT_EQ(d(0, 1), 2.0);
    EXPECT_EQ(d(1, 0), 6.0);
    EXPECT_EQ(d(1, 1), 8.0);
}

TEST(Matrix, MaxRelDiffUsesScaleFloor) {
    Matrix a(1, 1), b(1, 1);
    EXPECT_EQ(max_rel_diff(a, b), 0.0);  // both zero
    a(0, 0) = 1e-300;
    EXPECT_LE(max_rel_diff(a, b), 1.0);  // floored, no division blowup
}

TEST(Rng, DeterministicAcrossInstances) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, SplitIsStableAndIndependentOfDrawOrder) {
    Rng root(7);
    Rng s1 = root.split("weights", 3);
    root.next_u64();  // drawing from the parent must not disturb splits
    Rng s2 = root.split("weights", 3);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(s1.next_u64(), s2.next_u64());
    Rng other = root.split("weights", 4);
    EXPECT_NE(s1.next_u64(), other.next_u64());
}

TEST(Rng, UniformBounds) {
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
        const double v = rng.uniform(2.0, 5.0);
        EXPECT_GE(v, 2.0);
        EXPECT_LT(v, 5.0);
    }
}

TEST(Rng, GaussianMomentsRoughlyStandard) {
    Rng rng(123);
    double sum = 0.0, sum2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double g = rng.gaussian();
        sum += g;
        sum2 += g * g;
    }
    EXPECT_NEAR(sum / n, 0.0, 0.05);
    EXPECT_NEAR(sum2 / n, 1.0, 0.05);
}

TEST(Rng, ShuffleIsDeterministicPermutation) {
    std::vector<double> v1{1, 2, 3, 4, 5, 6, 7, 8};
    std::vector<double> v2 = v1;
    Rng a(9), b(9);
    a.shuffle(v1);
    b.shuffle(v2);
    EXPECT_EQ(v1, v2);
    std::sort(v1.begin(), v1.end());
    EXPECT_EQ(v1, (std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8}));
}
