#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "slimstack/expectation.hpp"
#include "slimstack/rng.hpp"

using namespace slimstack;

TEST(Expectation, ZeroSparsityLimitIsAllZero) {
    Matrix h(2, 2);
    h(0, 0) = 2.0; h(0, 1) = 1.0; h(1, 0) = 1.0; h(1, 1) = 1.0;
    const ExpectationResult res = expectation_experiment(h, 0.0, 200, 5);
    EXPECT_EQ(max_abs(res.approximation), 0.0);
    EXPECT_EQ(max_abs(res.mean_final), 0.0);
    for (double dev : res.dev_scaled) EXPECT_EQ(dev, 0.0);
}

// d=2 has exactly two prior-mask states for the second column: first column
// kept (full inverse) or first column removed (scalar inverse). The sampled
// mean must converge to the exact mixture.
TEST(Expectation, TwoByTwoClosedFormMixture) {
    Matrix h(2, 2);
    h(0, 0) = 2.0; h(0, 1) = 1.0; h(1, 0) = 1.0; h(1, 1) = 1.0;
    // full inverse = [[1, -1], [-1, 2]]; after removing column 0: [1 / h11] = [1]
    const double s = 0.5;
    const ExpectationResult res = expectation_experiment(h, s, 20000, 11);

    const double expected_11 = (1.0 - s) * 2.0 + s * 1.0;  // mixture of the two states
    EXPECT_NEAR(res.mean_final(1, 1), expected_11, 0.05);
    // cells visited under only one state carry that state's exact value
    EXPECT_DOUBLE_EQ(res.mean_final(1, 0), -1.0);
    EXPECT_DOUBLE_EQ(res.mean_final(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(res.mean_final(0, 1), -1.0);

    // hc rows: row 0 = full inverse row, row 1 = scalar inverse
    EXPECT_DOUBLE_EQ(res.hc(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(res.hc(0, 1), -1.0);
    EXPECT_DOUBLE_EQ(res.hc(1, 1), 1.0);
    EXPECT_DOUBLE_EQ(res.approximation(1, 1), s * 1.0);
}

TEST(Expectation, BudgetsAreStrictlyIncreasingAndEndAtN) {
    Rng rng(12);
    Matrix x = oracle::random_matrix(rng, 6, 24);
    const Matrix h = oracle::hessian_naive(x, 0.01);
    const ExpectationResult res = expectation_experiment(h, 0.5, 500, 3);
    ASSERT_FALSE(res.budgets.empty());
    for (std::size_t i = 1; i < res.budgets.size(); ++i) {
        EXPECT_LT(res.budgets[i - 1], res.budgets[i]);
    }
    EXPECT_EQ(res.budgets.back(), 500u);
    EXPECT_EQ(res.dev_scaled.size(), res.budgets.size());
    EXPECT_EQ(res.dev_complement.size(), res.budgets.size());
}

TEST(Expectation, DeviationEstimateStabilizes) {
    Rng rng(13);
    Matrix x = oracle::random_matrix(rng, 8, 32);
    const Matrix h = oracle::hessian_naive(x, 0.01);
    const ExpectationResult res = expectation_experiment(h, 0.5, 2000, 21);
    // find deviations at the budgets nearest 100 and at the final budget
    std::size_t i100 = 0;
    for (std::size_t i = 0; i < res.budgets.size(); ++i) {
        if (res.budgets[i] <= 100) i100 = i;
    }
    EXPECT_LE(res.dev_scaled.back(), 1.05 * res.dev_scaled[i100]);
}

TEST(Expectation, DeterministicForFixedSeed) {
    Rng rng(14);
    Matrix x = oracle::random_matrix(rng, 5, 20);
    const Matrix h = oracle::hessian_naive(x, 0.01);
    const ExpectationResult a = expectation_experiment(h, 0.4, 300, 99);
    const ExpectationResult b = expectation_experiment(h, 0.4, 300, 99);
    EXPECT_EQ(a.dev_scaled, b.dev_scaled);
    EXPECT_EQ(a.dev_complement, b.dev_complement);
    EXPECT_EQ(max_abs(a.mean_final - b.mean_final), 0.0);
}

TEST(Expectation, GuardsAndErrors) {
    Matrix big(65, 65);
    for (std::size_t i = 0; i < 65; ++i) big(i, i) = 1.0;
    EXPECT_THROW(expectation_experiment(big, 0.5, 10, 1), std::invalid_argument);

    Matrix h(2, 2);
    h(0, 0) = 2.0; h(0, 1) = 1.0; h(1, 0) = 1.0; h(1, 1) = 1.0;
    EXPECT_THROW(expectation_experiment(h, -0.1, 10, 1), std::invalid_argument);
    EXPECT_THROW(expectation_experiment(h, 1.5, 10, 1), std::invalid_argument);
    EXPECT_THROW(expectation_experiment(h, 0.5, 0, 1), std::invalid_argument);
    Matrix rect(2, 3);
    EXPECT_THROW(expectation_experiment(rect, 0.5, 10, 1), std::invalid_argument);
}
