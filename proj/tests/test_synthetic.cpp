#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "slimstack/scheduler.hpp"
#include "slimstack/synthetic.hpp"

using namespace slimstack;

namespace {

bool bitwise_equal(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data().data(), b.data().data(),
                       a.data().size() * sizeof(double)) == 0;
}

double score_spread_orders(const LinearModel& model, const CalibrationSet& calib) {
    const ScoreReport report = score_model(model, calib);
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const ScoreEntry& e : report.entries) {
        lo = std::min(lo, e.score);
        hi = std::max(hi, e.score);
    }
    return std::log10(hi / lo);
}

}  // namespace

TEST(Synthetic, DeterministicForFixedArguments) {
    const auto [m1, c1] = gen_synthetic_model(1, {4, 4}, 0.0, 7);
    const auto [m2, c2] = gen_synthetic_model(1, {4, 4}, 0.0, 7);
    ASSERT_EQ(m1.layers.size(), 1u);
    EXPECT_TRUE(bitwise_equal(m1.layers[0].w, m2.layers[0].w));
    EXPECT_TRUE(bitwise_equal(c1.x0, c2.x0));

    const auto [m3, c3] = gen_synthetic_model(5, {12}, 0.8, 31);
    const auto [m4, c4] = gen_synthetic_model(5, {12}, 0.8, 31);
    for (std::size_t l = 0; l < 5; ++l) {
        EXPECT_TRUE(bitwise_equal(m3.layers[l].w, m4.layers[l].w));
    }
    EXPECT_TRUE(bitwise_equal(c3.x0, c4.x0));

    const auto [m5, c5] = gen_synthetic_model(5, {12}, 0.8, 32);  // different seed
    EXPECT_FALSE(bitwise_equal(m3.layers[0].w, m5.layers[0].w));
    EXPECT_FALSE(bitwise_equal(c3.x0, c5.x0));
}

TEST(Synthetic, ShapesAndBroadcast) {
    const auto [model, calib] = gen_synthetic_model(4, {16}, 0.5, 3);
    ASSERT_EQ(model.layers.size(), 4u);
    for (const LinearLayer& l : model.layers) {
        EXPECT_EQ(l.w.rows(), 16u);
        EXPECT_EQ(l.w.cols(), 16u);
    }
    EXPECT_EQ(calib.x0.rows(), 16u);
    EXPECT_EQ(calib.x0.cols(), 64u);
    EXPECT_EQ(model.layers.back().act, Activation::identity);
    for (std::size_t l = 0; l + 1 < 4; ++l) {
        EXPECT_EQ(model.layers[l].act, Activation::relu);
    }

    const auto [m2, c2] = gen_synthetic_model(3, {6, 8, 8, 5}, 0.5, 3);
    EXPECT_EQ(m2.layers[0].w.rows(), 8u);
    EXPECT_EQ(m2.layers[0].w.cols(), 6u);
    EXPECT_EQ(m2.layers[2].w.rows(), 5u);
    EXPECT_EQ(m2.layers[2].w.cols(), 8u);
    EXPECT_EQ(c2.x0.rows(), 6u);
    EXPECT_EQ(m2.d_in(), 6u);
    EXPECT_EQ(m2.d_out(), 5u);
}

TEST(Synthetic, LayerNamesAreSequential) {
    const auto [model, calib] = gen_synthetic_model(3, {8}, 0.0, 5);
    (void)calib;
    EXPECT_EQ(model.layers[0].name, "layer0");
    EXPECT_EQ(model.layers[1].name, "layer1");
    EXPECT_EQ(model.layers[2].name, "layer2");
}

TEST(Synthetic, HomogeneousScoresWithinOneOrder) {
    const auto [model, calib] = gen_synthetic_model(12, {24}, 0.0, 17);
    EXPECT_LE(score_spread_orders(model, calib), 1.0);
}

TEST(Synthetic, HeterogeneousScoresSpreadAtLeastTwoOrders) {
    const auto [model, calib] = gen_synthetic_model(12, {24}, 1.0, 17);
    EXPECT_GE(score_spread_orders(model, calib), 2.0);
}

TEST(Synthetic, SpreadHoldsAcrossSeeds) {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
        const auto [hom, hom_c] = gen_synthetic_model(12, {24}, 0.0, seed);
        EXPECT_LE(score_spread_orders(hom, hom_c), 1.0) << "seed " << seed;
        const auto [het, het_c] = gen_synthetic_model(12, {24}, 1.0, seed);
        EXPECT_GE(score_spread_orders(het, het_c), 2.0) << "seed " << seed;
    }
}

TEST(Synthetic, CalibrationHasFullRankEnergy) {
    // every input coordinate carries signal so Hessians are well-posed
    const auto [model, calib] = gen_synthetic_model(4, {10}, 1.0, 23);
    (void)model;
    for (std::size_t i = 0; i < calib.x0.rows(); ++i) {
        double e = 0.0;
        for (std::size_t n = 0; n < calib.x0.cols(); ++n) {
            e += calib.x0(i, n) * calib.x0(i, n);
        }
        EXPECT_GT(e, 0.0) << "row " << i;
    }
}

TEST(Synthetic, ErrorPaths) {
    EXPECT_THROW(gen_synthetic_model(0, {4}, 0.0, 1), std::invalid_argument);
    EXPECT_THROW(gen_synthetic_model(2, {}, 0.0, 1), std::invalid_argument);
    EXPECT_THROW(gen_synthetic_model(2, {4, 4}, 0.0, 1), std::invalid_argument);
    EXPECT_THROW(gen_synthetic_model(2, {4, 0, 4}, 0.0, 1), std::invalid_argument);
    EXPECT_THROW(gen_synthetic_model(2, {4}, -0.1, 1), std::invalid_argument);
    EXPECT_THROW(gen_synthetic_model(2, {4}, 1.5, 1), std::invalid_argument);
    SyntheticConfig cfg;
    cfg.n_samples = 0;
    EXPECT_THROW(gen_synthetic_model(2, {4}, 0.5, 1, cfg), std::invalid_argument);
}
