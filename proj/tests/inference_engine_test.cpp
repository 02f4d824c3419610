#include <gtest/gtest.h>

#include <set>

#include "cashewmap/inference.hpp"
#include "support.hpp"

using namespace cashewmap;
using cashewmap::testing::small_landscape;
using cashewmap::testing::tiny_model;

namespace {

nn::SegModel<float> sigmoid_model(double dropout = 0.1) {
    auto cfg = tiny_model(32);
    cfg.dropout_rate = dropout;
    return nn::swap_head(nn::build_model<float>(cfg), nn::HeadType::Sigmoid, 1, 2);
}

const LevelGrids& grids() {
    static const LevelGrids g =
        generate_synthetic_landscape(small_landscape(80), CategorySchema::default_schema(), 12).grids;
    return g;
}

}  // namespace

TEST(Tiling, WindowsMatchEnumeration) {
    const auto plan = plan_tiles(100, 70, 32, 24, 4);
    std::vector<Window> expected;
    for (int r : {0, 24, 48, 68})
        for (int c : {0, 24, 38}) expected.push_back({r, c, 32, 32});
    EXPECT_EQ(plan.windows, expected);
}

TEST(Tiling, EveryPixelCoveredAndInside) {
    for (int stride : {8, 16, 24, 32}) {
        const auto plan = plan_tiles(88, 120, 32, stride, 4);
        std::vector<int> cover(88 * 120, 0);
        for (const auto& w : plan.windows) {
            ASSERT_GE(w.row_off, 0);
            ASSERT_GE(w.col_off, 0);
            ASSERT_LE(w.row_off + 32, 88);
            ASSERT_LE(w.col_off + 32, 120);
            for (int r = 0; r < 32; ++r)
                for (int c = 0; c < 32; ++c) ++cover[(w.row_off + r) * 120 + w.col_off + c];
        }
        for (int v : cover) ASSERT_GT(v, 0);
    }
}

TEST(Tiling, InvalidPlansAreRejected) {
    EXPECT_THROW(plan_tiles(64, 64, 32, 40), ConfigError);
    EXPECT_THROW(plan_tiles(64, 64, 32, 0), ConfigError);
    EXPECT_THROW(plan_tiles(16, 64, 32, 32), DataError);
    EXPECT_THROW(plan_tiles(64, 64, 32, 16, -1), ConfigError);
}

TEST(Blending, WeightsRampAndNeverVanish) {
    for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 32; ++c) {
            const double w = blend_weight(r, c, 32, 4);
            EXPECT_GT(w, 0.0);
            EXPECT_LE(w, 1.0);
            EXPECT_EQ(w, blend_weight(31 - r, c, 32, 4));
            EXPECT_EQ(w, blend_weight(c, r, 32, 4));
        }
    EXPECT_DOUBLE_EQ(blend_weight(0, 10, 32, 4), 0.2);
    EXPECT_DOUBLE_EQ(blend_weight(10, 10, 32, 4), 1.0);
    EXPECT_DOUBLE_EQ(blend_weight(0, 0, 32, 0), 1.0);
}

TEST(Inference, SingleTileEqualsForwardPass) {
    const auto m = sigmoid_model();
    LevelGrids g;
    for (int s = 0; s < kLevels; ++s)
        g[static_cast<std::size_t>(s)] = extract_window(grids()[static_cast<std::size_t>(s)], {0, 0, 32 >> s, 32 >> s});
    const auto prob = predict_deterministic(m, g, plan_tiles(g[0], 32, 32, 4));
    const auto out = nn::forward(m, cut_patch(g, nullptr, nullptr, {0, 0, 32, 32}));
    for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 32; ++c) EXPECT_EQ(prob(r, c), double(out.at(0, r, c)));
}

TEST(Inference, MosaicIsIndependentOfJobs) {
    const auto m = sigmoid_model();
    const auto plan = plan_tiles(grids()[0], 32, 16, 4);
    const auto a = predict_deterministic(m, grids(), plan, 1);
    const auto b = predict_deterministic(m, grids(), plan, 3);
    EXPECT_EQ(a, b);
    for (double v : a.values()) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
    const auto mc1 = predict_mc(m, grids(), plan, 3, 0.1, 5, 1);
    const auto mc3 = predict_mc(m, grids(), plan, 3, 0.1, 5, 3);
    EXPECT_EQ(mc1.mean, mc3.mean);
    EXPECT_EQ(mc1.std, mc3.std);
}

TEST(Inference, McZeroRateReproducesDeterministic) {
    const auto m = sigmoid_model();
    const auto plan = plan_tiles(grids()[0], 32, 24, 4);
    const auto det = predict_deterministic(m, grids(), plan);
    const auto mc = predict_mc(m, grids(), plan, 4, 0.0, 3);
    for (std::size_t i = 0; i < det.values().size(); ++i) {
        EXPECT_NEAR(mc.mean.values()[i], det.values()[i], 1e-6);
        EXPECT_EQ(mc.std.values()[i], 0.0);
    }
}

TEST(Inference, McDropoutSpreadsAndIsSeeded) {
    const auto m = sigmoid_model();
    const auto plan = plan_tiles(grids()[0], 32, 24, 4);
    const auto a = predict_mc(m, grids(), plan, 10, 0.1, 8);
    const auto b = predict_mc(m, grids(), plan, 10, 0.1, 8);
    const auto c = predict_mc(m, grids(), plan, 10, 0.1, 9);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.std, b.std);
    EXPECT_NE(a.mean, c.mean);
    double max_std = 0;
    for (double v : a.std.values()) {
        EXPECT_GE(v, 0.0);
        max_std = std::max(max_std, v);
    }
    EXPECT_GT(max_std, 0.0);
    EXPECT_THROW(predict_mc(m, grids(), plan, 0, 0.1, 1), ConfigError);
    EXPECT_THROW(predict_mc(m, grids(), plan, 2, 1.0, 1), ConfigError);
}

TEST(Inference, NodataInputsStayNodata) {
    auto g = grids();
    g[0].set_nodata(-999.0);
    g[0].at(0, 40, 41) = -999.0;
    g[3].set_nodata(-999.0);
    g[3].at(2, 1, 1) = -999.0;  // covers level-0 pixels 8..15 x 8..15
    const auto m = sigmoid_model();
    const auto prob = predict_deterministic(m, g, plan_tiles(g[0], 32, 24, 4));
    EXPECT_TRUE(prob.is_nodata(prob(40, 41)));
    EXPECT_TRUE(prob.is_nodata(prob(8, 15)));
    EXPECT_FALSE(prob.is_nodata(prob(7, 15)));
    EXPECT_FALSE(prob.is_nodata(prob(40, 40)));
}

TEST(Inference, PlanMustFitModel) {
    const auto softmax = nn::build_model<float>(tiny_model(32));
    EXPECT_THROW(predict_deterministic(softmax, grids(), plan_tiles(grids()[0], 32, 32)), ConfigError);
    const auto m = sigmoid_model();
    EXPECT_THROW(predict_deterministic(m, grids(), plan_tiles(grids()[0], 48, 48)), DataError);
    auto plan = plan_tiles(grids()[0], 32, 32);
    plan.windows[0].row_off = 3;
    EXPECT_THROW(predict_deterministic(m, grids(), plan), DataError);
}

TEST(Combine, RulesAndNodata) {
    RasterGrid a(1, 3, 1, 1.0, 0, 0, "", DataType::Float32), b = a;
    a.set_nodata(kProbabilityNodata);
    b.set_nodata(kProbabilityNodata);
    a.values() = {0.2, 0.8, kProbabilityNodata};
    b.values() = {0.4, 0.6, 0.5};
    const auto mean = combine(a, b, CombineRule::Mean);
    EXPECT_NEAR(mean(0, 0), 0.3, 1e-12);
    EXPECT_NEAR(mean(0, 1), 0.7, 1e-12);
    EXPECT_TRUE(mean.is_nodata(mean(0, 2)));
    EXPECT_DOUBLE_EQ(combine(a, b, CombineRule::Max)(0, 0), 0.4);
    EXPECT_DOUBLE_EQ(combine(a, b, CombineRule::McOnly)(0, 1), 0.6);
    EXPECT_EQ(parse_combine_rule("mc-only"), CombineRule::McOnly);
    EXPECT_THROW(parse_combine_rule("median"), ConfigError);
    RasterGrid other(1, 4, 1, 1.0);
    EXPECT_THROW(combine(a, other), DataError);
}

TEST(Cleaning, SuppressedLandcoverIsZeroed) {
    RasterGrid prob(2, 2, 1, 1.0, 0, 0, "", DataType::Float32);
    prob.set_nodata(kProbabilityNodata);
    prob.values() = {0.9, 0.8, kProbabilityNodata, 0.7};
    RasterGrid lc(2, 2, 1, 1.0, 0, 0, "", DataType::UInt16);
    lc.values() = {21, 3, 21, 7};
    const auto out = clean_with_landcover(prob, lc, {21, 7});
    EXPECT_EQ(out.values(), (std::vector<double>{0.0, 0.8, kProbabilityNodata, 0.0}));
    EXPECT_EQ(clean_with_landcover(prob, lc, {}), prob);
    RasterGrid misaligned(2, 2, 1, 2.0);
    EXPECT_THROW(clean_with_landcover(prob, misaligned, {21}), DataError);
}
