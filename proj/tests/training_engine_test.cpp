#include <gtest/gtest.h>

#include <cmath>

#include "cashewmap/nn/adam.hpp"
#include "cashewmap/train.hpp"
#include "support.hpp"

using namespace cashewmap;
using cashewmap::testing::small_landscape;
using cashewmap::testing::tiny_model;

namespace {

struct Data {
    SyntheticLandscape L;
    std::vector<PatchStack> train, val, p2_train, p2_val;
};

const Data& data() {
    static const Data d = [] {
        Data d;
        d.L = generate_synthetic_landscape(small_landscape(128), CategorySchema::default_schema(), 31);
        SamplingOptions opt;
        opt.patch_size = 32;
        opt.square_size = 64;
        auto patches = sample_patches(d.L.grids, d.L.truth_mask, &d.L.truth_ids, 48, 2, opt);
        std::tie(d.train, d.val) = split_by_square(std::move(patches), 0.25, 1);
        d.p2_train = filter_phase2(d.train, d.L.truth);
        d.p2_val = with_binary_masks(d.val, d.L.truth);
        return d;
    }();
    return d;
}

TrainConfig quick(int phase) {
    TrainConfig c;
    c.phase = phase;
    c.batch_size = 8;
    c.max_epochs = 2;
    c.seed = 4;
    return c;
}

}  // namespace

TEST(Metrics, ConfusionHandExample) {
    // Reference/predicted pairs: TP 6, FN 2, FP 3, TN 9.
    ConfusionCounter cc(2);
    for (int i = 0; i < 6; ++i) cc.add(1, 1);
    for (int i = 0; i < 2; ++i) cc.add(1, 0);
    for (int i = 0; i < 3; ++i) cc.add(0, 1);
    for (int i = 0; i < 9; ++i) cc.add(0, 0);
    const auto r = cc.report(true, 1);
    EXPECT_DOUBLE_EQ(r.accuracy, 15.0 / 20.0);
    EXPECT_DOUBLE_EQ(r.precision, 6.0 / 9.0);
    EXPECT_DOUBLE_EQ(r.recall, 6.0 / 8.0);
    EXPECT_DOUBLE_EQ(r.f1, 2.0 * 6 / (2.0 * 6 + 2 + 3));
    EXPECT_EQ(r.n_pixels, 20u);
}

TEST(Metrics, MacroAverageSkipsAbsentClasses) {
    ConfusionCounter cc(5);
    cc.add(1, 1);
    cc.add(3, 3);
    cc.add(3, 1);
    const auto r = cc.report(false, 1);
    // Class 1: P 1/2, R 1. Class 3: P 1, R 1/2.
    EXPECT_DOUBLE_EQ(r.precision, 0.75);
    EXPECT_DOUBLE_EQ(r.recall, 0.75);
    EXPECT_EQ(r.per_category.size(), 2u);
}

TEST(Training, LabelCategoriesListsPresentCodes) {
    const auto cats = label_categories(data().train);
    EXPECT_EQ(cats, (std::vector<int>{2, 3, 7}));
}

TEST(Training, BatchUpdateIsIndependentOfJobs) {
    const auto& d = data();
    std::vector<const PatchStack*> batch;
    for (std::size_t i = 0; i < 6; ++i) batch.push_back(&d.train[i]);
    auto a = nn::build_model<float>(tiny_model(32));
    auto b = a;
    nn::Adam<float> oa(1e-3), ob(1e-3);
    const double la = train_batch(a, oa, batch, 9, 1);
    const double lb = train_batch(b, ob, batch, 9, 3);
    EXPECT_EQ(la, lb);
    EXPECT_EQ(a.params.values(), b.params.values());
}

TEST(Training, Phase2StepFreezesEncoder) {
    const auto& d = data();
    ASSERT_FALSE(d.p2_train.empty());
    auto cfg = quick(2);
    auto m = prepare_phase2(nn::build_model<float>(tiny_model(32)), cfg);
    const auto enc = nn::encoder_hash(m);
    const auto before = m.params.values();
    std::vector<const PatchStack*> batch = {&d.p2_train[0]};
    nn::Adam<float> opt(1e-3);
    const double loss = train_batch(m, opt, batch, 1, 1);
    ASSERT_GT(loss, 0.0);
    EXPECT_EQ(nn::encoder_hash(m), enc);
    std::size_t changed = 0;
    for (const auto& p : m.params.info())
        for (std::size_t i = p.offset; i < p.offset + p.size; ++i) {
            if (nn::is_encoder_side(p.group))
                ASSERT_EQ(m.params.values()[i], before[i]) << p.name;
            else if (p.group == nn::ParamGroup::Decoder)
                changed += m.params.values()[i] != before[i];
        }
    EXPECT_GT(changed, 0u);
}

TEST(Training, NonFiniteLossIsNumericError) {
    auto p = data().train[0];
    p.levels[1].data[5] = std::numeric_limits<float>::quiet_NaN();
    auto m = nn::build_model<float>(tiny_model(32));
    nn::Adam<float> opt;
    EXPECT_THROW(train_batch(m, opt, {&p}, 1), NumericError);
}

TEST(Training, Phase1ImprovesAndRestoresBest) {
    const auto& d = data();
    auto cfg = quick(1);
    cfg.max_epochs = 3;
    const auto m0 = nn::build_model<float>(tiny_model(32));
    const auto cats = label_categories(d.train);
    const double start = evaluate_with_loss(m0, d.val, 0.5, 1, &cats).second;
    int calls = 0;
    const auto r = train_phase1(m0, d.train, d.val, cfg, [&](const EpochRecord&) { ++calls; });
    EXPECT_EQ(calls, 2 * r.epochs_run);
    EXPECT_TRUE(r.model.trained);
    EXPECT_EQ(r.model.phase, 1);
    ASSERT_GE(r.best_epoch, 1);
    double best = 1e9;
    for (const auto& e : r.history)
        if (e.split == "val") best = std::min(best, e.loss);
    EXPECT_EQ(best, r.best_val_loss);
    EXPECT_NEAR(evaluate_with_loss(r.model, d.val, 0.5, 1, &cats).second, r.best_val_loss, 1e-9);
    EXPECT_LT(r.best_val_loss, start);

    const auto again = train_phase1(m0, d.train, d.val, cfg);
    EXPECT_EQ(again.model.params.values(), r.model.params.values());
}

TEST(Training, Phase2KeepsEncoderOfPhase1) {
    const auto& d = data();
    auto p1 = train_phase1(nn::build_model<float>(tiny_model(32)), d.train, d.val, quick(1)).model;
    const auto r = train_phase2(p1, d.p2_train, d.p2_val, quick(2));
    EXPECT_EQ(nn::encoder_hash(r.model), nn::encoder_hash(p1));
    EXPECT_EQ(r.model.head_type, nn::HeadType::Sigmoid);
    EXPECT_EQ(r.model.phase, 2);
}

TEST(Training, ConfigurationErrors) {
    const auto& d = data();
    const auto m = nn::build_model<float>(tiny_model(32));
    auto cfg = quick(1);
    EXPECT_THROW(train_phase1(m, {}, d.val, cfg), DataError);
    EXPECT_THROW(train_phase1(m, d.train, {}, cfg), DataError);
    EXPECT_THROW(train_phase2(m, {}, d.p2_val, quick(2)), DataError);
    cfg.batch_size = 0;
    EXPECT_THROW(train_phase1(m, d.train, d.val, cfg), ConfigError);
    auto strict = quick(2);
    strict.strict = true;
    EXPECT_THROW(prepare_phase2(m, strict), ConfigError);
    EXPECT_THROW(train_phase1(m, d.p2_train, d.val, quick(2)), ConfigError);
}

TEST(Training, MetricsCsvLayout) {
    EpochRecord r;
    r.epoch = 3;
    r.split = "val";
    r.loss = 0.25;
    r.metrics.f1 = 0.5;
    EXPECT_EQ(metrics_csv({r}), "epoch,split,loss,accuracy,precision,recall,f1\n3,val,0.25000000,0.000000,0.000000,0.000000,0.500000\n");
}
