#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "cashewmap/patch.hpp"
#include "cashewmap/polygon.hpp"
#include "cashewmap/synthetic.hpp"
#include "support.hpp"

using namespace cashewmap;
using cashewmap::testing::small_landscape;
using cashewmap::testing::TempDir;

namespace {

const SyntheticLandscape& landscape() {
    static const SyntheticLandscape L =
        generate_synthetic_landscape(small_landscape(128), CategorySchema::default_schema(), 21);
    return L;
}

PatchStack asymmetric_patch(int n) {
    PatchStack p;
    for (int s = 0; s < kLevels; ++s) {
        auto& t = p.levels[static_cast<std::size_t>(s)];
        t = nn::Tensor<float>(2, n >> s, n >> s);
        for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = static_cast<float>(i * 7 % 31);
    }
    p.label_mask.resize(static_cast<std::size_t>(n) * n);
    p.source_ids.resize(p.label_mask.size());
    for (std::size_t i = 0; i < p.label_mask.size(); ++i) {
        p.label_mask[i] = static_cast<std::uint16_t>(i * 7 % 31 % 5);
        p.source_ids[i] = static_cast<std::int32_t>(i);
    }
    return p;
}

}  // namespace

TEST(Synthetic, SeededAndAligned) {
    const auto& L = landscape();
    check_level_alignment(L.grids);
    auto again = generate_synthetic_landscape(small_landscape(128), CategorySchema::default_schema(), 21);
    EXPECT_EQ(again.grids[0], L.grids[0]);
    EXPECT_EQ(again.truth_mask, L.truth_mask);
    auto other = generate_synthetic_landscape(small_landscape(128), CategorySchema::default_schema(), 22);
    EXPECT_NE(other.truth_mask, L.truth_mask);
}

TEST(Synthetic, TruthRasterAgreesWithPolygons) {
    const auto& L = landscape();
    const auto schema = CategorySchema::default_schema();
    const auto ids = rasterize_indices(L.truth, L.truth_mask);
    ASSERT_EQ(ids, L.truth_ids);
    std::size_t cashew = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        ASSERT_GE(ids[i], 0);
        const auto& poly = L.truth.polygons[static_cast<std::size_t>(ids[i])];
        EXPECT_EQ(L.truth_mask.values()[i], schema.code(poly.category));
        if (poly.category == cashew_category()) {
            ++cashew;
            ASSERT_TRUE(poly.age_years);
            EXPECT_GE(*poly.age_years, 4.0);
        }
    }
    const double frac = double(cashew) / double(ids.size());
    EXPECT_NEAR(frac, 0.3, 0.1);
}

TEST(Synthetic, RejectsUnknownCategory) {
    auto c = small_landscape();
    c.mixture = {{"Teak", 1.0}};
    EXPECT_THROW(generate_synthetic_landscape(c, CategorySchema::default_schema(), 1), Error);
}

TEST(Sampling, WindowsSitOnTheCoarsestLattice) {
    const auto& L = landscape();
    SamplingOptions opt;
    opt.patch_size = 32;
    opt.square_size = 64;
    const auto patches = sample_patches(L.grids, L.truth_mask, &L.truth_ids, 40, 5, opt);
    ASSERT_EQ(patches.size(), 40u);
    for (const auto& p : patches) {
        const Window& w = p.meta.window;
        EXPECT_EQ(w.row_off % 8, 0);
        EXPECT_EQ(w.col_off % 8, 0);
        EXPECT_TRUE(window_inside(L.grids[0], w));
        for (int s = 0; s < kLevels; ++s) {
            const auto& g = L.grids[static_cast<std::size_t>(s)];
            const auto& t = p.levels[static_cast<std::size_t>(s)];
            const int f = 1 << s;
            ASSERT_EQ(t.h, 32 / f);
            for (int b = 0; b < g.bands(); ++b)
                for (int r = 0; r < t.h; ++r)
                    for (int c = 0; c < t.w; ++c)
                        ASSERT_FLOAT_EQ(t.at(b, r, c), static_cast<float>(g.at(b, w.row_off / f + r, w.col_off / f + c)));
        }
        for (int r = 0; r < 32; ++r)
            for (int c = 0; c < 32; ++c)
                ASSERT_EQ(p.label_mask[static_cast<std::size_t>(r) * 32 + c], L.truth_mask(w.row_off + r, w.col_off + c));
        const int sq = ((w.row_off + 16) / 64) * 2 + (w.col_off + 16) / 64;
        EXPECT_EQ(p.meta.square_id, sq);
    }
    EXPECT_EQ(sample_patches(L.grids, L.truth_mask, &L.truth_ids, 40, 5, opt), patches);
}

TEST(Sampling, AllLatticeWindowsAreReachable) {
    // 48 px grid with 32 px patches: offsets {0, 8, 16} per axis, 9 windows in total.
    auto c = small_landscape(48);
    c.min_field = 8;
    c.max_field = 16;
    const auto L = generate_synthetic_landscape(c, CategorySchema::default_schema(), 2);
    SamplingOptions opt;
    opt.patch_size = 32;
    std::set<std::pair<int, int>> seen;
    for (const auto& p : sample_patches(L.grids, L.truth_mask, nullptr, 400, 9, opt))
        seen.insert({p.meta.window.row_off, p.meta.window.col_off});
    std::set<std::pair<int, int>> expected;
    for (int r : {0, 8, 16})
        for (int col : {0, 8, 16}) expected.insert({r, col});
    EXPECT_EQ(seen, expected);
}

TEST(Sampling, BadOptionsAreRejected) {
    const auto& L = landscape();
    SamplingOptions opt;
    opt.patch_size = 24;
    EXPECT_THROW(sample_patches(L.grids, L.truth_mask, nullptr, 1, 1, opt), ConfigError);
    opt.patch_size = 256;
    EXPECT_THROW(sample_patches(L.grids, L.truth_mask, nullptr, 1, 1, opt), DataError);
}

TEST(Augment, DihedralGroupLaws) {
    const auto p = asymmetric_patch(16);
    std::set<std::vector<std::uint16_t>> distinct;
    for (int t = 0; t < 8; ++t) {
        const auto q = augment(p, t);
        distinct.insert(q.label_mask);
        EXPECT_EQ(q.meta.transform, t);
        auto back = augment(q, inverse_transform(t));
        back.meta.transform = 0;
        EXPECT_EQ(back, p) << "transform " << t;
        for (int u = 0; u < 8; ++u) {
            auto twice = augment(q, u);
            auto direct = augment(p, compose_transforms(t, u));
            EXPECT_EQ(twice.label_mask, direct.label_mask);
            EXPECT_EQ(twice.levels, direct.levels);
        }
    }
    EXPECT_EQ(distinct.size(), 8u);
    EXPECT_THROW(augment(p, 8), ConfigError);
}

TEST(Augment, LevelsAndMasksMoveTogether) {
    auto p = asymmetric_patch(16);
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) p.levels[0].at(0, r, c) = static_cast<float>(p.label_mask[static_cast<std::size_t>(r) * 16 + c]);
    for (int t = 0; t < 8; ++t) {
        const auto q = augment(p, t);
        for (int r = 0; r < 16; ++r)
            for (int c = 0; c < 16; ++c)
                ASSERT_EQ(q.levels[0].at(0, r, c), float(q.label_mask[static_cast<std::size_t>(r) * 16 + c]));
    }
}

TEST(Split, SquaresNeverStraddle) {
    const auto& L = landscape();
    SamplingOptions opt;
    opt.patch_size = 16;
    opt.square_size = 32;
    auto patches = sample_patches(L.grids, L.truth_mask, &L.truth_ids, 200, 3, opt);
    auto [train, val] = split_by_square(patches, 0.25, 4);
    EXPECT_EQ(train.size() + val.size(), 200u);
    std::set<int> tr, va;
    for (const auto& p : train) tr.insert(p.meta.square_id);
    for (const auto& p : val) va.insert(p.meta.square_id);
    for (int s : va) EXPECT_FALSE(tr.count(s)) << s;
    EXPECT_EQ(va.size(), static_cast<std::size_t>(std::llround(0.25 * double(tr.size() + va.size()))));
    EXPECT_THROW(split_by_square(patches, 1.0, 1), ConfigError);
}

TEST(Phase2, FilterKeepsPatchesWithMatureCashew) {
    auto c = small_landscape(128);
    c.cashew_age_min = 1;
    c.cashew_age_max = 6;
    const auto L = generate_synthetic_landscape(c, CategorySchema::default_schema(), 8);
    SamplingOptions opt;
    opt.patch_size = 16;
    auto patches = sample_patches(L.grids, L.truth_mask, &L.truth_ids, 120, 2, opt);
    const auto kept = filter_phase2(patches, L.truth, 3.0);
    ASSERT_FALSE(kept.empty());
    EXPECT_LT(kept.size(), patches.size());
    for (const auto& p : kept) {
        std::size_t pos = 0;
        for (std::size_t i = 0; i < p.binary_mask.size(); ++i) {
            const int id = p.source_ids[i];
            const auto& poly = L.truth.polygons[static_cast<std::size_t>(id)];
            const bool mature = poly.category == cashew_category() && *poly.age_years > 3.0;
            ASSERT_EQ(p.binary_mask[i], mature ? 1 : 0);
            pos += p.binary_mask[i];
        }
        EXPECT_GT(pos, 0u);
    }
    const auto all = with_binary_masks(patches, L.truth, 3.0);
    EXPECT_EQ(all.size(), patches.size());
    PatchStack no_ids = patches.front();
    no_ids.source_ids.clear();
    EXPECT_THROW(mature_cashew_mask(no_ids, L.truth), DataError);
}

TEST(PatchCache, RoundTripAndManifest) {
    TempDir dir("cache");
    const auto& L = landscape();
    SamplingOptions opt;
    opt.patch_size = 16;
    auto patches = with_binary_masks(sample_patches(L.grids, L.truth_mask, &L.truth_ids, 12, 6, opt), L.truth);
    patches[3] = augment(patches[3], 5);
    PatchCacheManifest m;
    m.seed = 6;
    m.phase = "2";
    write_patch_cache(dir / "c.bin", patches, m);
    EXPECT_EQ(read_patch_cache(dir / "c.bin"), patches);
    EXPECT_TRUE(std::filesystem::exists(dir / "c.bin.json"));
    write_patch_cache(dir / "d.bin", patches, m);
    EXPECT_EQ(hash_file(dir / "c.bin"), hash_file(dir / "d.bin"));

    const auto size = std::filesystem::file_size(dir / "c.bin");
    std::filesystem::resize_file(dir / "c.bin", size / 2);
    EXPECT_THROW(read_patch_cache(dir / "c.bin"), DataError);
    std::ofstream(dir / "junk.bin") << "not a cache";
    EXPECT_THROW(read_patch_cache(dir / "junk.bin"), DataError);
}
