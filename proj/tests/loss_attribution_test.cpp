#include <gtest/gtest.h>

#include <map>
#include <random>

#include "cashewmap/attribution.hpp"

using namespace cashewmap;

namespace {

RasterGrid grid(int n, DataType t) { return RasterGrid(n, n, 1, 30.0, 0, 0, "", t); }

struct Fixture {
    RasterGrid strata = grid(12, DataType::UInt16), loss = grid(12, DataType::Int16), region = grid(12, DataType::UInt8);
};

Fixture random_fixture(std::uint64_t seed) {
    Fixture f;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < f.strata.values().size(); ++i) {
        const int s = static_cast<int>(rng() % 10);
        f.strata.values()[i] = s < 7 ? s + 1 : 105;  // 1..7 probability strata, 105 landcover
        f.loss.values()[i] = rng() % 3 == 0 ? 0 : 2001 + static_cast<int>(rng() % 4);
        f.region.values()[i] = static_cast<double>(rng() % 2);
    }
    return f;
}

AttributionOptions opts() {
    AttributionOptions o;
    o.first_year = 2001;
    o.last_year = 2004;
    return o;
}

}  // namespace

TEST(FirstLoss, EarliestYearWins) {
    std::vector<RasterGrid> annual(3, grid(2, DataType::UInt8));
    annual[0].values() = {0, 0, 0, 0};
    annual[1].values() = {1, 0, 1, 0};
    annual[2].values() = {1, 1, 0, 0};
    annual[2].set_nodata(255.0);
    annual[2].values()[3] = 255;
    const auto y = first_loss_year(annual, 2010);
    EXPECT_EQ(y.values(), (std::vector<double>{2011, 2012, 2011, 0}));
    EXPECT_THROW(first_loss_year({}, 2000), DataError);
    annual.push_back(grid(3, DataType::UInt8));
    EXPECT_THROW(first_loss_year(annual, 2010), DataError);
}

TEST(CrossTab, HandBuiltFourByFour) {
    auto strata = grid(4, DataType::UInt16), loss = grid(4, DataType::Int16);
    strata.values() = {1, 1, 2, 105,
                       3, 2, 2, 105,
                       1, 3, 105, 105,
                       2, 2, 1, 3};
    loss.values() = {2001, 2001, 2001, 2001,
                     2002, 0, 2002, 2002,
                     0, 0, 0, 2003,
                     2003, 0, 2003, 0};
    AttributionOptions o = opts();
    o.last_year = 2003;
    o.categories = {1, 2, 3};
    const auto t = cross_tab(strata, loss, o);
    // 2001: strata 1,1,2 (+ landcover). 2002: 3,2. 2003: 2,1 (+ landcover). Never lost: 2,1,3,2,3.
    using C = std::vector<std::size_t>;
    EXPECT_EQ(t.counts, (std::vector<C>{{2, 1, 0}, {0, 1, 1}, {1, 1, 0}, {1, 2, 2}}));
    EXPECT_NEAR(t.percent[0][0], 200.0 / 3.0, 1e-12);
    EXPECT_DOUBLE_EQ(t.percent[3][1], 40.0);
    EXPECT_DOUBLE_EQ(t.share[0], 75.0);
    EXPECT_NEAR(t.share[1], 200.0 / 3.0, 1e-12);
    EXPECT_NEAR(t.share[2], 200.0 / 3.0, 1e-12);
}

TEST(CrossTab, MatchesBruteForceCensus) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto f = random_fixture(seed);
        const auto t = cross_tab(f.strata, f.loss, opts());
        ASSERT_EQ(t.years, (std::vector<int>{2001, 2002, 2003, 2004}));
        std::map<std::pair<int, int>, std::size_t> census;
        std::map<int, std::size_t> all_loss, cashew_loss;
        for (std::size_t i = 0; i < f.strata.values().size(); ++i) {
            const int s = static_cast<int>(f.strata.values()[i]);
            const int y = static_cast<int>(f.loss.values()[i]);
            if (y) {
                ++all_loss[y];
                if (s <= 7) ++cashew_loss[y];
            }
            if (s <= 7) ++census[{y, s}];
        }
        for (std::size_t r = 0; r < t.counts.size(); ++r) {
            const int y = r < 4 ? 2001 + static_cast<int>(r) : 0;
            double sum = 0;
            for (std::size_t j = 0; j < 7; ++j) {
                EXPECT_EQ(t.counts[r][j], (census[{y, static_cast<int>(j) + 1}]));
                EXPECT_GE(t.percent[r][j], 0.0);
                sum += t.percent[r][j];
            }
            EXPECT_NEAR(sum, 100.0, 1e-9);
            if (r < 4) {
                EXPECT_FALSE(t.share_undefined[r]);
                EXPECT_NEAR(t.share[r], 100.0 * double(cashew_loss[y]) / double(all_loss[y]), 1e-12);
                EXPECT_GE(t.share[r], 0.0);
                EXPECT_LE(t.share[r], 100.0);
            }
        }
        EXPECT_EQ(cashew_loss_share(f.strata, f.loss, opts()), t.share);
    }
}

TEST(CrossTab, RegionFilterPartitionsCounts) {
    const auto f = random_fixture(9);
    const auto all = cross_tab(f.strata, f.loss, opts());
    const auto r0 = cross_tab(f.strata, f.loss, opts(), &f.region, 0);
    const auto r1 = cross_tab(f.strata, f.loss, opts(), &f.region, 1);
    for (std::size_t r = 0; r < all.counts.size(); ++r)
        for (std::size_t j = 0; j < all.counts[r].size(); ++j)
            EXPECT_EQ(all.counts[r][j], r0.counts[r][j] + r1.counts[r][j]);
}

TEST(CrossTab, EmptyYearsAndBadYears) {
    auto f = random_fixture(4);
    auto o = opts();
    o.last_year = 2006;
    const auto t = cross_tab(f.strata, f.loss, o);
    EXPECT_TRUE(t.share_undefined[5]);
    for (double v : t.percent[5]) EXPECT_EQ(v, 0.0);
    const auto csv = attribution_csv(t);
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "year,stratum_1,stratum_2,stratum_3,stratum_4,stratum_5,stratum_6,stratum_7,cashew_share");
    EXPECT_NE(csv.find("\n2006,0.000000,0.000000,0.000000,0.000000,0.000000,0.000000,0.000000,\n"), std::string::npos);
    EXPECT_NE(csv.find("\nno loss,"), std::string::npos);
    const auto svg = attribution_svg(t, "test");
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);

    f.loss.values()[7] = 1999;
    EXPECT_THROW(cross_tab(f.strata, f.loss, opts()), DataError);
    o.last_year = 1990;
    EXPECT_THROW(cross_tab(f.strata, f.loss, o), ConfigError);
    EXPECT_THROW(cross_tab(f.strata, grid(5, DataType::Int16), opts()), DataError);
}

TEST(Ages, HistogramFloorsAndGroups) {
    std::vector<LabeledPolygon> polys;
    auto add = [&](const std::string& cat, std::optional<double> age, const std::string& g) {
        LabeledPolygon p;
        p.category = cat;
        p.age_years = age;
        p.group = g;
        polys.push_back(p);
    };
    add("Cashew", 3.9, "North");
    add("Cashew", 3.0, "North");
    add("Cashew", 7.5, "South");
    add("Cashew", std::nullopt, "South");
    add("Rubber", 5.0, "North");
    add("Cashew", 2.0, "East");
    const auto h = age_histogram(polys, {"North", "South", "West"});
    EXPECT_EQ(h.at("North").at(3), 2u);
    EXPECT_EQ(h.at("South").at(7), 1u);
    EXPECT_TRUE(h.at("West").empty());
    EXPECT_FALSE(h.count("East"));
    EXPECT_EQ(age_histogram_csv(h), "group,age_years,count\nNorth,3,2\nSouth,7,1\n");
    EXPECT_EQ(age_histogram(polys).at("East").at(2), 1u);
}
