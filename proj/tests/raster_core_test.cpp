#include <gtest/gtest.h>

#include <cmath>

#include "cashewmap/geotiff.hpp"
#include "cashewmap/polygon.hpp"
#include "cashewmap/raster.hpp"
#include "support.hpp"

using namespace cashewmap;
using cashewmap::testing::TempDir;

namespace {

RasterGrid ramp(int rows, int cols, int bands, DataType t) {
    RasterGrid g(rows, cols, bands, 5.0, 500000.0, 1500000.0, "EPSG:32648", t);
    for (int b = 0; b < bands; ++b)
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) g.at(b, r, c) = (b + 1) * 100 + r * cols + c;
    return g;
}

LabeledPolygon rect(double x0, double y0, double x1, double y1, const std::string& cat = "Cashew") {
    LabeledPolygon p;
    p.rings = {{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}}};
    p.category = cat;
    return p;
}

// Barycentric sign test, independent of the ray-crossing rule.
bool in_triangle(Point a, Point b, Point c, Point p) {
    auto s = [](Point u, Point v, Point w) { return (v.x - u.x) * (w.y - u.y) - (v.y - u.y) * (w.x - u.x); };
    const double d1 = s(a, b, p), d2 = s(b, c, p), d3 = s(c, a, p);
    return (d1 > 0 && d2 > 0 && d3 > 0) || (d1 < 0 && d2 < 0 && d3 < 0);
}

}  // namespace

TEST(RasterGrid, WindowExtractionShiftsOrigin) {
    auto g = ramp(8, 10, 2, DataType::Float64);
    Window w{2, 3, 4, 5};
    auto s = extract_window(g, w);
    EXPECT_EQ(s.rows(), 4);
    EXPECT_EQ(s.cols(), 5);
    EXPECT_DOUBLE_EQ(s.origin_x(), 500000.0 + 15.0);
    EXPECT_DOUBLE_EQ(s.origin_y(), 1500000.0 - 10.0);
    for (int b = 0; b < 2; ++b)
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 5; ++c) EXPECT_EQ(s.at(b, r, c), g.at(b, r + 2, c + 3));
    EXPECT_THROW(extract_window(g, Window{6, 0, 4, 4}), DataError);
}

TEST(RasterGrid, ParseWindow) {
    EXPECT_EQ(parse_window("1,2,3,4"), (Window{1, 2, 3, 4}));
    EXPECT_THROW(parse_window("1,2,3"), ConfigError);
    EXPECT_THROW(parse_window("1,2,3,4x"), ConfigError);
}

TEST(RasterGrid, AlignCheckAcrossLevels) {
    auto fine = ramp(16, 16, 1, DataType::Float32);
    auto coarse = downsample(fine, 2, Resampling::Average);
    EXPECT_TRUE(align_check(fine, coarse, 2));
    EXPECT_FALSE(align_check(fine, coarse, 1));
    RasterGrid shifted(8, 8, 1, 10.0, 500005.0, 1500000.0, "EPSG:32648");
    EXPECT_FALSE(align_check(fine, shifted, 2));
    RasterGrid other_crs(8, 8, 1, 10.0, 500000.0, 1500000.0, "EPSG:4326");
    EXPECT_FALSE(align_check(fine, other_crs, 2));
}

TEST(RasterGrid, AverageDownsampleSkipsNodata) {
    RasterGrid g(2, 2, 1, 1.0);
    g.set_nodata(-9.0);
    g(0, 0) = 1;
    g(0, 1) = 3;
    g(1, 0) = -9;
    g(1, 1) = 5;
    auto d = downsample(g, 2, Resampling::Average);
    EXPECT_DOUBLE_EQ(d(0, 0), 3.0);
    g(0, 0) = g(0, 1) = g(1, 1) = -9;
    const auto all_missing = downsample(g, 2, Resampling::Average);
    EXPECT_TRUE(all_missing.is_nodata(all_missing(0, 0)));
    EXPECT_THROW(downsample(ramp(5, 4, 1, DataType::Float64), 2, Resampling::Nearest), DataError);
}

TEST(GeoTiff, RoundTripEveryType) {
    TempDir dir("tiff");
    for (DataType t : {DataType::UInt8, DataType::UInt16, DataType::Int16, DataType::Int32, DataType::Float32,
                       DataType::Float64}) {
        auto g = ramp(6, 7, 3, t);
        if (t == DataType::UInt8)
            for (auto& v : g.values()) v = std::fmod(v, 250.0);
        g.set_nodata(t == DataType::UInt8 ? 255.0 : -1.0);
        if (t == DataType::UInt16) g.set_nodata(65535.0);
        const auto path = dir / ("g" + std::to_string(static_cast<int>(t)) + ".tif");
        write_raster(path, g);
        auto back = read_raster(path);
        EXPECT_EQ(back, g) << "type " << static_cast<int>(t);
    }
}

TEST(GeoTiff, FloatNanNodataSurvives) {
    TempDir dir("tiff_nan");
    RasterGrid g(3, 3, 1, 2.0, 10.0, 20.0, "EPSG:32648", DataType::Float32);
    g.set_nodata(std::nan(""));
    g(1, 1) = std::nan("");
    write_raster(dir / "n.tif", g);
    auto back = read_raster(dir / "n.tif");
    ASSERT_TRUE(back.nodata());
    EXPECT_TRUE(std::isnan(*back.nodata()));
    EXPECT_TRUE(back.is_nodata(back(1, 1)));
    EXPECT_FALSE(back.is_nodata(back(0, 0)));
}

TEST(GeoTiff, WritingIsByteStable) {
    TempDir dir("tiff_bytes");
    auto g = ramp(9, 9, 2, DataType::Float32);
    write_raster(dir / "a.tif", g);
    write_raster(dir / "b.tif", g);
    EXPECT_EQ(hash_file(dir / "a.tif"), hash_file(dir / "b.tif"));
}

TEST(GeoTiff, MissingFileIsDataError) { EXPECT_THROW(read_raster("/nonexistent/x.tif"), DataError); }

TEST(Polygon, ContainsMatchesTriangleOracle) {
    LabeledPolygon tri;
    const Point a{0.3, 0.1}, b{9.7, 2.2}, c{4.1, 8.9};
    tri.rings = {{a, b, c, a}};
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1.0, 11.0);
    int inside = 0;
    for (int i = 0; i < 5000; ++i) {
        Point p{u(rng), u(rng)};
        const bool expect = in_triangle(a, b, c, p);
        EXPECT_EQ(contains(tri, p), expect) << p.x << "," << p.y;
        inside += expect;
    }
    EXPECT_GT(inside, 500);
}

TEST(Polygon, HolesAreExcluded) {
    auto p = rect(0, 0, 10, 10);
    p.rings.push_back({{3, 3}, {7, 3}, {7, 7}, {3, 7}, {3, 3}});
    EXPECT_TRUE(contains(p, {1, 1}));
    EXPECT_FALSE(contains(p, {5, 5}));
    EXPECT_TRUE(contains(p, {8.5, 5}));
    EXPECT_DOUBLE_EQ(polygon_area(p), 100.0 - 16.0);
}

TEST(Polygon, ValidationRejectsBadInput) {
    const auto schema = CategorySchema::default_schema();
    EXPECT_NO_THROW(validate_polygon(rect(0, 0, 1, 1, "Forest Cover"), schema));
    auto young = rect(0, 0, 1, 1);
    EXPECT_THROW(validate_polygon(young, schema), DataError);
    young.age_years = 2.5;
    EXPECT_NO_THROW(validate_polygon(young, schema));
    EXPECT_THROW(validate_polygon(rect(0, 0, 1, 1, "Teak"), schema), DataError);
    LabeledPolygon bow;
    bow.category = "Cashew";
    bow.rings = {{{0, 0}, {2, 2}, {2, 0}, {0, 2}, {0, 0}}};
    EXPECT_THROW(validate_polygon(bow, schema), DataError);
}

TEST(Polygon, RasterizeUsesPixelCentresAndLastWins) {
    RasterGrid grid(4, 4, 1, 1.0, 0.0, 4.0);
    PolygonSet set;
    set.polygons.push_back(rect(0, 0, 4, 4, "Forest Cover"));
    set.polygons.push_back(rect(0.6, 0.4, 2.4, 2.6, "Cashew"));
    const auto ids = rasterize_indices(set, grid);
    // Brute force: pixel (r, c) has centre (c + .5, 4 - r - .5).
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
            const double x = c + 0.5, y = 3.5 - r;
            const int expect = (x > 0.6 && x < 2.4 && y > 0.4 && y < 2.6) ? 1 : 0;
            EXPECT_EQ(ids[static_cast<std::size_t>(r) * 4 + c], expect) << r << "," << c;
        }
    const auto schema = CategorySchema::default_schema();
    const auto mask = rasterize(set, grid, schema);
    EXPECT_EQ(mask(2, 1), schema.code("Cashew"));
    EXPECT_EQ(mask(0, 0), schema.code("Forest Cover"));
}

TEST(Polygon, GeoJsonRoundTrip) {
    TempDir dir("geojson");
    PolygonSet set;
    set.crs_id = "EPSG:32648";
    auto p = rect(1, 2, 3, 4);
    p.age_years = 6.5;
    p.group = "North";
    p.source_tag = SourceTag::Drone;
    set.polygons.push_back(p);
    set.polygons.push_back(rect(5, 5, 6, 6, "Water Body"));
    write_polygons_geojson(dir / "p.geojson", set);
    auto back = read_polygons_geojson(dir / "p.geojson");
    EXPECT_EQ(back.crs_id, set.crs_id);
    ASSERT_EQ(back.polygons.size(), 2u);
    EXPECT_EQ(back.polygons[0].rings, p.rings);
    EXPECT_EQ(back.polygons[0].age_years, p.age_years);
    EXPECT_EQ(back.polygons[0].group, "North");
    EXPECT_EQ(back.polygons[0].source_tag, SourceTag::Drone);
    EXPECT_FALSE(back.polygons[1].age_years.has_value());
}

TEST(Schema, DefaultCodesAndCsvRoundTrip) {
    TempDir dir("schema");
    const auto s = CategorySchema::default_schema();
    EXPECT_EQ(s.size(), 21u);
    EXPECT_EQ(s.code("Cashew"), 3);
    EXPECT_EQ(s.code("Water Body"), 21);
    EXPECT_EQ(s.name(0), "background");
    write_schema_csv(dir / "s.csv", s);
    const auto back = load_schema_csv(dir / "s.csv");
    EXPECT_EQ(back.hash(), s.hash());
    EXPECT_THROW(CategorySchema({{"A", 1}, {"B", 1}}), DataError);
    EXPECT_THROW(CategorySchema({{"A", 0}}), DataError);
}
