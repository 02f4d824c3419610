#pragma once

// Seeded synthetic landscapes with exact ground truth, used to exercise the whole
// pipeline at desk scale. Fields are axis-aligned rectangles on the level-0 pixel
// lattice, so every truth polygon's area equals its pixel count times the pixel area.

#include <array>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "cashewmap/error.hpp"
#include "cashewmap/patch.hpp"
#include "cashewmap/polygon.hpp"
#include "cashewmap/raster.hpp"

namespace cashewmap {

struct SyntheticConfig {
    int rows = 1024;
    int cols = 1024;
    double pixel_size = 5.0;
    double origin_x = 500000.0;
    double origin_y = 1500000.0;
    std::string crs_id = "EPSG:32648";
    /// Target area fraction per category (normalized internally).
    std::vector<std::pair<std::string, double>> mixture = {{"Cashew", 0.3}, {"Forest Cover", 0.5}, {"Bare land", 0.2}};
    int min_field = 16;  // field edge bounds in level-0 pixels
    int max_field = 64;
    std::array<int, kLevels> bands = {4, 6, 6, 6};
    std::array<double, kLevels> noise = {0.05, 0.05, 0.05, 0.05};
    /// Optional explicit signatures: category -> per level -> per band mean. Missing
    /// categories get seeded random signatures separated by at least `min_separation`.
    std::map<std::string, std::array<std::vector<double>, kLevels>> signatures;
    double min_separation = 0.3;
    int cashew_age_min = 1;
    int cashew_age_max = 15;
    /// Probability that a field of the category has a forest-loss event (default 0.2).
    std::map<std::string, double> loss_probability = {{"Cashew", 0.6}, {"Forest Cover", 0.1}};
    int loss_year_first = 2001;
    int loss_year_last = 2022;
    std::vector<std::string> regions = {"North", "South"};
};

struct SyntheticLandscape {
    LevelGrids grids;
    PolygonSet truth;
    RasterGrid truth_mask;          // category codes at level 0
    std::vector<int> truth_ids;     // polygon index per level-0 pixel
    RasterGrid landcover;           // landcover codes (= schema codes) at level 0
    RasterGrid loss_year;           // first loss year, 0 = no loss
    RasterGrid regions;             // region index per level-0 pixel
    std::vector<std::string> region_names;
};

inline void validate(const SyntheticConfig& c, const CategorySchema& schema) {
    if (c.rows <= 0 || c.cols <= 0 || !(c.pixel_size > 0)) throw ConfigError("synthetic extent must be positive");
    if (c.rows % 8 != 0 || c.cols % 8 != 0) throw ConfigError("synthetic rows/cols must be multiples of 8");
    if (c.min_field < 1 || c.max_field < c.min_field) throw ConfigError("need 1 <= min_field <= max_field");
    if (c.max_field < 2 * c.min_field) throw ConfigError("max_field must be at least 2 * min_field");
    if (c.mixture.empty()) throw ConfigError("synthetic mixture is empty");
    double total = 0.0;
    for (const auto& [name, f] : c.mixture) {
        if (!schema.contains(name)) throw ConfigError("unknown mixture category: " + name);
        if (f < 0) throw ConfigError("negative mixture fraction for " + name);
        total += f;
    }
    if (!(total > 0)) throw ConfigError("synthetic mixture fractions sum to zero");
    for (int b : c.bands)
        if (b < 1) throw ConfigError("band counts must be >= 1");
    for (double s : c.noise)
        if (s < 0) throw ConfigError("noise must be non-negative");
    if (c.cashew_age_min < 0 || c.cashew_age_max < c.cashew_age_min) throw ConfigError("bad cashew age range");
    if (c.regions.empty()) throw ConfigError("at least one region is required");
    for (const auto& [name, sig] : c.signatures)
        for (int s = 0; s < kLevels; ++s)
            if (static_cast<int>(sig[static_cast<std::size_t>(s)].size()) != c.bands[static_cast<std::size_t>(s)])
                throw ConfigError("signature for " + name + " has wrong band count at level " + std::to_string(s));
}

inline SyntheticConfig synthetic_config_from_json(const nlohmann::json& j) {
    SyntheticConfig c;
    c.rows = j.value("rows", c.rows);
    c.cols = j.value("cols", c.cols);
    c.pixel_size = j.value("pixel_size", c.pixel_size);
    c.origin_x = j.value("origin_x", c.origin_x);
    c.origin_y = j.value("origin_y", c.origin_y);
    c.crs_id = j.value("crs", c.crs_id);
    if (j.contains("mixture")) {
        c.mixture.clear();
        for (const auto& [k, v] : j["mixture"].items()) c.mixture.emplace_back(k, v.get<double>());
    }
    c.min_field = j.value("min_field", c.min_field);
    c.max_field = j.value("max_field", c.max_field);
    if (j.contains("bands")) c.bands = j["bands"].get<std::array<int, kLevels>>();
    if (j.contains("noise")) c.noise = j["noise"].get<std::array<double, kLevels>>();
    if (j.contains("signatures"))
        for (const auto& [k, v] : j["signatures"].items())
            c.signatures[k] = v.get<std::array<std::vector<double>, kLevels>>();
    c.min_separation = j.value("min_separation", c.min_separation);
    c.cashew_age_min = j.value("cashew_age_min", c.cashew_age_min);
    c.cashew_age_max = j.value("cashew_age_max", c.cashew_age_max);
    if (j.contains("loss_probability")) c.loss_probability = j["loss_probability"].get<std::map<std::string, double>>();
    c.loss_year_first = j.value("loss_year_first", c.loss_year_first);
    c.loss_year_last = j.value("loss_year_last", c.loss_year_last);
    if (j.contains("regions")) c.regions = j["regions"].get<std::vector<std::string>>();
    return c;
}

namespace synthetic_detail {

struct Rect {
    int r0, c0, h, w;
};

inline void partition(const Rect& r, int min_side, int max_side, std::mt19937_64& rng, std::vector<Rect>& out) {
    const bool split_rows = r.h > max_side && (r.h >= r.w || r.w <= max_side);
    const bool split_cols = !split_rows && r.w > max_side;
    if (!split_rows && !split_cols) {
        out.push_back(r);
        return;
    }
    const int len = split_rows ? r.h : r.w;
    std::uniform_int_distribution<int> cut(min_side, len - min_side);
    const int k = cut(rng);
    if (split_rows) {
        partition({r.r0, r.c0, k, r.w}, min_side, max_side, rng, out);
        partition({r.r0 + k, r.c0, r.h - k, r.w}, min_side, max_side, rng, out);
    } else {
        partition({r.r0, r.c0, r.h, k}, min_side, max_side, rng, out);
        partition({r.r0, r.c0 + k, r.h, r.w - k}, min_side, max_side, rng, out);
    }
}

}  // namespace synthetic_detail

inline SyntheticLandscape generate_synthetic_landscape(const SyntheticConfig& cfg, const CategorySchema& schema,
                                                       std::uint64_t seed) {
    using synthetic_detail::Rect;
    validate(cfg, schema);
    std::mt19937_64 rng(seed);

    // Field layout.
    std::vector<Rect> fields;
    synthetic_detail::partition({0, 0, cfg.rows, cfg.cols}, cfg.min_field, cfg.max_field, rng, fields);
    std::shuffle(fields.begin(), fields.end(), rng);

    // Area-quota category assignment: each field goes to the category furthest below target.
    double total_frac = 0.0;
    for (const auto& m : cfg.mixture) total_frac += m.second;
    const double total_px = static_cast<double>(cfg.rows) * cfg.cols;
    std::vector<double> deficit;
    for (const auto& m : cfg.mixture) deficit.push_back(m.second / total_frac * total_px);
    std::vector<int> field_cat(fields.size());
    for (std::size_t i = 0; i < fields.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < deficit.size(); ++k)
            if (deficit[k] > deficit[best]) best = k;
        field_cat[i] = static_cast<int>(best);
        deficit[best] -= static_cast<double>(fields[i].h) * fields[i].w;
    }

    // Signatures.
    std::vector<std::array<std::vector<double>, kLevels>> sig(cfg.mixture.size());
    {
        std::uniform_real_distribution<double> u(0.1, 0.9);
        std::vector<std::size_t> fixed;
        for (std::size_t k = 0; k < cfg.mixture.size(); ++k) {
            auto it = cfg.signatures.find(cfg.mixture[k].first);
            if (it != cfg.signatures.end()) {
                sig[k] = it->second;
                fixed.push_back(k);
            }
        }
        auto dist0 = [&](std::size_t a, std::size_t b) {
            double d = 0.0;
            for (std::size_t i = 0; i < sig[a][0].size(); ++i) d += (sig[a][0][i] - sig[b][0][i]) * (sig[a][0][i] - sig[b][0][i]);
            return std::sqrt(d);
        };
        std::vector<std::size_t> done = fixed;
        for (std::size_t k = 0; k < cfg.mixture.size(); ++k) {
            if (std::find(fixed.begin(), fixed.end(), k) != fixed.end()) continue;
            for (int attempt = 0;; ++attempt) {
                for (int s = 0; s < kLevels; ++s) {
                    auto& v = sig[k][static_cast<std::size_t>(s)];
                    v.resize(static_cast<std::size_t>(cfg.bands[static_cast<std::size_t>(s)]));
                    for (auto& x : v) x = u(rng);
                }
                bool ok = true;
                for (std::size_t o : done) ok = ok && dist0(k, o) >= cfg.min_separation;
                if (ok || attempt > 1000) break;
            }
            done.push_back(k);
        }
    }

    SyntheticLandscape L;
    RasterGrid base(cfg.rows, cfg.cols, 1, cfg.pixel_size, cfg.origin_x, cfg.origin_y, cfg.crs_id, DataType::UInt16);
    L.truth_mask = base;
    L.landcover = base;
    L.loss_year = base;
    L.regions = base;
    L.truth_ids.assign(base.band_size(), -1);
    L.truth.crs_id = cfg.crs_id;
    L.region_names = cfg.regions;

    std::uniform_int_distribution<int> age(cfg.cashew_age_min, cfg.cashew_age_max);
    std::uniform_int_distribution<int> year(cfg.loss_year_first, cfg.loss_year_last);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const int n_regions = static_cast<int>(cfg.regions.size());
    std::vector<int> cat_code;
    for (const auto& m : cfg.mixture) cat_code.push_back(schema.code(m.first));

    for (std::size_t i = 0; i < fields.size(); ++i) {
        const Rect& f = fields[i];
        const auto& name = cfg.mixture[static_cast<std::size_t>(field_cat[i])].first;
        LabeledPolygon p;
        p.category = name;
        const double x0 = cfg.origin_x + f.c0 * cfg.pixel_size, x1 = cfg.origin_x + (f.c0 + f.w) * cfg.pixel_size;
        const double y0 = cfg.origin_y - f.r0 * cfg.pixel_size, y1 = cfg.origin_y - (f.r0 + f.h) * cfg.pixel_size;
        p.rings.push_back({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}});
        if (name == cashew_category()) p.age_years = age(rng);
        p.source_tag = SourceTag::PlanetScope;
        const int region = std::min(n_regions - 1, (f.r0 + f.h / 2) * n_regions / cfg.rows);
        p.group = cfg.regions[static_cast<std::size_t>(region)];
        auto lp = cfg.loss_probability.find(name);
        const double p_loss = lp == cfg.loss_probability.end() ? 0.2 : lp->second;
        const int loss = u01(rng) < p_loss ? year(rng) : 0;
        for (int r = f.r0; r < f.r0 + f.h; ++r)
            for (int c = f.c0; c < f.c0 + f.w; ++c) {
                L.truth_mask(r, c) = cat_code[static_cast<std::size_t>(field_cat[i])];
                L.landcover(r, c) = cat_code[static_cast<std::size_t>(field_cat[i])];
                L.loss_year(r, c) = loss;
                L.truth_ids[static_cast<std::size_t>(r) * cfg.cols + c] = static_cast<int>(L.truth.polygons.size());
            }
        L.truth.polygons.push_back(std::move(p));
    }
    for (int r = 0; r < cfg.rows; ++r)
        for (int c = 0; c < cfg.cols; ++c) L.regions(r, c) = std::min(n_regions - 1, r * n_regions / cfg.rows);

    // Imagery: level-s pixels average the noise-free signature over their footprint, plus noise.
    std::vector<int> field_index_of(base.band_size());
    for (std::size_t i = 0; i < base.band_size(); ++i)
        field_index_of[i] = field_cat[static_cast<std::size_t>(L.truth_ids[i])];
    for (int s = 0; s < kLevels; ++s) {
        const int f = 1 << s;
        const auto su = static_cast<std::size_t>(s);
        RasterGrid g(cfg.rows / f, cfg.cols / f, cfg.bands[su], cfg.pixel_size * f, cfg.origin_x, cfg.origin_y,
                     cfg.crs_id, DataType::Float32);
        std::normal_distribution<double> noise(0.0, cfg.noise[su]);
        for (int b = 0; b < g.bands(); ++b)
            for (int r = 0; r < g.rows(); ++r)
                for (int c = 0; c < g.cols(); ++c) {
                    double sum = 0.0;
                    for (int dr = 0; dr < f; ++dr)
                        for (int dc = 0; dc < f; ++dc) {
                            const int k = field_index_of[static_cast<std::size_t>(r * f + dr) * cfg.cols + c * f + dc];
                            sum += sig[static_cast<std::size_t>(k)][su][static_cast<std::size_t>(b)];
                        }
                    const double v = sum / (f * f) + (cfg.noise[su] > 0 ? noise(rng) : 0.0);
                    g.at(b, r, c) = static_cast<double>(static_cast<float>(v));
                }
        L.grids[su] = std::move(g);
    }
    return L;
}

}  // namespace cashewmap
