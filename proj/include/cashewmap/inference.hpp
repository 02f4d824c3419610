#pragma once

// Tiled wall-to-wall inference: a deterministic pass, an MC-dropout ensemble, distance
// weighted mosaic blending and landcover-based cleaning.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "cashewmap/error.hpp"
#include "cashewmap/nn/unet.hpp"
#include "cashewmap/patch.hpp"
#include "cashewmap/raster.hpp"
#include "cashewmap/util.hpp"

namespace cashewmap {

inline constexpr double kProbabilityNodata = -1.0;

struct TilingPlan {
    std::vector<Window> windows;
    int patch = 256;
    int stride = 256;
    int margin = 32;
    int rows = 0;
    int cols = 0;
};

namespace inference_detail {

inline std::vector<int> offsets(int extent, int patch, int stride) {
    std::vector<int> out;
    for (int o = 0;; o += stride) {
        if (o + patch >= extent) {
            out.push_back(extent - patch);
            break;
        }
        out.push_back(o);
    }
    return out;
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

}  // namespace inference_detail

/// Row-major window enumeration at `stride`; the last row/column of windows is shifted
/// inward so every window stays inside the grid.
inline TilingPlan plan_tiles(int rows, int cols, int patch = 256, int stride = 256, int margin = 32) {
    if (patch <= 0) throw ConfigError("tile size must be positive");
    if (stride <= 0 || stride > patch)
        throw ConfigError("stride must be in (0, " + std::to_string(patch) + "], got " + std::to_string(stride));
    if (margin < 0) throw ConfigError("blend margin must be non-negative");
    if (rows < patch || cols < patch)
        throw DataError("grid " + std::to_string(rows) + "x" + std::to_string(cols) + " is smaller than the " +
                        std::to_string(patch) + " px tile");
    TilingPlan plan;
    plan.patch = patch;
    plan.stride = stride;
    plan.margin = margin;
    plan.rows = rows;
    plan.cols = cols;
    for (int r : inference_detail::offsets(rows, patch, stride))
        for (int c : inference_detail::offsets(cols, patch, stride)) plan.windows.push_back({r, c, patch, patch});
    return plan;
}

inline TilingPlan plan_tiles(const RasterGrid& grid, int patch = 256, int stride = 256, int margin = 32) {
    return plan_tiles(grid.rows(), grid.cols(), patch, stride, margin);
}

/// Blend weight of pixel (r, c) in a tile: linear ramp over the margin towards each tile
/// side, never zero, so a pixel covered by one tile keeps that tile's value exactly.
inline double blend_weight(int r, int c, int patch, int margin) {
    if (margin == 0) return 1.0;
    const int d = std::min(std::min(r, c), std::min(patch - 1 - r, patch - 1 - c));
    return std::min(1.0, double(d + 1) / double(margin + 1));
}

namespace inference_detail {

inline void check_plan(const LevelGrids& grids, const TilingPlan& plan, const nn::SegModel<float>& m) {
    check_level_alignment(grids);
    if (m.head_type != nn::HeadType::Sigmoid) throw ConfigError("inference needs a model with a sigmoid head");
    if (plan.rows != grids[0].rows() || plan.cols != grids[0].cols())
        throw DataError("tiling plan does not match the level-0 grid");
    if (plan.patch != m.cfg.patch_size)
        throw DataError("tile size " + std::to_string(plan.patch) + " differs from the model patch size " +
                        std::to_string(m.cfg.patch_size));
    const int step = 1 << (kLevels - 1);
    for (const auto& w : plan.windows)
        if (w.row_off % step || w.col_off % step || !window_inside(grids[0], w))
            throw DataError("tile window " + std::to_string(w.row_off) + "," + std::to_string(w.col_off) +
                            " is not on the level-3 lattice inside the grid");
}

/// Per-pixel validity: every band at every level holds data.
inline std::vector<std::uint8_t> valid_mask(const LevelGrids& grids) {
    const RasterGrid& g0 = grids[0];
    std::vector<std::uint8_t> ok(static_cast<std::size_t>(g0.rows()) * g0.cols(), 1);
    for (int s = 0; s < kLevels; ++s) {
        const RasterGrid& g = grids[static_cast<std::size_t>(s)];
        if (!g.nodata()) continue;
        const int f = 1 << s;
        for (int r = 0; r < g0.rows(); ++r)
            for (int c = 0; c < g0.cols(); ++c)
                for (int b = 0; b < g.bands(); ++b)
                    if (g.is_nodata(g.at(b, r / f, c / f))) ok[static_cast<std::size_t>(r) * g0.cols() + c] = 0;
    }
    return ok;
}

/// One blended pass over all tiles. `seed` = 0 disables dropout.
inline std::vector<double> blended_pass(const nn::SegModel<float>& m, const LevelGrids& grids, const TilingPlan& plan,
                                        double rate, std::uint64_t seed, bool stochastic, unsigned jobs) {
    const int cols = grids[0].cols();
    const std::size_t n = static_cast<std::size_t>(grids[0].rows()) * cols;
    std::vector<double> acc(n, 0.0), wsum(n, 0.0);
    const std::size_t chunk = std::max<std::size_t>(1, jobs);
    for (std::size_t first = 0; first < plan.windows.size(); first += chunk) {
        const std::size_t count = std::min(chunk, plan.windows.size() - first);
        std::vector<nn::Tensor<float>> outs(count);
        parallel_for(count, jobs, [&](std::size_t i) {
            const std::size_t t = first + i;
            PatchStack p = cut_patch(grids, nullptr, nullptr, plan.windows[t]);
            std::mt19937_64 rng(mix(seed, t));
            nn::ForwardOptions fo;
            if (stochastic) {
                fo.dropout_rate = rate;
                fo.rng = &rng;
            }
            outs[i] = nn::forward(m, p, fo);
        });
        // Serial accumulation in tile order keeps the mosaic independent of `jobs`.
        for (std::size_t i = 0; i < count; ++i) {
            const Window& w = plan.windows[first + i];
            for (int r = 0; r < w.height; ++r)
                for (int c = 0; c < w.width; ++c) {
                    const double wt = blend_weight(r, c, plan.patch, plan.margin);
                    const std::size_t k = static_cast<std::size_t>(w.row_off + r) * cols + w.col_off + c;
                    acc[k] += wt * outs[i].at(0, r, c);
                    wsum[k] += wt;
                }
        }
    }
    for (std::size_t k = 0; k < n; ++k) acc[k] = wsum[k] > 0 ? acc[k] / wsum[k] : kProbabilityNodata;
    return acc;
}

inline RasterGrid to_raster(const RasterGrid& like, const std::vector<double>& v, const std::vector<std::uint8_t>& ok) {
    RasterGrid out = like.like(1, DataType::Float32);
    out.set_nodata(kProbabilityNodata);
    for (std::size_t k = 0; k < v.size(); ++k)
        out.values()[k] = ok[k] && v[k] != kProbabilityNodata ? static_cast<double>(static_cast<float>(v[k]))
                                                              : kProbabilityNodata;
    return out;
}

}  // namespace inference_detail

/// Fixed-weight probability mosaic (dropout off). Deterministic for any `jobs`.
inline RasterGrid predict_deterministic(const nn::SegModel<float>& m, const LevelGrids& grids, const TilingPlan& plan,
                                        unsigned jobs = 1) {
    inference_detail::check_plan(grids, plan, m);
    auto v = inference_detail::blended_pass(m, grids, plan, 0.0, 0, false, jobs);
    return inference_detail::to_raster(grids[0], v, inference_detail::valid_mask(grids));
}

struct McResult {
    RasterGrid mean;
    RasterGrid std;  // population standard deviation over the k runs
};

/// k stochastic passes with dropout active; every (run, tile) has its own seeded stream.
inline McResult predict_mc(const nn::SegModel<float>& m, const LevelGrids& grids, const TilingPlan& plan, int k,
                           double rate, std::uint64_t seed, unsigned jobs = 1) {
    if (k < 1) throw ConfigError("mc runs must be >= 1, got " + std::to_string(k));
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0,1)");
    inference_detail::check_plan(grids, plan, m);
    const auto ok = inference_detail::valid_mask(grids);
    std::vector<double> mean, m2;
    for (int run = 0; run < k; ++run) {
        auto v = inference_detail::blended_pass(m, grids, plan, rate, inference_detail::mix(seed, 1000003ULL * run), true,
                                                jobs);
        if (run == 0) {
            mean = v;
            m2.assign(v.size(), 0.0);
            continue;
        }
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double d = v[i] - mean[i];
            mean[i] += d / double(run + 1);
            m2[i] += d * (v[i] - mean[i]);
        }
    }
    for (auto& x : m2) x = std::sqrt(std::max(0.0, x / double(k)));
    return {inference_detail::to_raster(grids[0], mean, ok), inference_detail::to_raster(grids[0], m2, ok)};
}

enum class CombineRule { Mean, McOnly, Max };

inline CombineRule parse_combine_rule(const std::string& s) {
    if (s == "mean") return CombineRule::Mean;
    if (s == "mc-only") return CombineRule::McOnly;
    if (s == "max") return CombineRule::Max;
    throw ConfigError("unknown combine rule '" + s + "' (mean, mc-only, max)");
}

/// Merges the deterministic and MC-mean rasters; nodata in either input stays nodata.
inline RasterGrid combine(const RasterGrid& det, const RasterGrid& mc, CombineRule rule = CombineRule::Mean) {
    if (!det.same_geometry(mc) || det.bands() != 1 || mc.bands() != 1)
        throw DataError("combine needs single-band rasters with identical geometry");
    RasterGrid out = det.like(1, DataType::Float32);
    out.set_nodata(kProbabilityNodata);
    for (std::size_t i = 0; i < out.values().size(); ++i) {
        const double a = det.values()[i], b = mc.values()[i];
        if (det.is_nodata(a) || mc.is_nodata(b)) {
            out.values()[i] = kProbabilityNodata;
            continue;
        }
        double v = rule == CombineRule::Mean ? 0.5 * (a + b) : rule == CombineRule::McOnly ? b : std::max(a, b);
        out.values()[i] = std::clamp(v, 0.0, 1.0);
    }
    return out;
}

/// Zeroes probabilities where the landcover code is in `suppress`; other pixels are copied.
inline RasterGrid clean_with_landcover(const RasterGrid& prob, const RasterGrid& landcover,
                                       const std::vector<int>& suppress) {
    if (!align_check(prob, landcover, 1)) throw DataError("landcover raster is not aligned with the probability raster");
    RasterGrid out = prob;
    if (suppress.empty()) return out;
    for (int r = 0; r < prob.rows(); ++r)
        for (int c = 0; c < prob.cols(); ++c) {
            const double v = prob(r, c);
            if (prob.is_nodata(v)) continue;
            const double lc = landcover(r, c);
            if (landcover.is_nodata(lc)) continue;
            if (std::find(suppress.begin(), suppress.end(), static_cast<int>(lc)) != suppress.end())
                out.at(0, r, c) = 0.0;
        }
    return out;
}

}  // namespace cashewmap
