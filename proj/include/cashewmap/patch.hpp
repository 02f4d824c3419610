#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "cashewmap/error.hpp"
#include "cashewmap/nn/tensor.hpp"
#include "cashewmap/polygon.hpp"
#include "cashewmap/raster.hpp"
#include "cashewmap/util.hpp"

namespace cashewmap {

inline constexpr int kLevels = 4;

/// Co-registered imagery at the four network input resolutions, finest first.
using LevelGrids = std::array<RasterGrid, kLevels>;

/// Throws unless level s is exactly 2^s coarser than level 0.
inline void check_level_alignment(const LevelGrids& grids) {
    for (int s = 1; s < kLevels; ++s)
        if (!align_check(grids[0], grids[static_cast<std::size_t>(s)], 1 << s))
            throw DataError("level " + std::to_string(s) + " grid is not aligned with level 0 at ratio " +
                            std::to_string(1 << s));
}

struct PatchMetadata {
    Window window;        // level-0 window in the source grid
    int transform = 0;    // dihedral id applied on top of the source window
    int square_id = -1;   // source square used for validation splits

    bool operator==(const PatchMetadata&) const = default;
};

/// One training / inference sample: four input levels plus labels at level-0 resolution.
struct PatchStack {
    std::array<nn::Tensor<float>, kLevels> levels;
    std::vector<std::uint16_t> label_mask;   // category codes, size P*P
    std::vector<std::uint8_t> binary_mask;   // {0,1}, empty until phase-2 filtering
    std::vector<std::int32_t> source_ids;    // polygon index per pixel (-1 none), may be empty
    PatchMetadata meta;

    int size() const { return levels[0].h; }
    bool operator==(const PatchStack&) const = default;
};

// --- dihedral transforms ------------------------------------------------------

namespace patch_detail {

// Linear part of transform t acting on centered (row, col) coordinates:
// t % 4 quarter turns counter-clockwise followed by a horizontal flip when t >= 4.
inline std::array<int, 4> dihedral_matrix(int t) {
    std::array<int, 4> m = {1, 0, 0, 1};
    for (int k = 0; k < t % 4; ++k) m = {-m[2], -m[3], m[0], m[1]};  // (r,c) -> (-c, r)
    if (t >= 4) m = {m[0], m[1], -m[2], -m[3]};
    return m;
}

// Destination of source pixel (r, c) in an n x n plane.
inline std::pair<int, int> dihedral_map(int t, int r, int c, int n) {
    int rr = r, cc = c;
    for (int k = 0; k < t % 4; ++k) {
        int nr = n - 1 - cc;
        cc = rr;
        rr = nr;
    }
    if (t >= 4) cc = n - 1 - cc;
    return {rr, cc};
}

template <typename T>
void transform_plane(const T* src, T* dst, int n, int t) {
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            auto [rr, cc] = dihedral_map(t, r, c, n);
            dst[static_cast<std::size_t>(rr) * n + cc] = src[static_cast<std::size_t>(r) * n + c];
        }
}

template <typename T>
std::vector<T> transform_mask(const std::vector<T>& m, int n, int t) {
    if (m.empty()) return m;
    std::vector<T> out(m.size());
    transform_plane(m.data(), out.data(), n, t);
    return out;
}

}  // namespace patch_detail

inline void check_transform(int t) {
    if (t < 0 || t > 7) throw ConfigError("dihedral transform id must be in 0..7, got " + std::to_string(t));
}

inline int inverse_transform(int t) {
    check_transform(t);
    return t < 4 ? (4 - t) % 4 : t;
}

/// Id of applying `first` and then `second`.
inline int compose_transforms(int first, int second) {
    check_transform(first);
    check_transform(second);
    auto a = patch_detail::dihedral_matrix(first), b = patch_detail::dihedral_matrix(second);
    std::array<int, 4> m = {b[0] * a[0] + b[1] * a[2], b[0] * a[1] + b[1] * a[3], b[2] * a[0] + b[3] * a[2],
                            b[2] * a[1] + b[3] * a[3]};
    for (int t = 0; t < 8; ++t)
        if (patch_detail::dihedral_matrix(t) == m) return t;
    return 0;
}

/// Applies one of the 8 square symmetries to every level and mask of a patch.
inline PatchStack augment(const PatchStack& p, int transform) {
    check_transform(transform);
    if (transform == 0) return p;
    PatchStack out = p;
    for (auto& level : out.levels) {
        const auto& src = p.levels[static_cast<std::size_t>(&level - out.levels.data())];
        for (int ch = 0; ch < src.c; ++ch) patch_detail::transform_plane(src.channel(ch), level.channel(ch), src.h, transform);
    }
    const int n = p.size();
    out.label_mask = patch_detail::transform_mask(p.label_mask, n, transform);
    out.binary_mask = patch_detail::transform_mask(p.binary_mask, n, transform);
    out.source_ids = patch_detail::transform_mask(p.source_ids, n, transform);
    out.meta.transform = compose_transforms(p.meta.transform, transform);
    return out;
}

// --- sampling -------------------------------------------------------------------

struct SamplingOptions {
    int patch_size = 256;
    int square_size = 800;  // source-square edge in level-0 pixels (4 km at 5 m)
};

/// Copies the windows of every level for a level-0 window into a patch.
inline PatchStack cut_patch(const LevelGrids& grids, const RasterGrid* labels, const std::vector<int>* source_ids,
                            const Window& w0, int square_size = 0) {
    PatchStack p;
    for (int s = 0; s < kLevels; ++s) {
        const RasterGrid& g = grids[static_cast<std::size_t>(s)];
        const int f = 1 << s;
        Window w{w0.row_off / f, w0.col_off / f, w0.height / f, w0.width / f};
        if (!window_inside(g, w)) throw DataError("patch window outside level " + std::to_string(s) + " grid");
        auto& t = p.levels[static_cast<std::size_t>(s)];
        t = nn::Tensor<float>(g.bands(), w.height, w.width);
        for (int b = 0; b < g.bands(); ++b)
            for (int r = 0; r < w.height; ++r)
                for (int c = 0; c < w.width; ++c) {
                    double v = g.at(b, w.row_off + r, w.col_off + c);
                    t.at(b, r, c) = g.is_nodata(v) ? 0.0f : static_cast<float>(v);
                }
    }
    const std::size_t n = static_cast<std::size_t>(w0.height) * w0.width;
    if (labels) {
        p.label_mask.resize(n);
        for (int r = 0; r < w0.height; ++r)
            for (int c = 0; c < w0.width; ++c)
                p.label_mask[static_cast<std::size_t>(r) * w0.width + c] =
                    static_cast<std::uint16_t>((*labels)(w0.row_off + r, w0.col_off + c));
        // Pixels with nodata in any level carry no label.
        for (int s = 0; s < kLevels; ++s) {
            const RasterGrid& g = grids[static_cast<std::size_t>(s)];
            if (!g.nodata()) continue;
            const int f = 1 << s;
            for (int r = 0; r < w0.height; ++r)
                for (int c = 0; c < w0.width; ++c)
                    for (int b = 0; b < g.bands(); ++b)
                        if (g.is_nodata(g.at(b, (w0.row_off + r) / f, (w0.col_off + c) / f)))
                            p.label_mask[static_cast<std::size_t>(r) * w0.width + c] = 0;
        }
    }
    if (source_ids && !source_ids->empty()) {
        p.source_ids.resize(n);
        const int cols = grids[0].cols();
        for (int r = 0; r < w0.height; ++r)
            for (int c = 0; c < w0.width; ++c)
                p.source_ids[static_cast<std::size_t>(r) * w0.width + c] =
                    (*source_ids)[static_cast<std::size_t>(w0.row_off + r) * cols + w0.col_off + c];
    }
    p.meta.window = w0;
    if (square_size > 0) {
        const int squares_per_row = (grids[0].cols() + square_size - 1) / square_size;
        const int cr = w0.row_off + w0.height / 2, cc = w0.col_off + w0.width / 2;
        p.meta.square_id = (cr / square_size) * squares_per_row + cc / square_size;
    }
    return p;
}

/// Draws `n` random level-0 windows (offsets on the level-3 pixel lattice so every level
/// cuts whole pixels). Windows may overlap; the result depends only on the inputs and seed.
inline std::vector<PatchStack> sample_patches(const LevelGrids& grids, const RasterGrid& labels,
                                              const std::vector<int>* source_ids, int n, std::uint64_t seed,
                                              const SamplingOptions& opt = {}) {
    if (n < 0) throw ConfigError("patch count must be non-negative");
    check_level_alignment(grids);
    const int p = opt.patch_size;
    const int step = 1 << (kLevels - 1);
    if (p <= 0 || p % (1 << kLevels) != 0) throw ConfigError("patch size must be a positive multiple of 16");
    if (grids[0].rows() < p || grids[0].cols() < p)
        throw DataError("level-0 grid smaller than the " + std::to_string(p) + " px patch size");
    if (labels.rows() != grids[0].rows() || labels.cols() != grids[0].cols())
        throw DataError("label mask does not match level-0 geometry");
    std::vector<PatchStack> out;
    if (n == 0) return out;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> rows(0, (grids[0].rows() - p) / step), cols(0, (grids[0].cols() - p) / step);
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Window w{rows(rng) * step, cols(rng) * step, p, p};
        out.push_back(cut_patch(grids, &labels, source_ids, w, opt.square_size));
    }
    return out;
}

// --- phase-2 filtering -------------------------------------------------------------

/// Binary target of a patch: 1 where the source polygon is cashew older than `min_age`.
inline std::vector<std::uint8_t> mature_cashew_mask(const PatchStack& p, const PolygonSet& polygons,
                                                    double min_age = 3.0) {
    if (p.source_ids.empty()) throw DataError("phase-2 masks need per-pixel polygon provenance");
    std::vector<std::uint8_t> bin(p.source_ids.size(), 0);
    for (std::size_t i = 0; i < bin.size(); ++i) {
        const int id = p.source_ids[i];
        if (id < 0 || static_cast<std::size_t>(id) >= polygons.polygons.size()) continue;
        const auto& poly = polygons.polygons[static_cast<std::size_t>(id)];
        if (poly.category == cashew_category() && poly.age_years && *poly.age_years > min_age) bin[i] = 1;
    }
    return bin;
}

/// Copies of all patches with their binary masks filled (no filtering).
inline std::vector<PatchStack> with_binary_masks(std::vector<PatchStack> patches, const PolygonSet& polygons,
                                                 double min_age = 3.0) {
    for (auto& p : patches) p.binary_mask = mature_cashew_mask(p, polygons, min_age);
    return patches;
}

/// Keeps patches holding at least one pixel (and at least `min_fraction` of the patch)
/// of cashew whose source polygon is older than `min_age`, and fills their binary masks.
inline std::vector<PatchStack> filter_phase2(const std::vector<PatchStack>& patches, const PolygonSet& polygons,
                                             double min_age = 3.0, double min_fraction = 0.0) {
    std::vector<PatchStack> kept;
    for (const auto& p : patches) {
        auto bin = mature_cashew_mask(p, polygons, min_age);
        std::size_t count = 0;
        for (auto v : bin) count += v;
        const auto needed = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(min_fraction * bin.size())));
        if (count < needed) continue;
        PatchStack q = p;
        q.binary_mask = std::move(bin);
        kept.push_back(std::move(q));
    }
    return kept;
}

/// Splits patches by source square: whole squares go to validation until roughly
/// `val_fraction` of the squares are held out.
inline std::pair<std::vector<PatchStack>, std::vector<PatchStack>> split_by_square(std::vector<PatchStack> patches,
                                                                                   double val_fraction,
                                                                                   std::uint64_t seed) {
    if (val_fraction < 0.0 || val_fraction >= 1.0) throw ConfigError("validation fraction must be in [0,1)");
    std::vector<int> squares;
    for (const auto& p : patches) squares.push_back(p.meta.square_id);
    std::sort(squares.begin(), squares.end());
    squares.erase(std::unique(squares.begin(), squares.end()), squares.end());
    std::mt19937_64 rng(seed);
    std::shuffle(squares.begin(), squares.end(), rng);
    std::size_t n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(squares.size())));
    if (val_fraction > 0.0 && n_val == 0 && squares.size() > 1) n_val = 1;
    std::vector<int> val_squares(squares.begin(), squares.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<PatchStack> train, val;
    for (auto& p : patches) {
        bool is_val = std::find(val_squares.begin(), val_squares.end(), p.meta.square_id) != val_squares.end();
        (is_val ? val : train).push_back(std::move(p));
    }
    return {std::move(train), std::move(val)};
}

// --- patch cache ---------------------------------------------------------------

/// Single-file record store: "CMPC", u32 version, u64 count, then per record the level
/// tensors (i32 c,h,w + f32 data), label/binary/source masks (u64 length + data) and
/// metadata (7 x i32). A JSON sidecar manifest (`<path>.json`) records provenance.
struct PatchCacheManifest {
    std::uint64_t seed = 0;
    std::string schema_hash;
    std::string phase;
    std::vector<int> augmentations;
    std::size_t count = 0;
    int patch_size = 0;
    std::array<int, kLevels> channels{};
};

namespace patch_detail {

constexpr std::uint32_t kCacheVersion = 1;

template <typename T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
void put_vec(std::ostream& out, const std::vector<T>& v) {
    put<std::uint64_t>(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}
template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("truncated patch cache");
    return v;
}
template <typename T>
std::vector<T> get_vec(std::istream& in, std::uint64_t limit) {
    auto n = get<std::uint64_t>(in);
    if (n > limit) throw DataError("corrupt patch cache record");
    std::vector<T> v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
    if (!in) throw DataError("truncated patch cache");
    return v;
}

}  // namespace patch_detail

inline void write_patch_cache(const std::filesystem::path& path, const std::vector<PatchStack>& patches,
                              PatchCacheManifest manifest) {
    using namespace patch_detail;
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write patch cache: " + path.string());
        out.write("CMPC", 4);
        put<std::uint32_t>(out, kCacheVersion);
        put<std::uint64_t>(out, patches.size());
        for (const auto& p : patches) {
            for (const auto& t : p.levels) {
                put<std::int32_t>(out, t.c);
                put<std::int32_t>(out, t.h);
                put<std::int32_t>(out, t.w);
                put_vec(out, t.data);
            }
            put_vec(out, p.label_mask);
            put_vec(out, p.binary_mask);
            put_vec(out, p.source_ids);
            for (int v : {p.meta.window.row_off, p.meta.window.col_off, p.meta.window.height, p.meta.window.width,
                          p.meta.transform, p.meta.square_id, 0})
                put<std::int32_t>(out, v);
        }
        if (!out) throw DataError("short write: " + path.string());
    }
    std::filesystem::rename(tmp, path);

    manifest.count = patches.size();
    if (!patches.empty()) {
        manifest.patch_size = patches.front().size();
        for (int s = 0; s < kLevels; ++s) manifest.channels[static_cast<std::size_t>(s)] = patches.front().levels[static_cast<std::size_t>(s)].c;
    }
    nlohmann::json j = {{"format", "cashewmap-patch-cache"},
                        {"version", kCacheVersion},
                        {"seed", manifest.seed},
                        {"schema_hash", manifest.schema_hash},
                        {"phase", manifest.phase},
                        {"augmentations", manifest.augmentations},
                        {"count", manifest.count},
                        {"patch_size", manifest.patch_size},
                        {"channels", manifest.channels},
                        {"data_hash", hash_file(path)}};
    auto side = path;
    side += ".json";
    write_file_atomic(side, j.dump(2) + "\n");
}

inline std::vector<PatchStack> read_patch_cache(const std::filesystem::path& path) {
    using namespace patch_detail;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("missing file: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "CMPC", 4) != 0) throw DataError("not a patch cache: " + path.string());
    if (get<std::uint32_t>(in) != kCacheVersion) throw DataError("unsupported patch cache version: " + path.string());
    const auto n = get<std::uint64_t>(in);
    constexpr std::uint64_t limit = 1ULL << 30;
    std::vector<PatchStack> out;
    for (std::uint64_t i = 0; i < n; ++i) {
        PatchStack p;
        for (auto& t : p.levels) {
            t.c = get<std::int32_t>(in);
            t.h = get<std::int32_t>(in);
            t.w = get<std::int32_t>(in);
            t.data = get_vec<float>(in, limit);
            if (t.data.size() != t.plane() * static_cast<std::size_t>(t.c)) throw DataError("corrupt patch level");
        }
        p.label_mask = get_vec<std::uint16_t>(in, limit);
        p.binary_mask = get_vec<std::uint8_t>(in, limit);
        p.source_ids = get_vec<std::int32_t>(in, limit);
        p.meta.window.row_off = get<std::int32_t>(in);
        p.meta.window.col_off = get<std::int32_t>(in);
        p.meta.window.height = get<std::int32_t>(in);
        p.meta.window.width = get<std::int32_t>(in);
        p.meta.transform = get<std::int32_t>(in);
        p.meta.square_id = get<std::int32_t>(in);
        (void)get<std::int32_t>(in);
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace cashewmap
