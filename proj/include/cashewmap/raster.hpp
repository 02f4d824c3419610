#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cashewmap/error.hpp"

namespace cashewmap {

/// Storage type used when a grid is written to disk. In memory every grid holds doubles.
enum class DataType { UInt8, UInt16, Int16, Int32, Float32, Float64 };

inline bool is_integer(DataType t) { return t != DataType::Float32 && t != DataType::Float64; }

/// Pixel-space sub-rectangle of a grid.
struct Window {
    int row_off = 0;
    int col_off = 0;
    int height = 0;
    int width = 0;

    bool operator==(const Window&) const = default;
};

/// Parses "row_off,col_off,height,width".
inline Window parse_window(const std::string& text) {
    Window w;
    char c1 = 0, c2 = 0, c3 = 0;
    int consumed = 0;
    if (std::sscanf(text.c_str(), "%d %c %d %c %d %c %d%n", &w.row_off, &c1, &w.col_off, &c2, &w.height, &c3,
                    &w.width, &consumed) != 7 ||
        c1 != ',' || c2 != ',' || c3 != ',' || static_cast<std::size_t>(consumed) != text.size())
        throw ConfigError("window must be row_off,col_off,height,width: '" + text + "'");
    return w;
}

/// Georeferenced multi-band grid. origin is the upper-left corner in projected meters,
/// rows run south. Values are band-sequential: values[(band * rows + row) * cols + col].
class RasterGrid {
public:
    RasterGrid() = default;

    RasterGrid(int rows, int cols, int bands, double pixel_size, double origin_x = 0.0, double origin_y = 0.0,
               std::string crs_id = {}, DataType type = DataType::Float64)
        : origin_x_(origin_x),
          origin_y_(origin_y),
          pixel_size_(pixel_size),
          rows_(rows),
          cols_(cols),
          bands_(bands),
          crs_id_(std::move(crs_id)),
          type_(type) {
        if (rows < 1 || cols < 1) throw DataError("raster needs rows, cols >= 1");
        if (bands < 1) throw DataError("raster needs at least one band");
        if (!(pixel_size > 0.0)) throw DataError("pixel_size must be positive");
        values_.assign(static_cast<std::size_t>(rows) * cols * bands, 0.0);
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int bands() const { return bands_; }
    double pixel_size() const { return pixel_size_; }
    double origin_x() const { return origin_x_; }
    double origin_y() const { return origin_y_; }
    const std::string& crs_id() const { return crs_id_; }
    DataType data_type() const { return type_; }
    const std::optional<double>& nodata() const { return nodata_; }
    std::size_t band_size() const { return static_cast<std::size_t>(rows_) * cols_; }

    void set_nodata(std::optional<double> v) { nodata_ = v; }
    void set_data_type(DataType t) { type_ = t; }
    void set_crs(std::string crs) { crs_id_ = std::move(crs); }

    double& at(int band, int row, int col) { return values_[index(band, row, col)]; }
    double at(int band, int row, int col) const { return values_[index(band, row, col)]; }
    double& operator()(int row, int col) { return at(0, row, col); }
    double operator()(int row, int col) const { return at(0, row, col); }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }
    double* band_data(int band) { return values_.data() + static_cast<std::size_t>(band) * band_size(); }
    const double* band_data(int band) const { return values_.data() + static_cast<std::size_t>(band) * band_size(); }

    bool is_nodata(double v) const {
        if (!nodata_) return false;
        if (std::isnan(*nodata_)) return std::isnan(v);
        return v == *nodata_;
    }

    /// Same footprint, resolution, crs and band count.
    bool same_geometry(const RasterGrid& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && pixel_size_ == o.pixel_size_ && origin_x_ == o.origin_x_ &&
               origin_y_ == o.origin_y_ && crs_id_ == o.crs_id_;
    }

    /// Empty grid with this grid's geometry.
    RasterGrid like(int bands, DataType type) const {
        RasterGrid g(rows_, cols_, bands, pixel_size_, origin_x_, origin_y_, crs_id_, type);
        return g;
    }

    bool operator==(const RasterGrid& o) const {
        auto nodata_eq = [&] {
            if (nodata_.has_value() != o.nodata_.has_value()) return false;
            if (!nodata_) return true;
            return *nodata_ == *o.nodata_ || (std::isnan(*nodata_) && std::isnan(*o.nodata_));
        };
        return same_geometry(o) && bands_ == o.bands_ && type_ == o.type_ && nodata_eq() && values_ == o.values_;
    }

private:
    std::size_t index(int band, int row, int col) const {
        return (static_cast<std::size_t>(band) * rows_ + row) * cols_ + col;
    }

    double origin_x_ = 0.0;
    double origin_y_ = 0.0;
    double pixel_size_ = 1.0;
    int rows_ = 0;
    int cols_ = 0;
    int bands_ = 0;
    std::string crs_id_;
    DataType type_ = DataType::Float64;
    std::optional<double> nodata_;
    std::vector<double> values_;
};

inline bool window_inside(const RasterGrid& g, const Window& w) {
    return w.height > 0 && w.width > 0 && w.row_off >= 0 && w.col_off >= 0 && w.row_off + w.height <= g.rows() &&
           w.col_off + w.width <= g.cols();
}

/// True iff `b` covers the footprint of `a` at `ratio` times coarser resolution with
/// exactly divided dimensions.
inline bool align_check(const RasterGrid& a, const RasterGrid& b, int ratio) {
    if (ratio < 1) throw ConfigError("align_check ratio must be >= 1");
    auto close = [](double x, double y) { return std::abs(x - y) <= 1e-9 * std::max({1.0, std::abs(x), std::abs(y)}); };
    if (a.crs_id() != b.crs_id()) return false;
    if (!close(b.pixel_size(), a.pixel_size() * ratio)) return false;
    if (b.rows() * ratio != a.rows() || b.cols() * ratio != a.cols()) return false;
    return close(a.origin_x(), b.origin_x()) && close(a.origin_y(), b.origin_y());
}

/// Sub-grid copy of `w`, with the origin shifted to the window's upper-left corner.
inline RasterGrid extract_window(const RasterGrid& g, const Window& w) {
    if (!window_inside(g, w))
        throw DataError("window " + std::to_string(w.row_off) + "," + std::to_string(w.col_off) + "," +
                        std::to_string(w.height) + "," + std::to_string(w.width) + " outside " +
                        std::to_string(g.rows()) + "x" + std::to_string(g.cols()) + " grid");
    RasterGrid out(w.height, w.width, g.bands(), g.pixel_size(), g.origin_x() + w.col_off * g.pixel_size(),
                   g.origin_y() - w.row_off * g.pixel_size(), g.crs_id(), g.data_type());
    out.set_nodata(g.nodata());
    for (int b = 0; b < g.bands(); ++b)
        for (int r = 0; r < w.height; ++r)
            for (int c = 0; c < w.width; ++c) out.at(b, r, c) = g.at(b, w.row_off + r, w.col_off + c);
    return out;
}

enum class Resampling { Nearest, Average };

inline Resampling parse_resampling(const std::string& s) {
    if (s == "nearest") return Resampling::Nearest;
    if (s == "average") return Resampling::Average;
    throw ConfigError("unknown resampling kernel: " + s);
}

/// Integer-factor downsampling. Nearest takes the upper-left-of-center sample of each
/// block; Average takes the mean of the non-nodata samples (nodata if none).
inline RasterGrid downsample(const RasterGrid& g, int factor, Resampling kernel) {
    if (factor < 1) throw ConfigError("downsample factor must be >= 1");
    if (g.rows() % factor != 0 || g.cols() % factor != 0)
        throw DataError("grid dimensions not divisible by downsample factor " + std::to_string(factor));
    RasterGrid out(g.rows() / factor, g.cols() / factor, g.bands(), g.pixel_size() * factor, g.origin_x(),
                   g.origin_y(), g.crs_id(), g.data_type());
    out.set_nodata(g.nodata());
    const double fill = g.nodata().value_or(0.0);
    for (int b = 0; b < g.bands(); ++b)
        for (int r = 0; r < out.rows(); ++r)
            for (int c = 0; c < out.cols(); ++c) {
                if (kernel == Resampling::Nearest) {
                    out.at(b, r, c) = g.at(b, r * factor + (factor - 1) / 2, c * factor + (factor - 1) / 2);
                    continue;
                }
                double sum = 0.0;
                int n = 0;
                for (int dr = 0; dr < factor; ++dr)
                    for (int dc = 0; dc < factor; ++dc) {
                        double v = g.at(b, r * factor + dr, c * factor + dc);
                        if (g.is_nodata(v)) continue;
                        sum += v;
                        ++n;
                    }
                out.at(b, r, c) = n > 0 ? sum / n : fill;
            }
    return out;
}

}  // namespace cashewmap
