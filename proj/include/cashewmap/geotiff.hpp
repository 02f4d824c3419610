#pragma once

// GeoTIFF reading and writing on top of libtiff. Georeferencing is carried by the
// ModelPixelScale / ModelTiepoint tags (north-up, square pixels only) and the CRS by
// the GeoKey directory. Nodata uses the GDAL_NODATA ASCII tag so files interoperate
// with GDAL-based tooling.

#include <tiffio.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "cashewmap/error.hpp"
#include "cashewmap/raster.hpp"

namespace cashewmap {

namespace geotiff_detail {

constexpr ttag_t kPixelScale = 33550;
constexpr ttag_t kTiepoint = 33922;
constexpr ttag_t kGeoKeyDirectory = 34735;
constexpr ttag_t kGeoDoubleParams = 34736;
constexpr ttag_t kGeoAsciiParams = 34737;
constexpr ttag_t kGdalNodata = 42113;

constexpr std::uint16_t kModelTypeKey = 1024;
constexpr std::uint16_t kRasterTypeKey = 1025;
constexpr std::uint16_t kCitationKey = 1026;
constexpr std::uint16_t kGeographicTypeKey = 2048;
constexpr std::uint16_t kProjectedTypeKey = 3072;

inline TIFFExtendProc& parent_extender() {
    static TIFFExtendProc p = nullptr;
    return p;
}

inline void extend_tags(TIFF* tif) {
    static const TIFFFieldInfo info[] = {
        {kPixelScale, TIFF_VARIABLE, TIFF_VARIABLE, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1, const_cast<char*>("ModelPixelScale")},
        {kTiepoint, TIFF_VARIABLE, TIFF_VARIABLE, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1, const_cast<char*>("ModelTiepoint")},
        {kGeoKeyDirectory, TIFF_VARIABLE, TIFF_VARIABLE, TIFF_SHORT, FIELD_CUSTOM, 1, 1, const_cast<char*>("GeoKeyDirectory")},
        {kGeoDoubleParams, TIFF_VARIABLE, TIFF_VARIABLE, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1, const_cast<char*>("GeoDoubleParams")},
        {kGeoAsciiParams, -1, -1, TIFF_ASCII, FIELD_CUSTOM, 1, 0, const_cast<char*>("GeoAsciiParams")},
        {kGdalNodata, -1, -1, TIFF_ASCII, FIELD_CUSTOM, 1, 0, const_cast<char*>("GDALNoDataValue")},
    };
    for (const auto& fi : info) {
        if (TIFFFindField(tif, fi.field_tag, TIFF_ANY) == nullptr) TIFFMergeFieldInfo(tif, &fi, 1);
    }
    if (parent_extender()) parent_extender()(tif);
}

inline void register_tags() {
    static std::once_flag once;
    std::call_once(once, [] {
        parent_extender() = TIFFSetTagExtender(extend_tags);
        TIFFSetWarningHandler(nullptr);
    });
}

struct TiffCloser {
    void operator()(TIFF* t) const {
        if (t) TIFFClose(t);
    }
};
using TiffPtr = std::unique_ptr<TIFF, TiffCloser>;

inline std::size_t type_size(DataType t) {
    switch (t) {
        case DataType::UInt8: return 1;
        case DataType::UInt16:
        case DataType::Int16: return 2;
        case DataType::Int32:
        case DataType::Float32: return 4;
        case DataType::Float64: return 8;
    }
    return 8;
}

inline void encode(DataType t, double v, unsigned char* dst) {
    switch (t) {
        case DataType::UInt8: { auto x = static_cast<std::uint8_t>(v); std::memcpy(dst, &x, 1); break; }
        case DataType::UInt16: { auto x = static_cast<std::uint16_t>(v); std::memcpy(dst, &x, 2); break; }
        case DataType::Int16: { auto x = static_cast<std::int16_t>(v); std::memcpy(dst, &x, 2); break; }
        case DataType::Int32: { auto x = static_cast<std::int32_t>(v); std::memcpy(dst, &x, 4); break; }
        case DataType::Float32: { auto x = static_cast<float>(v); std::memcpy(dst, &x, 4); break; }
        case DataType::Float64: std::memcpy(dst, &v, 8); break;
    }
}

inline double decode(DataType t, const unsigned char* src) {
    switch (t) {
        case DataType::UInt8: return *src;
        case DataType::UInt16: { std::uint16_t x; std::memcpy(&x, src, 2); return x; }
        case DataType::Int16: { std::int16_t x; std::memcpy(&x, src, 2); return x; }
        case DataType::Int32: { std::int32_t x; std::memcpy(&x, src, 4); return x; }
        case DataType::Float32: { float x; std::memcpy(&x, src, 4); return x; }
        case DataType::Float64: { double x; std::memcpy(&x, src, 8); return x; }
    }
    return 0.0;
}

inline DataType from_tiff(std::uint16_t bits, std::uint16_t format, const std::string& path) {
    if (format == SAMPLEFORMAT_IEEEFP) {
        if (bits == 32) return DataType::Float32;
        if (bits == 64) return DataType::Float64;
    } else if (format == SAMPLEFORMAT_INT) {
        if (bits == 16) return DataType::Int16;
        if (bits == 32) return DataType::Int32;
    } else if (format == SAMPLEFORMAT_UINT || format == SAMPLEFORMAT_VOID) {
        if (bits == 8) return DataType::UInt8;
        if (bits == 16) return DataType::UInt16;
    }
    throw DataError("unsupported raster sample type (" + std::to_string(bits) + " bits, format " +
                    std::to_string(format) + "): " + path);
}

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace geotiff_detail

/// Writes `g` as a band-separate, uncompressed GeoTIFF using the grid's data type.
inline void write_raster(const std::filesystem::path& path, const RasterGrid& g) {
    using namespace geotiff_detail;
    register_tags();
    auto tmp = path;
    tmp += ".tmp";
    {
        TiffPtr tif(TIFFOpen(tmp.c_str(), "w"));
        if (!tif) throw DataError("cannot create raster: " + path.string());
        const DataType t = g.data_type();
        const auto bytes = static_cast<std::uint16_t>(type_size(t));
        std::uint16_t fmt = SAMPLEFORMAT_UINT;
        if (t == DataType::Int16 || t == DataType::Int32) fmt = SAMPLEFORMAT_INT;
        if (t == DataType::Float32 || t == DataType::Float64) fmt = SAMPLEFORMAT_IEEEFP;
        TIFFSetField(tif.get(), TIFFTAG_IMAGEWIDTH, static_cast<std::uint32_t>(g.cols()));
        TIFFSetField(tif.get(), TIFFTAG_IMAGELENGTH, static_cast<std::uint32_t>(g.rows()));
        TIFFSetField(tif.get(), TIFFTAG_SAMPLESPERPIXEL, static_cast<std::uint16_t>(g.bands()));
        TIFFSetField(tif.get(), TIFFTAG_BITSPERSAMPLE, static_cast<std::uint16_t>(bytes * 8));
        TIFFSetField(tif.get(), TIFFTAG_SAMPLEFORMAT, fmt);
        TIFFSetField(tif.get(), TIFFTAG_PLANARCONFIG, PLANARCONFIG_SEPARATE);
        TIFFSetField(tif.get(), TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_MINISBLACK);
        TIFFSetField(tif.get(), TIFFTAG_COMPRESSION, COMPRESSION_NONE);
        if (g.bands() > 1) {
            std::vector<std::uint16_t> extra(static_cast<std::size_t>(g.bands() - 1), EXTRASAMPLE_UNSPECIFIED);
            TIFFSetField(tif.get(), TIFFTAG_EXTRASAMPLES, static_cast<std::uint16_t>(extra.size()), extra.data());
        }
        const std::uint32_t rows_per_strip = std::max<std::uint32_t>(1, 65536 / (g.cols() * bytes));
        TIFFSetField(tif.get(), TIFFTAG_ROWSPERSTRIP, rows_per_strip);

        double scale[3] = {g.pixel_size(), g.pixel_size(), 0.0};
        double tie[6] = {0.0, 0.0, 0.0, g.origin_x(), g.origin_y(), 0.0};
        TIFFSetField(tif.get(), kPixelScale, static_cast<std::uint16_t>(3), scale);
        TIFFSetField(tif.get(), kTiepoint, static_cast<std::uint16_t>(6), tie);

        std::vector<std::uint16_t> keys = {1, 1, 0, 0};
        std::string ascii;
        const std::string& crs = g.crs_id();
        auto add_key = [&](std::uint16_t id, std::uint16_t loc, std::uint16_t count, std::uint16_t value) {
            keys.insert(keys.end(), {id, loc, count, value});
            ++keys[3];
        };
        if (crs.rfind("EPSG:", 0) == 0) {
            int code = std::stoi(crs.substr(5));
            bool geographic = code == 4326 || code == 4269 || code == 4267;
            add_key(kModelTypeKey, 0, 1, geographic ? 2 : 1);
            add_key(kRasterTypeKey, 0, 1, 1);
            add_key(geographic ? kGeographicTypeKey : kProjectedTypeKey, 0, 1, static_cast<std::uint16_t>(code));
        } else {
            add_key(kModelTypeKey, 0, 1, 1);
            add_key(kRasterTypeKey, 0, 1, 1);
            if (!crs.empty()) {
                ascii = crs + "|";
                add_key(kCitationKey, static_cast<std::uint16_t>(kGeoAsciiParams), static_cast<std::uint16_t>(ascii.size()), 0);
            }
        }
        TIFFSetField(tif.get(), kGeoKeyDirectory, static_cast<std::uint16_t>(keys.size()), keys.data());
        if (!ascii.empty()) TIFFSetField(tif.get(), kGeoAsciiParams, ascii.c_str());
        if (g.nodata()) TIFFSetField(tif.get(), kGdalNodata, format_double(*g.nodata()).c_str());

        const std::uint32_t strips_per_band = (static_cast<std::uint32_t>(g.rows()) + rows_per_strip - 1) / rows_per_strip;
        std::vector<unsigned char> buf;
        for (int b = 0; b < g.bands(); ++b) {
            for (std::uint32_t s = 0; s < strips_per_band; ++s) {
                const int r0 = static_cast<int>(s * rows_per_strip);
                const int r1 = std::min(g.rows(), r0 + static_cast<int>(rows_per_strip));
                buf.assign(static_cast<std::size_t>(r1 - r0) * g.cols() * bytes, 0);
                std::size_t k = 0;
                for (int r = r0; r < r1; ++r)
                    for (int c = 0; c < g.cols(); ++c, k += bytes) encode(t, g.at(b, r, c), buf.data() + k);
                if (TIFFWriteEncodedStrip(tif.get(), b * strips_per_band + s, buf.data(),
                                          static_cast<tmsize_t>(buf.size())) < 0)
                    throw DataError("failed writing raster strip: " + path.string());
            }
        }
    }
    std::filesystem::rename(tmp, path);
}

/// Reads a strip- or tile-organized GeoTIFF (any libtiff-supported compression,
/// contiguous or separate planes) into a grid.
inline RasterGrid read_raster(const std::filesystem::path& path) {
    using namespace geotiff_detail;
    register_tags();
    if (!std::filesystem::exists(path)) throw DataError("missing file: " + path.string());
    TIFFSetErrorHandler(nullptr);
    TiffPtr tif(TIFFOpen(path.c_str(), "r"));
    if (!tif) throw DataError("unsupported or corrupt raster container: " + path.string());

    std::uint32_t width = 0, height = 0;
    std::uint16_t spp = 1, bits = 8, fmt = SAMPLEFORMAT_UINT, planar = PLANARCONFIG_CONTIG;
    if (!TIFFGetField(tif.get(), TIFFTAG_IMAGEWIDTH, &width) || !TIFFGetField(tif.get(), TIFFTAG_IMAGELENGTH, &height))
        throw DataError("corrupt raster header: " + path.string());
    TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLESPERPIXEL, &spp);
    TIFFGetFieldDefaulted(tif.get(), TIFFTAG_BITSPERSAMPLE, &bits);
    TIFFGetFieldDefaulted(tif.get(), TIFFTAG_SAMPLEFORMAT, &fmt);
    TIFFGetFieldDefaulted(tif.get(), TIFFTAG_PLANARCONFIG, &planar);
    const DataType t = from_tiff(bits, fmt, path.string());
    const std::size_t bytes = type_size(t);

    double pixel = 1.0, ox = 0.0, oy = 0.0;
    {
        std::uint16_t n = 0;
        double* v = nullptr;
        if (TIFFGetField(tif.get(), kPixelScale, &n, &v) && n >= 2) {
            if (v[0] != v[1]) throw DataError("non-square pixels are not supported: " + path.string());
            pixel = v[0];
        }
        if (TIFFGetField(tif.get(), kTiepoint, &n, &v) && n >= 6) {
            ox = v[3] - v[0] * pixel;
            oy = v[4] + v[1] * pixel;
        }
    }
    std::string crs;
    {
        std::uint16_t n = 0;
        std::uint16_t* k = nullptr;
        char* ascii = nullptr;
        TIFFGetField(tif.get(), kGeoAsciiParams, &ascii);
        if (TIFFGetField(tif.get(), kGeoKeyDirectory, &n, &k) && n >= 4) {
            const int nkeys = k[3];
            for (int i = 0; i < nkeys && 4 + 4 * i + 3 < n; ++i) {
                const std::uint16_t* e = k + 4 + 4 * i;
                if ((e[0] == kProjectedTypeKey || e[0] == kGeographicTypeKey) && e[1] == 0 && e[3] != 32767) {
                    crs = "EPSG:" + std::to_string(e[3]);
                } else if (e[0] == kCitationKey && e[1] == kGeoAsciiParams && ascii && crs.empty()) {
                    std::string s(ascii);
                    s = s.substr(std::min<std::size_t>(e[3], s.size()), e[2]);
                    if (!s.empty() && s.back() == '|') s.pop_back();
                    crs = s;
                }
            }
        }
    }
    RasterGrid g(static_cast<int>(height), static_cast<int>(width), spp, pixel, ox, oy, crs, t);
    {
        char* nd = nullptr;
        if (TIFFGetField(tif.get(), kGdalNodata, &nd) && nd) g.set_nodata(std::stod(nd));
    }

    const bool separate = planar == PLANARCONFIG_SEPARATE && spp > 1;
    auto scatter = [&](const unsigned char* buf, int r0, int c0, int h, int w, int stride_w, int band) {
        for (int r = 0; r < h && r0 + r < g.rows(); ++r)
            for (int c = 0; c < w && c0 + c < g.cols(); ++c) {
                if (separate) {
                    g.at(band, r0 + r, c0 + c) = decode(t, buf + (static_cast<std::size_t>(r) * stride_w + c) * bytes);
                } else {
                    for (int b = 0; b < spp; ++b)
                        g.at(b, r0 + r, c0 + c) =
                            decode(t, buf + ((static_cast<std::size_t>(r) * stride_w + c) * spp + b) * bytes);
                }
            }
    };
    const int planes = separate ? spp : 1;
    if (TIFFIsTiled(tif.get())) {
        std::uint32_t tw = 0, th = 0;
        TIFFGetField(tif.get(), TIFFTAG_TILEWIDTH, &tw);
        TIFFGetField(tif.get(), TIFFTAG_TILELENGTH, &th);
        std::vector<unsigned char> buf(static_cast<std::size_t>(TIFFTileSize(tif.get())));
        for (int p = 0; p < planes; ++p)
            for (std::uint32_t y = 0; y < height; y += th)
                for (std::uint32_t x = 0; x < width; x += tw) {
                    ttile_t tile = TIFFComputeTile(tif.get(), x, y, 0, static_cast<tsample_t>(p));
                    if (TIFFReadEncodedTile(tif.get(), tile, buf.data(), static_cast<tmsize_t>(buf.size())) < 0)
                        throw DataError("corrupt raster tile: " + path.string());
                    scatter(buf.data(), static_cast<int>(y), static_cast<int>(x), static_cast<int>(th),
                            static_cast<int>(tw), static_cast<int>(tw), p);
                }
    } else {
        std::uint32_t rps = height;
        TIFFGetFieldDefaulted(tif.get(), TIFFTAG_ROWSPERSTRIP, &rps);
        rps = std::min(rps, height);
        const std::uint32_t strips_per_plane = (height + rps - 1) / rps;
        std::vector<unsigned char> buf(static_cast<std::size_t>(TIFFStripSize(tif.get())));
        for (int p = 0; p < planes; ++p)
            for (std::uint32_t s = 0; s < strips_per_plane; ++s) {
                tstrip_t strip = static_cast<tstrip_t>(p) * strips_per_plane + s;
                if (TIFFReadEncodedStrip(tif.get(), strip, buf.data(), static_cast<tmsize_t>(buf.size())) < 0)
                    throw DataError("corrupt raster strip: " + path.string());
                scatter(buf.data(), static_cast<int>(s * rps), 0, static_cast<int>(rps), static_cast<int>(width),
                        static_cast<int>(width), p);
            }
    }
    return g;
}

}  // namespace cashewmap
