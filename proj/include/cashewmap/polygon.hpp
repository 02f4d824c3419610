#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cashewmap/error.hpp"
#include "cashewmap/raster.hpp"
#include "cashewmap/util.hpp"

namespace cashewmap {

struct Point {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point&) const = default;
};

using Ring = std::vector<Point>;

enum class SourceTag { BaseLayer, Drone, PlanetScope };

inline std::string to_string(SourceTag t) {
    switch (t) {
        case SourceTag::BaseLayer: return "base-layer";
        case SourceTag::Drone: return "drone";
        case SourceTag::PlanetScope: return "planet-scope";
    }
    return "base-layer";
}

inline SourceTag parse_source_tag(const std::string& s) {
    if (s == "base-layer") return SourceTag::BaseLayer;
    if (s == "drone") return SourceTag::Drone;
    if (s == "planet-scope") return SourceTag::PlanetScope;
    throw DataError("unknown source_tag: " + s);
}

inline const std::string& cashew_category() {
    static const std::string name = "Cashew";
    return name;
}

/// A hand-digitised label polygon. rings[0] is the outer ring, the rest are holes.
/// `group` is a free-form region label (typically the province) used by reports.
struct LabeledPolygon {
    std::vector<Ring> rings;
    std::string category;
    std::optional<double> age_years;
    SourceTag source_tag = SourceTag::BaseLayer;
    std::string group;
};

/// Ordered category list with integer codes; code 0 is reserved for background.
class CategorySchema {
public:
    CategorySchema() = default;

    explicit CategorySchema(std::vector<std::pair<std::string, int>> entries) : entries_(std::move(entries)) {
        std::map<int, std::string> seen;
        for (const auto& [name, code] : entries_) {
            if (code <= 0) throw DataError("category code must be positive (0 is background): " + name);
            if (!seen.emplace(code, name).second) throw DataError("duplicate category code " + std::to_string(code));
            if (!by_name_.emplace(name, code).second) throw DataError("duplicate category name " + name);
        }
    }

    /// The 21 majority land-cover categories of the reference training set, coded 1..21.
    static CategorySchema default_schema() {
        static const char* names[] = {"Banana",      "Bare land", "Cashew",  "Cassava", "Coconut",   "Durian",
                                      "Forest Cover", "Grassland", "House",   "Longan",  "Maize",     "Mango",
                                      "Orange",      "Other",     "Pepper",  "Rice",    "Road",      "Rubber",
                                      "Shrubland",   "Village",   "Water Body"};
        std::vector<std::pair<std::string, int>> e;
        int code = 1;
        for (const char* n : names) e.emplace_back(n, code++);
        return CategorySchema(std::move(e));
    }

    const std::vector<std::pair<std::string, int>>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool contains(const std::string& name) const { return by_name_.count(name) != 0; }

    int code(const std::string& name) const {
        auto it = by_name_.find(name);
        if (it == by_name_.end()) throw DataError("unknown category: " + name);
        return it->second;
    }

    std::string name(int code) const {
        if (code == 0) return "background";
        for (const auto& [n, c] : entries_)
            if (c == code) return n;
        throw DataError("unknown category code " + std::to_string(code));
    }

    bool valid_code(int code) const {
        if (code == 0) return true;
        return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.second == code; });
    }

    int max_code() const {
        int m = 0;
        for (const auto& e : entries_) m = std::max(m, e.second);
        return m;
    }

    std::uint64_t hash() const {
        Fnv1a h;
        for (const auto& [n, c] : entries_) {
            h.update(n);
            h.update("=");
            h.update(std::to_string(c));
            h.update(";");
        }
        return h.digest();
    }

private:
    std::vector<std::pair<std::string, int>> entries_;
    std::map<std::string, int> by_name_;
};

/// Reads a `category,code` CSV. A header row whose code column is not numeric is skipped.
inline CategorySchema load_schema_csv(const std::filesystem::path& path) {
    std::vector<std::pair<std::string, int>> entries;
    for (const auto& row : read_csv(path)) {
        if (row.size() < 2) throw DataError("schema row needs category,code: " + path.string());
        int code = 0;
        try {
            code = std::stoi(row[1]);
        } catch (const std::exception&) {
            if (entries.empty()) continue;
            throw DataError("bad schema code '" + row[1] + "' in " + path.string());
        }
        entries.emplace_back(row[0], code);
    }
    return CategorySchema(std::move(entries));
}

inline void write_schema_csv(const std::filesystem::path& path, const CategorySchema& schema) {
    std::string out = "category,code\n";
    for (const auto& [n, c] : schema.entries()) out += n + "," + std::to_string(c) + "\n";
    write_file_atomic(path, out);
}

namespace polygon_detail {

inline double cross(const Point& o, const Point& a, const Point& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

inline bool on_segment(const Point& p, const Point& q, const Point& r) {
    return std::min(p.x, r.x) <= q.x && q.x <= std::max(p.x, r.x) && std::min(p.y, r.y) <= q.y &&
           q.y <= std::max(p.y, r.y);
}

inline bool segments_intersect(const Point& p1, const Point& p2, const Point& p3, const Point& p4) {
    const double d1 = cross(p3, p4, p1), d2 = cross(p3, p4, p2), d3 = cross(p1, p2, p3), d4 = cross(p1, p2, p4);
    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
    if (d1 == 0 && on_segment(p3, p1, p4)) return true;
    if (d2 == 0 && on_segment(p3, p2, p4)) return true;
    if (d3 == 0 && on_segment(p1, p3, p2)) return true;
    if (d4 == 0 && on_segment(p1, p4, p2)) return true;
    return false;
}

}  // namespace polygon_detail

/// Shoelace area of a closed ring (absolute value).
inline double ring_area(const Ring& ring) {
    double a = 0.0;
    for (std::size_t i = 0; i + 1 < ring.size(); ++i) a += ring[i].x * ring[i + 1].y - ring[i + 1].x * ring[i].y;
    return std::abs(a) / 2.0;
}

inline double polygon_area(const LabeledPolygon& p) {
    if (p.rings.empty()) return 0.0;
    double a = ring_area(p.rings[0]);
    for (std::size_t i = 1; i < p.rings.size(); ++i) a -= ring_area(p.rings[i]);
    return a;
}

/// True if no two non-adjacent edges of the closed ring touch.
inline bool ring_is_simple(const Ring& ring) {
    const std::size_t n = ring.size() - 1;  // edges
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            if (j == i + 1 || (i == 0 && j == n - 1)) continue;
            if (polygon_detail::segments_intersect(ring[i], ring[i + 1], ring[j], ring[j + 1])) return false;
        }
    return true;
}

/// Checks the structural invariants of a polygon against a schema.
inline void validate_polygon(const LabeledPolygon& p, const CategorySchema& schema) {
    if (p.rings.empty()) throw DataError("polygon without rings");
    const Ring& outer = p.rings[0];
    if (outer.size() < 4 || outer.front() != outer.back()) throw DataError("outer ring must be closed with >= 3 vertices");
    if (!ring_is_simple(outer)) throw DataError("outer ring self-intersects");
    if (!schema.contains(p.category)) throw DataError("unknown category: " + p.category);
    const bool cashew = p.category == cashew_category();
    if (cashew && !p.age_years) throw DataError("cashew polygon without age_years");
    if (!cashew && p.age_years) throw DataError("age_years set on non-cashew polygon (" + p.category + ")");
    if (p.age_years && *p.age_years < 0) throw DataError("negative age_years");
}

/// Even-odd point-in-polygon over all rings (holes included).
inline bool contains(const LabeledPolygon& p, const Point& pt) {
    bool inside = false;
    for (const auto& ring : p.rings) {
        for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
            const Point& a = ring[i];
            const Point& b = ring[j];
            if ((a.y > pt.y) != (b.y > pt.y) && pt.x < (b.x - a.x) * (pt.y - a.y) / (b.y - a.y) + a.x) inside = !inside;
        }
    }
    return inside;
}

/// A set of polygons sharing one CRS.
struct PolygonSet {
    std::string crs_id;
    std::vector<LabeledPolygon> polygons;
};

/// Per pixel, the index of the last polygon (in list order) covering the pixel center; -1 if none.
inline std::vector<int> rasterize_indices(const PolygonSet& set, const RasterGrid& grid) {
    if (!set.crs_id.empty() && !grid.crs_id().empty() && set.crs_id != grid.crs_id())
        throw DataError("polygon CRS " + set.crs_id + " does not match grid CRS " + grid.crs_id());
    std::vector<int> idx(grid.band_size(), -1);
    const double ps = grid.pixel_size();
    for (std::size_t k = 0; k < set.polygons.size(); ++k) {
        const auto& poly = set.polygons[k];
        if (poly.rings.empty()) continue;
        double minx = 1e300, maxx = -1e300, miny = 1e300, maxy = -1e300;
        for (const auto& pt : poly.rings[0]) {
            minx = std::min(minx, pt.x);
            maxx = std::max(maxx, pt.x);
            miny = std::min(miny, pt.y);
            maxy = std::max(maxy, pt.y);
        }
        const int c0 = std::max(0, static_cast<int>(std::floor((minx - grid.origin_x()) / ps - 0.5)));
        const int c1 = std::min(grid.cols() - 1, static_cast<int>(std::ceil((maxx - grid.origin_x()) / ps - 0.5)));
        const int r0 = std::max(0, static_cast<int>(std::floor((grid.origin_y() - maxy) / ps - 0.5)));
        const int r1 = std::min(grid.rows() - 1, static_cast<int>(std::ceil((grid.origin_y() - miny) / ps - 0.5)));
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c) {
                Point center{grid.origin_x() + (c + 0.5) * ps, grid.origin_y() - (r + 0.5) * ps};
                if (contains(poly, center)) idx[static_cast<std::size_t>(r) * grid.cols() + c] = static_cast<int>(k);
            }
    }
    return idx;
}

/// Label mask on the grid's geometry: the category code of the covering polygon, 0 elsewhere.
inline RasterGrid rasterize(const PolygonSet& set, const RasterGrid& grid, const CategorySchema& schema) {
    std::vector<int> codes;
    codes.reserve(set.polygons.size());
    for (const auto& p : set.polygons) codes.push_back(schema.code(p.category));
    auto idx = rasterize_indices(set, grid);
    RasterGrid mask = grid.like(1, DataType::UInt16);
    auto& v = mask.values();
    for (std::size_t i = 0; i < idx.size(); ++i) v[i] = idx[i] < 0 ? 0.0 : codes[static_cast<std::size_t>(idx[i])];
    return mask;
}

// --- GeoJSON ---------------------------------------------------------------

inline PolygonSet read_polygons_geojson(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("missing file: " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed GeoJSON " + path.string() + ": " + e.what());
    }
    if (doc.value("type", "") != "FeatureCollection") throw DataError("expected a FeatureCollection: " + path.string());
    PolygonSet set;
    if (doc.contains("crs")) set.crs_id = doc["crs"].value("properties", nlohmann::json::object()).value("name", "");
    auto parse_ring = [](const nlohmann::json& j) {
        Ring r;
        for (const auto& pt : j) r.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
        if (!r.empty() && r.front() != r.back()) r.push_back(r.front());
        return r;
    };
    try {
        for (const auto& f : doc.at("features")) {
            const auto& props = f.at("properties");
            LabeledPolygon base;
            base.category = props.at("category").get<std::string>();
            if (props.contains("age_years") && !props["age_years"].is_null())
                base.age_years = props["age_years"].get<double>();
            if (props.contains("source_tag")) base.source_tag = parse_source_tag(props["source_tag"].get<std::string>());
            if (props.contains("group")) base.group = props["group"].get<std::string>();
            const auto& geom = f.at("geometry");
            const std::string type = geom.at("type").get<std::string>();
            std::vector<nlohmann::json> parts;
            if (type == "Polygon") {
                parts.push_back(geom.at("coordinates"));
            } else if (type == "MultiPolygon") {
                for (const auto& p : geom.at("coordinates")) parts.push_back(p);
            } else {
                throw DataError("unsupported geometry type " + type);
            }
            for (const auto& part : parts) {
                LabeledPolygon p = base;
                for (const auto& ring : part) p.rings.push_back(parse_ring(ring));
                set.polygons.push_back(std::move(p));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed feature in " + path.string() + ": " + e.what());
    }
    return set;
}

inline nlohmann::json polygons_to_geojson(const PolygonSet& set) {
    nlohmann::json fc = {{"type", "FeatureCollection"}, {"features", nlohmann::json::array()}};
    if (!set.crs_id.empty()) fc["crs"] = {{"type", "name"}, {"properties", {{"name", set.crs_id}}}};
    for (const auto& p : set.polygons) {
        nlohmann::json rings = nlohmann::json::array();
        for (const auto& r : p.rings) {
            nlohmann::json ring = nlohmann::json::array();
            for (const auto& pt : r) ring.push_back({pt.x, pt.y});
            rings.push_back(ring);
        }
        nlohmann::json props = {{"category", p.category}, {"source_tag", to_string(p.source_tag)}};
        props["age_years"] = p.age_years ? nlohmann::json(*p.age_years) : nlohmann::json(nullptr);
        if (!p.group.empty()) props["group"] = p.group;
        fc["features"].push_back(
            {{"type", "Feature"}, {"properties", props}, {"geometry", {{"type", "Polygon"}, {"coordinates", rings}}}});
    }
    return fc;
}

inline void write_polygons_geojson(const std::filesystem::path& path, const PolygonSet& set) {
    write_file_atomic(path, polygons_to_geojson(set).dump(1) + "\n");
}

}  // namespace cashewmap
