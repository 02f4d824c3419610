#pragma once

// First-loss-year reduction, cross-tabulation of cashew probability strata against
// first-loss year, the cashew share of yearly loss, and plantation age histograms.

#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cashewmap/error.hpp"
#include "cashewmap/polygon.hpp"
#include "cashewmap/raster.hpp"

namespace cashewmap {

inline constexpr int kNoLoss = 0;

/// Earliest year whose binary loss layer is set; kNoLoss where none is.
inline RasterGrid first_loss_year(const std::vector<RasterGrid>& annual, int first_year) {
    if (annual.empty()) throw DataError("no annual loss layers");
    RasterGrid out = annual[0].like(1, DataType::Int16);
    out.set_nodata(std::nullopt);
    std::fill(out.values().begin(), out.values().end(), double(kNoLoss));
    for (std::size_t y = annual.size(); y-- > 0;) {
        const RasterGrid& g = annual[y];
        if (!align_check(out, g, 1)) throw DataError("annual loss layer " + std::to_string(first_year + int(y)) + " is not aligned");
        for (std::size_t i = 0; i < out.values().size(); ++i) {
            const double v = g.values()[i];
            if (!g.is_nodata(v) && v != 0) out.values()[i] = first_year + static_cast<int>(y);
        }
    }
    return out;
}

struct AttributionOptions {
    int first_year = 2000;
    int last_year = 2022;
    std::vector<int> categories = {1, 2, 3, 4, 5, 6, 7};  // probability strata ids (columns)
    std::vector<int> cashew_strata;                        // share numerator; empty = all categories
};

struct LossAttributionTable {
    std::vector<int> years;
    std::vector<int> categories;
    std::vector<std::vector<std::size_t>> counts;  // rows: years then "no loss"
    std::vector<std::vector<double>> percent;      // each nonempty row sums to 100
    std::vector<double> share;                     // per year, cashew share of all loss
    std::vector<bool> share_undefined;             // year had no loss at all
    double pixel_area_ha = 0;
};

namespace attribution_detail {

inline void check(const RasterGrid& strata, const RasterGrid& loss, const AttributionOptions& opt) {
    if (!align_check(strata, loss, 1))
        throw DataError("loss-year raster is not aligned with the strata raster (resample first)");
    if (opt.last_year < opt.first_year) throw ConfigError("last_year precedes first_year");
    if (opt.categories.empty()) throw ConfigError("no probability categories");
}

inline bool in_region(const RasterGrid* region, int id, std::size_t i) {
    return !region || static_cast<int>(region->values()[i]) == id;
}

}  // namespace attribution_detail

/// Counts cashew-strata pixels per (first-loss year, category) and normalizes each row to
/// 100 %. The final row holds pixels never lost. With `region`, only pixels whose region
/// value equals `region_id` count.
inline LossAttributionTable cross_tab(const RasterGrid& strata, const RasterGrid& loss,
                                      const AttributionOptions& opt = {}, const RasterGrid* region = nullptr,
                                      int region_id = 0) {
    attribution_detail::check(strata, loss, opt);
    if (region && !align_check(strata, *region, 1)) throw DataError("region raster is not aligned");
    LossAttributionTable t;
    for (int y = opt.first_year; y <= opt.last_year; ++y) t.years.push_back(y);
    t.categories = opt.categories;
    t.pixel_area_ha = strata.pixel_size() * strata.pixel_size() / 10000.0;
    const std::size_t nrows = t.years.size() + 1;
    t.counts.assign(nrows, std::vector<std::size_t>(t.categories.size(), 0));
    std::map<int, std::size_t> col;
    for (std::size_t j = 0; j < t.categories.size(); ++j) col[t.categories[j]] = j;
    std::set<int> cashew(opt.cashew_strata.begin(), opt.cashew_strata.end());
    if (cashew.empty()) cashew.insert(opt.categories.begin(), opt.categories.end());
    std::vector<std::size_t> loss_all(t.years.size(), 0), loss_cashew(t.years.size(), 0);

    for (std::size_t i = 0; i < strata.values().size(); ++i) {
        if (!attribution_detail::in_region(region, region_id, i)) continue;
        const double lv = loss.values()[i];
        if (loss.is_nodata(lv)) continue;
        const int year = static_cast<int>(lv);
        if (year != kNoLoss && (year < opt.first_year || year > opt.last_year))
            throw DataError("loss year " + std::to_string(year) + " outside " + std::to_string(opt.first_year) + "-" +
                            std::to_string(opt.last_year));
        const double sv = strata.values()[i];
        const int s = strata.is_nodata(sv) ? -1 : static_cast<int>(sv);
        const std::size_t row = year == kNoLoss ? t.years.size() : static_cast<std::size_t>(year - opt.first_year);
        if (year != kNoLoss) {
            ++loss_all[row];
            if (cashew.count(s)) ++loss_cashew[row];
        }
        auto it = col.find(s);
        if (it != col.end()) ++t.counts[row][it->second];
    }
    t.percent.assign(nrows, std::vector<double>(t.categories.size(), 0.0));
    for (std::size_t r = 0; r < nrows; ++r) {
        std::size_t total = 0;
        for (auto c : t.counts[r]) total += c;
        if (total == 0) continue;
        for (std::size_t j = 0; j < t.categories.size(); ++j) t.percent[r][j] = 100.0 * double(t.counts[r][j]) / double(total);
    }
    for (std::size_t r = 0; r < t.years.size(); ++r) {
        t.share_undefined.push_back(loss_all[r] == 0);
        t.share.push_back(loss_all[r] ? 100.0 * double(loss_cashew[r]) / double(loss_all[r]) : 0.0);
    }
    return t;
}

/// Per-year percentage of all loss pixels that fall inside the cashew strata.
inline std::vector<double> cashew_loss_share(const RasterGrid& strata, const RasterGrid& loss,
                                             const AttributionOptions& opt = {}) {
    return cross_tab(strata, loss, opt).share;
}

inline std::string attribution_csv(const LossAttributionTable& t) {
    std::string out = "year";
    for (int c : t.categories) out += ",stratum_" + std::to_string(c);
    out += ",cashew_share\n";
    char buf[64];
    for (std::size_t r = 0; r < t.percent.size(); ++r) {
        out += r < t.years.size() ? std::to_string(t.years[r]) : std::string("no loss");
        for (double v : t.percent[r]) {
            std::snprintf(buf, sizeof buf, ",%.6f", v);
            out += buf;
        }
        if (r < t.years.size() && !t.share_undefined[r]) {
            std::snprintf(buf, sizeof buf, ",%.6f", t.share[r]);
            out += buf;
        } else {
            out += ",";
        }
        out += "\n";
    }
    return out;
}

/// Stacked 100 % bars per year (plus "no loss") with the cashew share drawn as a line.
inline std::string attribution_svg(const LossAttributionTable& t, const std::string& title = "") {
    const int bar = 22, gap = 6, left = 50, top = 40, height = 300;
    const int n = static_cast<int>(t.percent.size());
    const int width = left + n * (bar + gap) + 120;
    std::string s;
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" font-family=\"sans-serif\" "
                  "font-size=\"10\">\n",
                  width, top + height + 60);
    s += buf;
    if (!title.empty()) s += "<text x=\"" + std::to_string(left) + "\" y=\"20\" font-size=\"14\">" + title + "</text>\n";
    for (std::size_t j = 0; j < t.categories.size(); ++j) {
        const int shade = 230 - static_cast<int>(200 * (j + 1) / t.categories.size());
        std::snprintf(buf, sizeof buf,
                      "<rect x=\"%d\" y=\"%d\" width=\"10\" height=\"10\" fill=\"rgb(%d,%d,%d)\"/><text x=\"%d\" "
                      "y=\"%d\">stratum %d</text>\n",
                      left + n * (bar + gap) + 10, top + 14 * static_cast<int>(j), 255, shade, 40,
                      left + n * (bar + gap) + 24, top + 9 + 14 * static_cast<int>(j), t.categories[j]);
        s += buf;
    }
    std::string line;
    for (int r = 0; r < n; ++r) {
        const int x = left + r * (bar + gap);
        double y = top + height;
        for (std::size_t j = 0; j < t.categories.size(); ++j) {
            const double h = height * t.percent[static_cast<std::size_t>(r)][j] / 100.0;
            const int shade = 230 - static_cast<int>(200 * (j + 1) / t.categories.size());
            y -= h;
            std::snprintf(buf, sizeof buf, "<rect x=\"%d\" y=\"%.2f\" width=\"%d\" height=\"%.2f\" fill=\"rgb(255,%d,40)\"/>\n",
                          x, y, bar, h, shade);
            s += buf;
        }
        const std::string label = r < static_cast<int>(t.years.size()) ? std::to_string(t.years[static_cast<std::size_t>(r)]) : "none";
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%d\" y=\"%d\" transform=\"rotate(-60 %d %d)\" text-anchor=\"end\">%s</text>\n",
                      x + bar / 2, top + height + 12, x + bar / 2, top + height + 12, label.c_str());
        s += buf;
        if (r < static_cast<int>(t.years.size()) && !t.share_undefined[static_cast<std::size_t>(r)]) {
            std::snprintf(buf, sizeof buf, "%s%d,%.2f", line.empty() ? "" : " ", x + bar / 2,
                          top + height - height * t.share[static_cast<std::size_t>(r)] / 100.0);
            line += buf;
        }
    }
    if (!line.empty()) s += "<polyline fill=\"none\" stroke=\"blue\" stroke-width=\"2\" points=\"" + line + "\"/>\n";
    std::snprintf(buf, sizeof buf, "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n", left, top, left,
                  top + height);
    s += buf;
    s += "</svg>\n";
    return s;
}

/// Integer-binned cashew age counts per polygon group. Listed groups always appear, even
/// when empty. Input polygons are not a randomized sample of the plantation population.
inline std::map<std::string, std::map<int, std::size_t>> age_histogram(const std::vector<LabeledPolygon>& polygons,
                                                                       const std::vector<std::string>& groups = {}) {
    std::map<std::string, std::map<int, std::size_t>> out;
    for (const auto& g : groups) out[g];
    for (const auto& p : polygons) {
        if (p.category != cashew_category() || !p.age_years) continue;
        if (!groups.empty() && !out.count(p.group)) continue;
        ++out[p.group][static_cast<int>(std::floor(*p.age_years))];
    }
    return out;
}

inline std::string age_histogram_csv(const std::map<std::string, std::map<int, std::size_t>>& h) {
    std::string out = "group,age_years,count\n";
    for (const auto& [g, bins] : h)
        for (const auto& [age, n] : bins) out += g + "," + std::to_string(age) + "," + std::to_string(n) + "\n";
    return out;
}

}  // namespace cashewmap
