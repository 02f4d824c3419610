#pragma once

// Probability-map stratification, stratified sample allocation, error matrices and the
// stratified area / accuracy estimators, plus province production rollups.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cashewmap/error.hpp"
#include "cashewmap/raster.hpp"
#include "cashewmap/util.hpp"

namespace cashewmap {

inline constexpr double kZ95 = 1.96;

enum class StratumKind { Probability, Landcover };

struct Stratum {
    int id = 0;
    std::string name;
    StratumKind kind = StratumKind::Probability;
    double lo = 0, hi = 0;     // probability interval [lo, hi), the last bin closed
    int landcover_code = -1;   // landcover strata only; -1 = no landcover data
    std::size_t pixel_count = 0;
};

struct Stratification {
    std::vector<Stratum> strata;  // nonempty strata ordered by id
    double pixel_area_ha = 0;
    double total_area_ha = 0;

    std::size_t total_pixels() const {
        std::size_t n = 0;
        for (const auto& s : strata) n += s.pixel_count;
        return n;
    }
    double weight(std::size_t i) const { return double(strata[i].pixel_count) / double(total_pixels()); }
    std::optional<std::size_t> index_of(int id) const {
        for (std::size_t i = 0; i < strata.size(); ++i)
            if (strata[i].id == id) return i;
        return std::nullopt;
    }
};

inline constexpr int kLandcoverStratumBase = 100;  // landcover stratum id = base + code
inline constexpr int kNoLandcoverStratum = 99;

struct StratifyOptions {
    /// Bin edges; the default makes seven 10 % bins from 0.3 to 1.0 (ids 1..7).
    std::vector<double> edges = {0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
};

/// Strata raster (UInt16, 0 = unobserved) and the stratification summary. Pixels at or
/// above the first edge fall in probability bins; the rest go to landcover strata.
inline std::pair<RasterGrid, Stratification> stratify(const RasterGrid& prob, const RasterGrid& landcover,
                                                      const StratifyOptions& opt = {}) {
    if (opt.edges.size() < 2 || !std::is_sorted(opt.edges.begin(), opt.edges.end()) ||
        std::adjacent_find(opt.edges.begin(), opt.edges.end()) != opt.edges.end())
        throw ConfigError("stratification edges must be strictly increasing with at least two values");
    if (!align_check(prob, landcover, 1)) throw DataError("landcover raster is not aligned with the probability raster");
    const int nbins = static_cast<int>(opt.edges.size()) - 1;
    if (nbins >= kNoLandcoverStratum) throw ConfigError("too many probability bins");
    RasterGrid strata = prob.like(1, DataType::UInt16);
    strata.set_nodata(0.0);
    std::map<int, Stratum> found;
    for (int r = 0; r < prob.rows(); ++r)
        for (int c = 0; c < prob.cols(); ++c) {
            const double p = prob(r, c);
            if (prob.is_nodata(p) || std::isnan(p)) {
                strata(r, c) = 0;
                continue;
            }
            Stratum s;
            if (p >= opt.edges.front()) {
                int b = static_cast<int>(std::upper_bound(opt.edges.begin(), opt.edges.end(), p) - opt.edges.begin()) - 1;
                b = std::min(b, nbins - 1);
                s.id = b + 1;
                s.kind = StratumKind::Probability;
                s.lo = opt.edges[static_cast<std::size_t>(b)];
                s.hi = opt.edges[static_cast<std::size_t>(b) + 1];
                s.name = "p" + std::to_string(static_cast<int>(std::lround(s.lo * 100))) + "-" +
                         std::to_string(static_cast<int>(std::lround(s.hi * 100)));
            } else {
                const double lc = landcover(r, c);
                s.kind = StratumKind::Landcover;
                s.lo = 0;
                s.hi = opt.edges.front();
                if (landcover.is_nodata(lc) || lc < 0) {
                    s.id = kNoLandcoverStratum;
                    s.name = "landcover-none";
                } else {
                    s.landcover_code = static_cast<int>(lc);
                    s.id = kLandcoverStratumBase + s.landcover_code;
                    s.name = "landcover-" + std::to_string(s.landcover_code);
                }
            }
            strata(r, c) = s.id;
            auto [it, inserted] = found.emplace(s.id, s);
            ++it->second.pixel_count;
        }
    Stratification st;
    for (auto& [id, s] : found) st.strata.push_back(s);
    if (st.strata.empty()) throw DataError("probability raster has no valid pixels");
    st.pixel_area_ha = prob.pixel_size() * prob.pixel_size() / 10000.0;
    st.total_area_ha = double(st.total_pixels()) * st.pixel_area_ha;
    return {std::move(strata), std::move(st)};
}

inline nlohmann::json to_json(const Stratification& s) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t i = 0; i < s.strata.size(); ++i) {
        const auto& x = s.strata[i];
        nlohmann::json j = {{"id", x.id},
                            {"name", x.name},
                            {"kind", x.kind == StratumKind::Probability ? "probability" : "landcover"},
                            {"lo", x.lo},
                            {"hi", x.hi},
                            {"pixel_count", x.pixel_count},
                            {"weight", s.weight(i)}};
        if (x.kind == StratumKind::Landcover) j["landcover_code"] = x.landcover_code;
        arr.push_back(j);
    }
    return {{"strata", arr}, {"pixel_area_ha", s.pixel_area_ha}, {"total_area_ha", s.total_area_ha}};
}

inline Stratification stratification_from_json(const nlohmann::json& j) {
    Stratification s;
    s.pixel_area_ha = j.at("pixel_area_ha").get<double>();
    s.total_area_ha = j.at("total_area_ha").get<double>();
    for (const auto& x : j.at("strata")) {
        Stratum t;
        t.id = x.at("id").get<int>();
        t.name = x.value("name", std::string());
        t.kind = x.value("kind", std::string("probability")) == "landcover" ? StratumKind::Landcover
                                                                           : StratumKind::Probability;
        t.lo = x.value("lo", 0.0);
        t.hi = x.value("hi", 0.0);
        t.landcover_code = x.value("landcover_code", -1);
        t.pixel_count = x.at("pixel_count").get<std::size_t>();
        s.strata.push_back(t);
    }
    return s;
}

// --- sample allocation -----------------------------------------------------------

struct AllocationPolicy {
    double cashew_multiplier = 2.0;         // probability strata
    double low_confusion_multiplier = 0.5;  // landcover strata listed below
    std::vector<int> low_confusion_codes;   // landcover codes expected to be rarely confused
    std::map<int, double> overrides;        // stratum id -> multiplier
    std::size_t min_per_stratum = 30;
    std::uint64_t seed = 1;
};

inline double stratum_multiplier(const Stratum& s, const AllocationPolicy& p) {
    if (auto it = p.overrides.find(s.id); it != p.overrides.end()) return it->second;
    if (s.kind == StratumKind::Probability) return p.cashew_multiplier;
    if (std::find(p.low_confusion_codes.begin(), p.low_confusion_codes.end(), s.landcover_code) !=
        p.low_confusion_codes.end())
        return p.low_confusion_multiplier;
    return 1.0;
}

/// Per-stratum sample counts: budget shared in proportion to W_i x multiplier_i, every
/// stratum raised to the minimum, integer counts by largest remainder.
inline std::vector<std::size_t> allocate_counts(const Stratification& s, std::size_t budget,
                                                const AllocationPolicy& p) {
    const std::size_t k = s.strata.size();
    if (k == 0) throw DataError("no strata to allocate");
    if (budget < k * p.min_per_stratum)
        throw ConfigError("budget " + std::to_string(budget) + " is below " + std::to_string(k) + " strata x " +
                          std::to_string(p.min_per_stratum) + " minimum samples");
    std::vector<double> share(k);
    for (std::size_t i = 0; i < k; ++i) {
        const double m = stratum_multiplier(s.strata[i], p);
        if (!(m > 0)) throw ConfigError("allocation multipliers must be positive");
        share[i] = s.weight(i) * m;
    }
    std::vector<bool> fixed(k, false);
    std::vector<double> quota(k, 0.0);
    // Strata whose proportional quota falls under the minimum are pinned to it and the
    // rest of the budget is re-shared among the others.
    for (;;) {
        double free_budget = double(budget), free_share = 0;
        for (std::size_t i = 0; i < k; ++i) {
            if (fixed[i])
                free_budget -= double(p.min_per_stratum);
            else
                free_share += share[i];
        }
        bool changed = false;
        for (std::size_t i = 0; i < k; ++i) {
            if (fixed[i]) {
                quota[i] = double(p.min_per_stratum);
                continue;
            }
            quota[i] = free_budget * share[i] / free_share;
            if (quota[i] < double(p.min_per_stratum)) {
                fixed[i] = true;
                changed = true;
            }
        }
        if (!changed) break;
    }
    std::vector<std::size_t> counts(k);
    std::size_t assigned = 0;
    std::vector<std::size_t> order(k);
    for (std::size_t i = 0; i < k; ++i) {
        counts[i] = static_cast<std::size_t>(std::floor(quota[i] + 1e-9));
        assigned += counts[i];
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return quota[a] - double(counts[a]) > quota[b] - double(counts[b]);
    });
    for (std::size_t j = 0; assigned < budget; j = (j + 1) % k, ++assigned) ++counts[order[j]];
    for (std::size_t i = 0; i < k; ++i)
        if (counts[i] > s.strata[i].pixel_count)
            throw DataError("stratum " + std::to_string(s.strata[i].id) + " has " +
                            std::to_string(s.strata[i].pixel_count) + " pixels, fewer than its quota of " +
                            std::to_string(counts[i]));
    return counts;
}

struct SampleUnit {
    int id = 0;
    int row = 0, col = 0;
    double x = 0, y = 0;  // pixel centre in map coordinates
    int stratum_id = 0;
    std::optional<int> reference_label;
};

/// Draws the allocated number of pixels per stratum uniformly without replacement
/// (partial Fisher-Yates over the stratum's pixels in raster order).
inline std::vector<SampleUnit> allocate_samples(const RasterGrid& strata, const Stratification& s, std::size_t budget,
                                                const AllocationPolicy& p = {}) {
    const auto counts = allocate_counts(s, budget, p);
    std::map<int, std::vector<std::size_t>> pixels;
    for (const auto& st : s.strata) pixels[st.id];
    for (std::size_t i = 0; i < strata.values().size(); ++i) {
        const int id = static_cast<int>(strata.values()[i]);
        if (auto it = pixels.find(id); it != pixels.end()) it->second.push_back(i);
    }
    std::vector<SampleUnit> out;
    for (std::size_t k = 0; k < s.strata.size(); ++k) {
        const int id = s.strata[k].id;
        auto& pool = pixels[id];
        if (pool.size() != s.strata[k].pixel_count)
            throw DataError("strata raster disagrees with the stratification for stratum " + std::to_string(id));
        std::mt19937_64 rng(p.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(id));
        for (std::size_t j = 0; j < counts[k]; ++j) {
            std::uniform_int_distribution<std::size_t> pick(j, pool.size() - 1);
            std::swap(pool[j], pool[pick(rng)]);
            SampleUnit u;
            u.row = static_cast<int>(pool[j] / static_cast<std::size_t>(strata.cols()));
            u.col = static_cast<int>(pool[j] % static_cast<std::size_t>(strata.cols()));
            u.x = strata.origin_x() + (u.col + 0.5) * strata.pixel_size();
            u.y = strata.origin_y() - (u.row + 0.5) * strata.pixel_size();
            u.stratum_id = id;
            out.push_back(u);
        }
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i].id = static_cast<int>(i + 1);
    return out;
}

/// CSV with columns id,row,col,lon,lat,stratum_id,reference_label. The lon/lat columns
/// carry the pixel centre in the raster's map coordinates.
inline std::string samples_csv(const std::vector<SampleUnit>& samples) {
    std::string out = "id,row,col,lon,lat,stratum_id,reference_label\n";
    char buf[256];
    for (const auto& s : samples) {
        std::snprintf(buf, sizeof buf, "%d,%d,%d,%.3f,%.3f,%d,", s.id, s.row, s.col, s.x, s.y, s.stratum_id);
        out += buf;
        if (s.reference_label) out += std::to_string(*s.reference_label);
        out += "\n";
    }
    return out;
}

inline std::vector<SampleUnit> read_samples_csv(const std::filesystem::path& path) {
    const auto rows = read_csv(path);
    if (rows.empty()) throw DataError("empty samples file: " + path.string());
    const std::vector<std::string> header = {"id", "row", "col", "lon", "lat", "stratum_id", "reference_label"};
    if (rows[0] != header) throw DataError("samples file must have columns id,row,col,lon,lat,stratum_id,reference_label");
    std::vector<SampleUnit> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() == 1 && r[0].empty()) continue;
        if (r.size() != header.size()) throw DataError("samples line " + std::to_string(i + 1) + " has wrong arity");
        try {
            SampleUnit s;
            s.id = std::stoi(r[0]);
            s.row = std::stoi(r[1]);
            s.col = std::stoi(r[2]);
            s.x = std::stod(r[3]);
            s.y = std::stod(r[4]);
            s.stratum_id = std::stoi(r[5]);
            if (!trim(r[6]).empty()) s.reference_label = std::stoi(r[6]);
            out.push_back(s);
        } catch (const std::logic_error&) {
            throw DataError("samples line " + std::to_string(i + 1) + " is malformed");
        }
    }
    return out;
}

// --- error matrix and estimators -------------------------------------------------------

struct ErrorMatrix {
    std::vector<int> strata;       // row ids
    std::vector<int> map_class;    // map class of each row
    std::vector<int> classes;      // reference classes (columns), sorted
    std::vector<double> weights;   // W_i
    std::vector<std::vector<double>> counts;  // n_ij
    std::vector<std::string> warnings;

    double row_total(std::size_t i) const { return std::accumulate(counts[i].begin(), counts[i].end(), 0.0); }
    std::size_t class_index(int cls) const {
        auto it = std::lower_bound(classes.begin(), classes.end(), cls);
        if (it == classes.end() || *it != cls) throw DataError("unknown reference class " + std::to_string(cls));
        return static_cast<std::size_t>(it - classes.begin());
    }
};

/// Error matrix whose strata coincide with the classes (row i has map class classes[i]).
inline ErrorMatrix make_error_matrix(std::vector<double> weights, std::vector<std::vector<double>> counts,
                                     std::vector<int> classes = {}) {
    ErrorMatrix em;
    const std::size_t k = weights.size();
    if (classes.empty()) {
        classes.resize(k);
        std::iota(classes.begin(), classes.end(), 0);
    }
    if (counts.size() != k || classes.size() != k) throw DataError("error matrix dimensions disagree");
    for (const auto& r : counts)
        if (r.size() != k) throw DataError("error matrix must be square when strata are classes");
    em.strata = classes;
    em.map_class = classes;
    em.classes = classes;
    std::sort(em.classes.begin(), em.classes.end());
    em.weights = std::move(weights);
    em.counts.assign(k, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) em.counts[i][em.class_index(classes[j])] = counts[i][j];
    return em;
}

/// Default stratum-to-map-class rule: probability strata map to cashew (1), the rest to 0.
inline int default_map_class(const Stratum& s) { return s.kind == StratumKind::Probability ? 1 : 0; }

inline ErrorMatrix build_error_matrix(const std::vector<SampleUnit>& samples, const Stratification& s,
                                      const std::map<int, int>& class_map = {}) {
    ErrorMatrix em;
    std::set<int> cls;
    for (const auto& st : s.strata) {
        auto it = class_map.find(st.id);
        const int mc = it != class_map.end() ? it->second : default_map_class(st);
        em.strata.push_back(st.id);
        em.map_class.push_back(mc);
        cls.insert(mc);
    }
    for (const auto& u : samples) {
        if (!u.reference_label) throw DataError("sample " + std::to_string(u.id) + " has no reference label");
        if (!s.index_of(u.stratum_id))
            throw DataError("sample " + std::to_string(u.id) + " names unknown stratum " + std::to_string(u.stratum_id));
        cls.insert(*u.reference_label);
    }
    em.classes.assign(cls.begin(), cls.end());
    em.counts.assign(s.strata.size(), std::vector<double>(em.classes.size(), 0.0));
    for (std::size_t i = 0; i < s.strata.size(); ++i) em.weights.push_back(s.weight(i));
    for (const auto& u : samples) em.counts[*s.index_of(u.stratum_id)][em.class_index(*u.reference_label)] += 1.0;
    for (std::size_t i = 0; i < em.strata.size(); ++i)
        if (em.row_total(i) == 0)
            em.warnings.push_back("stratum " + std::to_string(em.strata[i]) + " has no samples");
    return em;
}

struct AreaEstimate {
    int cls = 0;
    double proportion = 0;
    double area_ha = 0;
    double standard_error_ha = 0;
    double ci95_ha = 0;
};

namespace area_detail {

inline void check_rows(const ErrorMatrix& em) {
    if (em.weights.size() != em.counts.size()) throw DataError("error matrix weights and rows disagree");
    for (std::size_t i = 0; i < em.counts.size(); ++i)
        if (em.weights[i] > 0 && em.row_total(i) < 2)
            throw DataError("stratum " + std::to_string(em.strata[i]) + " has weight " + std::to_string(em.weights[i]) +
                            " but fewer than 2 samples");
}

}  // namespace area_detail

/// Stratified estimator of each reference class's area proportion with its standard
/// error; CI95 = 1.96 x SE x total area.
inline std::vector<AreaEstimate> estimate_areas(const ErrorMatrix& em, double total_area_ha) {
    area_detail::check_rows(em);
    std::vector<AreaEstimate> out;
    for (std::size_t j = 0; j < em.classes.size(); ++j) {
        double p = 0, var = 0;
        for (std::size_t i = 0; i < em.counts.size(); ++i) {
            const double n = em.row_total(i);
            if (em.weights[i] == 0 || n == 0) continue;
            const double pij = em.counts[i][j] / n;
            p += em.weights[i] * pij;
            var += em.weights[i] * em.weights[i] * pij * (1 - pij) / (n - 1);
        }
        AreaEstimate a;
        a.cls = em.classes[j];
        a.proportion = p;
        a.area_ha = p * total_area_ha;
        a.standard_error_ha = std::sqrt(var) * total_area_ha;
        a.ci95_ha = kZ95 * a.standard_error_ha;
        out.push_back(a);
    }
    return out;
}

struct Accuracies {
    double overall = 0;
    std::map<int, double> users;      // per stratum id
    std::map<int, double> producers;  // per reference class
};

inline Accuracies accuracies(const ErrorMatrix& em) {
    area_detail::check_rows(em);
    Accuracies a;
    std::map<int, double> agree;  // per class: sum over rows mapped to it of W_i n_i,class / n_i
    std::vector<double> p(em.classes.size(), 0.0);
    for (std::size_t i = 0; i < em.counts.size(); ++i) {
        const double n = em.row_total(i);
        if (n == 0) continue;
        const auto it = std::lower_bound(em.classes.begin(), em.classes.end(), em.map_class[i]);
        const bool known = it != em.classes.end() && *it == em.map_class[i];
        const double nii = known ? em.counts[i][static_cast<std::size_t>(it - em.classes.begin())] : 0.0;
        a.users[em.strata[i]] = nii / n;
        a.overall += em.weights[i] * nii / n;
        agree[em.map_class[i]] += em.weights[i] * nii / n;
        for (std::size_t j = 0; j < em.classes.size(); ++j) p[j] += em.weights[i] * em.counts[i][j] / n;
    }
    for (std::size_t j = 0; j < em.classes.size(); ++j)
        a.producers[em.classes[j]] = p[j] > 0 ? agree[em.classes[j]] / p[j] : 0.0;
    return a;
}

inline nlohmann::json area_report_json(const std::vector<AreaEstimate>& est, const Accuracies& acc,
                                       double total_area_ha, const std::vector<std::string>& warnings = {}) {
    nlohmann::json classes = nlohmann::json::array();
    for (const auto& e : est)
        classes.push_back({{"class", e.cls},
                           {"proportion", e.proportion},
                           {"area_ha", e.area_ha},
                           {"standard_error_ha", e.standard_error_ha},
                           {"ci95_ha", e.ci95_ha},
                           {"producers_accuracy", acc.producers.count(e.cls) ? acc.producers.at(e.cls) : 0.0}});
    nlohmann::json users = nlohmann::json::object();
    for (const auto& [id, u] : acc.users) users[std::to_string(id)] = u;
    return {{"total_area_ha", total_area_ha},
            {"overall_accuracy", acc.overall},
            {"users_accuracy", users},
            {"classes", classes},
            {"warnings", warnings}};
}

inline std::string area_report_csv(const std::vector<AreaEstimate>& est, const Accuracies& acc) {
    std::string out = "class,proportion,area_ha,standard_error_ha,ci95_ha,producers_accuracy,overall_accuracy\n";
    char buf[320];
    for (const auto& e : est) {
        std::snprintf(buf, sizeof buf, "%d,%.9f,%.4f,%.4f,%.4f,%.6f,%.6f\n", e.cls, e.proportion, e.area_ha,
                      e.standard_error_ha, e.ci95_ha, acc.producers.count(e.cls) ? acc.producers.at(e.cls) : 0.0,
                      acc.overall);
        out += buf;
    }
    return out;
}

// --- production rollup -----------------------------------------------------------

struct ProvinceInput {
    std::string name;
    std::optional<double> accuracy;  // overall accuracy in [0,1]
    double area_ha = 0;
    std::optional<double> area_ci_ha;
    double yield_t_per_ha = 0;
    bool adopted = false;  // figures taken from provincial records
};

struct ProvinceRecord {
    std::string name;
    std::optional<double> accuracy;
    double area_ha = 0;
    std::optional<double> area_ci_ha;
    double yield_t_per_ha = 0;
    long long production_t = 0;
    std::optional<long long> production_ci_t;
    bool adopted = false;
};

struct RollupResult {
    std::vector<ProvinceRecord> provinces;
    double total_area_ha = 0;
    long long total_production_t = 0;
    long long total_production_ci_t = 0;  // linear sum of province CIs
};

/// production = round(area x yield), CI = round(area CI x yield); adopted provinces carry
/// no CI. Totals add areas, rounded productions and CIs.
inline RollupResult production_rollup(const std::vector<ProvinceInput>& in) {
    RollupResult r;
    for (const auto& p : in) {
        if (p.area_ha < 0) throw DataError("negative area for " + p.name);
        if (p.area_ha > 0 && !(p.yield_t_per_ha > 0)) throw DataError("yield must be positive for " + p.name);
        ProvinceRecord rec;
        rec.name = p.name;
        rec.accuracy = p.accuracy;
        rec.area_ha = p.area_ha;
        rec.yield_t_per_ha = p.yield_t_per_ha;
        rec.adopted = p.adopted;
        rec.production_t = std::llround(p.area_ha * p.yield_t_per_ha);
        if (!p.adopted) {
            rec.area_ci_ha = p.area_ci_ha.value_or(0.0);
            rec.production_ci_t = std::llround(*rec.area_ci_ha * p.yield_t_per_ha);
            r.total_production_ci_t += *rec.production_ci_t;
        }
        r.total_area_ha += p.area_ha;
        r.total_production_t += rec.production_t;
        r.provinces.push_back(rec);
    }
    return r;
}

/// Province inputs from CSV: province,area_ha,area_ci_ha,yield_t_per_ha[,accuracy][,adopted].
/// Blank area CI is allowed; "adopted" is 1/true for provincial-record rows.
inline std::vector<ProvinceInput> read_province_csv(const std::filesystem::path& path) {
    const auto rows = read_csv(path);
    if (rows.empty()) throw DataError("empty yields file: " + path.string());
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < rows[0].size(); ++i) col[trim(rows[0][i])] = i;
    for (const char* need : {"province", "area_ha", "yield_t_per_ha"})
        if (!col.count(need)) throw DataError(std::string("yields file lacks column '") + need + "'");
    auto cell = [&](const std::vector<std::string>& r, const std::string& name) -> std::string {
        auto it = col.find(name);
        return it == col.end() || it->second >= r.size() ? std::string() : trim(r[it->second]);
    };
    std::vector<ProvinceInput> out;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (r.size() == 1 && trim(r[0]).empty()) continue;
        try {
            ProvinceInput p;
            p.name = cell(r, "province");
            p.area_ha = std::stod(cell(r, "area_ha"));
            p.yield_t_per_ha = std::stod(cell(r, "yield_t_per_ha"));
            if (auto v = cell(r, "area_ci_ha"); !v.empty()) p.area_ci_ha = std::stod(v);
            if (auto v = cell(r, "accuracy"); !v.empty()) p.accuracy = std::stod(v);
            const auto a = cell(r, "adopted");
            p.adopted = a == "1" || a == "true" || a == "yes";
            out.push_back(p);
        } catch (const std::logic_error&) {
            throw DataError("yields line " + std::to_string(i + 1) + " is malformed");
        }
    }
    return out;
}

inline std::string rollup_csv(const RollupResult& r) {
    std::string out = "province,accuracy,area_ha,area_ci_ha,yield_t_per_ha,production_t,production_ci_t,source\n";
    char buf[256];
    for (const auto& p : r.provinces) {
        out += p.name + ",";
        if (p.accuracy) {
            std::snprintf(buf, sizeof buf, "%.4f", *p.accuracy);
            out += buf;
        }
        std::snprintf(buf, sizeof buf, ",%.2f,", p.area_ha);
        out += buf;
        if (p.area_ci_ha) {
            std::snprintf(buf, sizeof buf, "%.2f", *p.area_ci_ha);
            out += buf;
        }
        std::snprintf(buf, sizeof buf, ",%.4f,%lld,", p.yield_t_per_ha, p.production_t);
        out += buf;
        if (p.production_ci_t) out += std::to_string(*p.production_ci_t);
        out += p.adopted ? ",adopted\n" : ",modelled\n";
    }
    std::snprintf(buf, sizeof buf, "Total,,%.2f,,,%lld,%lld,\n", r.total_area_ha, r.total_production_t,
                  r.total_production_ci_t);
    out += buf;
    return out;
}

inline nlohmann::json to_json(const RollupResult& r) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : r.provinces) {
        nlohmann::json j = {{"province", p.name},
                            {"area_ha", p.area_ha},
                            {"yield_t_per_ha", p.yield_t_per_ha},
                            {"production_t", p.production_t},
                            {"source", p.adopted ? "adopted" : "modelled"}};
        j["accuracy"] = p.accuracy ? nlohmann::json(*p.accuracy) : nlohmann::json();
        j["area_ci_ha"] = p.area_ci_ha ? nlohmann::json(*p.area_ci_ha) : nlohmann::json();
        j["production_ci_t"] = p.production_ci_t ? nlohmann::json(*p.production_ci_t) : nlohmann::json();
        arr.push_back(j);
    }
    return {{"provinces", arr},
            {"total",
             {{"area_ha", r.total_area_ha},
              {"production_t", r.total_production_t},
              {"production_ci_t", r.total_production_ci_t}}}};
}

}  // namespace cashewmap
