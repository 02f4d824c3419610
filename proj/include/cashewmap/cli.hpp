#pragma once

// Command suite: one executable, JSON config plus flag overrides, a run manifest per
// command. Exit codes: 0 ok, 2 config, 3 data, 4 numeric.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cashewmap/area.hpp"
#include "cashewmap/attribution.hpp"
#include "cashewmap/error.hpp"
#include "cashewmap/geotiff.hpp"
#include "cashewmap/inference.hpp"
#include "cashewmap/nn/checkpoint.hpp"
#include "cashewmap/nn/unet.hpp"
#include "cashewmap/patch.hpp"
#include "cashewmap/polygon.hpp"
#include "cashewmap/raster.hpp"
#include "cashewmap/synthetic.hpp"
#include "cashewmap/train.hpp"
#include "cashewmap/util.hpp"

namespace cashewmap {

inline constexpr const char* kVersion = "0.1.0";

namespace cli_detail {

namespace fs = std::filesystem;
using nlohmann::json;

inline const std::map<std::string, std::string>& default_paths() {
    static const std::map<std::string, std::string> d = {
        {"level0", "level0.tif"},
        {"level1", "level1.tif"},
        {"level2", "level2.tif"},
        {"level3", "level3.tif"},
        {"labels", "truth_mask.tif"},
        {"polygons", "truth.geojson"},
        {"landcover", "landcover.tif"},
        {"loss_year", "loss_year.tif"},
        {"regions", "regions.tif"},
        {"region_names", "regions.json"},
        {"patches_train", "patches_train.bin"},
        {"patches_val", "patches_val.bin"},
        {"phase2_train", "phase2_train.bin"},
        {"phase2_val", "phase2_val.bin"},
        {"model_phase1", "model_phase1.ckpt"},
        {"model_phase2", "model_phase2.ckpt"},
        {"metrics_phase1", "metrics_phase1.csv"},
        {"metrics_phase2", "metrics_phase2.csv"},
        {"probability", "prob.tif"},
        {"probability_std", "prob_std.tif"},
        {"strata", "strata.tif"},
        {"stratification", "stratification.json"},
        {"samples", "samples.csv"},
        {"labeled_samples", "samples_labeled.csv"},
        {"estimate", "estimate"},
        {"yields", "yields.csv"},
        {"production", "production"},
        {"attribution", "attribution"},
        {"ages", "ages.csv"},
    };
    return d;
}

struct Options {
    std::string config;
    std::optional<unsigned> jobs;
    std::optional<std::uint64_t> seed;
    bool verbose = false;

    int phase = 0;
    std::string model, out, std_out, landcover, loss, samples, yields;
    std::optional<int> stride, mc_runs;
    std::optional<double> dropout;
    std::vector<std::string> suppress;
    std::optional<std::size_t> budget;
};

/// Resolved configuration shared by all commands.
class Context {
public:
    Context(const Options& o, std::string command) : opt_(o), command_(std::move(command)) {
        if (o.config.empty()) throw ConfigError("missing key 'config': pass --config <file.json>");
        const fs::path cfg_path = o.config;
        if (!fs::exists(cfg_path)) throw ConfigError("missing key 'config': file not found: " + cfg_path.string());
        std::ifstream in(cfg_path);
        try {
            cfg_ = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError("config is not valid JSON: " + std::string(e.what()));
        }
        if (!cfg_.is_object()) throw ConfigError("config root must be an object");
        base_ = cfg_path.parent_path();
        const json paths = section("paths");
        workdir_ = base_ / paths.value("workdir", std::string("."));
        jobs_ = o.jobs.value_or(cfg_.value("jobs", 1u));
        if (jobs_ == 0) throw ConfigError("jobs must be >= 1");
        manifest_ = {{"command", command_}, {"version", kVersion}, {"config", fs::path(o.config).filename().string()},
                     {"config_hash", hash_file(cfg_path)}, {"inputs", json::object()}, {"outputs", json::object()},
                     {"seeds", json::object()}};
    }

    json section(const std::string& key) const {
        if (!cfg_.contains(key)) return json::object();
        if (!cfg_[key].is_object()) throw ConfigError("config key '" + key + "' must be an object");
        return cfg_[key];
    }

    /// Section seed: --seed wins, then the section's own seed, then the top-level seed.
    std::uint64_t seed(const std::string& sect) {
        std::uint64_t s;
        if (opt_.seed)
            s = *opt_.seed;
        else
            s = section(sect).value("seed", cfg_.value("seed", std::uint64_t{1}));
        manifest_["seeds"][sect] = s;
        return s;
    }

    unsigned jobs() const { return jobs_; }
    const fs::path& workdir() const { return workdir_; }

    fs::path path(const std::string& key) const {
        const json paths = section("paths");
        if (paths.contains(key)) return workdir_ / paths[key].get<std::string>();
        auto it = default_paths().find(key);
        if (it == default_paths().end()) throw ConfigError("missing key 'paths." + key + "'");
        return workdir_ / it->second;
    }

    /// Path for a flag value (relative to the working directory of the process).
    static fs::path flag_path(const std::string& v) { return fs::path(v); }

    fs::path input(const std::string& key, const std::string& override_value = {}) {
        const fs::path p = override_value.empty() ? path(key) : flag_path(override_value);
        if (!fs::exists(p)) throw ConfigError("missing input 'paths." + key + "': " + p.string());
        manifest_["inputs"][key] = {{"path", rel(p)}, {"hash", hash_file(p)}};
        return p;
    }

    bool has_input(const std::string& key) const { return fs::exists(path(key)); }

    fs::path output(const std::string& key, const std::string& suffix = {}, const std::string& override_value = {}) {
        fs::path p = override_value.empty() ? path(key) : flag_path(override_value);
        if (!suffix.empty()) p += suffix;
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        outputs_.emplace_back(key + suffix, p);
        return p;
    }

    void record(const std::string& key, const json& v) { manifest_[key] = v; }

    void log(const std::string& msg) const {
        if (opt_.verbose) std::cerr << "[" << command_ << "] " << msg << "\n";
    }

    /// Hashes every output and writes the manifest next to them.
    void finish() {
        for (const auto& [key, p] : outputs_)
            if (fs::exists(p)) manifest_["outputs"][key] = {{"path", rel(p)}, {"hash", hash_file(p)}};
        manifest_["jobs"] = jobs_;
        manifest_["config_content"] = cfg_;
        fs::create_directories(workdir_);
        write_file_atomic(workdir_ / ("manifest_" + command_ + ".json"), manifest_.dump(2) + "\n");
    }

    CategorySchema schema() {
        if (section("paths").contains("schema")) return load_schema_csv(input("schema"));
        return CategorySchema::default_schema();
    }

private:
    std::string rel(const fs::path& p) const {
        auto r = p.lexically_normal().lexically_relative(workdir_.lexically_normal());
        return r.empty() ? p.string() : r.generic_string();
    }

    Options opt_;
    std::string command_;
    json cfg_;
    fs::path base_, workdir_;
    unsigned jobs_ = 1;
    json manifest_;
    std::vector<std::pair<std::string, fs::path>> outputs_;
};

inline LevelGrids load_levels(Context& c) {
    LevelGrids g;
    for (int s = 0; s < kLevels; ++s) g[static_cast<std::size_t>(s)] = read_raster(c.input("level" + std::to_string(s)));
    check_level_alignment(g);
    return g;
}

inline SamplingOptions sampling_options(const json& j) {
    SamplingOptions o;
    o.patch_size = j.value("patch_size", o.patch_size);
    o.square_size = j.value("square_size", o.square_size);
    return o;
}

inline TrainConfig train_config(Context& c, int phase) {
    json j = c.section("train");
    if (j.contains("phase" + std::to_string(phase))) j.merge_patch(j["phase" + std::to_string(phase)]);
    TrainConfig t = train_config_from_json(j);
    t.phase = phase;
    t.seed = c.seed("train");
    t.jobs = c.jobs();
    validate(t);
    return t;
}

inline std::string metrics_line(const EpochRecord& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %d %s loss %.5f acc %.4f f1 %.4f", r.epoch, r.split.c_str(), r.loss,
                  r.metrics.accuracy, r.metrics.f1);
    return buf;
}

// --- commands ------------------------------------------------------------------

inline void cmd_synth(Context& c) {
    const auto schema = c.schema();
    const auto cfg = synthetic_config_from_json(c.section("synthetic"));
    const auto L = generate_synthetic_landscape(cfg, schema, c.seed("synthetic"));
    for (int s = 0; s < kLevels; ++s)
        write_raster(c.output("level" + std::to_string(s)), L.grids[static_cast<std::size_t>(s)]);
    write_raster(c.output("labels"), L.truth_mask);
    write_polygons_geojson(c.output("polygons"), L.truth);
    write_raster(c.output("landcover"), L.landcover);
    write_raster(c.output("loss_year"), L.loss_year);
    write_raster(c.output("regions"), L.regions);
    write_file_atomic(c.output("region_names"), json(L.region_names).dump(2) + "\n");
    c.log(std::to_string(L.truth.polygons.size()) + " polygons on a " + std::to_string(cfg.rows) + "x" +
          std::to_string(cfg.cols) + " grid");
}

inline void cmd_build_dataset(Context& c) {
    const auto schema = c.schema();
    const json sj = c.section("sampling");
    const auto grids = load_levels(c);
    const auto labels = read_raster(c.input("labels"));
    const auto polygons = read_polygons_geojson(c.input("polygons"));
    const auto ids = rasterize_indices(polygons, labels);
    const auto opt = sampling_options(sj);
    const int n = sj.value("n_patches", 500);
    const double val_fraction = sj.value("val_fraction", 0.2);
    const double min_age = sj.value("min_age", 3.0);
    const std::uint64_t seed = c.seed("sampling");
    auto patches = sample_patches(grids, labels, &ids, n, seed, opt);
    auto [train, val] = split_by_square(std::move(patches), val_fraction, seed);
    const auto p2_train = filter_phase2(train, polygons, min_age);
    const auto p2_val = with_binary_masks(val, polygons, min_age);
    PatchCacheManifest m;
    m.seed = seed;
    m.schema_hash = hex64(schema.hash());
    m.phase = "1";
    write_patch_cache(c.output("patches_train"), train, m);
    write_patch_cache(c.output("patches_val"), val, m);
    m.phase = "2";
    write_patch_cache(c.output("phase2_train"), p2_train, m);
    write_patch_cache(c.output("phase2_val"), p2_val, m);
    c.record("counts", {{"train", train.size()}, {"val", val.size()}, {"phase2_train", p2_train.size()},
                        {"phase2_val", p2_val.size()}});
    c.log(std::to_string(train.size()) + " train / " + std::to_string(val.size()) + " val patches, " +
          std::to_string(p2_train.size()) + " phase-2 train");
}

inline void cmd_train(Context& c, const Options& o) {
    if (o.phase != 1 && o.phase != 2) throw ConfigError("missing key 'phase': pass --phase 1 or --phase 2");
    const auto schema = c.schema();
    const auto cfg = train_config(c, o.phase);
    auto on_epoch = [&](const EpochRecord& r) { c.log(metrics_line(r)); };
    TrainResult res;
    if (o.phase == 1) {
        const auto train = read_patch_cache(c.input("patches_train"));
        const auto val = read_patch_cache(c.input("patches_val"));
        if (train.empty()) throw DataError("empty training source");
        auto mc = nn::model_config_from_json(c.section("model"));
        mc.seed = c.seed("model");
        mc.patch_size = train.front().size();
        for (int s = 0; s < kLevels; ++s)
            mc.input_channels[static_cast<std::size_t>(s)] = train.front().levels[static_cast<std::size_t>(s)].c;
        mc.n_categories = std::max(mc.n_categories, schema.max_code() + 1);
        nn::validate(mc);
        res = train_phase1(nn::build_model<float>(mc), train, val, cfg, on_epoch);
        nn::save_checkpoint(c.output("model_phase1"), res.model, schema.hash());
        write_file_atomic(c.output("metrics_phase1"), metrics_csv(res.history));
    } else {
        nn::CheckpointInfo info;
        auto m = nn::load_checkpoint<float>(c.input("model_phase1", o.model), &info);
        if (info.schema_hash != schema.hash()) throw DataError("checkpoint was trained with a different category schema");
        const auto train = read_patch_cache(c.input("phase2_train"));
        const auto val = read_patch_cache(c.input("phase2_val"));
        res = train_phase2(std::move(m), train, val, cfg, on_epoch);
        nn::save_checkpoint(c.output("model_phase2"), res.model, schema.hash());
        write_file_atomic(c.output("metrics_phase2"), metrics_csv(res.history));
    }
    c.record("training", {{"phase", o.phase},
                          {"train_config", to_json(cfg)},
                          {"best_epoch", res.best_epoch},
                          {"epochs_run", res.epochs_run},
                          {"best_val_loss", res.best_val_loss}});
}

inline std::vector<int> suppress_codes(const std::vector<std::string>& items, const CategorySchema& schema) {
    std::vector<int> out;
    for (const auto& raw : items) {
        const std::string s = trim(raw);
        if (s.empty()) continue;
        if (std::all_of(s.begin(), s.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
            out.push_back(std::stoi(s));
        } else if (s == "water") {
            out.push_back(schema.code("Water Body"));
        } else if (s == "forest") {
            out.push_back(schema.code("Forest Cover"));
        } else if (schema.contains(s)) {
            out.push_back(schema.code(s));
        } else {
            throw ConfigError("unknown suppress category '" + s + "'");
        }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

inline void cmd_infer(Context& c, const Options& o) {
    const auto schema = c.schema();
    const json ij = c.section("inference");
    auto m = nn::load_checkpoint<float>(c.input("model_phase2", o.model));
    const auto grids = load_levels(c);
    const int stride = o.stride.value_or(ij.value("stride", m.cfg.patch_size));
    const int margin = ij.value("blend_margin", m.cfg.patch_size / 8);
    const int runs = o.mc_runs.value_or(ij.value("mc_runs", 10));
    const double rate = o.dropout.value_or(ij.value("dropout", m.cfg.dropout_rate));
    const auto rule = parse_combine_rule(ij.value("combine", std::string("mean")));
    const auto plan = plan_tiles(grids[0], m.cfg.patch_size, stride, margin);
    const std::uint64_t seed = c.seed("inference");
    c.log(std::to_string(plan.windows.size()) + " tiles, " + std::to_string(runs) + " MC runs");
    RasterGrid prob = predict_deterministic(m, grids, plan, c.jobs());
    if (runs > 0) {
        auto mc = predict_mc(m, grids, plan, runs, rate, seed, c.jobs());
        prob = combine(prob, mc.mean, rule);
        write_raster(c.output("probability_std", {}, o.std_out), mc.std);
    }
    std::vector<std::string> suppress = o.suppress;
    if (suppress.empty() && ij.contains("suppress")) suppress = ij["suppress"].get<std::vector<std::string>>();
    const auto codes = suppress_codes(suppress, schema);
    if (!codes.empty()) prob = clean_with_landcover(prob, read_raster(c.input("landcover", o.landcover)), codes);
    write_raster(c.output("probability", {}, o.out), prob);
    c.record("inference", {{"stride", stride}, {"blend_margin", margin}, {"mc_runs", runs}, {"dropout", rate},
                           {"combine", ij.value("combine", std::string("mean"))}, {"suppress", codes}});
}

inline StratifyOptions stratify_options(const json& j) {
    StratifyOptions o;
    if (j.contains("edges")) o.edges = j["edges"].get<std::vector<double>>();
    return o;
}

inline void cmd_stratify(Context& c) {
    const auto prob = read_raster(c.input("probability"));
    const auto lc = read_raster(c.input("landcover"));
    auto [strata, s] = stratify(prob, lc, stratify_options(c.section("stratify")));
    write_raster(c.output("strata"), strata);
    write_file_atomic(c.output("stratification"), to_json(s).dump(2) + "\n");
    c.log(std::to_string(s.strata.size()) + " nonempty strata");
}

inline Stratification load_stratification(Context& c) {
    std::ifstream in(c.input("stratification"));
    try {
        return stratification_from_json(json::parse(in));
    } catch (const json::exception& e) {
        throw DataError("bad stratification file: " + std::string(e.what()));
    }
}

inline void cmd_allocate(Context& c, const Options& o) {
    const json aj = c.section("allocation");
    AllocationPolicy p;
    p.cashew_multiplier = aj.value("cashew_multiplier", p.cashew_multiplier);
    p.low_confusion_multiplier = aj.value("low_confusion_multiplier", p.low_confusion_multiplier);
    if (aj.contains("low_confusion_codes")) p.low_confusion_codes = aj["low_confusion_codes"].get<std::vector<int>>();
    if (aj.contains("overrides"))
        for (const auto& [k, v] : aj["overrides"].items()) p.overrides[std::stoi(k)] = v.get<double>();
    p.min_per_stratum = aj.value("min_per_stratum", p.min_per_stratum);
    p.seed = c.seed("allocation");
    std::size_t budget = 0;
    if (o.budget)
        budget = *o.budget;
    else if (aj.contains("budget"))
        budget = aj["budget"].get<std::size_t>();
    else
        throw ConfigError("missing key 'allocation.budget': pass --budget N");
    const auto strata = read_raster(c.input("strata"));
    const auto s = load_stratification(c);
    const auto samples = allocate_samples(strata, s, budget, p);
    write_file_atomic(c.output("samples"), samples_csv(samples));
    c.record("allocation", {{"budget", budget}, {"counts", allocate_counts(s, budget, p)}});
}

/// Fills reference labels from a truth raster: 1 where the truth code is cashew, else 0.
inline void cmd_label_samples(Context& c, const Options& o) {
    const auto schema = c.schema();
    const int cashew = schema.code(cashew_category());
    auto samples = read_samples_csv(c.input("samples", o.samples));
    const auto truth = read_raster(c.input("labels"));
    for (auto& u : samples) {
        if (u.row < 0 || u.row >= truth.rows() || u.col < 0 || u.col >= truth.cols())
            throw DataError("sample " + std::to_string(u.id) + " lies outside the truth raster");
        u.reference_label = static_cast<int>(truth(u.row, u.col)) == cashew ? 1 : 0;
    }
    write_file_atomic(c.output("labeled_samples"), samples_csv(samples));
}

inline void cmd_estimate(Context& c, const Options& o) {
    const auto samples = read_samples_csv(c.input("labeled_samples", o.samples));
    const auto s = load_stratification(c);
    const auto em = build_error_matrix(samples, s);
    for (const auto& w : em.warnings) std::cerr << "warning: " << w << "\n";
    const auto est = estimate_areas(em, s.total_area_ha);
    const auto acc = accuracies(em);
    write_file_atomic(c.output("estimate", ".json"), area_report_json(est, acc, s.total_area_ha, em.warnings).dump(2) + "\n");
    write_file_atomic(c.output("estimate", ".csv"), area_report_csv(est, acc));
}

inline void cmd_rollup(Context& c, const Options& o) {
    const auto r = production_rollup(read_province_csv(c.input("yields", o.yields)));
    write_file_atomic(c.output("production", ".csv"), rollup_csv(r));
    write_file_atomic(c.output("production", ".json"), to_json(r).dump(2) + "\n");
}

inline std::vector<std::string> region_names(Context& c) {
    if (!c.has_input("region_names")) return {};
    std::ifstream in(c.input("region_names"));
    try {
        return json::parse(in).get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw DataError("bad region names file: " + std::string(e.what()));
    }
}

inline void cmd_attribute(Context& c, const Options& o) {
    const json aj = c.section("attribution");
    const auto strata = read_raster(c.input("strata"));
    const auto loss = read_raster(c.input("loss_year", o.loss));
    AttributionOptions opt;
    opt.first_year = aj.value("first_year", opt.first_year);
    opt.last_year = aj.value("last_year", opt.last_year);
    if (aj.contains("categories")) {
        opt.categories = aj["categories"].get<std::vector<int>>();
    } else {
        const auto edges = stratify_options(c.section("stratify")).edges;
        opt.categories.clear();
        for (int i = 1; i < static_cast<int>(edges.size()); ++i) opt.categories.push_back(i);
    }
    if (aj.contains("cashew_strata")) opt.cashew_strata = aj["cashew_strata"].get<std::vector<int>>();
    const auto t = cross_tab(strata, loss, opt);
    write_file_atomic(c.output("attribution", ".csv"), attribution_csv(t));
    write_file_atomic(c.output("attribution", ".svg"), attribution_svg(t, "Cashew share of loss by year"));
    if (aj.value("per_region", true) && c.has_input("regions")) {
        const auto regions = read_raster(c.input("regions"));
        const auto names = region_names(c);
        for (std::size_t i = 0; i < names.size(); ++i) {
            const auto rt = cross_tab(strata, loss, opt, &regions, static_cast<int>(i));
            write_file_atomic(c.output("attribution", "_" + names[i] + ".csv"), attribution_csv(rt));
            write_file_atomic(c.output("attribution", "_" + names[i] + ".svg"), attribution_svg(rt, names[i]));
        }
    }
}

inline void cmd_ages(Context& c) {
    const json aj = c.section("attribution");
    const auto polygons = read_polygons_geojson(c.input("polygons"));
    std::vector<std::string> groups;
    if (aj.contains("groups"))
        groups = aj["groups"].get<std::vector<std::string>>();
    else
        groups = region_names(c);
    write_file_atomic(c.output("ages"), age_histogram_csv(age_histogram(polygons.polygons, groups)));
}

}  // namespace cli_detail

/// Entry point shared by the executable and the tests.
inline int run_cli(int argc, char** argv, std::ostream& err = std::cerr) {
    using cli_detail::Context;
    cli_detail::Options o;
    CLI::App app{"Cashew mapping pipeline: synthetic data, training, inference, area estimation"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    app.add_option("-c,--config,--inputs", o.config, "JSON config file");
    app.add_option("-j,--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--seed", o.seed, "override every seed in the config");
    app.add_flag("-v,--verbose", o.verbose, "log progress to stderr");

    auto* synth = app.add_subcommand("synth", "generate a synthetic landscape with truth");
    auto* build = app.add_subcommand("build-dataset", "cut and split the training patch caches");
    auto* train = app.add_subcommand("train", "train phase 1 (multi-category) or 2 (binary cashew)");
    train->add_option("--phase", o.phase, "1 or 2")->required()->check(CLI::IsMember({1, 2}));
    train->add_option("--model", o.model, "phase-1 checkpoint (phase 2 input)");
    auto* infer = app.add_subcommand("infer", "wall-to-wall probability and uncertainty rasters");
    infer->add_option("--model", o.model, "phase-2 checkpoint");
    infer->add_option("--stride", o.stride, "tile stride in pixels");
    infer->add_option("--mc-runs", o.mc_runs, "MC-dropout passes (0 = deterministic only)");
    infer->add_option("--dropout", o.dropout, "MC dropout rate");
    infer->add_option("--out", o.out, "probability raster");
    infer->add_option("--std-out", o.std_out, "MC standard deviation raster");
    infer->add_option("--landcover", o.landcover, "landcover raster for cleaning");
    infer->add_option("--suppress", o.suppress, "landcover names, codes or water/forest to zero out")->delimiter(',');
    auto* strat = app.add_subcommand("stratify", "probability and landcover strata");
    auto* alloc = app.add_subcommand("allocate", "stratified random sample design");
    alloc->add_option("--budget", o.budget, "total sample size");
    auto* label = app.add_subcommand("label-samples", "fill reference labels from the truth raster");
    label->add_option("--samples", o.samples, "samples CSV");
    auto* estimate = app.add_subcommand("estimate", "area and accuracy report");
    estimate->add_option("--samples", o.samples, "samples CSV with reference labels");
    auto* rollup = app.add_subcommand("rollup", "province production report");
    rollup->add_option("--yields", o.yields, "province area/yield CSV");
    auto* attribute = app.add_subcommand("attribute", "forest loss attribution by year");
    attribute->add_option("--loss", o.loss, "first-loss-year raster");
    auto* ages = app.add_subcommand("ages", "plantation age histograms");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e, err, err);
        return 2;
    }

    const auto* sub = app.get_subcommands().front();
    try {
        Context c(o, sub == train ? "train_phase" + std::to_string(o.phase) : sub->get_name());
        if (sub == synth) cli_detail::cmd_synth(c);
        else if (sub == build) cli_detail::cmd_build_dataset(c);
        else if (sub == train) cli_detail::cmd_train(c, o);
        else if (sub == infer) cli_detail::cmd_infer(c, o);
        else if (sub == strat) cli_detail::cmd_stratify(c);
        else if (sub == alloc) cli_detail::cmd_allocate(c, o);
        else if (sub == label) cli_detail::cmd_label_samples(c, o);
        else if (sub == estimate) cli_detail::cmd_estimate(c, o);
        else if (sub == rollup) cli_detail::cmd_rollup(c, o);
        else if (sub == attribute) cli_detail::cmd_attribute(c, o);
        else if (sub == ages) cli_detail::cmd_ages(c);
        c.finish();
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const nlohmann::json::exception& e) {
        err << "error: config: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace cashewmap
