#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cashewmap/cli.hpp"
#include "cashewmap/geotiff.hpp"

namespace cashewmap::testing {

/// Runs the CLI in-process; `err` receives diagnostics.
inline int cli(std::vector<std::string> args, std::string* err = nullptr) {
    args.insert(args.begin(), "cashewmap");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream os;
    const int rc = run_cli(static_cast<int>(argv.size()), argv.data(), os);
    if (err) *err = os.str();
    return rc;
}

/// A complete but tiny configuration: 128 px landscape, 4-8 channel network, two epochs.
inline nlohmann::json small_pipeline_config() {
    return nlohmann::json::parse(R"({
      "seed": 3, "jobs": 1, "paths": {"workdir": "run"},
      "synthetic": {"rows": 128, "cols": 128, "min_field": 8, "max_field": 32, "cashew_age_min": 4},
      "sampling": {"patch_size": 32, "square_size": 64, "n_patches": 48, "val_fraction": 0.25},
      "model": {"widths": [4, 8, 8, 8], "bottleneck_width": 8, "convs_per_stage": 1},
      "train": {"batch_size": 8, "max_epochs": 2, "patience": 2, "learning_rate": 0.001},
      "inference": {"stride": 24, "mc_runs": 2, "dropout": 0.1},
      "stratify": {"edges": [0.0, 1.0]},
      "allocation": {"budget": 40, "min_per_stratum": 2},
      "attribution": {"first_year": 2000, "last_year": 2022}
    })");
}

inline std::vector<std::vector<std::string>> pipeline_steps() {
    return {{"synth"},   {"build-dataset"}, {"train", "--phase", "1"}, {"train", "--phase", "2"},
            {"infer"},   {"stratify"},      {"allocate"},              {"label-samples"},
            {"estimate"}, {"attribute"},    {"ages"}};
}

inline std::filesystem::path write_config(const std::filesystem::path& dir, const nlohmann::json& cfg) {
    std::filesystem::create_directories(dir);
    const auto p = dir / "config.json";
    std::ofstream(p) << cfg.dump(2) << "\n";
    return p;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Compares two output directories: rasters value-wise within `tol`, every other file
/// byte-for-byte. Returns a description of the first difference, empty if none.
inline std::string compare_outputs(const std::filesystem::path& a, const std::filesystem::path& b, double tol = 1e-6) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(a))
        if (e.is_regular_file()) files.push_back(e.path().filename());
    if (files.empty()) return "no outputs in " + a.string();
    for (const auto& f : files) {
        if (!std::filesystem::exists(b / f)) return f.string() + " missing from second run";
        if (f.extension() == ".tif") {
            const auto x = read_raster(a / f), y = read_raster(b / f);
            if (x.rows() != y.rows() || x.cols() != y.cols() || x.bands() != y.bands()) return f.string() + " shape differs";
            for (std::size_t i = 0; i < x.values().size(); ++i) {
                const double u = x.values()[i], v = y.values()[i];
                if (std::isnan(u) && std::isnan(v)) continue;
                if (!(std::abs(u - v) <= tol)) return f.string() + " differs at " + std::to_string(i);
            }
        } else if (slurp(a / f) != slurp(b / f)) {
            return f.string() + " differs";
        }
    }
    return {};
}

}  // namespace cashewmap::testing
