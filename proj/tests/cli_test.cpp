#include <gtest/gtest.h>

#include <fstream>

#include "cashewmap/area.hpp"
#include "pipeline.hpp"
#include "province_reference.hpp"
#include "support.hpp"

using namespace cashewmap;
using namespace cashewmap::testing;
namespace fs = std::filesystem;

TEST(Cli, MissingConfigIsConfigError) {
    std::string err;
    EXPECT_EQ(cli({"stratify"}, &err), 2);
    EXPECT_NE(err.find("missing key 'config'"), std::string::npos) << err;
    EXPECT_EQ(cli({"-c", "/nonexistent/c.json", "stratify"}, &err), 2);
}

TEST(Cli, BadFlagsAreUsageErrors) {
    TempDir dir("cli_flags");
    const auto cfg = write_config(dir.path(), small_pipeline_config());
    EXPECT_EQ(cli({"-c", cfg.string(), "--frobnicate", "synth"}), 2);
    EXPECT_EQ(cli({"-c", cfg.string(), "train", "--phase", "3"}), 2);
    EXPECT_EQ(cli({"-c", cfg.string()}), 2);
    std::ofstream(dir / "broken.json") << "{ not json";
    EXPECT_EQ(cli({"-c", (dir / "broken.json").string(), "synth"}), 2);
}

TEST(Cli, MissingInputNamesItsKey) {
    TempDir dir("cli_missing");
    const auto cfg = write_config(dir.path(), small_pipeline_config());
    std::string err;
    EXPECT_EQ(cli({"-c", cfg.string(), "stratify"}, &err), 2);
    EXPECT_NE(err.find("paths.probability"), std::string::npos) << err;
    auto no_budget = small_pipeline_config();
    no_budget.erase("allocation");
    const auto cfg2 = write_config(dir / "b", no_budget);
    fs::create_directories(dir / "b" / "run");
    std::ofstream(dir / "b" / "run" / "strata.tif");
    std::ofstream(dir / "b" / "run" / "stratification.json");
    EXPECT_EQ(cli({"-c", cfg2.string(), "allocate"}, &err), 2);
    EXPECT_NE(err.find("allocation.budget"), std::string::npos) << err;
}

TEST(Cli, EstimateOnPerfectSampleHasZeroError) {
    TempDir dir("cli_estimate");
    const auto cfg = write_config(dir.path(), small_pipeline_config());
    const auto run = dir / "run";
    fs::create_directories(run);
    Stratification st;
    Stratum a, b;
    a.id = 1;
    a.pixel_count = 300;
    b.id = 105;
    b.kind = StratumKind::Landcover;
    b.landcover_code = 5;
    b.pixel_count = 700;
    st.strata = {a, b};
    st.pixel_area_ha = 0.01;
    st.total_area_ha = 10.0;
    std::ofstream(run / "stratification.json") << to_json(st).dump(2);
    std::vector<SampleUnit> units;
    for (int i = 0; i < 20; ++i) {
        SampleUnit u;
        u.id = i + 1;
        u.stratum_id = i < 10 ? 1 : 105;
        u.reference_label = i < 10 ? 1 : 0;
        units.push_back(u);
    }
    std::ofstream(run / "samples_labeled.csv") << samples_csv(units);
    std::string err;
    ASSERT_EQ(cli({"-c", cfg.string(), "estimate"}, &err), 0) << err;
    const auto j = nlohmann::json::parse(slurp(run / "estimate.json"));
    for (const auto& c : j["classes"]) {
        EXPECT_EQ(c["standard_error_ha"].get<double>(), 0.0);
        EXPECT_NEAR(c["area_ha"].get<double>(), c["class"] == 1 ? 3.0 : 7.0, 1e-12);
    }
    EXPECT_TRUE(fs::exists(run / "estimate.csv"));
    const auto m = nlohmann::json::parse(slurp(run / "manifest_estimate.json"));
    EXPECT_EQ(m["command"], "estimate");
    EXPECT_TRUE(m["inputs"].contains("labeled_samples"));
    EXPECT_TRUE(m["outputs"].size() >= 2u);
}

TEST(Cli, RollupReproducesReferenceTotals) {
    TempDir dir("cli_rollup");
    const auto cfg = write_config(dir.path(), small_pipeline_config());
    std::ofstream y(dir / "yields.csv");
    y << "province,area_ha,area_ci_ha,yield_t_per_ha,accuracy,adopted\n";
    for (const auto& p : reference_inputs()) {
        y << p.name << "," << p.area_ha << ",";
        if (p.area_ci_ha) y << std::setprecision(17) << *p.area_ci_ha;
        y << "," << p.yield_t_per_ha << ",";
        if (p.accuracy) y << *p.accuracy;
        y << "," << (p.adopted ? "1" : "") << "\n";
    }
    y.close();
    std::string err;
    ASSERT_EQ(cli({"-c", cfg.string(), "rollup", "--yields", (dir / "yields.csv").string()}, &err), 0) << err;
    const auto j = nlohmann::json::parse(slurp(dir / "run" / "production.json"));
    EXPECT_LE(std::llabs(j["total"]["production_t"].get<long long>() - kReferenceTotalProduction), 1);
    EXPECT_EQ(j["provinces"][5]["production_t"].get<long long>(), 220077);
}

TEST(Cli, PipelineRerunIsIdentical) {
    TempDir dir("cli_pipeline");
    const auto cfg = small_pipeline_config();
    for (const char* sub : {"a", "b"}) {
        const auto path = write_config(dir / sub, cfg);
        for (auto step : pipeline_steps()) {
            step.insert(step.begin(), {"-c", path.string()});
            std::string err;
            ASSERT_EQ(cli(step, &err), 0) << step.back() << ": " << err;
        }
    }
    EXPECT_EQ(compare_outputs(dir / "a" / "run", dir / "b" / "run"), "");
    EXPECT_TRUE(fs::exists(dir / "a" / "run" / "prob.tif"));
    EXPECT_TRUE(fs::exists(dir / "a" / "run" / "attribution.csv"));
    EXPECT_TRUE(fs::exists(dir / "a" / "run" / "ages.csv"));
}
