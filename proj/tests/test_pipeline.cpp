#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "resdepth/pipeline.hpp"

using namespace resdepth;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"({
  "seed": 3,
  "scene": {"extent_m": 64, "cell_size": 0.5, "building_count": 4, "tree_density": 30,
            "building_min_size_m": 6, "building_max_size_m": 12},
  "train": {"max_steps": 4, "eval_every": 2, "batch_size": 2, "levels": 2,
            "channel_widths": [4, 8], "patch_size": 16},
  "inference": {"tile": 64, "overlap": 16}
})";

std::string read_text(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("empty config gives the defaults") {
  const auto c = parse_pipeline_config("{}");
  const PipelineConfig d;
  CHECK(c.scene.extent_m == d.scene.extent_m);
  CHECK(c.train.lr == d.train.lr);
  CHECK(c.variants == d.variants);
  CHECK(c.truncation == 20.0);
}

TEST_CASE("unknown keys and bad values are rejected") {
  CHECK_THROWS_WITH_AS(parse_pipeline_config(R"({"scene": {"extnt_m": 3}})"), doctest::Contains("extnt_m"),
                       std::invalid_argument);
  CHECK_THROWS(parse_pipeline_config(R"({"bogus": 1})"));
  CHECK_THROWS(parse_pipeline_config(R"({"variants": ["stereo", "quad"]})"));
  CHECK_THROWS(parse_pipeline_config(R"({"train": {"lr": -1}})"));
  CHECK_THROWS(parse_pipeline_config(R"({"matcher": {"p1": 5, "p2": 4}})"));
  CHECK_THROWS(parse_pipeline_config("{not json"));
  CHECK_THROWS(parse_pipeline_config(R"({"scene": {"extent_m": "wide"}})"));
}

TEST_CASE("one seed drives every stage") {
  const auto c = parse_pipeline_config(R"({"seed": 10})");
  CHECK(c.seed == 10);
  CHECK(c.scene.seed == 10);
  CHECK(c.acquisition.seed == 1010);
  CHECK(c.train.seed == 2010);
  CHECK(c.render.noise_seed == 3010);
  const auto o = parse_pipeline_config(R"({"seed": 10, "train": {"seed": 99}})");
  CHECK(o.train.seed == 99);
  CHECK(o.scene.seed == 10);
}

TEST_CASE("config serialization round trips") {
  const auto c = parse_pipeline_config(kSmall);
  const auto text = pipeline_config_to_json(c);
  const auto back = parse_pipeline_config(text);
  CHECK(pipeline_config_to_json(back) == text);
  CHECK(back.train.channel_widths == std::vector<int>{4, 8});
  CHECK(back.scene.seed == 3);
}

TEST_CASE("method display names") {
  CHECK(method_display_name("initial") == "Initial DEM");
  CHECK(method_display_name("stereo") == "ResDepth-stereo");
  CHECK(method_display_name("zero") == "ResDepth-0");
  CHECK(method_display_name("unet_stereo") == "Unet-stereo");
}

TEST_CASE("small pipeline writes the run layout and is reproducible") {
  const auto cfg = parse_pipeline_config(kSmall);
  const auto dir = testutil::temp_dir("pipeline");
  std::vector<std::string> stages;
  const auto a = run_pipeline(cfg, (dir / "a").string(), [&](const std::string& s) { stages.push_back(s); });
  CHECK_FALSE(stages.empty());
  for (const char* sub : {"inputs", "checkpoints", "rasters", "reports"}) CHECK(fs::is_directory(dir / "a" / sub));
  CHECK(fs::exists(dir / "a" / "manifest.json"));
  CHECK(fs::exists(dir / "a" / "reports" / "metrics.csv"));
  CHECK(read_text(dir / "a" / "reports" / "metrics.csv") == a.metrics_csv);
  std::vector<std::string> names;
  for (const auto& [n, r] : a.table) names.push_back(n);
  CHECK(names == std::vector<std::string>{"Initial DEM", "Median filter", "Unet-stereo", "ResDepth-0", "ResDepth-mono",
                                          "ResDepth-stereo", "ResDepth-stereo_iter"});
  CHECK(a.train_logs.count("stereo") == 1);
  const auto manifest = nlohmann::json::parse(read_text(dir / "a" / "manifest.json"));
  for (const auto& [k, v] : manifest.items()) {
    CHECK(fs::exists(dir / "a" / k));
    CHECK(v.get<std::string>().size() == 64);
  }
  const auto b = run_pipeline(cfg, (dir / "b").string());
  CHECK(a.metrics_csv == b.metrics_csv);
  CHECK(manifest == nlohmann::json::parse(read_text(dir / "b" / "manifest.json")));
}

TEST_CASE("ablation rows follow the list, duplicates included") {
  const auto cfg = parse_pipeline_config(kSmall);
  const auto dir = testutil::temp_dir("ablation");
  const auto r = run_ablation(cfg, {"zero", "stereo", "zero"}, dir.string());
  REQUIRE(r.table.size() == 3);
  CHECK(r.table[0].first == "ResDepth-0");
  CHECK(r.table[1].first == "ResDepth-stereo");
  CHECK(r.table[0].second.overall.mae == r.table[2].second.overall.mae);
  CHECK(r.table[0].second.overall.rmse == r.table[2].second.overall.rmse);
}

TEST_CASE("stage failures name the stage") {
  auto cfg = parse_pipeline_config(kSmall);
  cfg.scene.building_count = 500;
  const auto dir = testutil::temp_dir("fail");
  CHECK_THROWS_WITH(run_pipeline(cfg, dir.string()), doctest::Contains("stage synth"));
  CHECK(fs::exists(dir / "inputs" / "config.json"));
}
