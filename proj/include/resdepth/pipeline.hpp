#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "resdepth/camera.hpp"
#include "resdepth/inference.hpp"
#include "resdepth/metrics.hpp"
#include "resdepth/scene.hpp"
#include "resdepth/stereo.hpp"
#include "resdepth/train.hpp"

namespace resdepth {

/// Method keys understood by the pipeline. "stereo_iter" implies "stereo".
/// Rows are always emitted in table order: initial, median, unet_stereo,
/// zero, mono, stereo, stereo_iter.
struct PipelineConfig {
  std::uint64_t seed = 7;
  SceneSpec scene;
  AcquisitionSpec acquisition;
  RenderOptions render;
  SgmParams matcher;
  /// Extra disparity search range on both sides of the scene height range.
  int disparity_margin = 4;
  TrainConfig train;
  std::vector<std::string> variants{"zero", "mono", "stereo", "unet_stereo", "stereo_iter"};
  /// Additional stereo pairs (beyond the selected one) for generalized training; 0 disables.
  int generalized_pairs = 0;
  TileOptions tiles;
  double truncation = kDefaultTruncation;

  void validate() const;
  /// Sets every stage seed from one value.
  void apply_seed(std::uint64_t s);
};

/// Parses the JSON config; unknown keys are errors.
PipelineConfig parse_pipeline_config(const std::string& json_text);
PipelineConfig load_pipeline_config(const std::string& path);
std::string pipeline_config_to_json(const PipelineConfig& cfg);

/// Rectified stereo pair rendered from the scene, with the initial DEM.
struct StereoProducts {
  std::pair<int, int> selected;
  EpipolarPair pair;
  MatchResult match;
  HeightField initial_dem;
};

/// Scene, acquisitions and the rectified pair for a config.
struct SynthProducts {
  SceneTruth scene;
  std::vector<AffineCamera> cameras;
};

SynthProducts run_synth(const PipelineConfig& cfg);
/// Renders and matches a camera pair (indices into synth.cameras).
StereoProducts run_stereo(const PipelineConfig& cfg, const SynthProducts& synth, std::pair<int, int> pair);

/// Warps both views of the pair onto a DEM.
std::pair<GrayImage, GrayImage> warp_pair(const EpipolarPair& pair, const HeightField& dem);

struct IterationResult {
  HeightField dem_1;
  HeightField dem_2;
  TrainResult second;
  /// Content hashes of dem_1 and of the two orthos net 2 was trained and run on.
  std::string dem_1_hash;
  std::string ortho_1_hash;
  std::string ortho_2_hash;
};

/// dem_1 = refine(dem_0) with the first model, rewarp both views on dem_1,
/// train a second Stereo network on them and apply it: dem_2.
IterationResult iterate_refinement(Model& first, const EpipolarPair& pair, const HeightField& dem_0,
                                   const HeightField& target, const StripeSplit& split,
                                   const Mask& exclusion, const TrainConfig& train_cfg,
                                   const TileOptions& tiles);

struct PipelineResult {
  std::vector<std::pair<std::string, MetricsReport>> table;
  std::string metrics_csv;
  /// Overall metrics restricted to tree cells of the test stripe.
  std::vector<std::pair<std::string, MetricsReport>> tree_table;
  std::map<std::string, std::vector<TrainLogEntry>> train_logs;
  std::map<std::string, std::string> manifest;
  double stereo_train_seconds = 0.0;
};

/// Runs synth, match, warp, train, refine, iterate and eval, writing
/// inputs/, checkpoints/, rasters/, reports/ and manifest.json under out_dir.
/// A failing stage throws std::runtime_error prefixed with the stage name;
/// files written so far are kept. `progress` (optional) receives one line
/// per stage.
PipelineResult run_pipeline(const PipelineConfig& cfg, const std::string& out_dir,
                            const std::function<void(const std::string&)>& progress = {});

/// Trains every listed variant with the same data, seed and budget and
/// returns the table in list order (duplicates allowed).
PipelineResult run_ablation(const PipelineConfig& cfg, const std::vector<std::string>& variants,
                            const std::string& out_dir,
                            const std::function<void(const std::string&)>& progress = {});

/// Display name of a method key, e.g. "stereo" -> "ResDepth-stereo".
std::string method_display_name(const std::string& key);

}  // namespace resdepth
