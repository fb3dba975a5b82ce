#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "resdepth/camera.hpp"
#include "resdepth/checkpoint.hpp"
#include "resdepth/inference.hpp"
#include "resdepth/metrics.hpp"
#include "resdepth/pipeline.hpp"
#include "resdepth/raster_io.hpp"
#include "resdepth/scene.hpp"
#include "resdepth/stereo.hpp"
#include "resdepth/train.hpp"
#include "resdepth/warp.hpp"

namespace fs = std::filesystem;
using namespace resdepth;

namespace {

std::optional<std::uint64_t> g_seed;

PipelineConfig load_config(const std::string& path) {
  PipelineConfig cfg = path.empty() ? PipelineConfig{} : load_pipeline_config(path);
  if (g_seed) cfg.apply_seed(*g_seed);
  cfg.validate();
  return cfg;
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

void ensure_parent(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

std::pair<int, int> parse_pair(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw std::invalid_argument("--pair expects a,b");
  return {std::stoi(s.substr(0, comma)), std::stoi(s.substr(comma + 1))};
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

struct Prepared {
  SynthProducts synth;
  StereoProducts stereo;
  TrainingData data;
};

Prepared prepare(const PipelineConfig& cfg) {
  Prepared p;
  p.synth = run_synth(cfg);
  p.stereo = run_stereo(cfg, p.synth, select_stereo_pair(p.synth.cameras));
  p.data.initial = p.stereo.initial_dem;
  p.data.target = p.synth.scene.target_dem;
  p.data.ortho_pairs.push_back(warp_pair(p.stereo.pair, p.data.initial));
  p.data.split = StripeSplit::make(p.data.initial.width());
  p.data.stats = compute_stats(p.data.initial);
  p.data.exclusion = p.synth.scene.exclusion_mask;
  return p;
}

void print_log(const std::string& line) { std::cerr << "[resdepth] " << line << "\n"; }

void print_result(const PipelineResult& r) {
  std::cout << emit_table(r.table);
  std::cout << "stereo training: " << format_number(r.stereo_train_seconds) << " s\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Residual DEM refinement from stereo imagery"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Seed for every stage (overrides the config)")->each([&](const std::string&) {
    g_seed = seed;
  });

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a scene, acquisitions and rendered views");
  std::string synth_config, synth_out = "synth";
  std::optional<double> extent;
  std::optional<int> buildings;
  std::optional<double> trees;
  bool synth_views = true;
  synth->add_option("--config", synth_config, "Pipeline config JSON");
  synth->add_option("--extent", extent, "Scene side length in meters");
  synth->add_option("--buildings", buildings, "Number of buildings");
  synth->add_option("--trees", trees, "Trees per hectare");
  synth->add_option("--out-dir", synth_out, "Output directory");
  synth->add_flag("!--no-views", synth_views, "Skip rendering the views");

  // match
  auto* match = app.add_subcommand("match", "Render a stereo pair and compute the initial DEM");
  std::string match_config, match_pair_arg, match_out = "dem.pfm", match_pair_dir;
  std::optional<float> p1, p2;
  std::optional<int> paths, census;
  match->add_option("--config", match_config, "Pipeline config JSON (scene and acquisitions)");
  match->add_option("--pair", match_pair_arg, "Camera indices a,b (default: automatic selection)");
  match->add_option("--p1", p1, "Small smoothness penalty");
  match->add_option("--p2", p2, "Large smoothness penalty");
  match->add_option("--paths", paths, "Aggregation paths (4 or 8)");
  match->add_option("--census", census, "Census window side length");
  match->add_option("--out", match_out, "Output DEM (.pfm)");
  match->add_option("--pair-dir", match_pair_dir, "Also write the rectified views and their cameras here");

  // warp
  auto* warp = app.add_subcommand("warp", "Ortho-rectify an image onto a DEM");
  std::string warp_image, warp_camera, warp_dem, warp_out = "ortho.pfm";
  int warp_index = 0;
  warp->add_option("--image", warp_image, "Image (.pfm)")->required();
  warp->add_option("--camera", warp_camera, "Camera file (JSON)")->required();
  warp->add_option("--camera-index", warp_index, "Index into the camera file");
  warp->add_option("--dem", warp_dem, "DEM (.pfm)")->required();
  warp->add_option("--out", warp_out, "Output ortho image (.pfm)");

  // train
  auto* trn = app.add_subcommand("train", "Train a refinement network on the benchmark scene");
  std::string train_config, train_variant = "stereo", train_out = "model.ckpt", train_log;
  trn->add_option("--config", train_config, "Pipeline config JSON");
  trn->add_option("--variant", train_variant, "zero, mono, stereo or unet_stereo");
  trn->add_option("--out", train_out, "Checkpoint path");
  trn->add_option("--log", train_log, "Training log CSV (default: <out>.log.csv)");

  // refine
  auto* refine = app.add_subcommand("refine", "Apply a trained network to a DEM");
  std::string ref_ckpt, ref_dem, ref_o1, ref_o2, ref_out = "refined.pfm";
  TileOptions ref_tiles;
  refine->add_option("--checkpoint", ref_ckpt, "Checkpoint")->required();
  refine->add_option("--dem", ref_dem, "Input DEM (.pfm)")->required();
  refine->add_option("--ortho1", ref_o1, "First ortho image (.pfm)");
  refine->add_option("--ortho2", ref_o2, "Second ortho image (.pfm)");
  refine->add_option("--tile", ref_tiles.tile, "Tile size");
  refine->add_option("--overlap", ref_tiles.overlap, "Tile overlap");
  refine->add_option("--out", ref_out, "Output DEM (.pfm)");

  // iterate
  auto* iterate = app.add_subcommand("iterate", "Refine, re-warp on the refined DEM, retrain and refine again");
  std::string it_config, it_ckpt, it_out = "iterate";
  iterate->add_option("--config", it_config, "Pipeline config JSON");
  iterate->add_option("--checkpoint", it_ckpt, "First Stereo checkpoint")->required();
  iterate->add_option("--out-dir", it_out, "Output directory");

  // eval
  auto* eval = app.add_subcommand("eval", "Score a DEM against the reference");
  std::string ev_pred, ev_truth, ev_buildings, ev_exclude, ev_region, ev_out, ev_hist, ev_name = "prediction";
  double ev_trunc = kDefaultTruncation;
  eval->add_option("--pred", ev_pred, "Predicted DEM (.pfm)")->required();
  eval->add_option("--truth", ev_truth, "Reference DEM (.pfm)")->required();
  eval->add_option("--buildings", ev_buildings, "Building mask (.pgm or .pfm)");
  eval->add_option("--exclude", ev_exclude, "Exclusion mask (.pgm or .pfm)");
  eval->add_option("--region", ev_region, "Evaluation region mask (.pgm or .pfm)");
  eval->add_option("--trunc", ev_trunc, "Truncation threshold in meters");
  eval->add_option("--name", ev_name, "Method name in the table");
  eval->add_option("--out", ev_out, "CSV output (default: stdout)");
  eval->add_option("--histogram", ev_hist, "Residual histogram PNG");

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "Run every stage and write a run directory");
  std::string pipe_config, pipe_out = "run";
  pipe->add_option("--config", pipe_config, "Pipeline config JSON");
  pipe->add_option("--out-dir", pipe_out, "Run directory");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Train several variants with identical data and budget");
  std::string ab_config, ab_variants = "zero,mono,stereo", ab_out = "ablation";
  ablate->add_option("--config", ab_config, "Pipeline config JSON");
  ablate->add_option("--variants", ab_variants, "Comma-separated variant list");
  ablate->add_option("--out-dir", ab_out, "Run directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      PipelineConfig cfg = load_config(synth_config);
      if (extent) cfg.scene.extent_m = *extent;
      if (buildings) cfg.scene.building_count = *buildings;
      if (trees) cfg.scene.tree_density = *trees;
      cfg.validate();
      const fs::path dir(synth_out);
      fs::create_directories(dir);
      const SynthProducts s = run_synth(cfg);
      write_file(dir / "config.json", pipeline_config_to_json(cfg) + "\n");
      write_pfm((dir / "target.pfm").string(), s.scene.target_dem);
      write_pfm((dir / "render_surface.pfm").string(), s.scene.render_surface);
      write_pgm((dir / "buildings.pgm").string(), mask_to_gray8(s.scene.building_mask));
      write_pgm((dir / "trees.pgm").string(), mask_to_gray8(s.scene.tree_mask));
      write_pgm((dir / "exclusion.pgm").string(), mask_to_gray8(s.scene.exclusion_mask));
      write_cameras((dir / "cameras.json").string(), s.cameras);
      if (synth_views) {
        for (std::size_t i = 0; i < s.cameras.size(); ++i) {
          RenderOptions ro = cfg.render;
          ro.noise_seed = cfg.render.noise_seed + 2 * i;
          const GrayImage v = render_view(s.scene, s.cameras[i], ro);
          char name[32];
          std::snprintf(name, sizeof name, "view_%02zu", i);
          write_pfm((dir / (std::string(name) + ".pfm")).string(), v);
          write_png_gray((dir / (std::string(name) + ".png")).string(), to_gray8(v));
        }
      }
      std::cout << "wrote " << dir.string() << " (" << s.cameras.size() << " cameras)\n";
    } else if (*match) {
      PipelineConfig cfg = load_config(match_config);
      if (p1) cfg.matcher.p1 = *p1;
      if (p2) cfg.matcher.p2 = *p2;
      if (paths) cfg.matcher.path_count = *paths;
      if (census) cfg.matcher.census_window = *census;
      cfg.validate();
      const SynthProducts s = run_synth(cfg);
      const auto sel = match_pair_arg.empty() ? select_stereo_pair(s.cameras) : parse_pair(match_pair_arg);
      const StereoProducts st = run_stereo(cfg, s, sel);
      ensure_parent(match_out);
      write_pfm(match_out, st.initial_dem);
      if (!match_pair_dir.empty()) {
        const fs::path dir(match_pair_dir);
        fs::create_directories(dir);
        write_pfm((dir / "left.pfm").string(), st.pair.left);
        write_pfm((dir / "right.pfm").string(), st.pair.right);
        write_cameras((dir / "pair_cameras.json").string(), {st.pair.left_camera, st.pair.right_camera});
      }
      std::cout << "pair " << sel.first << "," << sel.second << " -> " << match_out << "\n";
    } else if (*warp) {
      const auto cams = read_cameras(warp_camera);
      if (warp_index < 0 || warp_index >= static_cast<int>(cams.size()))
        throw std::invalid_argument("--camera-index out of range");
      const GrayImage out = ortho_rectify(read_gray_pfm(warp_image), cams[warp_index], read_height_pfm(warp_dem));
      ensure_parent(warp_out);
      write_pfm(warp_out, out);
    } else if (*trn) {
      PipelineConfig cfg = load_config(train_config);
      TrainConfig tc = cfg.train;
      tc.variant = parse_variant(train_variant);
      tc.validate();
      print_log("preparing data");
      const Prepared p = prepare(cfg);
      print_log("training " + train_variant + " for " + std::to_string(tc.max_steps) + " steps");
      const TrainResult r = train(tc, p.data);
      ensure_parent(train_out);
      save_checkpoint(train_out, r.model.net, r.model.variant, r.model.stats);
      write_file(train_log.empty() ? train_out + ".log.csv" : train_log, log_to_csv(r.log));
      std::cout << "best step " << r.best_step << " validation MAE " << format_number(r.best_val_mae)
                << " (initial " << format_number(r.initial_val_mae) << ")\n";
    } else if (*refine) {
      Model m = load_checkpoint(ref_ckpt);
      const HeightField dem = read_height_pfm(ref_dem);
      GrayImage o1, o2;
      if (m.variant == Variant::Mono || m.variant == Variant::Stereo || m.variant == Variant::UnetStereo) {
        if (ref_o1.empty()) throw std::invalid_argument("--ortho1 is required for this checkpoint");
        o1 = read_gray_pfm(ref_o1);
      }
      if (m.variant == Variant::Stereo || m.variant == Variant::UnetStereo) {
        if (ref_o2.empty()) throw std::invalid_argument("--ortho2 is required for this checkpoint");
        o2 = read_gray_pfm(ref_o2);
      }
      const HeightField out = refine_dem(m, dem, o1, o2, ref_tiles);
      ensure_parent(ref_out);
      write_pfm(ref_out, out);
    } else if (*iterate) {
      PipelineConfig cfg = load_config(it_config);
      Model first = load_checkpoint(it_ckpt);
      const Prepared p = prepare(cfg);
      const IterationResult r = iterate_refinement(first, p.stereo.pair, p.data.initial, p.data.target,
                                                   p.data.split, p.data.exclusion, cfg.train, cfg.tiles);
      const fs::path dir(it_out);
      fs::create_directories(dir);
      write_pfm((dir / "dem_1.pfm").string(), r.dem_1);
      write_pfm((dir / "dem_2.pfm").string(), r.dem_2);
      save_checkpoint((dir / "second.ckpt").string(), r.second.model.net, r.second.model.variant,
                      r.second.model.stats);
      write_file(dir / "second.log.csv", log_to_csv(r.second.log));
    } else if (*eval) {
      const HeightField pred = read_height_pfm(ev_pred);
      const HeightField truth = read_height_pfm(ev_truth);
      std::optional<Mask> b, e, reg;
      if (!ev_buildings.empty()) b = read_mask(ev_buildings);
      if (!ev_exclude.empty()) e = read_mask(ev_exclude);
      if (!ev_region.empty()) reg = read_mask(ev_region);
      const MetricsReport m = compute_metrics(pred, truth, b ? &*b : nullptr, e ? &*e : nullptr, ev_trunc,
                                              reg ? &*reg : nullptr);
      const std::string csv = emit_table({{ev_name, m}});
      if (ev_out.empty()) {
        std::cout << csv;
      } else {
        write_file(ev_out, csv);
      }
      if (!ev_hist.empty()) {
        ensure_parent(ev_hist);
        write_residual_histogram(ev_hist, pred, truth, b ? &*b : nullptr, e ? &*e : nullptr, ev_trunc,
                                 reg ? &*reg : nullptr);
      }
    } else if (*pipe) {
      const PipelineConfig cfg = load_config(pipe_config);
      print_result(run_pipeline(cfg, pipe_out, print_log));
    } else if (*ablate) {
      const PipelineConfig cfg = load_config(ab_config);
      print_result(run_ablation(cfg, split_list(ab_variants), ab_out, print_log));
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
