#include "resdepth/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "resdepth/hash.hpp"
#include "resdepth/raster_io.hpp"
#include "resdepth/warp.hpp"

namespace resdepth {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kMethodOrder{"initial", "median", "unet_stereo", "zero",
                                            "mono", "stereo", "stereo_iter", "stereo_gen"};

// Reads keys from one JSON object and rejects the ones nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw std::invalid_argument("config: '" + path_ + "' must be an object");
  }
  template <class T>
  void get(const std::string& key, T& dst) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    try {
      dst = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument("config: bad value for '" + path_ + key + "': " + e.what());
    }
  }
  Section sub(const std::string& key) {
    used_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, path_ + key + ".");
  }
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw std::invalid_argument("config: unknown key '" + path_ + k + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

HeightField mask_to_field(const Mask& m, const GridGeometry& g) {
  HeightField h(g);
  for (std::size_t i = 0; i < m.size(); ++i) h.values[i] = m[i];
  return h;
}

template <class Fn>
auto stage(const std::string& name, const std::function<void(const std::string&)>& progress, Fn&& fn) {
  if (progress) progress(name);
  try {
    return fn();
  } catch (const std::exception& e) {
    throw std::runtime_error("stage " + name + ": " + e.what());
  }
}

}  // namespace

void PipelineConfig::validate() const {
  scene.validate();
  matcher.validate();
  train.validate();
  if (disparity_margin < 0) throw std::invalid_argument("config: disparity_margin must be >= 0");
  if (generalized_pairs < 0) throw std::invalid_argument("config: generalized_pairs must be >= 0");
  if (!(truncation > 0.0)) throw std::invalid_argument("config: truncation must be positive");
  if (tiles.tile < 1 || tiles.overlap < 0 || 2 * tiles.overlap >= tiles.tile)
    throw std::invalid_argument("config: invalid tile/overlap");
  for (const auto& v : variants)
    if (std::find(kMethodOrder.begin() + 2, kMethodOrder.end() - 1, v) == kMethodOrder.end() - 1)
      throw std::invalid_argument("config: unknown variant '" + v + "'");
}

void PipelineConfig::apply_seed(std::uint64_t s) {
  seed = s;
  scene.seed = s;
  acquisition.seed = s + 1000;
  render.noise_seed = s + 3000;
  train.seed = s + 2000;
}

PipelineConfig parse_pipeline_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: not valid JSON: ") + e.what());
  }
  PipelineConfig c;
  Section root(j, "");
  std::optional<std::uint64_t> seed;
  if (j.contains("seed")) {
    std::uint64_t s = 0;
    root.get("seed", s);
    seed = s;
  } else {
    root.get("seed", c.seed);
  }
  if (seed) c.apply_seed(*seed);

  {
    auto s = root.sub("scene");
    s.get("seed", c.scene.seed);
    s.get("extent_m", c.scene.extent_m);
    s.get("cell_size", c.scene.cell_size);
    s.get("terrain_amplitude", c.scene.terrain_amplitude);
    s.get("building_count", c.scene.building_count);
    s.get("tree_density", c.scene.tree_density);
    s.get("building_min_size_m", c.scene.building_min_size_m);
    s.get("building_max_size_m", c.scene.building_max_size_m);
    s.get("building_min_height_m", c.scene.building_min_height_m);
    s.get("building_max_height_m", c.scene.building_max_height_m);
    s.get("building_gap_m", c.scene.building_gap_m);
    auto r = s.sub("roof_mix");
    r.get("flat", c.scene.roof_mix.flat);
    r.get("gabled", c.scene.roof_mix.gabled);
    r.get("shed", c.scene.roof_mix.shed);
    r.finish();
    auto a = s.sub("albedo");
    a.get("ground", c.scene.albedo_spec.ground);
    a.get("roof_min", c.scene.albedo_spec.roof_min);
    a.get("roof_max", c.scene.albedo_spec.roof_max);
    a.get("tree", c.scene.albedo_spec.tree);
    a.get("noise_amplitude", c.scene.albedo_spec.noise_amplitude);
    a.get("noise_scale_m", c.scene.albedo_spec.noise_scale_m);
    a.finish();
    s.finish();
  }
  {
    auto s = root.sub("acquisition");
    auto& a = c.acquisition;
    s.get("seed", a.seed);
    s.get("count", a.count);
    s.get("azimuth_min_deg", a.azimuth_min_deg);
    s.get("azimuth_max_deg", a.azimuth_max_deg);
    s.get("off_nadir_min_deg", a.off_nadir_min_deg);
    s.get("off_nadir_max_deg", a.off_nadir_max_deg);
    s.get("time_min_days", a.time_min_days);
    s.get("time_max_days", a.time_max_days);
    s.get("sun_azimuth_min_deg", a.sun_azimuth_min_deg);
    s.get("sun_azimuth_max_deg", a.sun_azimuth_max_deg);
    s.get("sun_elevation_min_deg", a.sun_elevation_min_deg);
    s.get("sun_elevation_max_deg", a.sun_elevation_max_deg);
    s.get("gsd", a.gsd);
    s.finish();
  }
  {
    auto s = root.sub("render");
    s.get("ambient", c.render.ambient);
    s.get("supersample", c.render.supersample);
    s.get("noise_sigma", c.render.noise_sigma);
    s.get("noise_seed", c.render.noise_seed);
    s.finish();
  }
  {
    auto s = root.sub("matcher");
    s.get("census_window", c.matcher.census_window);
    s.get("p1", c.matcher.p1);
    s.get("p2", c.matcher.p2);
    s.get("path_count", c.matcher.path_count);
    s.get("lr_threshold", c.matcher.lr_threshold);
    s.get("subpixel_iterations", c.matcher.subpixel_iterations);
    s.get("disparity_margin", c.disparity_margin);
    s.finish();
  }
  {
    auto s = root.sub("train");
    auto& t = c.train;
    s.get("seed", t.seed);
    s.get("lr", t.lr);
    s.get("batch_size", t.batch_size);
    s.get("weight_decay", t.weight_decay);
    s.get("max_steps", t.max_steps);
    s.get("eval_every", t.eval_every);
    s.get("augment_rotations", t.augment_rotations);
    s.get("augment_flips", t.augment_flips);
    s.get("levels", t.levels);
    s.get("channel_widths", t.channel_widths);
    s.get("patch_size", t.patch_size);
    s.get("generalized_pairs", c.generalized_pairs);
    s.finish();
  }
  {
    auto s = root.sub("inference");
    s.get("tile", c.tiles.tile);
    s.get("overlap", c.tiles.overlap);
    s.get("batch", c.tiles.batch);
    s.finish();
  }
  {
    auto s = root.sub("eval");
    s.get("truncation", c.truncation);
    s.finish();
  }
  root.get("variants", c.variants);
  root.finish();
  c.validate();
  return c;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_pipeline_config(ss.str());
}

std::string pipeline_config_to_json(const PipelineConfig& c) {
  const auto& s = c.scene;
  const auto& a = c.acquisition;
  const auto& t = c.train;
  json j{
      {"scene",
       {{"seed", s.seed}, {"extent_m", s.extent_m}, {"cell_size", s.cell_size},
        {"terrain_amplitude", s.terrain_amplitude}, {"building_count", s.building_count},
        {"tree_density", s.tree_density}, {"building_min_size_m", s.building_min_size_m},
        {"building_max_size_m", s.building_max_size_m}, {"building_min_height_m", s.building_min_height_m},
        {"building_max_height_m", s.building_max_height_m}, {"building_gap_m", s.building_gap_m},
        {"roof_mix", {{"flat", s.roof_mix.flat}, {"gabled", s.roof_mix.gabled}, {"shed", s.roof_mix.shed}}},
        {"albedo",
         {{"ground", s.albedo_spec.ground}, {"roof_min", s.albedo_spec.roof_min},
          {"roof_max", s.albedo_spec.roof_max}, {"tree", s.albedo_spec.tree},
          {"noise_amplitude", s.albedo_spec.noise_amplitude}, {"noise_scale_m", s.albedo_spec.noise_scale_m}}}}},
      {"acquisition",
       {{"seed", a.seed}, {"count", a.count}, {"azimuth_min_deg", a.azimuth_min_deg},
        {"azimuth_max_deg", a.azimuth_max_deg}, {"off_nadir_min_deg", a.off_nadir_min_deg},
        {"off_nadir_max_deg", a.off_nadir_max_deg}, {"time_min_days", a.time_min_days},
        {"time_max_days", a.time_max_days}, {"sun_azimuth_min_deg", a.sun_azimuth_min_deg},
        {"sun_azimuth_max_deg", a.sun_azimuth_max_deg}, {"sun_elevation_min_deg", a.sun_elevation_min_deg},
        {"sun_elevation_max_deg", a.sun_elevation_max_deg}, {"gsd", a.gsd}}},
      {"render",
       {{"ambient", c.render.ambient}, {"supersample", c.render.supersample},
        {"noise_sigma", c.render.noise_sigma}, {"noise_seed", c.render.noise_seed}}},
      {"matcher",
       {{"census_window", c.matcher.census_window}, {"p1", c.matcher.p1}, {"p2", c.matcher.p2},
        {"path_count", c.matcher.path_count}, {"lr_threshold", c.matcher.lr_threshold},
        {"subpixel_iterations", c.matcher.subpixel_iterations},
        {"disparity_margin", c.disparity_margin}}},
      {"train",
       {{"seed", t.seed}, {"lr", t.lr}, {"batch_size", t.batch_size}, {"weight_decay", t.weight_decay},
        {"max_steps", t.max_steps}, {"eval_every", t.eval_every}, {"augment_rotations", t.augment_rotations},
        {"augment_flips", t.augment_flips}, {"levels", t.levels}, {"channel_widths", t.channel_widths},
        {"patch_size", t.patch_size}, {"generalized_pairs", c.generalized_pairs}}},
      {"inference", {{"tile", c.tiles.tile}, {"overlap", c.tiles.overlap}, {"batch", c.tiles.batch}}},
      {"eval", {{"truncation", c.truncation}}},
      {"variants", c.variants}};
  return j.dump(2);
}

std::string method_display_name(const std::string& key) {
  if (key == "initial") return "Initial DEM";
  if (key == "median") return "Median filter";
  if (key == "unet_stereo") return "Unet-stereo";
  if (key == "zero") return "ResDepth-0";
  if (key == "mono") return "ResDepth-mono";
  if (key == "stereo") return "ResDepth-stereo";
  if (key == "stereo_iter") return "ResDepth-stereo_iter";
  if (key == "stereo_gen") return "ResDepth-stereo_generalized";
  return key;
}

SynthProducts run_synth(const PipelineConfig& cfg) {
  SynthProducts s;
  s.scene = generate_scene(cfg.scene);
  s.cameras = make_acquisitions(cfg.acquisition, s.scene.grid());
  return s;
}

StereoProducts run_stereo(const PipelineConfig& cfg, const SynthProducts& synth, std::pair<int, int> sel) {
  StereoProducts out;
  out.selected = sel;
  const auto& surf = synth.scene.render_surface;
  double z_lo = 1e300, z_hi = -1e300;
  for (std::size_t i = 0; i < surf.values.size(); ++i) {
    if (surf.nodata[i]) continue;
    z_lo = std::min(z_lo, surf.values[i]);
    z_hi = std::max(z_hi, surf.values[i]);
  }
  const double z_ref = std::floor(0.5 * (z_lo + z_hi));
  const auto [ra, rb] = rectify_pair(synth.cameras.at(sel.first), synth.cameras.at(sel.second),
                                     synth.scene.grid(), z_lo, z_hi, cfg.acquisition.gsd, z_ref);
  RenderOptions lo = cfg.render, ro = cfg.render;
  lo.noise_seed = cfg.render.noise_seed + 2 * static_cast<std::uint64_t>(sel.first);
  ro.noise_seed = cfg.render.noise_seed + 2 * static_cast<std::uint64_t>(sel.second) + 1;
  out.pair = epipolar_pair(synth.scene, ra, rb, lo, ro, z_ref);
  const auto [d_lo, d_hi] = disparity_range(out.pair.coeffs, z_lo, z_hi, cfg.disparity_margin);
  out.match = match_pair(out.pair.left, out.pair.right, d_lo, d_hi, cfg.matcher);
  out.initial_dem = disparities_to_dem(out.match.disparity, nullptr, out.pair.coeffs, out.pair.left_camera,
                                       synth.scene.grid());
  return out;
}

std::pair<GrayImage, GrayImage> warp_pair(const EpipolarPair& pair, const HeightField& dem) {
  return {ortho_rectify(pair.left, pair.left_camera, dem), ortho_rectify(pair.right, pair.right_camera, dem)};
}

IterationResult iterate_refinement(Model& first, const EpipolarPair& pair, const HeightField& dem_0,
                                   const HeightField& target, const StripeSplit& split,
                                   const Mask& exclusion, const TrainConfig& train_cfg,
                                   const TileOptions& tiles) {
  if (first.variant != Variant::Stereo) throw std::invalid_argument("iterate_refinement: first model must be Stereo");
  TileOptions full = tiles;
  full.x_begin = 0;
  full.x_end = -1;
  const auto [o1, o2] = warp_pair(pair, dem_0);
  HeightField dem_1 = refine_dem(first, dem_0, o1, o2, full);
  TrainingData data;
  data.initial = dem_1;
  data.target = target;
  data.ortho_pairs.push_back(warp_pair(pair, dem_1));
  data.split = split;
  data.stats = first.stats;
  data.exclusion = exclusion;
  TrainConfig cfg = train_cfg;
  cfg.variant = Variant::Stereo;
  IterationResult res{dem_1, {}, train(cfg, data), content_hash(dem_1),
                      content_hash(data.ortho_pairs[0].first), content_hash(data.ortho_pairs[0].second)};
  res.dem_2 = refine_dem(res.second.model, dem_1, data.ortho_pairs[0].first, data.ortho_pairs[0].second, full);
  return res;
}

namespace {

struct Run {
  PipelineConfig cfg;
  fs::path dir;
  std::function<void(const std::string&)> progress;
  std::map<std::string, std::string> manifest;

  void record(const std::string& rel) { manifest[rel] = sha256_file((dir / rel).string()); }
  void save_manifest() const {
    json j = json::object();
    for (const auto& [k, v] : manifest) j[k] = v;
    write_text(dir / "manifest.json", j.dump(2) + "\n");
  }
  void save_height(const std::string& rel, const HeightField& h) {
    write_pfm((dir / rel).string(), h);
    record(rel);
  }
  void save_text(const std::string& rel, const std::string& text) {
    write_text(dir / rel, text);
    record(rel);
  }
};

PipelineResult run_methods(Run& run, const std::vector<std::string>& methods, bool baselines) {
  const PipelineConfig& cfg = run.cfg;
  cfg.validate();
  for (const char* d : {"inputs", "checkpoints", "rasters", "reports"}) fs::create_directories(run.dir / d);
  run.save_text("inputs/config.json", pipeline_config_to_json(cfg) + "\n");

  const SynthProducts synth = stage("synth", run.progress, [&] {
    SynthProducts s = run_synth(cfg);
    run.save_height("inputs/target_dem.pfm", s.scene.target_dem);
    run.save_height("inputs/surface.pfm", s.scene.render_surface);
    run.save_height("inputs/buildings.pfm", mask_to_field(s.scene.building_mask, s.scene.grid()));
    run.save_height("inputs/trees.pfm", mask_to_field(s.scene.tree_mask, s.scene.grid()));
    run.save_height("inputs/exclusion.pfm", mask_to_field(s.scene.exclusion_mask, s.scene.grid()));
    write_cameras((run.dir / "inputs/cameras.json").string(), s.cameras);
    run.record("inputs/cameras.json");
    return s;
  });
  const SceneTruth& scene = synth.scene;
  const GridGeometry& grid = scene.grid();

  const std::pair<int, int> sel = stage("select", run.progress, [&] { return select_stereo_pair(synth.cameras); });
  const StereoProducts stereo = stage("match", run.progress, [&] {
    StereoProducts s = run_stereo(cfg, synth, sel);
    write_pfm((run.dir / "inputs/left.pfm").string(), s.pair.left);
    write_pfm((run.dir / "inputs/right.pfm").string(), s.pair.right);
    run.record("inputs/left.pfm");
    run.record("inputs/right.pfm");
    write_cameras((run.dir / "inputs/pair_cameras.json").string(), {s.pair.left_camera, s.pair.right_camera});
    run.record("inputs/pair_cameras.json");
    run.save_height("rasters/dem_initial.pfm", s.initial_dem);
    return s;
  });
  const HeightField& dem_0 = stereo.initial_dem;

  const StripeSplit split = StripeSplit::make(grid.width);
  const Mask test_region = split.mask(SplitRole::Test, grid.height);
  Mask tree_region = scene.tree_mask;
  for (std::size_t i = 0; i < tree_region.size(); ++i) tree_region[i] = tree_region[i] && test_region[i];

  PipelineResult result;
  auto evaluate = [&](const std::string& key, const HeightField& pred) {
    result.table.emplace_back(method_display_name(key),
                              compute_metrics(pred, scene.target_dem, &scene.building_mask, &scene.exclusion_mask,
                                              cfg.truncation, &test_region));
    result.tree_table.emplace_back(method_display_name(key),
                                   compute_metrics(pred, scene.target_dem, nullptr, &scene.exclusion_mask,
                                                   cfg.truncation, &tree_region));
  };

  const auto orthos = stage("warp", run.progress, [&] {
    auto o = warp_pair(stereo.pair, dem_0);
    write_pfm((run.dir / "rasters/ortho_1.pfm").string(), o.first);
    write_pfm((run.dir / "rasters/ortho_2.pfm").string(), o.second);
    run.record("rasters/ortho_1.pfm");
    run.record("rasters/ortho_2.pfm");
    return o;
  });

  TrainingData data;
  data.initial = dem_0;
  data.target = scene.target_dem;
  data.ortho_pairs.push_back(orthos);
  data.split = split;
  data.stats = compute_stats(dem_0);
  data.exclusion = scene.exclusion_mask;

  std::vector<std::string> wanted = methods;
  if (baselines) wanted.insert(wanted.begin(), {"initial", "median"});
  std::optional<Model> stereo_model;
  std::map<std::string, HeightField> cache;
  auto train_variant = [&](const std::string& key) -> HeightField {
    TrainConfig tc = cfg.train;
    tc.variant = parse_variant(key);
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult tr = train(tc, data);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (key == "stereo") result.stereo_train_seconds = secs;
    result.train_logs[key] = tr.log;
    save_checkpoint((run.dir / ("checkpoints/" + key + ".rdck")).string(), tr.model.net, tr.model.variant, tr.model.stats);
    run.record("checkpoints/" + key + ".rdck");
    run.save_text("reports/train_" + key + ".csv", log_to_csv(tr.log));
    TileOptions full = cfg.tiles;
    HeightField refined = refine_dem(tr.model, dem_0, orthos.first, orthos.second, full);
    run.save_height("rasters/dem_" + key + ".pfm", refined);
    if (key == "stereo") stereo_model.emplace(std::move(tr.model));
    cache.insert_or_assign(key, refined);
    return refined;
  };

  for (const auto& key : wanted) {
    if (key == "initial") {
      evaluate(key, dem_0);
    } else if (key == "median") {
      const HeightField med = stage("median", run.progress, [&] { return median_filter(dem_0, 5); });
      run.save_height("rasters/dem_median.pfm", med);
      evaluate(key, med);
    } else if (key == "stereo_iter") {
      if (!stereo_model) stage("train stereo", run.progress, [&] { return train_variant("stereo"); });
      const IterationResult it = stage("iterate", run.progress, [&] {
        return iterate_refinement(*stereo_model, stereo.pair, dem_0, scene.target_dem, split,
                                  scene.exclusion_mask, cfg.train, cfg.tiles);
      });
      run.save_height("rasters/dem_stereo_iter_round1.pfm", it.dem_1);
      json round2 = {{"dem_1", it.dem_1_hash}, {"ortho_1", it.ortho_1_hash}, {"ortho_2", it.ortho_2_hash}};
      run.save_text("reports/stereo_iter_inputs.json", round2.dump(2) + "\n");
      result.train_logs["stereo_iter"] = it.second.log;
      save_checkpoint((run.dir / "checkpoints/stereo_iter.rdck").string(), it.second.model.net,
                      it.second.model.variant, it.second.model.stats);
      run.record("checkpoints/stereo_iter.rdck");
      run.save_text("reports/train_stereo_iter.csv", log_to_csv(it.second.log));
      run.save_height("rasters/dem_stereo_iter.pfm", it.dem_2);
      evaluate(key, it.dem_2);
    } else if (key == "stereo_gen") {
      const HeightField gen = stage("generalized", run.progress, [&] {
        // Additional pairs: the next valid pairs by seasonal time difference,
        // warped on the same initial DEM. The last one is held out.
        std::vector<std::pair<double, std::pair<int, int>>> cands;
        for (int a = 0; a < static_cast<int>(synth.cameras.size()); ++a)
          for (int b = a + 1; b < static_cast<int>(synth.cameras.size()); ++b) {
            if (std::make_pair(a, b) == sel) continue;
            try {
              if (select_stereo_pair({synth.cameras[a], synth.cameras[b]}) != std::make_pair(0, 1)) continue;
            } catch (const std::runtime_error&) {
              continue;
            }
            cands.push_back({seasonal_time_difference(synth.cameras[a].timestamp_days, synth.cameras[b].timestamp_days), {a, b}});
          }
        std::sort(cands.begin(), cands.end());
        const int extra = std::max(cfg.generalized_pairs, 2);
        if (static_cast<int>(cands.size()) < extra)
          throw std::runtime_error("not enough valid stereo pairs for generalized training");
        TrainingData gdata = data;
        std::vector<EpipolarPair> pairs;
        for (int k = 0; k < extra; ++k) {
          const auto& [a, b] = cands[k].second;
          const double z_ref = stereo.pair.coeffs.beta;
          const auto [ra, rb] = rectify_pair(synth.cameras[a], synth.cameras[b], grid, z_ref - 50, z_ref + 50,
                                             cfg.acquisition.gsd, z_ref);
          RenderOptions lo = cfg.render, ro = cfg.render;
          lo.noise_seed += 2 * static_cast<std::uint64_t>(a);
          ro.noise_seed += 2 * static_cast<std::uint64_t>(b) + 1;
          const EpipolarPair p = epipolar_pair(scene, ra, rb, lo, ro, z_ref);
          gdata.ortho_pairs.push_back(warp_pair(p, dem_0));
        }
        std::vector<int> pool;
        for (int k = 0; k < static_cast<int>(gdata.ortho_pairs.size()) - 1; ++k) pool.push_back(k);
        const int held_out = static_cast<int>(gdata.ortho_pairs.size()) - 1;
        TrainConfig tc = cfg.train;
        tc.variant = Variant::Stereo;
        TrainResult tr = train_generalized(tc, gdata, pool, held_out);
        result.train_logs["stereo_gen"] = tr.log;
        run.save_text("reports/train_stereo_gen.csv", log_to_csv(tr.log));
        const auto& [h1, h2] = gdata.ortho_pairs[held_out];
        return refine_dem(tr.model, dem_0, h1, h2, cfg.tiles);
      });
      run.save_height("rasters/dem_stereo_gen.pfm", gen);
      evaluate(key, gen);
    } else {
      const HeightField refined = stage("train " + key, run.progress, [&] { return train_variant(key); });
      evaluate(key, refined);
    }
    run.save_manifest();
  }

  stage("report", run.progress, [&] {
    result.metrics_csv = emit_table(result.table);
    run.save_text("reports/metrics.csv", result.metrics_csv);
    run.save_text("reports/trees.csv", emit_table(result.tree_table));
    if (!result.table.empty()) {
      write_height_png((run.dir / "rasters/dem_initial.png").string(), dem_0);
      write_height_png((run.dir / "rasters/target.png").string(), scene.target_dem);
      if (auto it = cache.find("stereo"); it != cache.end())
        write_height_png((run.dir / "rasters/dem_stereo.png").string(), it->second);
      write_residual_histogram((run.dir / "reports/residuals_initial.png").string(), dem_0, scene.target_dem,
                               &scene.building_mask, &scene.exclusion_mask, cfg.truncation, &test_region);
    }
    return 0;
  });
  result.manifest = run.manifest;
  run.save_manifest();
  return result;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, const std::string& out_dir,
                            const std::function<void(const std::string&)>& progress) {
  Run run{cfg, out_dir, progress, {}};
  std::vector<std::string> methods;
  for (const auto& key : kMethodOrder) {
    if (key == "initial" || key == "median") continue;
    if (key == "stereo_gen" ? cfg.generalized_pairs > 0
                            : std::find(cfg.variants.begin(), cfg.variants.end(), key) != cfg.variants.end())
      methods.push_back(key);
  }
  return run_methods(run, methods, true);
}

PipelineResult run_ablation(const PipelineConfig& cfg, const std::vector<std::string>& variants,
                            const std::string& out_dir,
                            const std::function<void(const std::string&)>& progress) {
  for (const auto& v : variants)
    if (v != "zero" && v != "mono" && v != "stereo" && v != "unet_stereo")
      throw std::invalid_argument("run_ablation: '" + v + "' is not a trainable variant");
  PipelineConfig c = cfg;
  c.variants = variants;
  Run run{c, out_dir, progress, {}};
  return run_methods(run, variants, false);
}

}  // namespace resdepth
