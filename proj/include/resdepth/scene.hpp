#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "resdepth/camera.hpp"
#include "resdepth/raster.hpp"

namespace resdepth {

enum class RoofType : std::uint8_t { Flat, Gabled, Shed };

struct RoofMix {
  double flat = 0.4;
  double gabled = 0.4;
  double shed = 0.2;
};

/// Per-surface base albedo plus band-limited noise.
struct AlbedoSpec {
  double ground = 0.38;
  double roof_min = 0.25;
  double roof_max = 0.8;
  double tree = 0.16;
  double noise_amplitude = 0.08;
  /// Wavelength of the finest noise octave in meters.
  double noise_scale_m = 1.0;
};

struct SceneSpec {
  std::uint64_t seed = 7;
  double extent_m = 512.0;
  double cell_size = 0.25;
  double terrain_amplitude = 6.0;
  int building_count = 180;
  RoofMix roof_mix;
  /// Trees per hectare.
  double tree_density = 40.0;
  AlbedoSpec albedo_spec;

  double building_min_size_m = 8.0;
  double building_max_size_m = 30.0;
  double building_min_height_m = 4.0;
  double building_max_height_m = 24.0;
  double building_gap_m = 3.0;

  int cells() const;
  void validate() const;
};

struct Building {
  double cx = 0.0;
  double cy = 0.0;
  /// Footprint side lengths; the ridge of a gabled roof runs along `length`.
  double length = 10.0;
  double width = 8.0;
  double angle_deg = 0.0;
  /// Eave height above the foundation.
  double height = 6.0;
  /// Extra height at the ridge (gabled) or high side (shed).
  double roof_rise = 0.0;
  RoofType roof = RoofType::Flat;
  double albedo = 0.5;
};

struct Tree {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 2.0;
  /// Crown height above ground, 2-8 m.
  double height = 4.0;
};

/// Ground truth of a synthetic scene. The target excludes trees; the
/// surface used for rendering includes them.
struct SceneTruth {
  HeightField target_dem;
  HeightField render_surface;
  Mask building_mask;
  Mask tree_mask;
  /// Cells excluded from evaluation (no synthetic cause; empty by default).
  Mask exclusion_mask;
  GrayImage albedo;

  const GridGeometry& grid() const { return target_dem.grid; }
};

/// Largest building count generate_scene accepts for this spec.
int feasible_building_count(const SceneSpec& spec);

/// Samples buildings and trees from the spec's seed and rasterizes them.
/// Throws std::invalid_argument (naming the feasible maximum) when the
/// extent cannot hold building_count buildings.
SceneTruth generate_scene(const SceneSpec& spec);

/// Rasterizes explicit content on the spec's terrain. Trees are clipped away
/// from building cells.
SceneTruth compose_scene(const SceneSpec& spec, std::span<const Building> buildings,
                         std::span<const Tree> trees);

struct RenderOptions {
  /// Fraction of skylight; a fully shadowed surface keeps ambient * albedo.
  double ambient = 0.3;
  /// Sub-rays per pixel side.
  int supersample = 2;
  double noise_sigma = 0.01;
  std::uint64_t noise_seed = 0;
  /// Render the target DEM instead of the tree-covered surface.
  bool use_target_dem = false;
};

/// Parallel-projection rendering with exact per-ray visibility, Lambertian
/// shading and cast shadows. Pixels whose ray leaves the scene are invalid.
GrayImage render_view(const SceneTruth& scene, const AffineCamera& cam,
                      const RenderOptions& opts = {});

/// Per-cell lit flag (1 = sunlit) of a surface for the given sun direction.
Mask shadow_mask(const HeightField& surface, const Eigen::Vector3d& sun);

struct AcquisitionSpec {
  int count = 15;
  double azimuth_min_deg = 0.0;
  double azimuth_max_deg = 360.0;
  double off_nadir_min_deg = 3.0;
  double off_nadir_max_deg = 38.0;
  double time_min_days = 0.0;
  double time_max_days = 1460.0;
  double sun_azimuth_min_deg = 130.0;
  double sun_azimuth_max_deg = 230.0;
  double sun_elevation_min_deg = 35.0;
  double sun_elevation_max_deg = 65.0;
  double gsd = 0.5;
  std::uint64_t seed = 11;
};

/// Samples a constellation of north-up cameras covering the grid.
std::vector<AffineCamera> make_acquisitions(const AcquisitionSpec& spec, const GridGeometry& grid);

}  // namespace resdepth
