#include <cmath>
#include <string>

#include "doctest.h"
#include "helpers.hpp"
#include "resdepth/camera.hpp"
#include "resdepth/scene.hpp"

using namespace resdepth;

namespace {

SceneSpec small_spec() {
  SceneSpec s;
  s.extent_m = 64.0;
  s.cell_size = 0.25;
  s.building_count = 4;
  s.building_min_size_m = 6.0;
  s.building_max_size_m = 12.0;
  s.tree_density = 30.0;
  return s;
}

SceneSpec flat_spec() {
  SceneSpec s = small_spec();
  s.terrain_amplitude = 0.0;
  s.building_count = 0;
  s.tree_density = 0.0;
  return s;
}

}  // namespace

TEST_CASE("scene generation is deterministic per seed") {
  const auto a = generate_scene(small_spec());
  const auto b = generate_scene(small_spec());
  CHECK(a.target_dem.values == b.target_dem.values);
  CHECK(a.albedo.values == b.albedo.values);
  auto s = small_spec();
  s.seed = 8;
  CHECK_FALSE(generate_scene(s).target_dem.values == a.target_dem.values);
  CHECK(a.grid().width == 256);
  CHECK(a.grid().cell_size == 0.25);
}

TEST_CASE("target excludes trees that the render surface carries") {
  const auto sc = generate_scene(small_spec());
  std::int64_t trees = 0, buildings = 0;
  for (std::size_t i = 0; i < sc.target_dem.values.size(); ++i) {
    CHECK(sc.render_surface.values[i] >= sc.target_dem.values[i]);
    if (sc.tree_mask[i]) {
      ++trees;
      CHECK(sc.building_mask[i] == 0);
      CHECK(sc.render_surface.values[i] > sc.target_dem.values[i]);
    } else {
      CHECK(sc.render_surface.values[i] == sc.target_dem.values[i]);
    }
    buildings += sc.building_mask[i];
    CHECK(sc.albedo.values[i] >= 0.0);
    CHECK(sc.albedo.values[i] <= 1.0);
  }
  CHECK(trees > 0);
  CHECK(buildings > 0);
}

TEST_CASE("infeasible building counts are rejected with the maximum") {
  auto s = small_spec();
  const int maxn = feasible_building_count(s);
  CHECK(maxn >= 4);
  s.building_count = maxn + 50;
  try {
    generate_scene(s);
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find(std::to_string(maxn)) != std::string::npos);
  }
}

TEST_CASE("composed building raises the target by its height") {
  auto s = flat_spec();
  Building b;
  b.cx = 32.0;
  b.cy = 32.0;
  b.length = 12.0;
  b.width = 8.0;
  b.height = 6.0;
  const auto sc = compose_scene(s, std::span<const Building>(&b, 1), {});
  const auto [cx, cy] = sc.grid().world_to_cell(32.0, 32.0);
  const int x = static_cast<int>(std::lround(cx)), y = static_cast<int>(std::lround(cy));
  CHECK(sc.target_dem(x, y) - sc.target_dem(2, 2) == doctest::Approx(6.0));
  CHECK(sc.building_mask(x, y) == 1);
  CHECK(sc.building_mask(2, 2) == 0);
  std::int64_t area = 0;
  for (auto v : sc.building_mask.vec()) area += v;
  CHECK(static_cast<double>(area) * 0.0625 == doctest::Approx(96.0).epsilon(0.05));
}

TEST_CASE("flat nadir view under vertical sun reproduces the albedo") {
  const auto sc = generate_scene(flat_spec());
  const auto& g = sc.grid();
  auto cam = make_affine_camera(0.0, 0.0, g.cell_size, {g.origin_x, g.origin_y}, g.width, g.height);
  cam.sun_direction = Eigen::Vector3d::UnitZ();
  RenderOptions ro;
  ro.noise_sigma = 0.0;
  ro.supersample = 1;
  const auto img = render_view(sc, cam, ro);
  double worst = 0.0;
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      REQUIRE(img.valid(x, y) == 1);
      worst = std::max(worst, std::abs(img(x, y) - sc.albedo(x, y)));
    }
  CHECK(worst < 1e-12);
}

TEST_CASE("box under a 45 degree sun casts a shadow as long as it is tall") {
  auto s = flat_spec();
  Building b;
  b.cx = 40.0;
  b.cy = 32.0;
  b.length = 8.0;
  b.width = 8.0;
  b.height = 6.0;
  const auto sc = compose_scene(s, std::span<const Building>(&b, 1), {});
  // Sun in the east: the shadow falls to the west.
  const auto lit = shadow_mask(sc.render_surface, sun_vector(90.0, 45.0));
  const auto [cx, cy] = sc.grid().world_to_cell(40.0, 32.0);
  const int y = static_cast<int>(std::lround(cy));
  int shadow = 0;
  for (int x = 0; x < static_cast<int>(cx); ++x)
    if (!sc.building_mask(x, y) && !lit(x, y)) ++shadow;
  CHECK(std::abs(shadow * 0.25 - 6.0) <= 0.5);
  int east = 0;
  for (int x = static_cast<int>(cx); x < sc.grid().width; ++x)
    if (!sc.building_mask(x, y) && !lit(x, y)) ++east;
  CHECK(east == 0);
}

TEST_CASE("changing only the sun keeps geometry and changes shading") {
  const auto sc = generate_scene(small_spec());
  const auto& g = sc.grid();
  auto a = make_affine_camera(30.0, 15.0, 0.5, {g.origin_x - 8.0, g.origin_y - 8.0}, 150, 150);
  auto b = a;
  a.sun_direction = sun_vector(140.0, 40.0);
  b.sun_direction = sun_vector(220.0, 60.0);
  RenderOptions ro;
  ro.noise_sigma = 0.0;
  const auto ia = render_view(sc, a, ro);
  const auto ib = render_view(sc, b, ro);
  CHECK(ia.valid == ib.valid);
  CHECK_FALSE(ia.values == ib.values);
  for (std::size_t i = 0; i < ia.values.size(); ++i) {
    CHECK(ia.values[i] >= 0.0);
    CHECK(ia.values[i] <= 1.0);
  }
}

TEST_CASE("acquisitions respect the sampling ranges") {
  const auto sc = generate_scene(small_spec());
  AcquisitionSpec spec;
  const auto cams = make_acquisitions(spec, sc.grid());
  REQUIRE(static_cast<int>(cams.size()) == spec.count);
  for (const auto& c : cams) {
    CHECK_NOTHROW(c.validate());
    CHECK(c.off_nadir_deg >= spec.off_nadir_min_deg);
    CHECK(c.off_nadir_deg <= spec.off_nadir_max_deg);
    CHECK(c.timestamp_days >= spec.time_min_days);
    CHECK(c.timestamp_days <= spec.time_max_days);
    const double elev = std::asin(c.sun_direction.z()) * 180.0 / 3.14159265358979323846;
    CHECK(elev >= spec.sun_elevation_min_deg - 1e-9);
    CHECK(elev <= spec.sun_elevation_max_deg + 1e-9);
  }
  const auto again = make_acquisitions(spec, sc.grid());
  CHECK(again[3].A == cams[3].A);
}
