#include "resdepth/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "grid_traversal.hpp"

namespace resdepth {

namespace {

constexpr double kDeg = M_PI / 180.0;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Smoothly interpolated lattice noise in [-1, 1].
class ValueNoise {
 public:
  ValueNoise(double extent, double spacing, std::mt19937_64& rng) : spacing_(spacing) {
    n_ = static_cast<int>(std::ceil(extent / spacing)) + 3;
    values_.resize(static_cast<std::size_t>(n_) * n_);
    for (auto& v : values_) v = uniform(rng, -1.0, 1.0);
  }

  double operator()(double x, double y) const {
    const double gx = std::clamp(x / spacing_, 0.0, n_ - 2.0);
    const double gy = std::clamp(y / spacing_, 0.0, n_ - 2.0);
    const int ix = std::min(static_cast<int>(gx), n_ - 2);
    const int iy = std::min(static_cast<int>(gy), n_ - 2);
    const double fx = smooth(gx - ix), fy = smooth(gy - iy);
    const double a = at(ix, iy), b = at(ix + 1, iy), c = at(ix, iy + 1), d = at(ix + 1, iy + 1);
    return (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * c + fx * d);
  }

 private:
  static double smooth(double t) { return t * t * (3.0 - 2.0 * t); }
  double at(int x, int y) const { return values_[static_cast<std::size_t>(y) * n_ + x]; }

  double spacing_;
  int n_ = 0;
  std::vector<double> values_;
};

class Texture {
 public:
  Texture(double extent, double scale, std::mt19937_64& rng)
      : fine_(extent, scale, rng), mid_(extent, 2.5 * scale, rng), coarse_(extent, 7.0 * scale, rng) {}
  double operator()(double x, double y) const {
    return 0.5 * fine_(x, y) + 0.3 * mid_(x, y) + 0.2 * coarse_(x, y);
  }

 private:
  ValueNoise fine_, mid_, coarse_;
};

struct Wave {
  double kx, ky, phase, weight;
};

std::vector<Wave> terrain_waves(std::mt19937_64& rng) {
  std::vector<Wave> waves;
  for (int k = 0; k < 6; ++k) {
    const double lambda = uniform(rng, 90.0, 320.0);
    const double dir = uniform(rng, 0.0, 2.0 * M_PI);
    waves.push_back({2.0 * M_PI * std::cos(dir) / lambda, 2.0 * M_PI * std::sin(dir) / lambda,
                     uniform(rng, 0.0, 2.0 * M_PI), uniform(rng, 0.5, 1.0)});
  }
  return waves;
}

struct Obb {
  double cx, cy, ux, uy, hl, hw;

  static Obb of(const Building& b, double inflate = 0.0) {
    return {b.cx, b.cy, std::cos(b.angle_deg * kDeg), std::sin(b.angle_deg * kDeg),
            0.5 * b.length + inflate, 0.5 * b.width + inflate};
  }
  // Local coordinates: s along the length axis, q across.
  std::pair<double, double> local(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    return {dx * ux + dy * uy, -dx * uy + dy * ux};
  }
  bool contains(double x, double y) const {
    auto [s, q] = local(x, y);
    return std::abs(s) <= hl && std::abs(q) <= hw;
  }
  double radius() const { return std::hypot(hl, hw); }
  double projected_half(double ax, double ay) const {
    return hl * std::abs(ux * ax + uy * ay) + hw * std::abs(-uy * ax + ux * ay);
  }
  double distance(double x, double y) const {
    auto [s, q] = local(x, y);
    const double ds = std::max(0.0, std::abs(s) - hl), dq = std::max(0.0, std::abs(q) - hw);
    return std::hypot(ds, dq);
  }
};

bool overlaps(const Obb& a, const Obb& b) {
  const double axes[4][2] = {{a.ux, a.uy}, {-a.uy, a.ux}, {b.ux, b.uy}, {-b.uy, b.ux}};
  const double dx = b.cx - a.cx, dy = b.cy - a.cy;
  for (const auto& ax : axes) {
    const double dist = std::abs(dx * ax[0] + dy * ax[1]);
    if (dist > a.projected_half(ax[0], ax[1]) + b.projected_half(ax[0], ax[1])) return false;
  }
  return true;
}

double roof_profile(const Building& b, double q) {
  const double hw = 0.5 * b.width;
  switch (b.roof) {
    case RoofType::Flat: return b.height;
    case RoofType::Gabled: return b.height + b.roof_rise * (1.0 - std::min(1.0, std::abs(q) / hw));
    case RoofType::Shed: return b.height + b.roof_rise * 0.5 * (std::clamp(q / hw, -1.0, 1.0) + 1.0);
  }
  return b.height;
}

double tree_profile(const Tree& t, double dist) {
  const double rho = dist / t.radius;
  if (rho >= 1.0) return 0.0;
  return t.height * (0.5 + 0.5 * std::sqrt(1.0 - rho * rho));
}

}  // namespace

int SceneSpec::cells() const { return static_cast<int>(std::lround(extent_m / cell_size)); }

void SceneSpec::validate() const {
  if (!(cell_size > 0.0)) throw std::invalid_argument("SceneSpec: cell_size must be > 0");
  if (!(extent_m >= cell_size)) throw std::invalid_argument("SceneSpec: extent smaller than one cell");
  if (building_count < 0) throw std::invalid_argument("SceneSpec: building_count must be >= 0");
  if (tree_density < 0.0) throw std::invalid_argument("SceneSpec: tree_density must be >= 0");
  if (terrain_amplitude < 0.0) throw std::invalid_argument("SceneSpec: terrain_amplitude must be >= 0");
  const RoofMix& m = roof_mix;
  if (m.flat < 0 || m.gabled < 0 || m.shed < 0 || std::abs(m.flat + m.gabled + m.shed - 1.0) > 1e-9)
    throw std::invalid_argument("SceneSpec: roof_mix probabilities must be >= 0 and sum to 1");
  if (!(building_min_size_m > 0.0) || building_max_size_m < building_min_size_m)
    throw std::invalid_argument("SceneSpec: bad building size range");
  if (!(building_min_height_m > 0.0) || building_max_height_m < building_min_height_m)
    throw std::invalid_argument("SceneSpec: bad building height range");
}

int feasible_building_count(const SceneSpec& spec) {
  const double margin = 0.5 * spec.building_max_size_m + spec.building_gap_m;
  const double usable = std::max(0.0, spec.extent_m - 2.0 * margin);
  const double mean_side = 0.5 * (spec.building_min_size_m + spec.building_max_size_m) + spec.building_gap_m;
  // Random sequential placement saturates well below full coverage.
  return static_cast<int>(std::floor(0.4 * usable * usable / (mean_side * mean_side)));
}

SceneTruth compose_scene(const SceneSpec& spec, std::span<const Building> buildings,
                         std::span<const Tree> trees) {
  spec.validate();
  const int n = spec.cells();
  const GridGeometry grid{n, n, 0.0, 0.0, spec.cell_size};

  std::mt19937_64 rng(spec.seed);
  const auto waves = terrain_waves(rng);
  const Texture texture(spec.extent_m, spec.albedo_spec.noise_scale_m, rng);
  double wave_norm = 0.0;
  for (const auto& w : waves) wave_norm += w.weight;
  auto terrain = [&](double x, double y) {
    if (spec.terrain_amplitude == 0.0) return 0.0;
    double h = 0.0;
    for (const auto& w : waves) h += w.weight * std::cos(w.kx * x + w.ky * y + w.phase);
    return spec.terrain_amplitude * h / wave_norm;
  };

  SceneTruth s;
  s.target_dem = HeightField(grid);
  s.building_mask = Mask(n, n, 0);
  s.tree_mask = Mask(n, n, 0);
  s.exclusion_mask = Mask(n, n, 0);
  s.albedo = GrayImage(n, n);
  const AlbedoSpec& al = spec.albedo_spec;

  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      auto [wx, wy] = grid.cell_to_world(x, y);
      s.target_dem(x, y) = terrain(wx, wy);
      s.albedo(x, y) = al.ground + al.noise_amplitude * texture(wx, wy);
    }

  for (const Building& b : buildings) {
    const Obb box = Obb::of(b);
    const double base = terrain(b.cx, b.cy);
    const double r = box.radius();
    auto [x0, y0] = grid.world_to_cell(b.cx - r, b.cy - r);
    auto [x1, y1] = grid.world_to_cell(b.cx + r, b.cy + r);
    for (int y = std::max(0, static_cast<int>(std::floor(y0))); y <= std::min(n - 1, static_cast<int>(std::ceil(y1))); ++y)
      for (int x = std::max(0, static_cast<int>(std::floor(x0))); x <= std::min(n - 1, static_cast<int>(std::ceil(x1))); ++x) {
        auto [wx, wy] = grid.cell_to_world(x, y);
        if (!box.contains(wx, wy)) continue;
        auto [ls, lq] = box.local(wx, wy);
        (void)ls;
        s.target_dem(x, y) = base + roof_profile(b, lq);
        s.building_mask(x, y) = 1;
        s.albedo(x, y) = b.albedo + 0.6 * al.noise_amplitude * texture(wx + 1000.0, wy);
      }
  }

  s.render_surface = s.target_dem;
  Raster<double> canopy(n, n, 0.0);
  for (const Tree& t : trees) {
    auto [x0, y0] = grid.world_to_cell(t.cx - t.radius, t.cy - t.radius);
    auto [x1, y1] = grid.world_to_cell(t.cx + t.radius, t.cy + t.radius);
    for (int y = std::max(0, static_cast<int>(std::floor(y0))); y <= std::min(n - 1, static_cast<int>(std::ceil(y1))); ++y)
      for (int x = std::max(0, static_cast<int>(std::floor(x0))); x <= std::min(n - 1, static_cast<int>(std::ceil(x1))); ++x) {
        if (s.building_mask(x, y)) continue;
        auto [wx, wy] = grid.cell_to_world(x, y);
        canopy(x, y) = std::max(canopy(x, y), tree_profile(t, std::hypot(wx - t.cx, wy - t.cy)));
      }
  }
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      if (canopy(x, y) <= 0.0) continue;
      auto [wx, wy] = grid.cell_to_world(x, y);
      s.tree_mask(x, y) = 1;
      s.render_surface(x, y) += canopy(x, y);
      s.albedo(x, y) = al.tree + 1.5 * al.noise_amplitude * texture(wx, wy + 1000.0);
    }

  for (auto& v : s.albedo.values.vec()) v = std::clamp(v, 0.02, 0.98);
  return s;
}

SceneTruth generate_scene(const SceneSpec& spec) {
  spec.validate();
  const int feasible = feasible_building_count(spec);
  if (spec.building_count > feasible) {
    std::ostringstream msg;
    msg << "generate_scene: extent " << spec.extent_m << " m cannot hold " << spec.building_count
        << " buildings; feasible maximum is " << feasible;
    throw std::invalid_argument(msg.str());
  }
  // Content draws use a stream separate from the terrain/texture stream.
  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  const double margin = 0.5 * spec.building_max_size_m + spec.building_gap_m;

  std::vector<Building> buildings;
  std::vector<Obb> placed;
  const int max_attempts = 400 * std::max(1, spec.building_count);
  for (int attempt = 0; attempt < max_attempts && static_cast<int>(buildings.size()) < spec.building_count; ++attempt) {
    Building b;
    b.length = uniform(rng, spec.building_min_size_m, spec.building_max_size_m);
    b.width = uniform(rng, spec.building_min_size_m, std::min(b.length, spec.building_max_size_m));
    b.cx = uniform(rng, margin, spec.extent_m - margin);
    b.cy = uniform(rng, margin, spec.extent_m - margin);
    b.angle_deg = uniform(rng, 0.0, 1.0) < 0.5 ? (uniform(rng, 0.0, 1.0) < 0.5 ? 0.0 : 90.0)
                                                : uniform(rng, 0.0, 180.0);
    b.height = uniform(rng, spec.building_min_height_m, spec.building_max_height_m);
    const double pick = uniform(rng, 0.0, 1.0);
    const RoofMix& m = spec.roof_mix;
    b.roof = pick < m.flat ? RoofType::Flat : (pick < m.flat + m.gabled ? RoofType::Gabled : RoofType::Shed);
    b.roof_rise = b.roof == RoofType::Gabled ? uniform(rng, 1.5, std::min(6.0, 0.5 * b.width))
                  : b.roof == RoofType::Shed ? uniform(rng, 1.0, 3.0)
                                             : 0.0;
    b.albedo = uniform(rng, spec.albedo_spec.roof_min, spec.albedo_spec.roof_max);
    const Obb box = Obb::of(b, 0.5 * spec.building_gap_m);
    bool clash = false;
    for (const Obb& o : placed)
      if (std::hypot(o.cx - box.cx, o.cy - box.cy) <= o.radius() + box.radius() && overlaps(o, box)) {
        clash = true;
        break;
      }
    if (clash) continue;
    placed.push_back(box);
    buildings.push_back(b);
  }
  if (static_cast<int>(buildings.size()) < spec.building_count) {
    std::ostringstream msg;
    msg << "generate_scene: placed only " << buildings.size() << " of " << spec.building_count
        << " buildings; feasible maximum is " << buildings.size();
    throw std::invalid_argument(msg.str());
  }

  std::vector<Tree> trees;
  const int tree_count = static_cast<int>(std::lround(spec.tree_density * spec.extent_m * spec.extent_m / 1e4));
  for (int attempt = 0; attempt < 20 * tree_count + 20 && static_cast<int>(trees.size()) < tree_count; ++attempt) {
    Tree t;
    t.radius = uniform(rng, 1.5, 4.0);
    t.height = uniform(rng, 2.0, 8.0);
    t.cx = uniform(rng, t.radius, spec.extent_m - t.radius);
    t.cy = uniform(rng, t.radius, spec.extent_m - t.radius);
    bool clash = false;
    for (std::size_t i = 0; i < buildings.size() && !clash; ++i)
      clash = Obb::of(buildings[i]).distance(t.cx, t.cy) < t.radius + 1.0;
    if (!clash) trees.push_back(t);
  }
  return compose_scene(spec, buildings, trees);
}

namespace {

// Surface normal from finite differences that do not straddle walls.
Eigen::Vector3d surface_normal(const HeightField& h, int x, int y) {
  constexpr double kJump = 1.0;
  auto slope = [&](int dx, int dy) {
    const double c = h(x, y);
    const bool has_lo = h.values.contains(x - dx, y - dy);
    const bool has_hi = h.values.contains(x + dx, y + dy);
    const double lo = has_lo ? c - h(x - dx, y - dy) : std::numeric_limits<double>::infinity();
    const double hi = has_hi ? h(x + dx, y + dy) - c : std::numeric_limits<double>::infinity();
    const bool ok_lo = std::abs(lo) <= kJump, ok_hi = std::abs(hi) <= kJump;
    if (ok_lo && ok_hi) return 0.5 * (lo + hi);
    if (ok_lo) return lo;
    if (ok_hi) return hi;
    return 0.0;
  };
  const double cs = h.grid.cell_size;
  return Eigen::Vector3d(-slope(1, 0) / cs, -slope(0, 1) / cs, 1.0).normalized();
}

// True when the segment from p toward the sun is blocked by the surface.
bool in_shadow(const HeightField& h, double max_height, const Eigen::Vector3d& p,
               const Eigen::Vector3d& sun, int skip_x, int skip_y) {
  if (sun.z() <= 0.0) return true;
  const double horiz = std::hypot(sun.x(), sun.y());
  if (horiz < 1e-12) return false;
  const double rise = sun.z() / horiz;  // meters gained per horizontal meter
  const double max_len = (max_height - p.z()) / rise;
  if (max_len <= 0.0) return false;
  bool blocked = false;
  traverse_grid(h.grid, p.x(), p.y(), sun.x() / horiz, sun.y() / horiz, max_len,
                [&](int cx, int cy, double l_in, double, int) {
                  if (cx == skip_x && cy == skip_y) return true;
                  if (h(cx, cy) > p.z() + l_in * rise) {
                    blocked = true;
                    return false;
                  }
                  return true;
                });
  return blocked;
}

double max_value(const HeightField& h) {
  return *std::max_element(h.values.vec().begin(), h.values.vec().end());
}

}  // namespace

Mask shadow_mask(const HeightField& surface, const Eigen::Vector3d& sun) {
  const double top = max_value(surface);
  Mask lit(surface.width(), surface.height(), 1);
  parallel_rows(surface.height(), [&](int y) {
    for (int x = 0; x < surface.width(); ++x) {
      auto [wx, wy] = surface.grid.cell_to_world(x, y);
      const Eigen::Vector3d p(wx, wy, surface(x, y) + 1e-6);
      lit(x, y) = in_shadow(surface, top, p, sun, x, y) ? 0 : 1;
    }
  });
  return lit;
}

GrayImage render_view(const SceneTruth& scene, const AffineCamera& cam, const RenderOptions& opts) {
  const HeightField& surf = opts.use_target_dem ? scene.target_dem : scene.render_surface;
  const GridGeometry& grid = surf.grid;
  const Eigen::Vector3d sun = cam.sun_direction.normalized();
  const double amb = opts.ambient;
  const double wall_factor = 0.75;
  const double top = max_value(surf);
  const double bottom = *std::min_element(surf.values.vec().begin(), surf.values.vec().end());

  const Mask lit = shadow_mask(surf, sun);
  Raster<double> radiance(grid.width, grid.height);
  for (int y = 0; y < grid.height; ++y)
    for (int x = 0; x < grid.width; ++x) {
      const double shade = lit(x, y) ? std::max(0.0, surface_normal(surf, x, y).dot(sun)) : 0.0;
      radiance(x, y) = scene.albedo(x, y) * (amb + (1.0 - amb) * shade);
    }

  const Eigen::Vector2d lean = cam.lean();
  const double lean_len = lean.norm();
  const int ss = std::max(1, opts.supersample);

  // Radiance seen along one ray, or NaN when the ray misses the scene.
  auto trace = [&](double u, double v) -> double {
    const Eigen::Vector2d p0 = cam.ground_point(u, v);
    if (lean_len < 1e-12) {
      auto [fx, fy] = grid.world_to_cell(p0.x(), p0.y());
      const int cx = static_cast<int>(std::lround(fx)), cy = static_cast<int>(std::lround(fy));
      if (!grid_contains(grid, cx, cy)) return std::nan("");
      return radiance(cx, cy);
    }
    const double z_top = top + 1e-3;
    const Eigen::Vector2d start = p0 + z_top * lean;
    const Eigen::Vector2d dir = -lean / lean_len;
    const double max_len = (z_top - bottom + 1e-3) * lean_len;
    double result = std::nan("");
    traverse_grid(grid, start.x(), start.y(), dir.x(), dir.y(), max_len,
                  [&](int cx, int cy, double l_in, double l_out, int face) {
                    const double h = surf(cx, cy);
                    const double z_in = z_top - l_in / lean_len;
                    if (h >= z_in) {
                      // Wall: the ray enters this column below its top.
                      Eigen::Vector3d n = Eigen::Vector3d::Zero();
                      if (face == 1) n.x() = dir.x() > 0 ? -1.0 : 1.0;
                      else if (face == 2) n.y() = dir.y() > 0 ? -1.0 : 1.0;
                      else n.z() = 1.0;
                      const Eigen::Vector2d hit = start + l_in * dir;
                      const Eigen::Vector3d p(hit.x() + 0.01 * n.x(), hit.y() + 0.01 * n.y(), z_in);
                      const bool wall_lit = !in_shadow(surf, top, p, sun, -1, -1);
                      const double shade = wall_lit ? std::max(0.0, n.dot(sun)) : 0.0;
                      result = scene.albedo(cx, cy) * wall_factor * (amb + (1.0 - amb) * shade);
                      return false;
                    }
                    const double z_out = z_top - l_out / lean_len;
                    if (h >= z_out) {
                      result = radiance(cx, cy);
                      return false;
                    }
                    return true;
                  });
    return result;
  };

  GrayImage img(cam.width, cam.height);
  parallel_rows(cam.height, [&](int py) {
    for (int px = 0; px < cam.width; ++px) {
      double sum = 0.0;
      bool ok = true;
      for (int sy = 0; sy < ss && ok; ++sy)
        for (int sx = 0; sx < ss && ok; ++sx) {
          const double u = px - 0.5 + (sx + 0.5) / ss;
          const double v = py - 0.5 + (sy + 0.5) / ss;
          const double r = trace(u, v);
          if (std::isnan(r)) ok = false;
          else sum += r;
        }
      img.valid(px, py) = ok ? 1 : 0;
      img(px, py) = ok ? sum / (ss * ss) : 0.0;
    }
  });

  if (opts.noise_sigma > 0.0) {
    std::mt19937_64 rng(opts.noise_seed);
    std::normal_distribution<double> noise(0.0, opts.noise_sigma);
    for (std::size_t i = 0; i < img.values.size(); ++i) {
      const double e = noise(rng);
      if (img.valid[i]) img.values[i] += e;
    }
  }
  for (std::size_t i = 0; i < img.values.size(); ++i) img.values[i] = std::clamp(img.values[i], 0.0, 1.0);
  return img;
}

std::vector<AffineCamera> make_acquisitions(const AcquisitionSpec& spec, const GridGeometry& grid) {
  if (spec.count < 2) throw std::invalid_argument("make_acquisitions: need at least 2 cameras");
  auto check = [](double lo, double hi, const char* what) {
    if (!(hi >= lo)) throw std::invalid_argument(std::string("make_acquisitions: empty ") + what + " range");
  };
  check(spec.azimuth_min_deg, spec.azimuth_max_deg, "azimuth");
  check(spec.off_nadir_min_deg, spec.off_nadir_max_deg, "off-nadir");
  check(spec.time_min_days, spec.time_max_days, "time");
  check(spec.sun_azimuth_min_deg, spec.sun_azimuth_max_deg, "sun azimuth");
  check(spec.sun_elevation_min_deg, spec.sun_elevation_max_deg, "sun elevation");
  std::mt19937_64 rng(spec.seed);
  auto draw = [&](double lo, double hi) { return lo == hi ? lo : uniform(rng, lo, hi); };
  const int w = static_cast<int>(std::ceil(grid.extent_x() / spec.gsd));
  const int h = static_cast<int>(std::ceil(grid.extent_y() / spec.gsd));
  std::vector<AffineCamera> cams;
  for (int i = 0; i < spec.count; ++i) {
    const double az = draw(spec.azimuth_min_deg, spec.azimuth_max_deg);
    const double off = draw(spec.off_nadir_min_deg, spec.off_nadir_max_deg);
    AffineCamera c = make_affine_camera(az, off, spec.gsd, {grid.origin_x, grid.origin_y}, w, h);
    c.timestamp_days = draw(spec.time_min_days, spec.time_max_days);
    c.sun_direction = sun_vector(draw(spec.sun_azimuth_min_deg, spec.sun_azimuth_max_deg),
                                 draw(spec.sun_elevation_min_deg, spec.sun_elevation_max_deg));
    cams.push_back(c);
  }
  return cams;
}

}  // namespace resdepth
