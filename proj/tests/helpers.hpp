#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "resdepth/raster.hpp"

namespace testutil {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("resdepth_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline resdepth::GridGeometry grid(int w, int h, double cell = 1.0, double ox = 0.0, double oy = 0.0) {
  resdepth::GridGeometry g;
  g.width = w;
  g.height = h;
  g.cell_size = cell;
  g.origin_x = ox;
  g.origin_y = oy;
  return g;
}

inline resdepth::HeightField random_field(int w, int h, std::uint64_t seed, double lo = -5.0, double hi = 5.0) {
  resdepth::HeightField f(grid(w, h));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : f.values.vec()) v = u(rng);
  return f;
}

inline resdepth::GrayImage random_image(int w, int h, std::uint64_t seed) {
  resdepth::GrayImage img(w, h);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : img.values.vec()) v = u(rng);
  return img;
}

}  // namespace testutil
