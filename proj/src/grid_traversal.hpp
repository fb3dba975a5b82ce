#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "resdepth/raster.hpp"

namespace resdepth {

inline bool grid_contains(const GridGeometry& g, int x, int y) {
  return x >= 0 && y >= 0 && x < g.width && y < g.height;
}

enum class TraverseEnd { Stopped, LeftGrid, MaxLength };

/// Visits the cells crossed by the horizontal segment p(l) = (x0, y0) +
/// l * (dx, dy), 0 <= l <= max_len, with (dx, dy) a unit vector in world
/// meters. visit(cx, cy, l_in, l_out, face) gets the parameter range inside
/// the cell and how it was entered: 0 = start cell, 1 = across an x face,
/// 2 = across a y face. Returning false stops the walk.
template <class Visit>
TraverseEnd traverse_grid(const GridGeometry& g, double x0, double y0, double dx, double dy,
                          double max_len, Visit&& visit) {
  const double cs = g.cell_size;
  const double gx = (x0 - g.origin_x) / cs;
  const double gy = (y0 - g.origin_y) / cs;
  const double inf = std::numeric_limits<double>::infinity();

  // Clip the segment start to the grid box.
  double l_start = 0.0;
  int face = 0;
  {
    double lo = 0.0, hi = max_len;
    int lo_face = 0;
    auto slab = [&](double p, double d, double n, int f) {
      if (std::abs(d) < 1e-15) return p >= 0.0 && p <= n;
      double a = (0.0 - p) * cs / d, b = (n - p) * cs / d;
      if (a > b) std::swap(a, b);
      if (a > lo) {
        lo = a;
        lo_face = f;
      }
      hi = std::min(hi, b);
      return lo <= hi;
    };
    if (!slab(gx, dx, g.width, 1) || !slab(gy, dy, g.height, 2)) return TraverseEnd::LeftGrid;
    l_start = lo;
    face = lo > 0.0 ? lo_face : 0;
  }

  const double sx = gx + l_start * dx / cs;
  const double sy = gy + l_start * dy / cs;
  int ix = std::clamp(static_cast<int>(std::floor(sx)), 0, g.width - 1);
  int iy = std::clamp(static_cast<int>(std::floor(sy)), 0, g.height - 1);
  if (face == 1) ix = dx > 0 ? static_cast<int>(std::lround(sx)) : static_cast<int>(std::lround(sx)) - 1;
  if (face == 2) iy = dy > 0 ? static_cast<int>(std::lround(sy)) : static_cast<int>(std::lround(sy)) - 1;
  if (!grid_contains(g, ix, iy)) return TraverseEnd::LeftGrid;

  const int step_x = dx > 0 ? 1 : -1;
  const int step_y = dy > 0 ? 1 : -1;
  const double delta_x = std::abs(dx) > 1e-15 ? cs / std::abs(dx) : inf;
  const double delta_y = std::abs(dy) > 1e-15 ? cs / std::abs(dy) : inf;
  double next_x = std::abs(dx) > 1e-15
                      ? ((dx > 0 ? (ix + 1) - gx : ix - gx) * cs / dx)
                      : inf;
  double next_y = std::abs(dy) > 1e-15
                      ? ((dy > 0 ? (iy + 1) - gy : iy - gy) * cs / dy)
                      : inf;

  double l_in = l_start;
  for (;;) {
    const double l_out = std::min({next_x, next_y, max_len});
    if (!visit(ix, iy, l_in, l_out, face)) return TraverseEnd::Stopped;
    if (l_out >= max_len) return TraverseEnd::MaxLength;
    if (next_x < next_y) {
      ix += step_x;
      l_in = next_x;
      next_x += delta_x;
      face = 1;
    } else {
      iy += step_y;
      l_in = next_y;
      next_y += delta_y;
      face = 2;
    }
    if (!grid_contains(g, ix, iy)) return TraverseEnd::LeftGrid;
  }
}

}  // namespace resdepth
