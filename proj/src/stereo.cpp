#include "resdepth/stereo.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

namespace resdepth {

CostVolume::CostVolume(int width, int height, int d_min, int d_max, float fill)
    : width_(width), height_(height), d_min_(d_min), d_max_(d_max) {
  if (width < 1 || height < 1) throw std::invalid_argument("CostVolume: empty size");
  if (d_max <= d_min) throw std::invalid_argument("CostVolume: d_max must exceed d_min");
  costs_.assign(static_cast<std::size_t>(width) * height * disparities(), fill);
}

void SgmParams::validate() const {
  if (census_window < 3 || census_window % 2 == 0 || census_window > 7)
    throw std::invalid_argument("SgmParams: census_window must be odd, 3..7");
  if (!(p1 > 0.0f) || !(p2 > p1)) throw std::invalid_argument("SgmParams: need p2 > p1 > 0");
  if (path_count != 4 && path_count != 8) throw std::invalid_argument("SgmParams: path_count must be 4 or 8");
  if (!(lr_threshold >= 0.0)) throw std::invalid_argument("SgmParams: lr_threshold must be >= 0");
  if (subpixel_iterations < 0) throw std::invalid_argument("SgmParams: subpixel_iterations must be >= 0");
}

Raster<std::uint64_t> census_transform(const GrayImage& img, int window) {
  if (window < 3 || window % 2 == 0 || window * window - 1 > 64)
    throw std::invalid_argument("census_transform: window must be odd with at most 64 neighbours");
  const int r = window / 2;
  const int w = img.width(), h = img.height();
  Raster<std::uint64_t> out(w, h, 0);
  parallel_rows(h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const double c = img(x, y);
      std::uint64_t bits = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int sx = std::clamp(x + dx, 0, w - 1), sy = std::clamp(y + dy, 0, h - 1);
          bits = (bits << 1) | (img(sx, sy) < c ? 1u : 0u);
        }
      out(x, y) = bits;
    }
  });
  return out;
}

CostVolume census_cost(const GrayImage& left, const GrayImage& right, int d_min, int d_max,
                       int window) {
  if (!left.values.same_shape(right.values)) throw std::invalid_argument("census_cost: image sizes differ");
  const int w = left.width(), h = left.height();
  if (d_max <= d_min) throw std::invalid_argument("census_cost: d_max must exceed d_min");
  if (d_max - d_min + 1 > w || std::abs(d_min) >= w || std::abs(d_max) >= w)
    throw std::invalid_argument("census_cost: disparity range exceeds image width");
  const auto cl = census_transform(left, window);
  const auto cr = census_transform(right, window);
  const float full = static_cast<float>(window * window - 1);
  CostVolume cv(w, h, d_min, d_max);
  parallel_rows(h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      float* c = cv.pixel(x, y);
      for (int d = d_min; d <= d_max; ++d) {
        const int xr = x - d;
        c[d - d_min] = (xr < 0 || xr >= w) ? full : static_cast<float>(std::popcount(cl(x, y) ^ cr(xr, y)));
      }
    }
  });
  return cv;
}

CostVolume sgm_aggregate(const CostVolume& cv, const SgmParams& p) {
  p.validate();
  const int w = cv.width(), h = cv.height(), nd = cv.disparities();
  const float p1 = p.p1, p2 = p.p2;
  static constexpr int kDirs[8][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {-1, -1}, {1, -1}, {-1, 1}};
  CostVolume out(w, h, cv.d_min(), cv.d_max(), 0.0f);
  std::vector<float> prev(static_cast<std::size_t>(w) * nd), cur(prev.size());
  std::vector<float> prev_min(w), cur_min(w);

  for (int k = 0; k < p.path_count; ++k) {
    const int dx = kDirs[k][0], dy = kDirs[k][1];
    for (int yi = 0; yi < h; ++yi) {
      const int y = dy >= 0 ? yi : h - 1 - yi;
      for (int xi = 0; xi < w; ++xi) {
        const int x = dx >= 0 ? xi : w - 1 - xi;
        const float* c = cv.pixel(x, y);
        float* l = cur.data() + static_cast<std::size_t>(x) * nd;
        const int px = x - dx;
        const bool has_prev = px >= 0 && px < w && (dy == 0 || yi > 0);
        if (!has_prev) {
          std::copy(c, c + nd, l);
        } else {
          const float* lp = (dy == 0 ? cur.data() : prev.data()) + static_cast<std::size_t>(px) * nd;
          const float mp = dy == 0 ? cur_min[px] : prev_min[px];
          const float jump = mp + p2;
          for (int d = 0; d < nd; ++d) {
            float v = lp[d];
            if (d > 0) v = std::min(v, lp[d - 1] + p1);
            if (d + 1 < nd) v = std::min(v, lp[d + 1] + p1);
            v = std::min(v, jump);
            l[d] = c[d] + v - mp;
          }
        }
        cur_min[x] = *std::min_element(l, l + nd);
        float* o = out.pixel(x, y);
        for (int d = 0; d < nd; ++d) o[d] += l[d];
      }
      std::swap(prev, cur);
      std::swap(prev_min, cur_min);
    }
  }
  return out;
}

namespace {

// Catmull-Rom along a row, borders clamped.
double cubic_row(const GrayImage& im, double x, int y) {
  const int w = im.width();
  const int x1 = static_cast<int>(std::floor(x));
  const double t = x - x1;
  auto at = [&](int k) { return im(std::clamp(k, 0, w - 1), y); };
  const double p0 = at(x1 - 1), p1 = at(x1), p2 = at(x1 + 1), p3 = at(x1 + 2);
  return p1 + 0.5 * t * (p2 - p0 + t * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + t * (3.0 * (p1 - p2) + p3 - p0)));
}

}  // namespace

Raster<double> refine_subpixel(const GrayImage& left, const GrayImage& right, const Raster<double>& disparity,
                               int radius, int iterations) {
  if (!left.values.same_shape(right.values) || !disparity.same_shape(left.width(), left.height()))
    throw std::invalid_argument("refine_subpixel: size mismatch");
  if (radius < 1) throw std::invalid_argument("refine_subpixel: radius must be >= 1");
  const int w = left.width(), h = left.height();
  Raster<double> out = disparity;
  if (iterations <= 0) return out;
  const int n = (2 * radius + 1) * (2 * radius + 1);
  parallel_rows(h, [&](int y) {
    if (y < radius || y >= h - radius) return;
    std::vector<double> lv(n), gv(n), rv(n);
    for (int x = radius + 1; x < w - radius - 1; ++x) {
      const double d0 = disparity(x, y);
      if (!std::isfinite(d0)) continue;
      // Left samples and gradients are fixed across iterations.
      bool ok = true;
      double lm = 0.0, gm = 0.0;
      for (int j = -radius, k = 0; j <= radius && ok; ++j)
        for (int i = -radius; i <= radius; ++i, ++k) {
          const int xx = x + i, yy = y + j;
          if (!left.valid(xx, yy) || !left.valid(xx - 1, yy) || !left.valid(xx + 1, yy)) {
            ok = false;
            break;
          }
          lv[k] = left(xx, yy);
          gv[k] = 0.5 * (left(xx + 1, yy) - left(xx - 1, yy));
          lm += lv[k];
          gm += gv[k];
        }
      if (!ok) continue;
      lm /= n;
      gm /= n;
      double gg = 0.0;
      for (int k = 0; k < n; ++k) {
        gv[k] -= gm;
        gg += gv[k] * gv[k];
      }
      if (gg < 1e-10) continue;
      double d = d0;
      for (int it = 0; it < iterations && ok; ++it) {
        double rm = 0.0;
        for (int j = -radius, k = 0; j <= radius && ok; ++j)
          for (int i = -radius; i <= radius; ++i, ++k) {
            const double xr = x + i - d;
            const int x0 = static_cast<int>(std::floor(xr));
            if (x0 < 0 || x0 + 1 >= w || !right.valid(x0, y + j) || !right.valid(x0 + 1, y + j)) {
              ok = false;
              break;
            }
            rv[k] = cubic_row(right, xr, y + j);
            rm += rv[k];
          }
        if (!ok) break;
        rm /= n;
        double eg = 0.0;
        for (int k = 0; k < n; ++k) eg += ((lv[k] - lm) - (rv[k] - rm)) * gv[k];
        d -= eg / gg;
        if (!(std::abs(d - d0) <= 1.0)) ok = false;
      }
      if (ok) out(x, y) = d;
    }
  });
  return out;
}

double parabola_offset(double c_minus, double c0, double c_plus) {
  const double denom = c_minus - 2.0 * c0 + c_plus;
  if (!(denom > 0.0)) return 0.0;
  return std::clamp(0.5 * (c_minus - c_plus) / denom, -0.5, 0.5);
}

Raster<double> wta_subpixel(const CostVolume& cv) {
  const int w = cv.width(), h = cv.height(), nd = cv.disparities();
  Raster<double> out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const float* c = cv.pixel(x, y);
      int best = 0;
      for (int d = 1; d < nd; ++d)
        if (c[d] < c[best]) best = d;
      double off = 0.0;
      if (best > 0 && best + 1 < nd) off = parabola_offset(c[best - 1], c[best], c[best + 1]);
      out(x, y) = cv.d_min() + best + off;
    }
  return out;
}

Raster<double> wta_subpixel_right(const CostVolume& cv) {
  const int w = cv.width(), h = cv.height(), nd = cv.disparities();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Raster<double> out(w, h, nan);
  auto cost = [&](int xr, int y, int k) -> double {
    const int xl = xr + cv.d_min() + k;
    if (k < 0 || k >= nd || xl < 0 || xl >= w) return nan;
    return cv.pixel(xl, y)[k];
  };
  for (int y = 0; y < h; ++y)
    for (int xr = 0; xr < w; ++xr) {
      int best = -1;
      double best_cost = 0.0;
      for (int k = 0; k < nd; ++k) {
        const double c = cost(xr, y, k);
        if (std::isnan(c)) continue;
        if (best < 0 || c < best_cost) {
          best = k;
          best_cost = c;
        }
      }
      if (best < 0) continue;
      const double cm = cost(xr, y, best - 1), cp = cost(xr, y, best + 1);
      const double off = (std::isnan(cm) || std::isnan(cp)) ? 0.0 : parabola_offset(cm, best_cost, cp);
      out(xr, y) = -(cv.d_min() + best + off);
    }
  return out;
}

CheckedDisparity lr_check(const Raster<double>& d_left, const Raster<double>& d_right,
                          double threshold) {
  if (!d_left.same_shape(d_right)) throw std::invalid_argument("lr_check: size mismatch");
  const int w = d_left.width(), h = d_left.height();
  CheckedDisparity out{d_left, Mask(w, h, 0)};
  if (std::isinf(threshold)) return out;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double d = d_left(x, y);
      bool bad = !std::isfinite(d);
      if (!bad) {
        const long xr = std::lround(x - d);
        bad = xr < 0 || xr >= w || !std::isfinite(d_right(static_cast<int>(xr), y)) ||
              std::abs(d + d_right(static_cast<int>(xr), y)) > threshold;
      }
      out.invalid(x, y) = bad ? 1 : 0;
    }
  for (int y = 0; y < h; ++y) {
    int x = 0;
    while (x < w) {
      if (!out.invalid(x, y)) {
        ++x;
        continue;
      }
      const int a = x;
      while (x < w && out.invalid(x, y)) ++x;
      const int b = x - 1;
      const bool has_l = a > 0, has_r = x < w;
      for (int i = a; i <= b; ++i) {
        double v = std::numeric_limits<double>::quiet_NaN();
        if (has_l && has_r) {
          const double t = static_cast<double>(i - (a - 1)) / static_cast<double>(x - (a - 1));
          v = (1.0 - t) * d_left(a - 1, y) + t * d_left(x, y);
        } else if (has_l) {
          v = d_left(a - 1, y);
        } else if (has_r) {
          v = d_left(x, y);
        }
        out.disparity(i, y) = v;
      }
    }
  }
  return out;
}

DisparityToHeight pair_coefficients(const AffineCamera& left, const AffineCamera& right,
                                    double reference_height) {
  const double scale = std::max(1.0, left.A.leftCols<2>().cwiseAbs().maxCoeff());
  const double tol = 1e-9 * scale;
  const bool shared = (left.A.leftCols<2>() - right.A.leftCols<2>()).cwiseAbs().maxCoeff() <= tol &&
                      std::abs(left.A(1, 2) - right.A(1, 2)) <= tol &&
                      std::abs(left.b(1) - right.b(1)) <= tol * 1e3;
  if (!shared)
    throw std::invalid_argument("epipolar_pair: cameras are not coplanar-ray rectified (rows differ in v)");
  const double c = left.A(0, 2) - right.A(0, 2);
  const double o = left.b(0) - right.b(0);
  if (std::abs(c) < 1e-12) return {0.0, reference_height};
  return {1.0 / c, -o / c};
}

EpipolarPair epipolar_pair(const SceneTruth& scene, const AffineCamera& left,
                           const AffineCamera& right, const RenderOptions& left_opts,
                           const RenderOptions& right_opts, double reference_height) {
  EpipolarPair pair;
  pair.coeffs = pair_coefficients(left, right, reference_height);
  pair.left_camera = left;
  pair.right_camera = right;
  pair.left = render_view(scene, left, left_opts);
  pair.right = render_view(scene, right, right_opts);
  return pair;
}

std::pair<int, int> disparity_range(const DisparityToHeight& coeffs, double z_lo, double z_hi,
                                    int margin) {
  if (coeffs.alpha == 0.0) return {-margin, margin};
  const double a = coeffs.disparity(z_lo), b = coeffs.disparity(z_hi);
  return {static_cast<int>(std::floor(std::min(a, b))) - margin,
          static_cast<int>(std::ceil(std::max(a, b))) + margin};
}

namespace {

double median_of(std::vector<double>& v) {
  const std::size_t n = v.size();
  const std::size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  if (n % 2 == 1) return v[mid];
  const double hi = v[mid];
  const double lo = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lo + hi);
}

// Fills nodata cells from the median of their valid 3x3 neighbours, one
// synchronous pass at a time.
void fill_holes(HeightField& h) {
  const int w = h.width(), ht = h.height();
  std::vector<double> buf;
  for (;;) {
    std::vector<std::pair<std::size_t, double>> updates;
    bool any_hole = false;
    for (int y = 0; y < ht; ++y)
      for (int x = 0; x < w; ++x) {
        if (!h.nodata(x, y)) continue;
        any_hole = true;
        buf.clear();
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int sx = x + dx, sy = y + dy;
            if (h.values.contains(sx, sy) && !h.nodata(sx, sy)) buf.push_back(h(sx, sy));
          }
        if (!buf.empty()) updates.emplace_back(h.values.index(x, y), median_of(buf));
      }
    if (!any_hole) return;
    if (updates.empty()) throw std::runtime_error("disparities_to_dem: no valid heights to fill from");
    for (auto [i, v] : updates) {
      h.values[i] = v;
      h.nodata[i] = 0;
    }
  }
}

}  // namespace

HeightField disparities_to_dem(const Raster<double>& disparity, const Mask* invalid,
                               const DisparityToHeight& coeffs, const AffineCamera& left_camera,
                               const GridGeometry& target) {
  target.validate();
  const double gsd = 1.0 / left_camera.A.row(0).head<2>().norm();
  const int ss = std::max(1, static_cast<int>(std::ceil(2.0 * gsd / target.cell_size)));
  const Eigen::Vector2d lean = left_camera.lean();
  const int w = disparity.width(), h = disparity.height();
  const std::size_t cells = static_cast<std::size_t>(target.width) * target.height;

  auto for_each_sample = [&](auto&& sink) {
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u) {
        const double d = disparity(u, v);
        if (!std::isfinite(d) || (invalid && (*invalid)(u, v))) continue;
        const double z = coeffs.height(d);
        for (int sy = 0; sy < ss; ++sy)
          for (int sx = 0; sx < ss; ++sx) {
            const Eigen::Vector2d g =
                left_camera.ground_point(u - 0.5 + (sx + 0.5) / ss, v - 0.5 + (sy + 0.5) / ss) + z * lean;
            auto [fx, fy] = target.world_to_cell(g.x(), g.y());
            const long cx = std::lround(fx), cy = std::lround(fy);
            if (cx < 0 || cy < 0 || cx >= target.width || cy >= target.height) continue;
            sink(static_cast<std::size_t>(cy) * target.width + static_cast<std::size_t>(cx), z);
          }
      }
  };

  std::vector<std::size_t> start(cells + 1, 0);
  for_each_sample([&](std::size_t c, double) { ++start[c + 1]; });
  for (std::size_t i = 0; i < cells; ++i) start[i + 1] += start[i];
  std::vector<double> samples(start[cells]);
  std::vector<std::size_t> fill(start.begin(), start.end() - 1);
  for_each_sample([&](std::size_t c, double z) { samples[fill[c]++] = z; });

  HeightField dem(target);
  std::vector<double> buf;
  for (std::size_t c = 0; c < cells; ++c) {
    if (start[c] == start[c + 1]) {
      dem.nodata[c] = 1;
      continue;
    }
    buf.assign(samples.begin() + static_cast<std::ptrdiff_t>(start[c]),
               samples.begin() + static_cast<std::ptrdiff_t>(start[c + 1]));
    dem.values[c] = median_of(buf);
  }
  fill_holes(dem);
  return dem;
}

HeightField median_filter(const HeightField& dem, int kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("median_filter: kernel must be odd");
  const int r = kernel / 2;
  const int w = dem.width(), h = dem.height();
  HeightField out = dem;
  parallel_rows(h, [&](int y) {
    std::vector<double> buf;
    buf.reserve(static_cast<std::size_t>(kernel) * kernel);
    for (int x = 0; x < w; ++x) {
      buf.clear();
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const int sx = std::clamp(x + dx, 0, w - 1), sy = std::clamp(y + dy, 0, h - 1);
          if (!dem.nodata(sx, sy)) buf.push_back(dem(sx, sy));
        }
      if (buf.empty()) continue;
      out(x, y) = median_of(buf);
      out.nodata(x, y) = 0;
    }
  });
  return out;
}

namespace {

Raster<double> gaussian_blur(const Raster<double>& in, double sigma) {
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
  const int w = in.width(), h = in.height();
  Raster<double> tmp(w, h), out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -r; i <= r; ++i) s += k[i + r] * in(std::clamp(x + i, 0, w - 1), y);
      tmp(x, y) = s;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -r; i <= r; ++i) s += k[i + r] * tmp(x, std::clamp(y + i, 0, h - 1));
      out(x, y) = s;
    }
  return out;
}

}  // namespace

HeightField degrade_truth(const HeightField& target, const NoiseSpec& noise, std::uint64_t seed) {
  HeightField out = target;
  if (noise.blur_sigma_cells > 0.0) out.values = gaussian_blur(out.values, noise.blur_sigma_cells);
  std::mt19937_64 rng(seed);
  if (noise.speckle_sigma > 0.0) {
    std::normal_distribution<double> n(0.0, noise.speckle_sigma);
    for (auto& v : out.values.vec()) v += n(rng);
  }
  if (noise.blob_count > 0 && noise.blob_amplitude != 0.0) {
    std::uniform_real_distribution<double> ux(0.0, target.width()), uy(0.0, target.height());
    std::uniform_real_distribution<double> amp(-noise.blob_amplitude, noise.blob_amplitude);
    const double rad = noise.blob_radius_cells;
    for (int b = 0; b < noise.blob_count; ++b) {
      const double cx = ux(rng), cy = uy(rng), a = amp(rng);
      const int r = static_cast<int>(std::ceil(3.0 * rad));
      for (int y = std::max(0, static_cast<int>(cy) - r); y <= std::min(target.height() - 1, static_cast<int>(cy) + r); ++y)
        for (int x = std::max(0, static_cast<int>(cx) - r); x <= std::min(target.width() - 1, static_cast<int>(cx) + r); ++x) {
          const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
          out(x, y) += a * std::exp(-0.5 * d2 / (rad * rad));
        }
    }
  }
  for (std::size_t i = 0; i < out.values.size(); ++i)
    if (target.nodata[i]) out.values[i] = target.values[i];
  return out;
}

MatchResult match_pair(const GrayImage& left, const GrayImage& right, int d_min, int d_max,
                       const SgmParams& p) {
  p.validate();
  CostVolume agg;
  {
    const CostVolume raw = census_cost(left, right, d_min, d_max, p.census_window);
    agg = sgm_aggregate(raw, p);
  }
  const auto dl = refine_subpixel(left, right, wta_subpixel(agg), p.census_window / 2, p.subpixel_iterations);
  const auto dr = wta_subpixel_right(agg);
  auto checked = lr_check(dl, dr, p.lr_threshold);
  return {std::move(checked.disparity), std::move(checked.invalid)};
}

}  // namespace resdepth
