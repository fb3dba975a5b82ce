#include "resdepth/raster.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <thread>

namespace resdepth {

void GridGeometry::validate() const {
  if (width < 1 || height < 1) throw std::invalid_argument("grid: width and height must be >= 1");
  if (!(cell_size > 0.0) || !std::isfinite(cell_size))
    throw std::invalid_argument("grid: cell_size must be positive");
  if (!std::isfinite(origin_x) || !std::isfinite(origin_y))
    throw std::invalid_argument("grid: origin must be finite");
}

HeightField::HeightField(const GridGeometry& g, double fill)
    : grid(g), values(g.width, g.height, fill), nodata(g.width, g.height, 0) {}

void HeightField::validate() const {
  grid.validate();
  if (!values.same_shape(grid.width, grid.height) || !nodata.same_shape(grid.width, grid.height))
    throw std::invalid_argument("HeightField: raster size does not match grid");
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!nodata[i] && !std::isfinite(values[i]))
      throw std::invalid_argument("HeightField: non-finite value outside nodata");
}

GrayImage::GrayImage(int width, int height, double fill)
    : values(width, height, fill), valid(width, height, 1) {}

void GrayImage::validate() const {
  if (!values.same_shape(valid)) throw std::invalid_argument("GrayImage: mask size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i)
    if (valid[i] && !(values[i] >= 0.0 && values[i] <= 1.0))
      throw std::invalid_argument("GrayImage: valid intensity outside [0,1]");
}

std::optional<double> bilinear_sample(const Raster<double>& values, const Mask* valid,
                                      double u, double v) {
  if (!std::isfinite(u) || !std::isfinite(v)) return std::nullopt;
  const double fu = std::floor(u);
  const double fv = std::floor(v);
  const int x0 = static_cast<int>(fu);
  const int y0 = static_cast<int>(fv);
  const double ax = u - fu;
  const double ay = v - fv;
  // Neighbours with zero weight are not part of the support.
  const int x1 = ax > 0.0 ? x0 + 1 : x0;
  const int y1 = ay > 0.0 ? y0 + 1 : y0;
  if (x0 < 0 || y0 < 0 || x1 >= values.width() || y1 >= values.height()) return std::nullopt;
  if (valid) {
    const Mask& m = *valid;
    if (!m(x0, y0) || !m(x1, y0) || !m(x0, y1) || !m(x1, y1)) return std::nullopt;
  }
  const double top = (1.0 - ax) * values(x0, y0) + ax * values(x1, y0);
  const double bot = (1.0 - ax) * values(x0, y1) + ax * values(x1, y1);
  return (1.0 - ay) * top + ay * bot;
}

std::optional<double> bilinear_sample(const GrayImage& img, double u, double v) {
  return bilinear_sample(img.values, &img.valid, u, v);
}

void NormalizationStats::validate() const {
  if (!std::isfinite(mean_height) || !std::isfinite(std_height) || !std::isfinite(baseline))
    throw std::invalid_argument("normalization: non-finite statistics");
  if (!(std_height > 0.0)) throw std::invalid_argument("normalization: std_height must be > 0");
  if (mode == NormalizationMode::InverseDepth && !(baseline > 0.0))
    throw std::invalid_argument("normalization: baseline must be > 0 in inverse-depth mode");
}

NormalizationStats compute_stats(const HeightField& h) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < h.values.size(); ++i)
    if (!h.nodata[i]) {
      sum += h.values[i];
      ++n;
    }
  if (n == 0) throw std::invalid_argument("compute_stats: no valid cells");
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < h.values.size(); ++i)
    if (!h.nodata[i]) ss += (h.values[i] - mean) * (h.values[i] - mean);
  NormalizationStats s;
  s.mean_height = mean;
  s.std_height = std::sqrt(ss / static_cast<double>(n));
  if (!(s.std_height > 0.0)) s.std_height = 1.0;
  return s;
}

double normalize_value(double h, const NormalizationStats& stats) {
  if (stats.mode == NormalizationMode::InverseDepth) return stats.baseline / h;
  return (h - stats.mean_height) / stats.std_height;
}

double denormalize_value(double x, const NormalizationStats& stats) {
  if (stats.mode == NormalizationMode::InverseDepth) return stats.baseline / x;
  return x * stats.std_height + stats.mean_height;
}

HeightField normalize_heights(const HeightField& h, const NormalizationStats& stats) {
  stats.validate();
  HeightField out = h;
  for (std::size_t i = 0; i < h.values.size(); ++i) {
    if (h.nodata[i]) {
      out.values[i] = 0.0;
      continue;
    }
    out.values[i] = normalize_value(h.values[i], stats);
    if (!std::isfinite(out.values[i])) {
      out.values[i] = 0.0;
      out.nodata[i] = 1;
    }
  }
  return out;
}

HeightField denormalize_heights(const HeightField& x, const NormalizationStats& stats) {
  stats.validate();
  HeightField out = x;
  for (std::size_t i = 0; i < x.values.size(); ++i) {
    if (x.nodata[i]) {
      out.values[i] = 0.0;
      continue;
    }
    if (stats.mode == NormalizationMode::InverseDepth && x.values[i] == 0.0) {
      out.values[i] = 0.0;
      out.nodata[i] = 1;
      continue;
    }
    out.values[i] = denormalize_value(x.values[i], stats);
  }
  return out;
}

std::pair<int, int> dihedral_source(Dihedral op, int x, int y, int w, int h) {
  switch (op) {
    case Dihedral::Identity: return {x, y};
    case Dihedral::Rot90: return {y, h - 1 - x};
    case Dihedral::Rot180: return {w - 1 - x, h - 1 - y};
    case Dihedral::Rot270: return {w - 1 - y, x};
    case Dihedral::FlipH: return {w - 1 - x, y};
    case Dihedral::FlipV: return {x, h - 1 - y};
    case Dihedral::Transpose: return {y, x};
    case Dihedral::AntiTranspose: return {w - 1 - y, h - 1 - x};
  }
  throw std::invalid_argument("dihedral_source: bad op");
}

Dihedral dihedral_from_index(int i) {
  if (i < 0 || i >= kDihedralCount) throw std::out_of_range("dihedral index");
  return static_cast<Dihedral>(i);
}

namespace {

using Table = std::array<std::array<Dihedral, kDihedralCount>, kDihedralCount>;

// Composition found by acting on a 3x3 probe with distinct entries.
Table build_table() {
  Raster<int> probe(3, 3);
  for (int i = 0; i < 9; ++i) probe[i] = i;
  std::array<Raster<int>, kDihedralCount> images;
  for (int k = 0; k < kDihedralCount; ++k) images[k] = rotate_flip(probe, dihedral_from_index(k));
  Table t{};
  for (int a = 0; a < kDihedralCount; ++a)
    for (int b = 0; b < kDihedralCount; ++b) {
      const auto r = rotate_flip(images[a], dihedral_from_index(b));
      for (int k = 0; k < kDihedralCount; ++k)
        if (r == images[k]) t[a][b] = dihedral_from_index(k);
    }
  return t;
}

const Table& table() {
  static const Table t = build_table();
  return t;
}

}  // namespace

Dihedral dihedral_compose(Dihedral first, Dihedral then) {
  return table()[static_cast<int>(first)][static_cast<int>(then)];
}

Dihedral dihedral_inverse(Dihedral d) {
  for (int k = 0; k < kDihedralCount; ++k)
    if (dihedral_compose(d, dihedral_from_index(k)) == Dihedral::Identity) return dihedral_from_index(k);
  throw std::logic_error("dihedral_inverse: group table broken");
}

HeightField rotate_flip(const HeightField& h, Dihedral op) {
  HeightField out;
  out.values = rotate_flip(h.values, op);
  out.nodata = rotate_flip(h.nodata, op);
  out.grid = h.grid;
  out.grid.width = out.values.width();
  out.grid.height = out.values.height();
  return out;
}

GrayImage rotate_flip(const GrayImage& img, Dihedral op) {
  GrayImage out;
  out.values = rotate_flip(img.values, op);
  out.valid = rotate_flip(img.valid, op);
  return out;
}

HeightField crop(const HeightField& h, int x0, int y0, int w, int hgt) {
  HeightField out;
  out.values = crop(h.values, x0, y0, w, hgt);
  out.nodata = crop(h.nodata, x0, y0, w, hgt);
  out.grid = h.grid;
  out.grid.width = w;
  out.grid.height = hgt;
  out.grid.origin_x = h.grid.origin_x + x0 * h.grid.cell_size;
  out.grid.origin_y = h.grid.origin_y + y0 * h.grid.cell_size;
  return out;
}

GrayImage crop(const GrayImage& img, int x0, int y0, int w, int hgt) {
  GrayImage out;
  out.values = crop(img.values, x0, y0, w, hgt);
  out.valid = crop(img.valid, x0, y0, w, hgt);
  return out;
}

void parallel_rows(int rows, const std::function<void(int)>& fn) {
  const int threads = std::max(1, std::min<int>(static_cast<int>(std::thread::hardware_concurrency()), rows));
  if (threads <= 1) {
    for (int r = 0; r < rows; ++r) fn(r);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (int r = t; r < rows; r += threads) fn(r);
    });
  for (auto& th : pool) th.join();
}

}  // namespace resdepth
