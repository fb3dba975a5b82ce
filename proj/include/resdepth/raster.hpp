#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace resdepth {

// Storage convention used by every raster in the project: row-major, column
// index x grows eastward, row index y grows northward. Cell (x, y) covers
// [origin_x + x*cell, origin_x + (x+1)*cell) and likewise for y.

template <class T>
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, T fill = T{})
      : width_(width), height_(height) {
    if (width < 0 || height < 0) throw std::invalid_argument("Raster: negative size");
    data_.assign(static_cast<std::size_t>(width) * height, fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  bool same_shape(int w, int h) const { return w == width_ && h == height_; }
  template <class U>
  bool same_shape(const Raster<U>& o) const { return same_shape(o.width(), o.height()); }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using Mask = Raster<std::uint8_t>;

/// Georeferencing of a regular grid.
struct GridGeometry {
  int width = 0;
  int height = 0;
  double origin_x = 0.0;
  double origin_y = 0.0;
  double cell_size = 1.0;

  /// Continuous cell coordinates of a world point; integer values are cell centers.
  std::pair<double, double> world_to_cell(double wx, double wy) const {
    return {(wx - origin_x) / cell_size - 0.5, (wy - origin_y) / cell_size - 0.5};
  }
  std::pair<double, double> cell_to_world(double cx, double cy) const {
    return {origin_x + (cx + 0.5) * cell_size, origin_y + (cy + 0.5) * cell_size};
  }
  double extent_x() const { return width * cell_size; }
  double extent_y() const { return height * cell_size; }

  void validate() const;
  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

/// Heights in meters on a georeferenced grid, with an explicit nodata mask.
struct HeightField {
  GridGeometry grid;
  Raster<double> values;
  Mask nodata;

  HeightField() = default;
  explicit HeightField(const GridGeometry& g, double fill = 0.0);

  int width() const { return grid.width; }
  int height() const { return grid.height; }
  double& operator()(int x, int y) { return values(x, y); }
  double operator()(int x, int y) const { return values(x, y); }
  bool valid(int x, int y) const { return nodata(x, y) == 0; }

  /// Throws std::invalid_argument when a structural invariant is broken.
  void validate() const;
};

/// Single-channel intensity raster in [0, 1] with a per-pixel validity mask.
struct GrayImage {
  Raster<double> values;
  Mask valid;

  GrayImage() = default;
  GrayImage(int width, int height, double fill = 0.0);

  int width() const { return values.width(); }
  int height() const { return values.height(); }
  double& operator()(int x, int y) { return values(x, y); }
  double operator()(int x, int y) const { return values(x, y); }

  void validate() const;
};

/// Bilinear interpolation at pixel coordinates (integer values are pixel
/// centers). Returns nullopt when the 2x2 support leaves the image or touches
/// an invalid pixel. Exact lattice points only need their own pixel.
std::optional<double> bilinear_sample(const GrayImage& img, double u, double v);
std::optional<double> bilinear_sample(const Raster<double>& values, const Mask* valid,
                                      double u, double v);

enum class NormalizationMode { AbsoluteHeight, InverseDepth };

struct NormalizationStats {
  double mean_height = 0.0;
  double std_height = 1.0;
  NormalizationMode mode = NormalizationMode::AbsoluteHeight;
  double baseline = 1.0;

  void validate() const;
  friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;
};

/// Mean and population standard deviation over valid cells.
NormalizationStats compute_stats(const HeightField& h);

/// (h - mean) / std, or baseline / d in inverse-depth mode. Nodata stays
/// nodata (value 0 in the returned raster, flagged in the returned mask).
HeightField normalize_heights(const HeightField& h, const NormalizationStats& stats);
/// Exact algebraic inverse of normalize_heights. An inverse-depth value of 0
/// maps to nodata.
HeightField denormalize_heights(const HeightField& x, const NormalizationStats& stats);

double normalize_value(double h, const NormalizationStats& stats);
double denormalize_value(double x, const NormalizationStats& stats);

/// Elements of the dihedral group of the square.
enum class Dihedral : std::uint8_t {
  Identity,
  Rot90,
  Rot180,
  Rot270,
  FlipH,
  FlipV,
  Transpose,
  AntiTranspose,
};

constexpr int kDihedralCount = 8;
Dihedral dihedral_from_index(int i);
Dihedral dihedral_compose(Dihedral first, Dihedral then);
Dihedral dihedral_inverse(Dihedral d);

/// Source coordinate that lands at (x, y) after applying `op` to a raster of
/// the given (pre-transform) size.
std::pair<int, int> dihedral_source(Dihedral op, int x, int y, int src_w, int src_h);

template <class T>
Raster<T> rotate_flip(const Raster<T>& r, Dihedral op) {
  const bool swaps = op == Dihedral::Rot90 || op == Dihedral::Rot270 ||
                     op == Dihedral::Transpose || op == Dihedral::AntiTranspose;
  const bool rotation = op == Dihedral::Rot90 || op == Dihedral::Rot180 || op == Dihedral::Rot270;
  if (rotation && r.width() != r.height())
    throw std::invalid_argument("rotate_flip: rotation needs a square raster");
  const int w = swaps ? r.height() : r.width();
  const int h = swaps ? r.width() : r.height();
  Raster<T> out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      auto [sx, sy] = dihedral_source(op, x, y, r.width(), r.height());
      out(x, y) = r(sx, sy);
    }
  return out;
}

HeightField rotate_flip(const HeightField& h, Dihedral op);
GrayImage rotate_flip(const GrayImage& img, Dihedral op);

/// Crop [x0, x0+w) x [y0, y0+h); the crop must lie inside the raster.
template <class T>
Raster<T> crop(const Raster<T>& r, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || w < 0 || h < 0 || x0 + w > r.width() || y0 + h > r.height())
    throw std::out_of_range("crop: window outside raster");
  Raster<T> out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out(x, y) = r(x0 + x, y0 + y);
  return out;
}

HeightField crop(const HeightField& h, int x0, int y0, int w, int hgt);
GrayImage crop(const GrayImage& img, int x0, int y0, int w, int hgt);

/// Runs fn(row) for every row in [0, rows), spread over hardware threads.
/// Rows are disjoint work units, so results do not depend on scheduling.
void parallel_rows(int rows, const std::function<void(int)>& fn);

}  // namespace resdepth
