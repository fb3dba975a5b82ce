#pragma once

#include <cstdint>
#include <vector>

#include "resdepth/camera.hpp"
#include "resdepth/raster.hpp"
#include "resdepth/scene.hpp"

namespace resdepth {

/// Matching costs for disparities d_min..d_max (inclusive). Left pixel x
/// corresponds to right pixel x - d.
class CostVolume {
 public:
  CostVolume() = default;
  CostVolume(int width, int height, int d_min, int d_max, float fill = 0.0f);

  int width() const { return width_; }
  int height() const { return height_; }
  int d_min() const { return d_min_; }
  int d_max() const { return d_max_; }
  int disparities() const { return d_max_ - d_min_ + 1; }

  float& at(int x, int y, int d) { return costs_[offset(x, y) + (d - d_min_)]; }
  float at(int x, int y, int d) const { return costs_[offset(x, y) + (d - d_min_)]; }
  /// Costs of pixel (x, y) for all disparities, ascending.
  float* pixel(int x, int y) { return costs_.data() + offset(x, y); }
  const float* pixel(int x, int y) const { return costs_.data() + offset(x, y); }

  std::vector<float>& costs() { return costs_; }
  const std::vector<float>& costs() const { return costs_; }

 private:
  std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * width_ + x) * static_cast<std::size_t>(disparities());
  }

  int width_ = 0, height_ = 0, d_min_ = 0, d_max_ = 1;
  std::vector<float> costs_;
};

struct SgmParams {
  /// Odd side length of the census window.
  int census_window = 5;
  float p1 = 2.0f;
  float p2 = 24.0f;
  /// 4 (horizontal and vertical) or 8 (plus diagonals).
  int path_count = 8;
  double lr_threshold = 1.0;
  /// Gauss-Newton steps of intensity-based sub-pixel refinement; 0 keeps
  /// the parabola estimate.
  int subpixel_iterations = 3;

  void validate() const;
};

/// Census signature of every pixel (bit set where neighbour < center);
/// window samples outside the image use the nearest border pixel.
Raster<std::uint64_t> census_transform(const GrayImage& img, int window);

/// Hamming distance between census signatures per candidate disparity. Right
/// pixels outside the image cost the full signature length.
CostVolume census_cost(const GrayImage& left, const GrayImage& right, int d_min, int d_max,
                       int window = 5);

/// Sums the standard per-path dynamic program over path_count directions.
CostVolume sgm_aggregate(const CostVolume& cv, const SgmParams& p);

/// Winner-take-all with parabola refinement of the three costs around the
/// minimum. Ties go to the smaller disparity; the offset is clamped to
/// [-0.5, 0.5] and omitted at the ends of the range.
Raster<double> wta_subpixel(const CostVolume& cv);

/// Right-view disparities from the same volume, signed so that right pixel x
/// corresponds to left pixel x - d_R (so d_R = -d_L for a consistent match).
Raster<double> wta_subpixel_right(const CostVolume& cv);

/// Sub-pixel offset of the parabola through (c_minus, c0, c_plus).
double parabola_offset(double c_minus, double c0, double c_plus);

/// Refines left disparities on the images: Gauss-Newton on the zero-mean
/// sum of squared differences over a (2 radius + 1)^2 window, the right image
/// sampled with a cubic along the row. A pixel keeps its input value when
/// the window leaves the image or touches invalid pixels, the window has no
/// gradient, or the estimate moves more than 1 px.
Raster<double> refine_subpixel(const GrayImage& left, const GrayImage& right, const Raster<double>& disparity,
                               int radius, int iterations);

struct CheckedDisparity {
  Raster<double> disparity;
  /// Cells rejected by the consistency check, before filling.
  Mask invalid;
};

/// Left-right consistency: invalidates |d_L(x) + d_R(x - d_L(x))| > threshold
/// and fills each invalid run by linear interpolation between the nearest
/// valid disparities on the same row (copying the one side that exists).
CheckedDisparity lr_check(const Raster<double>& d_left, const Raster<double>& d_right,
                          double threshold);

/// height = alpha * disparity + beta.
struct DisparityToHeight {
  double alpha = 0.0;
  double beta = 0.0;
  double height(double d) const { return alpha * d + beta; }
  double disparity(double h) const { return alpha != 0.0 ? (h - beta) / alpha : 0.0; }
};

/// Closed-form disparity-to-height map of a rectified pair. Throws when the
/// two cameras do not share an epipolar frame. Identical rays give alpha = 0
/// and beta = reference_height.
DisparityToHeight pair_coefficients(const AffineCamera& left, const AffineCamera& right,
                                    double reference_height = 0.0);

struct EpipolarPair {
  GrayImage left;
  GrayImage right;
  DisparityToHeight coeffs;
  AffineCamera left_camera;
  AffineCamera right_camera;
};

EpipolarPair epipolar_pair(const SceneTruth& scene, const AffineCamera& left,
                           const AffineCamera& right, const RenderOptions& left_opts = {},
                           const RenderOptions& right_opts = {}, double reference_height = 0.0);

/// Integer disparity range covering heights [z_lo, z_hi] plus a margin.
std::pair<int, int> disparity_range(const DisparityToHeight& coeffs, double z_lo, double z_hi,
                                    int margin = 2);

/// Converts left-view disparities to heights and resamples them onto the
/// target grid: sub-pixel splatting, per-cell median, holes filled by the
/// median of valid 3x3 neighbours until the raster is dense.
HeightField disparities_to_dem(const Raster<double>& disparity, const Mask* invalid,
                               const DisparityToHeight& coeffs, const AffineCamera& left_camera,
                               const GridGeometry& target);

/// Median over a kernel x kernel window with replicated borders; nodata
/// cells are skipped and even counts average the two middle values.
HeightField median_filter(const HeightField& dem, int kernel = 5);

struct NoiseSpec {
  double blur_sigma_cells = 0.0;
  double speckle_sigma = 0.0;
  int blob_count = 0;
  double blob_amplitude = 0.0;
  double blob_radius_cells = 8.0;
};

/// Deterministic stand-in for matcher noise: Gaussian blur, additive
/// speckle and sparse Gaussian-shaped outlier blobs.
HeightField degrade_truth(const HeightField& target, const NoiseSpec& noise, std::uint64_t seed);

/// Full matcher: census, aggregation, both-view WTA, sub-pixel refinement of
/// the left view, consistency check.
struct MatchResult {
  Raster<double> disparity;
  Mask invalid;
};
MatchResult match_pair(const GrayImage& left, const GrayImage& right, int d_min, int d_max,
                       const SgmParams& p);

}  // namespace resdepth
