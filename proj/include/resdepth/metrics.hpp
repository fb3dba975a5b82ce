#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "resdepth/raster.hpp"

namespace resdepth {

struct ClassMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  double medae = 0.0;
  std::int64_t evaluated = 0;
  /// False when no cell of the class survived masking and truncation.
  bool defined = false;
};

struct MetricsReport {
  ClassMetrics overall;
  ClassMetrics buildings;
  ClassMetrics terrain;
  /// Overall accounting: evaluated + truncated + excluded == total.
  std::int64_t total = 0;
  std::int64_t truncated = 0;
  std::int64_t excluded = 0;
  double truncation_threshold = 20.0;
};

constexpr double kDefaultTruncation = 20.0;
constexpr int kBuildingDilation = 2;

/// Residuals r = pred - truth. Cells outside `region` are ignored entirely;
/// nodata cells and exclusion-mask cells count as excluded; |r| > trunc
/// counts as truncated and is dropped from every class. Buildings use the
/// building mask dilated by `dilation` cells; terrain is everything else.
/// Null masks mean "none" (region: whole raster).
MetricsReport compute_metrics(const HeightField& pred, const HeightField& truth,
                              const Mask* building_mask, const Mask* exclusion_mask,
                              double trunc = kDefaultTruncation, const Mask* region = nullptr,
                              int dilation = kBuildingDilation);

/// Dilation with a (2r+1) x (2r+1) square.
Mask dilate_mask(const Mask& mask, int radius = kBuildingDilation);

/// Shortest decimal string that reads back to the same double.
std::string format_number(double v);

/// CSV with one row per named report: method, then MAE/RMSE/MedAE for
/// overall, buildings and terrain, then evaluated and truncated counts.
/// Undefined classes print "NA".
std::string emit_table(const std::vector<std::pair<std::string, MetricsReport>>& reports);

/// Residual histograms (overall, buildings, terrain) over [-trunc, trunc]
/// as stacked bar charts.
void write_residual_histogram(const std::string& path, const HeightField& pred,
                              const HeightField& truth, const Mask* building_mask,
                              const Mask* exclusion_mask, double trunc = kDefaultTruncation,
                              const Mask* region = nullptr);

}  // namespace resdepth
