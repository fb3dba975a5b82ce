#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "resdepth/camera.hpp"
#include "resdepth/checkpoint.hpp"
#include "resdepth/inference.hpp"
#include "resdepth/raster.hpp"
#include "resdepth/unet.hpp"
#include "resdepth/warp.hpp"

namespace resdepth {

// Pair-selection thresholds.
constexpr double kMinIntersectionDeg = 10.0;
constexpr double kMaxIntersectionDeg = 28.0;
constexpr double kMaxOffNadirDeg = 40.0;
constexpr double kTimePeriodDays = 180.0;

/// Among pairs with intersection angle in [10, 28] degrees and both
/// off-nadir angles <= 40 degrees, the pair with the smallest time
/// difference modulo 180 days (distance to the nearest multiple). Ties go to
/// the lexicographically smallest (a, b), a < b. Throws when none qualifies.
std::pair<int, int> select_stereo_pair(const std::vector<AffineCamera>& cams);

/// Time difference folded onto [0, 90] days.
double seasonal_time_difference(double t_a, double t_b);

enum class SplitRole : std::uint8_t { Train, Val, Test };

/// Five vertical stripes; stripe i covers columns [bounds[i], bounds[i+1]).
struct StripeSplit {
  std::vector<int> bounds;
  std::vector<SplitRole> roles;

  static StripeSplit make(int width, int stripes = 5);
  SplitRole role_of_column(int x) const;
  Mask mask(SplitRole role, int height) const;
  /// Maximal runs [begin, end) of consecutive columns with the given role.
  std::vector<std::pair<int, int>> runs(SplitRole role) const;
  /// Column range covered by the role (requires a single run).
  std::pair<int, int> range(SplitRole role) const;
};

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 8;
  double weight_decay = 1e-5;
  int max_steps = 800;
  std::uint64_t seed = 1;
  bool augment_rotations = true;
  bool augment_flips = true;
  Variant variant = Variant::Stereo;
  int eval_every = 100;
  int levels = 5;
  std::vector<int> channel_widths{16, 32, 64, 128, 512};
  int patch_size = 128;

  void validate() const;
  UnetConfig net_config() const;
};

/// Everything training reads, on one DEM grid.
struct TrainingData {
  HeightField initial;
  HeightField target;
  /// Ortho pairs warped with `initial`.
  std::vector<std::pair<GrayImage, GrayImage>> ortho_pairs;
  StripeSplit split;
  NormalizationStats stats;
  /// Cells left out of validation scoring (may be empty).
  Mask exclusion;
};

struct PatchSample {
  InputStack input;
  std::vector<float> target;
  std::vector<std::uint8_t> valid;
  int x0 = 0;
  int y0 = 0;
  int pair = 0;
  Dihedral transform = Dihedral::Identity;
};

/// Input stacks of every ortho pair plus the normalized target, prepared once.
class PatchSource {
 public:
  PatchSource(const TrainingData& data, Variant variant, int patch_size);

  /// Uniform crop lying entirely inside one run of training stripes.
  PatchSample sample(std::mt19937_64& rng, int pair) const;
  PatchSample crop(int x0, int y0, int pair) const;
  int pair_count() const { return static_cast<int>(stacks_.size()); }
  int patch_size() const { return patch_; }

 private:
  std::vector<InputStack> stacks_;
  std::vector<float> target_;
  std::vector<std::uint8_t> valid_;
  std::vector<std::pair<int, int>> runs_;
  int width_ = 0, height_ = 0, patch_ = 0;
};

/// Draws a dihedral transform from the enabled set and applies it to every
/// channel, the target and the validity mask.
PatchSample augment(const PatchSample& s, std::mt19937_64& rng, bool rotations, bool flips);
PatchSample apply_dihedral(const PatchSample& s, Dihedral op);

/// Uniform draw from a pair pool.
int draw_pair(std::mt19937_64& rng, const std::vector<int>& pool);

struct TrainLogEntry {
  int step = 0;
  double loss = 0.0;
  /// NaN on steps without validation.
  double val_mae = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<TrainLogEntry> log;
  int best_step = 0;
  double best_val_mae = 0.0;
  /// MAE of the initial DEM on the validation stripe.
  double initial_val_mae = 0.0;
};

/// Validation-stripe MAE (meters) of a model on one ortho pair.
double validation_mae(Model& model, const TrainingData& data, int pair);

/// Trains on ortho pair 0 and keeps the parameters with the best validation
/// MAE (step 0 included). Throws std::runtime_error if the loss diverges.
TrainResult train(const TrainConfig& cfg, const TrainingData& data);

/// Pairs every sampled patch with a pair drawn uniformly from pair_pool;
/// validation uses val_pair.
TrainResult train_generalized(const TrainConfig& cfg, const TrainingData& data,
                              const std::vector<int>& pair_pool, int val_pair);

std::string log_to_csv(const std::vector<TrainLogEntry>& log);

}  // namespace resdepth
