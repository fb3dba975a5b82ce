#include "resdepth/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "resdepth/metrics.hpp"

namespace resdepth {

double seasonal_time_difference(double t_a, double t_b) {
  const double d = std::fmod(std::abs(t_a - t_b), kTimePeriodDays);
  return std::min(d, kTimePeriodDays - d);
}

std::pair<int, int> select_stereo_pair(const std::vector<AffineCamera>& cams) {
  if (cams.size() < 2) throw std::invalid_argument("select_stereo_pair: need at least two cameras");
  std::pair<int, int> best{-1, -1};
  double best_dt = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < cams.size(); ++a)
    for (std::size_t b = a + 1; b < cams.size(); ++b) {
      if (cams[a].off_nadir_deg > kMaxOffNadirDeg || cams[b].off_nadir_deg > kMaxOffNadirDeg) continue;
      const double ang = intersection_angle_deg(cams[a], cams[b]);
      if (ang < kMinIntersectionDeg || ang > kMaxIntersectionDeg) continue;
      const double dt = seasonal_time_difference(cams[a].timestamp_days, cams[b].timestamp_days);
      if (dt < best_dt) {
        best_dt = dt;
        best = {static_cast<int>(a), static_cast<int>(b)};
      }
    }
  if (best.first < 0)
    throw std::runtime_error("select_stereo_pair: no pair with intersection angle in [10, 28] deg and off-nadir <= 40 deg");
  return best;
}

StripeSplit StripeSplit::make(int width, int stripes) {
  if (stripes != 5) throw std::invalid_argument("StripeSplit: the split uses five stripes");
  if (width < stripes) throw std::invalid_argument("StripeSplit: raster narrower than the stripe count");
  StripeSplit s;
  for (int i = 0; i <= stripes; ++i) s.bounds.push_back(static_cast<int>(static_cast<long>(i) * width / stripes));
  s.roles = {SplitRole::Train, SplitRole::Train, SplitRole::Train, SplitRole::Val, SplitRole::Test};
  return s;
}

SplitRole StripeSplit::role_of_column(int x) const {
  for (std::size_t i = 0; i + 1 < bounds.size(); ++i)
    if (x >= bounds[i] && x < bounds[i + 1]) return roles[i];
  throw std::out_of_range("StripeSplit: column outside the split");
}

Mask StripeSplit::mask(SplitRole role, int height) const {
  Mask m(bounds.back(), height, 0);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < bounds.back(); ++x) m(x, y) = role_of_column(x) == role ? 1 : 0;
  return m;
}

std::vector<std::pair<int, int>> StripeSplit::runs(SplitRole role) const {
  std::vector<std::pair<int, int>> r;
  for (std::size_t i = 0; i < roles.size(); ++i) {
    if (roles[i] != role) continue;
    if (!r.empty() && r.back().second == bounds[i])
      r.back().second = bounds[i + 1];
    else
      r.emplace_back(bounds[i], bounds[i + 1]);
  }
  return r;
}

std::pair<int, int> StripeSplit::range(SplitRole role) const {
  const auto r = runs(role);
  if (r.size() != 1) throw std::logic_error("StripeSplit: role does not form a single run");
  return r.front();
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("TrainConfig: lr must be > 0");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
  if (max_steps < 0) throw std::invalid_argument("TrainConfig: max_steps must be >= 0");
  if (eval_every < 1) throw std::invalid_argument("TrainConfig: eval_every must be >= 1");
  net_config();
}

UnetConfig TrainConfig::net_config() const {
  return UnetConfig::for_variant(variant, channel_widths, levels, patch_size);
}

PatchSource::PatchSource(const TrainingData& data, Variant variant, int patch_size)
    : width_(data.target.width()), height_(data.target.height()), patch_(patch_size) {
  if (!(data.initial.grid == data.target.grid)) throw std::invalid_argument("PatchSource: grid mismatch");
  if (data.ortho_pairs.empty()) throw std::invalid_argument("PatchSource: no ortho pairs");
  if (patch_size > height_) throw std::invalid_argument("PatchSource: patch larger than raster");
  for (const auto& [o1, o2] : data.ortho_pairs)
    stacks_.push_back(build_input_stack(data.initial, o1, o2, variant, data.stats));
  target_.resize(data.target.values.size());
  valid_.resize(target_.size());
  for (std::size_t i = 0; i < target_.size(); ++i) {
    const bool ok = !data.target.nodata[i] && !data.initial.nodata[i];
    valid_[i] = ok ? 1 : 0;
    target_[i] = ok ? static_cast<float>(normalize_value(data.target.values[i], data.stats)) : 0.0f;
  }
  for (auto r : data.split.runs(SplitRole::Train))
    if (r.second - r.first >= patch_size) runs_.push_back(r);
  if (runs_.empty()) throw std::invalid_argument("PatchSource: training stripes narrower than a patch");
}

PatchSample PatchSource::crop(int x0, int y0, int pair) const {
  if (pair < 0 || pair >= pair_count()) throw std::out_of_range("PatchSource: bad pair index");
  if (x0 < 0 || y0 < 0 || x0 + patch_ > width_ || y0 + patch_ > height_)
    throw std::out_of_range("PatchSource: crop outside raster");
  const InputStack& s = stacks_[pair];
  PatchSample p;
  p.x0 = x0;
  p.y0 = y0;
  p.pair = pair;
  p.input = InputStack{s.channels, patch_, patch_, std::vector<float>(static_cast<std::size_t>(s.channels) * patch_ * patch_)};
  p.target.resize(static_cast<std::size_t>(patch_) * patch_);
  p.valid.resize(p.target.size());
  for (int y = 0; y < patch_; ++y) {
    for (int c = 0; c < s.channels; ++c)
      for (int x = 0; x < patch_; ++x) p.input.at(c, x, y) = s.at(c, x0 + x, y0 + y);
    const std::size_t src = static_cast<std::size_t>(y0 + y) * width_ + x0;
    std::copy_n(&target_[src], patch_, &p.target[static_cast<std::size_t>(y) * patch_]);
    std::copy_n(&valid_[src], patch_, &p.valid[static_cast<std::size_t>(y) * patch_]);
  }
  return p;
}

PatchSample PatchSource::sample(std::mt19937_64& rng, int pair) const {
  std::int64_t total = 0;
  for (auto [a, b] : runs_) total += b - a - patch_ + 1;
  std::uniform_int_distribution<std::int64_t> ux(0, total - 1);
  std::uniform_int_distribution<int> uy(0, height_ - patch_);
  std::int64_t k = ux(rng);
  const int y0 = uy(rng);
  for (auto [a, b] : runs_) {
    const std::int64_t n = b - a - patch_ + 1;
    if (k < n) return crop(a + static_cast<int>(k), y0, pair);
    k -= n;
  }
  throw std::logic_error("PatchSource: sampling fell outside the runs");
}

PatchSample apply_dihedral(const PatchSample& s, Dihedral op) {
  PatchSample out = s;
  out.transform = dihedral_compose(s.transform, op);
  const int w = s.input.width, h = s.input.height;
  Raster<float> plane(w, h);
  for (int c = 0; c < s.input.channels; ++c) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) plane(x, y) = s.input.at(c, x, y);
    const auto r = rotate_flip(plane, op);
    out.input.width = r.width();
    out.input.height = r.height();
    for (int y = 0; y < r.height(); ++y)
      for (int x = 0; x < r.width(); ++x) out.input.at(c, x, y) = r(x, y);
  }
  Raster<float> t(w, h);
  std::copy(s.target.begin(), s.target.end(), t.vec().begin());
  out.target = rotate_flip(t, op).vec();
  Mask m(w, h);
  std::copy(s.valid.begin(), s.valid.end(), m.vec().begin());
  out.valid = rotate_flip(m, op).vec();
  return out;
}

PatchSample augment(const PatchSample& s, std::mt19937_64& rng, bool rotations, bool flips) {
  std::vector<Dihedral> ops{Dihedral::Identity};
  if (rotations && flips) {
    ops.clear();
    for (int i = 0; i < kDihedralCount; ++i) ops.push_back(dihedral_from_index(i));
  } else if (rotations) {
    ops.insert(ops.end(), {Dihedral::Rot90, Dihedral::Rot180, Dihedral::Rot270});
  } else if (flips) {
    ops.insert(ops.end(), {Dihedral::FlipH, Dihedral::FlipV});
  }
  if (ops.size() == 1) return s;
  std::uniform_int_distribution<int> u(0, static_cast<int>(ops.size()) - 1);
  return apply_dihedral(s, ops[u(rng)]);
}

int draw_pair(std::mt19937_64& rng, const std::vector<int>& pool) {
  if (pool.empty()) throw std::invalid_argument("draw_pair: empty pool");
  if (pool.size() == 1) return pool.front();
  std::uniform_int_distribution<int> u(0, static_cast<int>(pool.size()) - 1);
  return pool[u(rng)];
}

double validation_mae(Model& model, const TrainingData& data, int pair) {
  const auto [x0, x1] = data.split.range(SplitRole::Val);
  TileOptions opt;
  opt.x_begin = x0;
  opt.x_end = x1;
  const auto& [o1, o2] = data.ortho_pairs.at(pair);
  const HeightField refined = refine_dem(model, data.initial, o1, o2, opt);
  const Mask region = data.split.mask(SplitRole::Val, data.target.height());
  const Mask* excl = data.exclusion.empty() ? nullptr : &data.exclusion;
  return compute_metrics(refined, data.target, nullptr, excl, kDefaultTruncation, &region).overall.mae;
}

TrainResult train_generalized(const TrainConfig& cfg, const TrainingData& data,
                              const std::vector<int>& pair_pool, int val_pair) {
  cfg.validate();
  data.stats.validate();
  for (int p : pair_pool)
    if (p < 0 || p >= static_cast<int>(data.ortho_pairs.size()))
      throw std::out_of_range("train: pair index outside the ortho pair list");
  if (val_pair < 0 || val_pair >= static_cast<int>(data.ortho_pairs.size()))
    throw std::out_of_range("train: validation pair outside the ortho pair list");

  const UnetConfig ncfg = cfg.net_config();
  TrainResult res{Model{Unet<float>(ncfg, cfg.seed), cfg.variant, data.stats}, {}, 0, 0.0, 0.0};
  Unet<float>& net = res.model.net;
  const PatchSource source(data, cfg.variant, cfg.patch_size);
  std::mt19937_64 rng(cfg.seed ^ 0x5eed5eedULL);
  AdamParams ap;
  ap.lr = cfg.lr;
  ap.weight_decay = cfg.weight_decay;
  Adam<float> adam(ap);

  {
    const Mask region = data.split.mask(SplitRole::Val, data.target.height());
    const Mask* excl = data.exclusion.empty() ? nullptr : &data.exclusion;
    res.initial_val_mae = compute_metrics(data.initial, data.target, nullptr, excl, kDefaultTruncation, &region).overall.mae;
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  res.best_val_mae = validation_mae(res.model, data, val_pair);
  res.log.push_back({0, nan, res.best_val_mae});
  std::vector<MatrixR<float>> best_params;
  for (const auto& p : net.params()) best_params.push_back(p.value);

  const int P = cfg.patch_size, C = ncfg.in_channels, B = cfg.batch_size;
  const std::size_t plane = static_cast<std::size_t>(P) * P;
  std::vector<float> x(static_cast<std::size_t>(B) * C * plane), t(B * plane), grad;
  std::vector<std::uint8_t> valid(B * plane);
  for (int step = 1; step <= cfg.max_steps; ++step) {
    for (int b = 0; b < B; ++b) {
      const int pair = draw_pair(rng, pair_pool);
      const PatchSample s = augment(source.sample(rng, pair), rng, cfg.augment_rotations, cfg.augment_flips);
      std::copy(s.input.data.begin(), s.input.data.end(), x.begin() + static_cast<std::ptrdiff_t>(b * C * plane));
      std::copy(s.target.begin(), s.target.end(), t.begin() + static_cast<std::ptrdiff_t>(b * plane));
      std::copy(s.valid.begin(), s.valid.end(), valid.begin() + static_cast<std::ptrdiff_t>(b * plane));
    }
    const auto out = net.forward(x, B, P, P, true);
    const float loss = l1_loss(out, t, valid, &grad);
    if (!std::isfinite(loss))
      throw std::runtime_error("train: loss diverged (non-finite) at step " + std::to_string(step) +
                               ", variant " + variant_name(cfg.variant) + ", lr " + format_number(cfg.lr));
    net.zero_grad();
    net.backward(grad);
    adam.step(net.params());
    TrainLogEntry e{step, loss, nan};
    if (step % cfg.eval_every == 0 || step == cfg.max_steps) {
      e.val_mae = validation_mae(res.model, data, val_pair);
      if (e.val_mae < res.best_val_mae) {
        res.best_val_mae = e.val_mae;
        res.best_step = step;
        for (std::size_t k = 0; k < best_params.size(); ++k) best_params[k] = net.params()[k].value;
      }
    }
    res.log.push_back(e);
  }
  for (std::size_t k = 0; k < best_params.size(); ++k) net.params()[k].value = best_params[k];
  return res;
}

TrainResult train(const TrainConfig& cfg, const TrainingData& data) {
  return train_generalized(cfg, data, {0}, 0);
}

std::string log_to_csv(const std::vector<TrainLogEntry>& log) {
  std::ostringstream os;
  os << "step,loss,val_mae\n";
  for (const auto& e : log)
    os << e.step << ',' << (std::isnan(e.loss) ? "" : format_number(e.loss)) << ','
       << (std::isnan(e.val_mae) ? "" : format_number(e.val_mae)) << '\n';
  return os.str();
}

}  // namespace resdepth
