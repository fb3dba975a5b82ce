#include "resdepth/warp.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace resdepth {

GrayImage ortho_rectify(const GrayImage& img, const AffineCamera& cam, const HeightField& dem) {
  const GridGeometry& g = dem.grid;
  GrayImage out(g.width, g.height, 0.0);
  out.valid = Mask(g.width, g.height, 0);
  parallel_rows(g.height, [&](int y) {
    for (int x = 0; x < g.width; ++x) {
      if (dem.nodata(x, y)) continue;
      auto [wx, wy] = g.cell_to_world(x, y);
      const Eigen::Vector2d p = cam.project(Eigen::Vector3d(wx, wy, dem(x, y)));
      if (auto s = bilinear_sample(img, p.x(), p.y())) {
        out(x, y) = *s;
        out.valid(x, y) = 1;
      }
    }
  });
  return out;
}

namespace {

std::pair<double, double> ortho_moments(const GrayImage& o) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < o.values.size(); ++i)
    if (o.valid[i]) {
      sum += o.values[i];
      ++n;
    }
  if (n == 0) return {0.0, 1.0};
  const double mean = sum / static_cast<double>(n);
  for (std::size_t i = 0; i < o.values.size(); ++i)
    if (o.valid[i]) sq += (o.values[i] - mean) * (o.values[i] - mean);
  const double sd = std::sqrt(sq / static_cast<double>(n));
  return {mean, sd > 1e-12 ? sd : 1.0};
}

}  // namespace

InputStack build_input_stack(const HeightField& dem, const GrayImage& ortho_1,
                             const GrayImage& ortho_2, Variant variant,
                             const NormalizationStats& stats) {
  const int w = dem.width(), h = dem.height();
  const bool need_1 = variant != Variant::Zero;
  const bool need_2 = variant == Variant::Stereo || variant == Variant::UnetStereo;
  if ((need_1 && !ortho_1.values.same_shape(w, h)) || (need_2 && !ortho_2.values.same_shape(w, h)))
    throw std::invalid_argument("build_input_stack: rasters are not on the DEM grid");
  InputStack s;
  s.channels = variant_channels(variant);
  s.width = w;
  s.height = h;
  s.data.assign(static_cast<std::size_t>(s.channels) * w * h, 0.0f);
  int c = 0;
  if (variant_has_dem(variant)) {
    stats.validate();
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (!dem.nodata(x, y)) s.at(c, x, y) = static_cast<float>(normalize_value(dem(x, y), stats));
    ++c;
  }
  for (const GrayImage* o : {need_1 ? &ortho_1 : nullptr, need_2 ? &ortho_2 : nullptr}) {
    if (!o) continue;
    const auto [mean, sd] = ortho_moments(*o);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (o->valid(x, y)) s.at(c, x, y) = static_cast<float>(((*o)(x, y) - mean) / sd);
    ++c;
  }
  return s;
}

GrayImage photoconsistency_map(const GrayImage& ortho_1, const GrayImage& ortho_2) {
  if (!ortho_1.values.same_shape(ortho_2.values))
    throw std::invalid_argument("photoconsistency_map: size mismatch");
  GrayImage out(ortho_1.width(), ortho_1.height(), 0.0);
  out.valid = Mask(out.width(), out.height(), 0);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    if (!ortho_1.valid[i] || !ortho_2.valid[i]) continue;
    out.values[i] = std::abs(ortho_1.values[i] - ortho_2.values[i]);
    out.valid[i] = 1;
  }
  return out;
}

}  // namespace resdepth
