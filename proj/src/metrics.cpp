#include "resdepth/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "resdepth/raster_io.hpp"

namespace resdepth {

Mask dilate_mask(const Mask& mask, int radius) {
  if (radius < 0) throw std::invalid_argument("dilate_mask: negative radius");
  const int w = mask.width(), h = mask.height();
  Mask tmp(w, h, 0), out(w, h, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!mask(x, y)) continue;
      for (int sx = std::max(0, x - radius); sx <= std::min(w - 1, x + radius); ++sx) tmp(sx, y) = 1;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!tmp(x, y)) continue;
      for (int sy = std::max(0, y - radius); sy <= std::min(h - 1, y + radius); ++sy) out(x, sy) = 1;
    }
  return out;
}

namespace {

ClassMetrics summarize(std::vector<double>& abs_res) {
  ClassMetrics m;
  m.evaluated = static_cast<std::int64_t>(abs_res.size());
  if (abs_res.empty()) return m;
  m.defined = true;
  double s = 0.0, s2 = 0.0;
  for (double a : abs_res) {
    s += a;
    s2 += a * a;
  }
  const double n = static_cast<double>(abs_res.size());
  m.mae = s / n;
  m.rmse = std::sqrt(s2 / n);
  // lower median for even counts
  const std::size_t mid = (abs_res.size() - 1) / 2;
  std::nth_element(abs_res.begin(), abs_res.begin() + mid, abs_res.end());
  m.medae = abs_res[mid];
  return m;
}

void check_shape(const Mask* m, int w, int h, const char* what) {
  if (m && !m->same_shape(w, h)) throw std::invalid_argument(std::string("compute_metrics: ") + what + " size mismatch");
}

template <class Fn>
void classify(const HeightField& pred, const HeightField& truth, const Mask* building_mask,
              const Mask* exclusion_mask, double trunc, const Mask* region, int dilation, Fn&& fn) {
  if (!(pred.grid == truth.grid)) throw std::invalid_argument("compute_metrics: grids differ");
  if (!(trunc > 0.0)) throw std::invalid_argument("compute_metrics: truncation must be positive");
  const int w = truth.width(), h = truth.height();
  check_shape(building_mask, w, h, "building mask");
  check_shape(exclusion_mask, w, h, "exclusion mask");
  check_shape(region, w, h, "region");
  const Mask dilated = building_mask ? dilate_mask(*building_mask, dilation) : Mask(w, h, 0);
  for (std::size_t i = 0; i < truth.values.size(); ++i) {
    if (region && !(*region)[i]) continue;
    if (pred.nodata[i] || truth.nodata[i] || (exclusion_mask && (*exclusion_mask)[i])) {
      fn(i, 0.0, 0);
      continue;
    }
    const double r = pred.values[i] - truth.values[i];
    if (!(std::abs(r) <= trunc)) {
      fn(i, r, 1);
      continue;
    }
    fn(i, r, dilated[i] ? 2 : 3);
  }
}

}  // namespace

MetricsReport compute_metrics(const HeightField& pred, const HeightField& truth,
                              const Mask* building_mask, const Mask* exclusion_mask, double trunc,
                              const Mask* region, int dilation) {
  MetricsReport rep;
  rep.truncation_threshold = trunc;
  std::vector<double> all, bld, ter;
  classify(pred, truth, building_mask, exclusion_mask, trunc, region, dilation,
           [&](std::size_t, double r, int kind) {
             ++rep.total;
             if (kind == 0) {
               ++rep.excluded;
             } else if (kind == 1) {
               ++rep.truncated;
             } else {
               all.push_back(std::abs(r));
               (kind == 2 ? bld : ter).push_back(std::abs(r));
             }
           });
  rep.overall = summarize(all);
  rep.buildings = summarize(bld);
  rep.terrain = summarize(ter);
  return rep;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string emit_table(const std::vector<std::pair<std::string, MetricsReport>>& reports) {
  std::ostringstream os;
  os << "method";
  for (const char* c : {"overall", "buildings", "terrain"})
    for (const char* m : {"mae", "rmse", "medae"}) os << ',' << c << '_' << m;
  os << ",evaluated,truncated\n";
  for (const auto& [name, r] : reports) {
    if (name.find_first_of(",\"\n") != std::string::npos)
      throw std::invalid_argument("emit_table: method names must not contain commas, quotes or newlines");
    os << name;
    for (const ClassMetrics* c : {&r.overall, &r.buildings, &r.terrain}) {
      if (!c->defined) {
        os << ",NA,NA,NA";
        continue;
      }
      os << ',' << format_number(c->mae) << ',' << format_number(c->rmse) << ',' << format_number(c->medae);
    }
    os << ',' << r.overall.evaluated << ',' << r.truncated << '\n';
  }
  return os.str();
}

void write_residual_histogram(const std::string& path, const HeightField& pred,
                              const HeightField& truth, const Mask* building_mask,
                              const Mask* exclusion_mask, double trunc, const Mask* region) {
  constexpr int kBins = 80, kBarW = 4, kRowH = 100, kGap = 8;
  std::vector<std::vector<std::int64_t>> hist(3, std::vector<std::int64_t>(kBins, 0));
  classify(pred, truth, building_mask, exclusion_mask, trunc, region, kBuildingDilation,
           [&](std::size_t, double r, int kind) {
             if (kind < 2) return;
             const int b = std::clamp(static_cast<int>((r + trunc) / (2.0 * trunc) * kBins), 0, kBins - 1);
             ++hist[0][b];
             ++hist[kind == 2 ? 1 : 2][b];
           });
  const int w = kBins * kBarW, h = 3 * kRowH + 2 * kGap;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3, 255);
  const std::uint8_t colors[3][3] = {{60, 60, 60}, {200, 60, 40}, {40, 120, 60}};
  for (int k = 0; k < 3; ++k) {
    const std::int64_t peak = std::max<std::int64_t>(1, *std::max_element(hist[k].begin(), hist[k].end()));
    const int top = k * (kRowH + kGap);
    for (int b = 0; b < kBins; ++b) {
      const int bar = static_cast<int>(std::lround(static_cast<double>(hist[k][b]) / peak * (kRowH - 1)));
      for (int yy = kRowH - bar; yy < kRowH; ++yy)
        for (int xx = b * kBarW; xx < (b + 1) * kBarW - 1; ++xx) {
          // PNG rows are written top-down from the last raster row.
          const int row = h - 1 - (top + yy);
          std::uint8_t* px = &rgb[(static_cast<std::size_t>(row) * w + xx) * 3];
          std::copy(colors[k], colors[k] + 3, px);
        }
    }
  }
  write_png_rgb(path, w, h, rgb);
}

}  // namespace resdepth
