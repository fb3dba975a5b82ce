#include "resdepth/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace resdepth {

namespace {

int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

InputStack pad_reflect(const InputStack& s, int w, int h) {
  InputStack out{s.channels, w, h, std::vector<float>(static_cast<std::size_t>(s.channels) * w * h)};
  for (int c = 0; c < s.channels; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(c, x, y) = s.at(c, reflect(x, s.width), reflect(y, s.height));
  return out;
}

std::vector<int> tile_origins(int size, int tile, int step) {
  std::vector<int> o;
  if (size <= tile) return {0};
  for (int p = 0;; p += step) {
    if (p + tile >= size) {
      o.push_back(size - tile);
      break;
    }
    o.push_back(p);
  }
  return o;
}

// Index of the tile whose center is nearest to each coordinate.
std::vector<int> assign_tiles(int size, const std::vector<int>& origins, int tile) {
  std::vector<int> a(size, 0);
  for (int i = 0; i < size; ++i) {
    double best = 1e300;
    for (std::size_t j = 0; j < origins.size(); ++j) {
      const double d = std::abs(i + 0.5 - (origins[j] + 0.5 * tile));
      if (d < best) {
        best = d;
        a[i] = static_cast<int>(j);
      }
    }
  }
  return a;
}

}  // namespace

Raster<float> whole_inference(Unet<float>& net, const InputStack& stack) {
  std::vector<float> x(stack.data.begin(), stack.data.end());
  const auto out = net.forward_head(x, 1, stack.height, stack.width, false);
  Raster<float> r(stack.width, stack.height);
  std::copy(out.begin(), out.end(), r.vec().begin());
  return r;
}

Raster<float> tiled_inference(Unet<float>& net, const InputStack& stack, const TileOptions& opt) {
  const int tile = opt.tile;
  const int div = 1 << net.config().levels;
  if (tile < div || tile % div != 0) throw std::invalid_argument("tiled_inference: tile must be a multiple of 2^levels");
  if (opt.overlap < 0 || 2 * opt.overlap >= tile) throw std::invalid_argument("tiled_inference: overlap too large for tile");
  if (stack.channels != net.config().in_channels) throw std::invalid_argument("tiled_inference: channel mismatch");
  if (opt.batch < 1) throw std::invalid_argument("tiled_inference: batch must be >= 1");
  const int w = stack.width, h = stack.height;
  const int pw = std::max(w, tile), ph = std::max(h, tile);
  const InputStack padded = (pw != w || ph != h) ? pad_reflect(stack, pw, ph) : InputStack{};
  const InputStack& src = (pw != w || ph != h) ? padded : stack;

  const int step = tile - 2 * opt.overlap;
  const auto ox = tile_origins(pw, tile, step), oy = tile_origins(ph, tile, step);
  const auto ax = assign_tiles(pw, ox, tile), ay = assign_tiles(ph, oy, tile);
  const int x_begin = std::clamp(opt.x_begin, 0, w);
  const int x_end = opt.x_end < 0 ? w : std::clamp(opt.x_end, x_begin, w);

  std::vector<std::pair<int, int>> jobs;
  for (std::size_t j = 0; j < oy.size(); ++j)
    for (std::size_t i = 0; i < ox.size(); ++i) {
      bool needed = false;
      for (int x = x_begin; x < x_end && !needed; ++x) needed = ax[x] == static_cast<int>(i);
      if (needed) jobs.emplace_back(static_cast<int>(i), static_cast<int>(j));
    }

  Raster<float> out(w, h, 0.0f);
  const std::size_t plane = static_cast<std::size_t>(tile) * tile;
  for (std::size_t start = 0; start < jobs.size(); start += opt.batch) {
    const std::size_t count = std::min<std::size_t>(opt.batch, jobs.size() - start);
    std::vector<float> x(count * src.channels * plane);
    for (std::size_t k = 0; k < count; ++k) {
      const int x0 = ox[jobs[start + k].first], y0 = oy[jobs[start + k].second];
      for (int c = 0; c < src.channels; ++c)
        for (int y = 0; y < tile; ++y) {
          const float* s = &src.data[(static_cast<std::size_t>(c) * src.height + y0 + y) * src.width + x0];
          std::copy(s, s + tile, &x[(k * src.channels + c) * plane + static_cast<std::size_t>(y) * tile]);
        }
    }
    const auto y_out = net.forward_head(x, static_cast<int>(count), tile, tile, false);
    for (std::size_t k = 0; k < count; ++k) {
      const int ti = jobs[start + k].first, tj = jobs[start + k].second;
      const int x0 = ox[ti], y0 = oy[tj];
      for (int y = y0; y < std::min(y0 + tile, h); ++y) {
        if (ay[y] != tj) continue;
        for (int xx = std::max(x0, x_begin); xx < std::min(x0 + tile, x_end); ++xx)
          if (ax[xx] == ti) out(xx, y) = y_out[k * plane + static_cast<std::size_t>(y - y0) * tile + (xx - x0)];
      }
    }
  }
  return out;
}

HeightField refine_dem(Model& model, const HeightField& dem, const GrayImage& ortho_1,
                       const GrayImage& ortho_2, const TileOptions& opt) {
  const InputStack stack = build_input_stack(dem, ortho_1, ortho_2, model.variant, model.stats);
  const Raster<float> head = tiled_inference(model.net, stack, opt);
  HeightField out = dem;
  const double sd = model.stats.std_height;
  const bool residual = model.net.config().residual;
  const int x_begin = std::clamp(opt.x_begin, 0, dem.width());
  const int x_end = opt.x_end < 0 ? dem.width() : std::clamp(opt.x_end, x_begin, dem.width());
  for (int y = 0; y < dem.height(); ++y)
    for (int x = x_begin; x < x_end; ++x) {
      const double hv = head(x, y);
      if (residual) {
        if (!dem.nodata(x, y)) out(x, y) = dem(x, y) + sd * hv;
      } else {
        out(x, y) = model.stats.mean_height + sd * hv;
        out.nodata(x, y) = 0;
      }
    }
  return out;
}

}  // namespace resdepth
