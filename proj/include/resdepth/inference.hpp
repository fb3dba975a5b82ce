#pragma once

#include <vector>

#include "resdepth/checkpoint.hpp"
#include "resdepth/raster.hpp"
#include "resdepth/unet.hpp"
#include "resdepth/warp.hpp"

namespace resdepth {

constexpr int kDefaultTile = 128;
constexpr int kDefaultOverlap = 16;

struct TileOptions {
  int tile = kDefaultTile;
  int overlap = kDefaultOverlap;
  /// Tiles evaluated per forward call.
  int batch = 4;
  /// Only columns [x_begin, x_end) are needed; x_end < 0 means the full width.
  int x_begin = 0;
  int x_end = -1;
};

/// Head output of the network over a full stack, one eval-mode forward per
/// tile. Each cell is taken from the tile whose center is nearest, so only
/// tile centers (tile - 2 * overlap wide) are used away from the raster
/// border. Stacks smaller than a tile are reflect-padded to one tile and
/// cropped back. Columns outside the requested range are left at 0.
Raster<float> tiled_inference(Unet<float>& net, const InputStack& stack, const TileOptions& opt = {});

/// Single forward over the whole stack (dimensions must be multiples of
/// 2^levels).
Raster<float> whole_inference(Unet<float>& net, const InputStack& stack);

/// Applies a trained model: residual models return dem + std * head
/// (nodata preserved), the others mean + std * head.
HeightField refine_dem(Model& model, const HeightField& dem, const GrayImage& ortho_1,
                       const GrayImage& ortho_2, const TileOptions& opt = {});

}  // namespace resdepth
