#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "resdepth/raster.hpp"
#include "resdepth/unet.hpp"
#include "resdepth/variant.hpp"

namespace resdepth {

// Layout (all integers little-endian):
//   "RDCK"  u32 version (1)
//   u32 levels, u32 in_channels, u8 residual, u32 patch_size,
//   u32 width count, u32 widths[], u8 variant,
//   u8 normalization mode, f64 mean, f64 std, f64 baseline
//   u32 tensor count, then per tensor:
//     u32 name length, name bytes, u32 rank, u32 dims[], f32 data[]
// Tensor data is row-major over dims.
constexpr std::uint32_t kCheckpointVersion = 1;

struct Model {
  Unet<float> net;
  Variant variant;
  NormalizationStats stats;
};

std::vector<std::uint8_t> encode_checkpoint(const Unet<float>& net, Variant variant,
                                            const NormalizationStats& stats);
Model decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::string& path, const Unet<float>& net, Variant variant,
                     const NormalizationStats& stats);
Model load_checkpoint(const std::string& path);

}  // namespace resdepth
