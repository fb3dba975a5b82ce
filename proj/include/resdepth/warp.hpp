#pragma once

#include <vector>

#include "resdepth/camera.hpp"
#include "resdepth/raster.hpp"
#include "resdepth/variant.hpp"

namespace resdepth {

/// Rewarps an image onto the DEM grid: each cell center (X, Y, h) is
/// projected into the camera and bilinearly sampled. There is no visibility
/// test, so cells hidden from the camera receive displaced copies of the
/// texture that occludes them. Nodata cells and samples outside the image
/// are invalid with value 0.
GrayImage ortho_rectify(const GrayImage& img, const AffineCamera& cam, const HeightField& dem);

/// Channel-major float stack (C x H x W) on the DEM grid.
struct InputStack {
  int channels = 0;
  int width = 0;
  int height = 0;
  std::vector<float> data;

  float& at(int c, int x, int y) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int x, int y) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
};

/// Stereo: [dem, ortho_1, ortho_2]; Mono: [dem, ortho_1]; Zero: [dem];
/// UnetStereo: [ortho_1, ortho_2]. The DEM channel is normalized with
/// `stats` (nodata becomes 0). Each ortho is standardized by the mean and
/// std of its own valid pixels; invalid pixels become 0.
InputStack build_input_stack(const HeightField& dem, const GrayImage& ortho_1,
                             const GrayImage& ortho_2, Variant variant,
                             const NormalizationStats& stats);

/// |ortho_1 - ortho_2|, valid where both inputs are.
GrayImage photoconsistency_map(const GrayImage& ortho_1, const GrayImage& ortho_2);

}  // namespace resdepth
