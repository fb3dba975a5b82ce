#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "resdepth/raster.hpp"

namespace resdepth {

/// Value written to .pfm files for nodata / invalid cells.
constexpr float kPfmNodata = -1e30f;

/// Single-channel portable float map. Rows are stored south to north, which
/// matches the in-memory row order. A negative scale marks little-endian
/// payload; both byte orders are accepted on read. Values at or below
/// kPfmNodata/2 read back as masked.
struct FloatRaster {
  Raster<float> values;
  Mask masked;
};

void write_pfm(const std::string& path, const FloatRaster& r, bool big_endian = false);
FloatRaster read_pfm(const std::string& path);
std::vector<std::uint8_t> encode_pfm(const FloatRaster& r, bool big_endian = false);
FloatRaster decode_pfm(const std::vector<std::uint8_t>& bytes);

/// Height fields also get a "<path>.geo.json" sidecar carrying the grid.
void write_pfm(const std::string& path, const HeightField& h);
HeightField read_height_pfm(const std::string& path);
void write_pfm(const std::string& path, const GrayImage& img);
GrayImage read_gray_pfm(const std::string& path);

/// 8-bit exports for inspection; north is up.
void write_pgm(const std::string& path, const Raster<std::uint8_t>& img);
Raster<std::uint8_t> read_pgm(const std::string& path);
/// Mask from a .pgm (nonzero set) or a .pfm (nonzero, unmasked set).
Mask read_mask(const std::string& path);
void write_png_gray(const std::string& path, const Raster<std::uint8_t>& img);
void write_png_rgb(const std::string& path, int width, int height,
                   const std::vector<std::uint8_t>& rgb);

Raster<std::uint8_t> to_gray8(const GrayImage& img);
Raster<std::uint8_t> mask_to_gray8(const Mask& m);

/// Blue (min) to red (max) linear ramp; nodata is black.
void write_height_png(const std::string& path, const HeightField& h);
void write_height_png(const std::string& path, const HeightField& h, double lo, double hi);

}  // namespace resdepth
