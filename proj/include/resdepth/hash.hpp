#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "resdepth/raster.hpp"

namespace resdepth {

/// Lowercase hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(const std::string& text);
std::string sha256_file(const std::string& path);

/// Hash of grid geometry, values and nodata mask.
std::string content_hash(const HeightField& h);
std::string content_hash(const GrayImage& img);

}  // namespace resdepth
