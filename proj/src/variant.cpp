#include "resdepth/variant.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace resdepth {

int variant_channels(Variant v) {
  switch (v) {
    case Variant::Stereo: return 3;
    case Variant::Mono: return 2;
    case Variant::Zero: return 1;
    case Variant::UnetStereo: return 2;
  }
  throw std::invalid_argument("unknown variant");
}

bool variant_has_dem(Variant v) { return v != Variant::UnetStereo; }

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Stereo: return "stereo";
    case Variant::Mono: return "mono";
    case Variant::Zero: return "zero";
    case Variant::UnetStereo: return "unet_stereo";
  }
  throw std::invalid_argument("unknown variant");
}

Variant parse_variant(std::string_view s) {
  std::string k(s);
  std::transform(k.begin(), k.end(), k.begin(), [](unsigned char c) { return std::tolower(c); });
  std::replace(k.begin(), k.end(), '-', '_');
  if (k == "stereo") return Variant::Stereo;
  if (k == "mono") return Variant::Mono;
  if (k == "zero" || k == "0") return Variant::Zero;
  if (k == "unet_stereo" || k == "unetstereo") return Variant::UnetStereo;
  throw std::invalid_argument("unknown variant '" + std::string(s) + "'");
}

}  // namespace resdepth
