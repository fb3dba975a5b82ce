#pragma once

#include <string>
#include <string_view>

namespace resdepth {

/// Input-stack layouts. Iterated refinement reuses Stereo.
enum class Variant { Stereo, Mono, Zero, UnetStereo };

int variant_channels(Variant v);
/// True when the stack carries the initial DEM, i.e. the net is residual.
bool variant_has_dem(Variant v);
std::string variant_name(Variant v);
/// Accepts "stereo", "mono", "zero", "unet_stereo" (case-insensitive).
Variant parse_variant(std::string_view s);

}  // namespace resdepth
