#pragma once

#include <cstdint>
#include <vector>

#include "weakseg/volume.hpp"

namespace weakseg {

// Min-max window to 0..255; a constant plane maps to 0.
Plane<std::uint8_t> window_to_u8(const FloatPlane& plane);

// 8-bit grayscale PNG file bytes.
std::vector<std::uint8_t> encode_png_gray8(const Plane<std::uint8_t>& image);

}  // namespace weakseg
