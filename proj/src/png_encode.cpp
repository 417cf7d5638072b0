#include "weakseg/png_encode.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>

#include "weakseg/error.hpp"

namespace weakseg {

Plane<std::uint8_t> window_to_u8(const FloatPlane& plane) {
  Plane<std::uint8_t> out(plane.width, plane.height);
  if (plane.data.empty()) return out;
  const auto [lo, hi] = std::minmax_element(plane.data.begin(), plane.data.end());
  const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
  if (range <= 0.0) return out;
  for (std::size_t i = 0; i < plane.data.size(); ++i) {
    const double v = (plane.data[i] - *lo) / range * 255.0;
    out.data[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  }
  return out;
}

namespace {

void append_bytes(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

}  // namespace

std::vector<std::uint8_t> encode_png_gray8(const Plane<std::uint8_t>& image) {
  if (image.width < 1 || image.height < 1) throw Error(ErrorCode::InvalidArgument, "empty image");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw Error(ErrorCode::IoFailure, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> bytes;
  if (info == nullptr || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::IoFailure, "PNG encoding failed");
  }
  png_set_write_fn(png, &bytes, append_bytes, nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(image.data.data() + static_cast<std::size_t>(y) * image.width));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return bytes;
}

}  // namespace weakseg
