#include "weakseg/volume.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "weakseg/error.hpp"

namespace weakseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_dims(const Dims3& dims) {
  if (dims.width < 1 || dims.height < 1 || dims.depth < 1) {
    throw Error(ErrorCode::InvalidArgument, "volume dims must all be >= 1");
  }
}

fs::path stem_of(const fs::path& path) {
  const auto ext = path.extension();
  if (ext == ".json" || ext == ".raw") return fs::path(path).replace_extension();
  return path;
}

fs::path with_suffix(const fs::path& stem, const char* suffix) {
  return fs::path(stem.string() + suffix);
}

struct Header {
  Dims3 dims;
  Spacing spacing;
  std::string dtype;
};

Header parse_header(const std::string& text, const std::string& source) {
  try {
    const json j = json::parse(text);
    Header h;
    const auto& d = j.at("dims");
    const auto& s = j.at("spacing");
    if (d.size() != 3 || s.size() != 3) throw Error(ErrorCode::MalformedHeader, "dims/spacing need 3 entries");
    h.dims = {d[0].get<int>(), d[1].get<int>(), d[2].get<int>()};
    h.spacing = {s[0].get<double>(), s[1].get<double>(), s[2].get<double>()};
    h.dtype = j.at("dtype").get<std::string>();
    if (h.dims.width < 1 || h.dims.height < 1 || h.dims.depth < 1) {
      throw Error(ErrorCode::MalformedHeader, "dims must be >= 1");
    }
    if (!(h.spacing.x > 0 && h.spacing.y > 0 && h.spacing.z > 0)) {
      throw Error(ErrorCode::MalformedHeader, "spacing must be > 0");
    }
    return h;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedHeader, source + ": " + e.what());
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Header read_header(const fs::path& stem) {
  const fs::path header_path = with_suffix(stem, ".json");
  return parse_header(read_text(header_path), header_path.string());
}

void write_header(const fs::path& stem, const Dims3& dims, const Spacing& spacing, const char* dtype) {
  const json j = {{"dims", {dims.width, dims.height, dims.depth}},
                  {"spacing", {spacing.x, spacing.y, spacing.z}},
                  {"dtype", dtype}};
  const fs::path header_path = with_suffix(stem, ".json");
  std::ofstream out(header_path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + header_path.string());
  out << j.dump() << '\n';
  if (!out) throw Error(ErrorCode::IoFailure, "write failed: " + header_path.string());
}

std::string read_payload(const fs::path& stem) {
  const fs::path raw_path = with_suffix(stem, ".raw");
  std::ifstream in(raw_path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + raw_path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

void write_payload(const fs::path& stem, const void* data, std::size_t bytes) {
  const fs::path raw_path = with_suffix(stem, ".raw");
  std::ofstream out(raw_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + raw_path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
  if (!out) throw Error(ErrorCode::IoFailure, "write failed: " + raw_path.string());
}

std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xFF00u) | ((v << 8) & 0xFF0000u) | (v << 24);
}

}  // namespace

Volume::Volume(Dims3 dims, Spacing spacing, std::vector<float> voxels)
    : dims_(dims), spacing_(spacing), voxels_(std::move(voxels)) {
  check_dims(dims_);
  if (!(spacing_.x > 0 && spacing_.y > 0 && spacing_.z > 0)) {
    throw Error(ErrorCode::InvalidArgument, "spacing components must be > 0");
  }
  if (voxels_.size() != dims_.voxel_count()) {
    throw Error(ErrorCode::SizeMismatch, "voxel count does not match dims");
  }
  for (float v : voxels_) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteVoxel, "volume contains NaN or Inf");
  }
}

std::span<const float> Volume::slice(int k) const {
  if (k < 0 || k >= dims_.depth) throw Error(ErrorCode::IndexOutOfRange, "slice index out of range");
  return std::span<const float>(voxels_).subspan(static_cast<std::size_t>(k) * dims_.slice_size(),
                                                 dims_.slice_size());
}

LabelVolume::LabelVolume(Dims3 dims) : dims_(dims) {
  check_dims(dims_);
  labels_.assign(dims_.voxel_count(), 0);
}

LabelVolume::LabelVolume(Dims3 dims, std::vector<std::uint8_t> labels)
    : dims_(dims), labels_(std::move(labels)) {
  check_dims(dims_);
  if (labels_.size() != dims_.voxel_count()) {
    throw Error(ErrorCode::SizeMismatch, "label count does not match dims");
  }
  if (std::any_of(labels_.begin(), labels_.end(), [](std::uint8_t v) { return v > 1; })) {
    throw Error(ErrorCode::InvalidArgument, "labels must be 0 or 1");
  }
}

std::span<const std::uint8_t> LabelVolume::slice(int k) const {
  if (k < 0 || k >= dims_.depth) throw Error(ErrorCode::IndexOutOfRange, "slice index out of range");
  return std::span<const std::uint8_t>(labels_).subspan(
      static_cast<std::size_t>(k) * dims_.slice_size(), dims_.slice_size());
}

std::span<std::uint8_t> LabelVolume::slice_mut(int k) {
  if (k < 0 || k >= dims_.depth) throw Error(ErrorCode::IndexOutOfRange, "slice index out of range");
  return std::span<std::uint8_t>(labels_).subspan(static_cast<std::size_t>(k) * dims_.slice_size(),
                                                  dims_.slice_size());
}

std::size_t LabelVolume::count() const noexcept {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), std::uint8_t{1}));
}

Volume decode_volume(const std::string& header_json, std::string_view payload) {
  const Header h = parse_header(header_json, "volume header");
  if (h.dtype != "f32le") throw Error(ErrorCode::MalformedHeader, "expected dtype f32le, got " + h.dtype);
  if (payload.size() != h.dims.voxel_count() * 4) {
    throw Error(ErrorCode::SizeMismatch, "payload has " + std::to_string(payload.size()) +
                                             " bytes, header implies " +
                                             std::to_string(h.dims.voxel_count() * 4));
  }
  std::vector<float> voxels(h.dims.voxel_count());
  std::memcpy(voxels.data(), payload.data(), payload.size());
  if constexpr (std::endian::native == std::endian::big) {
    for (float& v : voxels) v = std::bit_cast<float>(byteswap32(std::bit_cast<std::uint32_t>(v)));
  }
  return Volume(h.dims, h.spacing, std::move(voxels));
}

LabelVolume decode_labels(const Dims3& dims, std::string_view payload) {
  if (payload.size() != dims.voxel_count()) {
    throw Error(ErrorCode::SizeMismatch, "label payload length does not match dims");
  }
  return LabelVolume(dims, std::vector<std::uint8_t>(payload.begin(), payload.end()));
}

std::string volume_header_json(const Volume& volume) {
  const auto& d = volume.dims();
  const auto& s = volume.spacing();
  return json{{"dims", {d.width, d.height, d.depth}}, {"spacing", {s.x, s.y, s.z}}, {"dtype", "f32le"}}.dump();
}

std::string volume_payload(const Volume& volume) {
  const auto voxels = volume.voxels();
  std::string out(voxels.size() * 4, '\0');
  std::memcpy(out.data(), voxels.data(), out.size());
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < out.size(); i += 4) {
      std::swap(out[i], out[i + 3]);
      std::swap(out[i + 1], out[i + 2]);
    }
  }
  return out;
}

Volume load_volume(const fs::path& path) {
  const fs::path stem = stem_of(path);
  const fs::path header_path = with_suffix(stem, ".json");
  return decode_volume(read_text(header_path), read_payload(stem));
}

void save_volume(const Volume& volume, const fs::path& path) {
  const fs::path stem = stem_of(path);
  write_header(stem, volume.dims(), volume.spacing(), "f32le");
  const auto voxels = volume.voxels();
  if constexpr (std::endian::native == std::endian::big) {
    std::vector<std::uint32_t> swapped(voxels.size());
    for (std::size_t i = 0; i < voxels.size(); ++i) {
      swapped[i] = byteswap32(std::bit_cast<std::uint32_t>(voxels[i]));
    }
    write_payload(stem, swapped.data(), swapped.size() * 4);
  } else {
    write_payload(stem, voxels.data(), voxels.size() * 4);
  }
}

LabelVolume load_labels(const fs::path& path) {
  const fs::path stem = stem_of(path);
  const Header h = read_header(stem);
  if (h.dtype != "u8") throw Error(ErrorCode::MalformedHeader, "expected dtype u8, got " + h.dtype);
  const std::string payload = read_payload(stem);
  if (payload.size() != h.dims.voxel_count()) {
    throw Error(ErrorCode::SizeMismatch, "label payload length does not match header dims");
  }
  std::vector<std::uint8_t> labels(payload.begin(), payload.end());
  return LabelVolume(h.dims, std::move(labels));
}

void save_labels(const LabelVolume& labels, const fs::path& path) {
  const fs::path stem = stem_of(path);
  // Label volumes carry no spacing of their own; unit spacing is written.
  write_header(stem, labels.dims(), Spacing{}, "u8");
  write_payload(stem, labels.labels().data(), labels.labels().size());
}

Volume normalize(const Volume& volume) {
  const auto voxels = volume.voxels();
  double sum = 0.0;
  for (float v : voxels) sum += v;
  const double mean = sum / static_cast<double>(voxels.size());
  double sq = 0.0;
  for (float v : voxels) {
    const double d = v - mean;
    sq += d * d;
  }
  const double stddev = std::sqrt(sq / static_cast<double>(voxels.size()));
  std::vector<float> out(voxels.size(), 0.0f);
  if (stddev >= 1e-8) {
    for (std::size_t i = 0; i < voxels.size(); ++i) {
      out[i] = static_cast<float>((voxels[i] - mean) / stddev);
    }
  }
  return Volume(volume.dims(), volume.spacing(), std::move(out));
}

SliceStack3 slice_stack(const Volume& volume, int k) {
  const Dims3& d = volume.dims();
  if (k < 0 || k >= d.depth) throw Error(ErrorCode::IndexOutOfRange, "slice index out of range");
  SliceStack3 stack;
  stack.width = d.width;
  stack.height = d.height;
  stack.center_index = k;
  const int sources[3] = {std::max(k - 1, 0), k, std::min(k + 1, d.depth - 1)};
  for (int c = 0; c < 3; ++c) {
    const auto s = volume.slice(sources[c]);
    stack.channels[c].assign(s.begin(), s.end());
  }
  return stack;
}

FloatPlane extract_slice(const Volume& volume, int k) {
  const auto s = volume.slice(k);
  FloatPlane plane;
  plane.width = volume.dims().width;
  plane.height = volume.dims().height;
  plane.data.assign(s.begin(), s.end());
  return plane;
}

Mask extract_mask(const LabelVolume& labels, int k) {
  const auto s = labels.slice(k);
  Mask mask;
  mask.width = labels.dims().width;
  mask.height = labels.dims().height;
  mask.data.assign(s.begin(), s.end());
  return mask;
}

}  // namespace weakseg
