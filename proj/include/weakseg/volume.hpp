#pragma once
// Volume data model, platform file format and intensity preprocessing.
//
// File format: `<name>.json` header
//   {"dims":[W,H,D],"spacing":[sx,sy,sz],"dtype":"f32le"|"u8"}
// plus `<name>.raw`, a dense x-fastest payload (then y, then z).

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace weakseg {

struct Dims3 {
  int width = 0;
  int height = 0;
  int depth = 0;

  std::size_t slice_size() const noexcept {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  std::size_t voxel_count() const noexcept { return slice_size() * static_cast<std::size_t>(depth); }
  friend bool operator==(const Dims3&, const Dims3&) = default;
};

struct Spacing {
  double x = 1.0;
  double y = 1.0;
  double z = 1.0;
  friend bool operator==(const Spacing&, const Spacing&) = default;
};

// 2-D planes used for slices, masks and label maps.
template <class T>
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Plane() = default;
  Plane(int w, int h, T fill = T{})
      : width(w), height(h), data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  std::size_t size() const noexcept { return data.size(); }
  T& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  const T& at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  friend bool operator==(const Plane&, const Plane&) = default;
};

using FloatPlane = Plane<float>;
using Mask = Plane<std::uint8_t>;

// Dense 32-bit intensity volume. Immutable after construction.
class Volume {
 public:
  Volume() = default;
  // Throws InvalidArgument on bad dims/spacing/length and NonFiniteVoxel on NaN/Inf.
  Volume(Dims3 dims, Spacing spacing, std::vector<float> voxels);

  const Dims3& dims() const noexcept { return dims_; }
  const Spacing& spacing() const noexcept { return spacing_; }
  std::span<const float> voxels() const noexcept { return voxels_; }
  std::span<const float> slice(int k) const;
  float at(int x, int y, int z) const {
    return voxels_[static_cast<std::size_t>(z) * dims_.slice_size() +
                   static_cast<std::size_t>(y) * dims_.width + x];
  }

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  Dims3 dims_;
  Spacing spacing_;
  std::vector<float> voxels_;
};

// Binary object labels (0 background, 1 object) on a volume grid.
class LabelVolume {
 public:
  LabelVolume() = default;
  explicit LabelVolume(Dims3 dims);
  // Throws InvalidArgument on bad dims/length or values outside {0,1}.
  LabelVolume(Dims3 dims, std::vector<std::uint8_t> labels);

  const Dims3& dims() const noexcept { return dims_; }
  std::span<const std::uint8_t> labels() const noexcept { return labels_; }
  std::span<std::uint8_t> labels_mut() noexcept { return labels_; }
  std::span<const std::uint8_t> slice(int k) const;
  std::span<std::uint8_t> slice_mut(int k);
  std::uint8_t at(int x, int y, int z) const {
    return labels_[static_cast<std::size_t>(z) * dims_.slice_size() +
                   static_cast<std::size_t>(y) * dims_.width + x];
  }
  std::size_t count() const noexcept;

  friend bool operator==(const LabelVolume&, const LabelVolume&) = default;

 private:
  Dims3 dims_;
  std::vector<std::uint8_t> labels_;
};

// Three adjacent slices (k-1, k, k+1) with edge replication at the volume boundary.
struct SliceStack3 {
  int width = 0;
  int height = 0;
  int center_index = 0;
  std::array<std::vector<float>, 3> channels;
};

// `path` may name the header, the payload, or the shared stem.
Volume load_volume(const std::filesystem::path& path);
void save_volume(const Volume& volume, const std::filesystem::path& path);
LabelVolume load_labels(const std::filesystem::path& path);
void save_labels(const LabelVolume& labels, const std::filesystem::path& path);

// In-memory forms of the same format (used for HTTP uploads).
Volume decode_volume(const std::string& header_json, std::string_view payload);
LabelVolume decode_labels(const Dims3& dims, std::string_view payload);
std::string volume_header_json(const Volume& volume);
std::string volume_payload(const Volume& volume);

// Zero mean, unit population standard deviation. A volume whose standard
// deviation is below 1e-8 maps to all zeros.
Volume normalize(const Volume& volume);

SliceStack3 slice_stack(const Volume& volume, int k);

FloatPlane extract_slice(const Volume& volume, int k);
Mask extract_mask(const LabelVolume& labels, int k);

}  // namespace weakseg
