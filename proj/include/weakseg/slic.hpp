#pragma once
// SLIC superpixels on scalar 2-D slices.
//
// Grid-seeded local k-means in joint (intensity, x, y) space with
//   D^2 = dI^2 + (compactness / region_size)^2 * dxy^2
// where intensities are first min-max windowed per slice onto [0, 100], so
// the result does not depend on the slice's intensity scale.
// searched in a 2S x 2S window around each center, followed by a
// connectivity pass that leaves every label 4-connected.

#include <cstdint>
#include <set>
#include <vector>

#include <json.hpp>

#include "weakseg/volume.hpp"

namespace weakseg {

struct SlicParams {
  int region_size = 12;
  double compactness = 10.0;
  int iterations = 10;
  // Fragments smaller than this fraction of region_size^2 are merged away.
  double min_region_fraction = 0.25;

  void validate() const;
};

struct Region {
  int id = 0;
  std::size_t pixel_count = 0;
  double centroid_x = 0.0;
  double centroid_y = 0.0;
  double mean_intensity = 0.0;
};

using RegionSet = std::set<int>;

// Per-pixel labels (row-major) with dense ids 0..R-1 and per-region stats.
struct SuperpixelMap {
  int width = 0;
  int height = 0;
  std::vector<std::int32_t> labels;
  std::vector<Region> regions;

  int region_count() const noexcept { return static_cast<int>(regions.size()); }
  std::int32_t label_at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

SuperpixelMap compute_slic(const FloatPlane& slice, const SlicParams& params = {});

// Splits every label into 4-connected components, keeps the largest component
// of each label, and merges every other fragment (and any region smaller than
// min_region_fraction * region_size^2) into its largest adjacent region.
// Labels are re-densified in row-major order of first appearance. When
// `intensity` is null, region means are carried over from the input regions.
SuperpixelMap enforce_connectivity(const SuperpixelMap& map, const SlicParams& params,
                                   const FloatPlane* intensity = nullptr);

// Binary mask of the selected regions. Throws UnknownRegionId.
Mask selection_mask(const SuperpixelMap& map, const RegionSet& selected);

// Sorted 4-neighbourhood adjacency lists, indexed by region id.
std::vector<std::vector<int>> region_adjacency(const SuperpixelMap& map);

// Recomputes region records from labels (and intensity when given).
std::vector<Region> region_stats(int width, int height, const std::vector<std::int32_t>& labels,
                                 int region_count, const FloatPlane* intensity);

// Wire format shared with the annotation client:
// {width, height, rle_labels: [[label, run], ...] (row-major),
//  regions: [{id, pixel_count, centroid: [x, y], mean_intensity}]}
nlohmann::json to_json(const SuperpixelMap& map);
// Throws ValidationFailed when the runs or region table are inconsistent.
SuperpixelMap superpixel_map_from_json(const nlohmann::json& j);

}  // namespace weakseg
