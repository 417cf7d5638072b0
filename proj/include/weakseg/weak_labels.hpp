#pragma once
// Training labels from superpixel selections: expert-weak synthesis from a
// reference mask, a region-level crowd noise simulator, multi-rater assembly
// into label volumes and per-rater reliability.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "weakseg/slic.hpp"
#include "weakseg/volume.hpp"

namespace weakseg {

struct Annotation {
  std::string volume_id;
  int slice_index = 0;
  std::string rater_id;
  SuperpixelMap superpixel_map;
  RegionSet selected_ids;
  double elapsed_ms = 0.0;

  // Throws ValidationFailed if selected ids are not in the map or time is negative.
  void validate() const;
};

// {volume_id, slice_index, rater_id, superpixel_map, selected_ids, elapsed_ms}
nlohmann::json to_json(const Annotation& annotation);
Annotation annotation_from_json(const nlohmann::json& j);

struct CrowdNoiseModel {
  // Toggle probability for regions whose reference coverage is strictly inside
  // (coverage_low, coverage_high).
  double boundary_flip_prob = 0.25;
  double coverage_low = 0.2;
  double coverage_high = 0.8;
  // Drop probability for fully covered regions.
  double interior_miss_prob = 0.03;
  // Add probability for zero-coverage regions touching the selection.
  double false_add_prob = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const CrowdNoiseModel& noise);
CrowdNoiseModel crowd_noise_from_json(const nlohmann::json& j);

// Fraction of each region's pixels inside the reference mask.
std::vector<double> region_coverage(const SuperpixelMap& map, const Mask& reference);

// Regions whose coverage is >= threshold. Throws DimMismatch.
RegionSet expert_weak_selection(const SuperpixelMap& map, const Mask& reference,
                                double threshold = 0.5);

// Expert-weak selection perturbed by the three noise channels, with draws
// seeded by (noise.seed, volume_id, slice_index, rater_id).
RegionSet simulate_crowd_selection(const SuperpixelMap& map, const Mask& reference,
                                   const CrowdNoiseModel& noise, std::string_view volume_id,
                                   int slice_index, std::string_view rater_id);

// Per-slice masks from the annotations; several raters on one slice are merged
// by per-pixel majority with ties going to background. Unannotated slices stay
// background. Throws VolumeIdMismatch, DimMismatch, InvalidArgument (duplicate
// slice/rater pair).
LabelVolume labels_from_annotations(const std::vector<Annotation>& annotations,
                                    std::string_view volume_id, const Dims3& dims);

struct RaterReliability {
  std::string rater_id;
  int n_slices = 0;
  double dsc_mean = 0.0;
  double dsc_std = 0.0;
  std::vector<double> dsc_values;
};

using ReliabilityReport = std::vector<RaterReliability>;

// Slice-wise DSC of each rater's selections against the reference, over the
// slices the rater annotated where either the reference or the selection is
// non-empty. Raters with no such slice are omitted. Sorted by rater id.
ReliabilityReport rater_reliability(const std::vector<Annotation>& annotations,
                                    const LabelVolume& reference);

nlohmann::json to_json(const ReliabilityReport& report);

// --- Simulation helpers -----------------------------------------------------

// Expert-weak label volume: SLIC on every slice that contains reference
// object, then the coverage threshold. Slices without object stay empty.
LabelVolume expert_weak_labels(const Volume& image, const LabelVolume& reference,
                               const SlicParams& slic = {}, double threshold = 0.5);

// Expert annotations (rater id "EXP") for every slice containing object.
std::vector<Annotation> simulate_expert_annotations(const Volume& image, const LabelVolume& reference,
                                                    std::string_view volume_id,
                                                    const SlicParams& slic = {},
                                                    double threshold = 0.5);

// One crowd annotation per slice containing object, each slice assigned to a
// single rater drawn from `rater_ids` (seeded, so counts per rater differ).
// elapsed_ms is drawn from N(7200, 3400^2) clipped at 500 ms.
std::vector<Annotation> simulate_crowd_annotations(const Volume& image, const LabelVolume& reference,
                                                   std::string_view volume_id,
                                                   const std::vector<std::string>& rater_ids,
                                                   const CrowdNoiseModel& noise,
                                                   const SlicParams& slic = {});

std::vector<std::string> default_rater_ids(int n);

}  // namespace weakseg
