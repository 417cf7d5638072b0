#include "weakseg/weak_labels.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <utility>

#include "weakseg/error.hpp"
#include "weakseg/metrics.hpp"
#include "weakseg/random.hpp"

namespace weakseg {

using nlohmann::json;

void Annotation::validate() const {
  for (int id : selected_ids) {
    if (id < 0 || id >= superpixel_map.region_count()) {
      throw Error(ErrorCode::ValidationFailed, "selected id " + std::to_string(id) + " not in superpixel map");
    }
  }
  if (!(elapsed_ms >= 0.0)) throw Error(ErrorCode::ValidationFailed, "elapsed_ms must be >= 0");
  if (slice_index < 0) throw Error(ErrorCode::ValidationFailed, "slice_index must be >= 0");
}

json to_json(const Annotation& a) {
  return {{"volume_id", a.volume_id},
          {"slice_index", a.slice_index},
          {"rater_id", a.rater_id},
          {"superpixel_map", to_json(a.superpixel_map)},
          {"selected_ids", std::vector<int>(a.selected_ids.begin(), a.selected_ids.end())},
          {"elapsed_ms", a.elapsed_ms}};
}

Annotation annotation_from_json(const json& j) {
  try {
    Annotation a;
    a.volume_id = j.at("volume_id").get<std::string>();
    a.slice_index = j.at("slice_index").get<int>();
    a.rater_id = j.at("rater_id").get<std::string>();
    a.superpixel_map = superpixel_map_from_json(j.at("superpixel_map"));
    for (const auto& id : j.at("selected_ids")) a.selected_ids.insert(id.get<int>());
    a.elapsed_ms = j.at("elapsed_ms").get<double>();
    a.validate();
    return a;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ValidationFailed, std::string("annotation: ") + e.what());
  }
}

void CrowdNoiseModel::validate() const {
  for (double p : {boundary_flip_prob, interior_miss_prob, false_add_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidConfig, "noise probabilities must be in [0,1]");
  }
  if (!(coverage_low < coverage_high)) throw Error(ErrorCode::InvalidConfig, "coverage band needs low < high");
}

json to_json(const CrowdNoiseModel& n) {
  return {{"boundary_flip_prob", n.boundary_flip_prob},
          {"coverage_band", {n.coverage_low, n.coverage_high}},
          {"interior_miss_prob", n.interior_miss_prob},
          {"false_add_prob", n.false_add_prob},
          {"seed", n.seed}};
}

CrowdNoiseModel crowd_noise_from_json(const json& j) {
  CrowdNoiseModel n;
  try {
    n.boundary_flip_prob = j.value("boundary_flip_prob", n.boundary_flip_prob);
    if (j.contains("coverage_band")) {
      n.coverage_low = j["coverage_band"].at(0).get<double>();
      n.coverage_high = j["coverage_band"].at(1).get<double>();
    }
    n.interior_miss_prob = j.value("interior_miss_prob", n.interior_miss_prob);
    n.false_add_prob = j.value("false_add_prob", n.false_add_prob);
    n.seed = j.value("seed", n.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("noise model: ") + e.what());
  }
  n.validate();
  return n;
}

std::vector<double> region_coverage(const SuperpixelMap& map, const Mask& reference) {
  if (reference.width != map.width || reference.height != map.height) {
    throw Error(ErrorCode::DimMismatch, "reference mask dims differ from superpixel map");
  }
  std::vector<std::size_t> inside(map.regions.size(), 0);
  for (std::size_t p = 0; p < map.labels.size(); ++p) {
    if (reference.data[p]) ++inside[static_cast<std::size_t>(map.labels[p])];
  }
  std::vector<double> coverage(map.regions.size(), 0.0);
  for (std::size_t r = 0; r < coverage.size(); ++r) {
    const std::size_t count = map.regions[r].pixel_count;
    coverage[r] = count == 0 ? 0.0 : static_cast<double>(inside[r]) / static_cast<double>(count);
  }
  return coverage;
}

RegionSet expert_weak_selection(const SuperpixelMap& map, const Mask& reference, double threshold) {
  const auto coverage = region_coverage(map, reference);
  RegionSet selected;
  for (std::size_t r = 0; r < coverage.size(); ++r) {
    if (coverage[r] >= threshold) selected.insert(static_cast<int>(r));
  }
  return selected;
}

RegionSet simulate_crowd_selection(const SuperpixelMap& map, const Mask& reference,
                                   const CrowdNoiseModel& noise, std::string_view volume_id,
                                   int slice_index, std::string_view rater_id) {
  noise.validate();
  const auto coverage = region_coverage(map, reference);
  RegionSet selected;
  for (std::size_t r = 0; r < coverage.size(); ++r) {
    if (coverage[r] >= 0.5) selected.insert(static_cast<int>(r));
  }
  Rng rng(mix_seed({noise.seed, hash_string(volume_id), static_cast<std::uint64_t>(slice_index),
                    hash_string(rater_id)}));

  // Every channel draws once per eligible region in id order.
  for (std::size_t r = 0; r < coverage.size(); ++r) {
    if (coverage[r] > noise.coverage_low && coverage[r] < noise.coverage_high &&
        rng.bernoulli(noise.boundary_flip_prob)) {
      const int id = static_cast<int>(r);
      if (selected.count(id)) {
        selected.erase(id);
      } else {
        selected.insert(id);
      }
    }
  }
  for (std::size_t r = 0; r < coverage.size(); ++r) {
    if (coverage[r] >= 1.0 && rng.bernoulli(noise.interior_miss_prob)) selected.erase(static_cast<int>(r));
  }
  if (noise.false_add_prob > 0.0) {
    const auto adjacency = region_adjacency(map);
    const RegionSet before = selected;
    for (std::size_t r = 0; r < coverage.size(); ++r) {
      if (coverage[r] != 0.0) continue;
      const bool touches = std::any_of(adjacency[r].begin(), adjacency[r].end(),
                                       [&](int nb) { return before.count(nb) > 0; });
      if (touches && rng.bernoulli(noise.false_add_prob)) selected.insert(static_cast<int>(r));
    }
  }
  return selected;
}

LabelVolume labels_from_annotations(const std::vector<Annotation>& annotations,
                                    std::string_view volume_id, const Dims3& dims) {
  LabelVolume out(dims);
  std::map<int, std::vector<const Annotation*>> by_slice;
  std::set<std::pair<int, std::string>> seen;
  for (const Annotation& a : annotations) {
    if (a.volume_id != volume_id) {
      throw Error(ErrorCode::VolumeIdMismatch, "annotation for " + a.volume_id + " given for " + std::string(volume_id));
    }
    if (a.slice_index < 0 || a.slice_index >= dims.depth) {
      throw Error(ErrorCode::DimMismatch, "annotation slice index outside volume");
    }
    if (a.superpixel_map.width != dims.width || a.superpixel_map.height != dims.height) {
      throw Error(ErrorCode::DimMismatch, "annotation map dims differ from volume slice");
    }
    if (!seen.insert({a.slice_index, a.rater_id}).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate annotation for slice " +
                                                  std::to_string(a.slice_index) + " by " + a.rater_id);
    }
    by_slice[a.slice_index].push_back(&a);
  }
  const std::size_t plane = dims.slice_size();
  std::vector<int> votes(plane);
  for (const auto& [k, list] : by_slice) {
    auto dst = out.slice_mut(k);
    if (list.size() == 1) {
      const Mask m = selection_mask(list.front()->superpixel_map, list.front()->selected_ids);
      std::copy(m.data.begin(), m.data.end(), dst.begin());
      continue;
    }
    std::fill(votes.begin(), votes.end(), 0);
    for (const Annotation* a : list) {
      const Mask m = selection_mask(a->superpixel_map, a->selected_ids);
      for (std::size_t p = 0; p < plane; ++p) votes[p] += m.data[p];
    }
    const int raters = static_cast<int>(list.size());
    for (std::size_t p = 0; p < plane; ++p) dst[p] = 2 * votes[p] > raters ? 1 : 0;
  }
  return out;
}

ReliabilityReport rater_reliability(const std::vector<Annotation>& annotations,
                                    const LabelVolume& reference) {
  const Dims3& dims = reference.dims();
  std::map<std::string, std::vector<double>> values;
  for (const Annotation& a : annotations) {
    if (a.superpixel_map.width != dims.width || a.superpixel_map.height != dims.height ||
        a.slice_index < 0 || a.slice_index >= dims.depth) {
      throw Error(ErrorCode::DimMismatch, "annotation does not fit the reference volume");
    }
    const Mask selected = selection_mask(a.superpixel_map, a.selected_ids);
    const Mask ref = extract_mask(reference, a.slice_index);
    const bool ref_has = std::any_of(ref.data.begin(), ref.data.end(), [](auto v) { return v != 0; });
    if (!ref_has && a.selected_ids.empty()) continue;
    values[a.rater_id].push_back(dsc(selected, ref));
  }
  ReliabilityReport report;
  for (auto& [rater, v] : values) {
    const MeanStd ms = mean_std(v);
    report.push_back({rater, static_cast<int>(v.size()), ms.mean, ms.stddev, std::move(v)});
  }
  return report;
}

json to_json(const ReliabilityReport& report) {
  json out = json::array();
  for (const auto& r : report) {
    out.push_back({{"rater_id", r.rater_id},
                   {"n_slices", r.n_slices},
                   {"dsc_mean", r.dsc_mean},
                   {"dsc_std", r.dsc_std},
                   {"dsc_values", r.dsc_values}});
  }
  return out;
}

namespace {

std::vector<int> object_slices(const LabelVolume& reference) {
  std::vector<int> slices;
  for (int k = 0; k < reference.dims().depth; ++k) {
    const auto s = reference.slice(k);
    if (std::any_of(s.begin(), s.end(), [](auto v) { return v != 0; })) slices.push_back(k);
  }
  return slices;
}

void check_pair(const Volume& image, const LabelVolume& reference) {
  if (!(image.dims() == reference.dims())) throw Error(ErrorCode::DimMismatch, "image and reference dims differ");
}

}  // namespace

LabelVolume expert_weak_labels(const Volume& image, const LabelVolume& reference,
                               const SlicParams& slic, double threshold) {
  check_pair(image, reference);
  LabelVolume out(reference.dims());
  for (int k : object_slices(reference)) {
    const SuperpixelMap map = compute_slic(extract_slice(image, k), slic);
    const Mask m = selection_mask(map, expert_weak_selection(map, extract_mask(reference, k), threshold));
    auto dst = out.slice_mut(k);
    std::copy(m.data.begin(), m.data.end(), dst.begin());
  }
  return out;
}

std::vector<Annotation> simulate_expert_annotations(const Volume& image, const LabelVolume& reference,
                                                    std::string_view volume_id,
                                                    const SlicParams& slic, double threshold) {
  check_pair(image, reference);
  std::vector<Annotation> out;
  for (int k : object_slices(reference)) {
    Annotation a;
    a.volume_id = std::string(volume_id);
    a.slice_index = k;
    a.rater_id = "EXP";
    a.superpixel_map = compute_slic(extract_slice(image, k), slic);
    a.selected_ids = expert_weak_selection(a.superpixel_map, extract_mask(reference, k), threshold);
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<Annotation> simulate_crowd_annotations(const Volume& image, const LabelVolume& reference,
                                                   std::string_view volume_id,
                                                   const std::vector<std::string>& rater_ids,
                                                   const CrowdNoiseModel& noise,
                                                   const SlicParams& slic) {
  check_pair(image, reference);
  if (rater_ids.empty()) throw Error(ErrorCode::InvalidArgument, "need at least one rater");
  noise.validate();
  Rng assign(mix_seed({noise.seed, hash_string(volume_id), 0xA551u}));
  std::vector<Annotation> out;
  for (int k : object_slices(reference)) {
    Annotation a;
    a.volume_id = std::string(volume_id);
    a.slice_index = k;
    a.rater_id = rater_ids[assign.below(rater_ids.size())];
    a.superpixel_map = compute_slic(extract_slice(image, k), slic);
    a.selected_ids = simulate_crowd_selection(a.superpixel_map, extract_mask(reference, k), noise,
                                              volume_id, k, a.rater_id);
    a.elapsed_ms = std::max(500.0, assign.normal(7200.0, 3400.0));
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<std::string> default_rater_ids(int n) {
  std::vector<std::string> ids;
  for (int i = 1; i <= n; ++i) ids.push_back("U" + std::to_string(i));
  return ids;
}

}  // namespace weakseg
