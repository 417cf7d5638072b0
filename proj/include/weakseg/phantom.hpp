#pragma once
// Synthetic stand-in for fetal MR stacks: a textured bright ellipsoid (the
// object) wrapped in a dark fluid shell, inside a noisy body with a few
// smaller distractor blobs and a smooth bias field.

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "weakseg/volume.hpp"

namespace weakseg {

struct PhantomSpec {
  int n_volumes = 30;
  Dims3 dims{96, 96, 96};
  Spacing spacing{1.25, 1.25, 2.5};
  double object_fraction = 0.015;
  double noise_sigma = 0.05;
  int n_distractors = 3;
  std::uint64_t seed = 0;

  void validate() const;  // throws InvalidConfig
};

nlohmann::json to_json(const PhantomSpec& spec);
PhantomSpec phantom_spec_from_json(const nlohmann::json& j);

struct PhantomCase {
  Volume image;
  LabelVolume labels;
};

// Case `index` of the series; depends only on (spec, index).
PhantomCase make_phantom(const PhantomSpec& spec, int index);

double object_fraction(const LabelVolume& labels);

}  // namespace weakseg
