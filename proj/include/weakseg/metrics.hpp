#pragma once

#include <cstdint>
#include <span>

#include "weakseg/volume.hpp"

namespace weakseg {

// Dice similarity 2|P n M| / (|P| + |M|) over binary masks (non-zero = object).
// Two empty masks agree perfectly and score 1.0. Throws DimMismatch.
double dice(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> reference);

double dsc(const LabelVolume& predicted, const LabelVolume& reference);
double dsc(const Mask& predicted, const Mask& reference);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // population
};

MeanStd mean_std(std::span<const double> values);

}  // namespace weakseg
