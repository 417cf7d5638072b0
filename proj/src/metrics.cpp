#include "weakseg/metrics.hpp"

#include <cmath>

#include "weakseg/error.hpp"

namespace weakseg {

double dice(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> reference) {
  if (predicted.size() != reference.size()) throw Error(ErrorCode::DimMismatch, "mask sizes differ");
  std::size_t p = 0;
  std::size_t m = 0;
  std::size_t both = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool a = predicted[i] != 0;
    const bool b = reference[i] != 0;
    p += a;
    m += b;
    both += a && b;
  }
  if (p + m == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + m);
}

double dsc(const LabelVolume& predicted, const LabelVolume& reference) {
  if (!(predicted.dims() == reference.dims())) throw Error(ErrorCode::DimMismatch, "label volume dims differ");
  return dice(predicted.labels(), reference.labels());
}

double dsc(const Mask& predicted, const Mask& reference) {
  if (predicted.width != reference.width || predicted.height != reference.height) {
    throw Error(ErrorCode::DimMismatch, "mask dims differ");
  }
  return dice(predicted.data, reference.data);
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - out.mean) * (v - out.mean);
  out.stddev = std::sqrt(sq / static_cast<double>(values.size()));
  return out;
}

}  // namespace weakseg
