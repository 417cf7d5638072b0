#pragma once
// Checkpoint directory layout:
//   model.json              manifest: config, seed, epoch, tensor list
//   <tensor>.raw            little-endian f32 values
//   <tensor>.momentum.raw   little-endian f32 momentum buffer

#include <filesystem>

#include "weakseg/fcn/model.hpp"

namespace weakseg::fcn {

void save_checkpoint(const FcnModel<float>& model, const std::filesystem::path& dir);
FcnModel<float> load_checkpoint(const std::filesystem::path& dir);

}  // namespace weakseg::fcn
