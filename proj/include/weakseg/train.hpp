#pragma once
// Balanced patch sampling, augmentation, the SGD training loop, slice-wise
// volume inference and k-fold cross-validation.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "weakseg/fcn/model.hpp"
#include "weakseg/volume.hpp"

namespace weakseg {

struct TrainingConfig {
  int patch_size = 128;
  int n_training_patches = 96000;
  int epochs = 20;
  int batch_size = 16;
  double augment_sigma = 1.0;
  int foreground_stride = 8;  // grid step for candidate patch centers
  fcn::SgdConfig sgd;
  std::uint64_t seed = 0;

  void validate() const;  // throws InvalidConfig
};

// Patch 32, 4000 patches, 10 epochs: sized for 96^3 phantoms on a desktop CPU.
TrainingConfig desk_scale_config();

nlohmann::json to_json(const TrainingConfig& cfg);
TrainingConfig training_config_from_json(const nlohmann::json& j);

// A patch location: slice index and the top-left corner of the crop.
struct PatchSite {
  int volume = 0;
  int slice = 0;
  int x0 = 0;
  int y0 = 0;
  bool foreground = false;
  friend bool operator==(const PatchSite&, const PatchSite&) = default;
};

struct Patch {
  int size = 0;
  std::vector<float> data;            // 3 x size x size, channels k-1, k, k+1
  std::vector<std::uint8_t> target;   // size x size, center slice
  bool is_foreground = false;
};

// n/2 foreground and n/2 background sites on one volume. Candidates are crops
// centred on a foreground_stride grid, clamped inside the slice; a crop is
// foreground when its center-slice target holds an object pixel. Throws
// NoForeground, NoBackground, PatchLargerThanSlice.
std::vector<PatchSite> sample_patch_sites(const LabelVolume& labels, const TrainingConfig& cfg,
                                          int n_patches, std::uint64_t seed, int volume_index = 0);

Patch extract_patch(const Volume& image, const LabelVolume& labels, const PatchSite& site, int size);

std::vector<Patch> sample_patches(const Volume& image, const LabelVolume& labels, const TrainingConfig& cfg,
                                  std::uint64_t seed);

// Horizontal and vertical flips with probability 1/2 each, then one N(0, sigma^2)
// offset added to all data values.
Patch augment(const Patch& p, double sigma, std::uint64_t seed);

// Per-volume site lists for a training set of `n_volumes` label volumes,
// splitting cfg.n_training_patches as evenly as possible in balanced pairs.
std::vector<PatchSite> sample_training_sites(const std::vector<const LabelVolume*>& labels,
                                             const TrainingConfig& cfg);

struct TrainingLogEntry {
  int epoch = 0;
  int step = 0;
  double loss = 0.0;
};

nlohmann::json to_json(const TrainingLogEntry& e);

struct TrainResult {
  fcn::FcnModel<float> model;
  std::vector<TrainingLogEntry> log;
  std::vector<double> epoch_loss;
};

using TrainLogSink = std::function<void(const TrainingLogEntry&)>;

// Runs epochs x (sites / batch_size) SGD steps. Sites index into `images` and
// `labels`; targets come from `labels`. Patches are reshuffled every epoch.
TrainResult train(const std::vector<const Volume*>& images, const std::vector<const LabelVolume*>& labels,
                  const std::vector<PatchSite>& sites, const TrainingConfig& cfg,
                  const fcn::FcnConfig& net = {}, const TrainLogSink& sink = {});

// Convenience overload sampling its own sites.
TrainResult train(const std::vector<const Volume*>& images, const std::vector<const LabelVolume*>& labels,
                  const TrainingConfig& cfg, const fcn::FcnConfig& net = {}, const TrainLogSink& sink = {});

struct InferenceResult {
  Volume probability;  // class-1 probability per voxel
  LabelVolume labels;  // argmax, ties to background
};

InferenceResult infer_volume(fcn::FcnModel<float>& model, const Volume& image);

struct DscReport {
  std::string supervision;
  std::vector<std::string> volume_ids;
  std::vector<double> per_volume;
  double mean = 0.0;
  double std = 0.0;
};

nlohmann::json to_json(const DscReport& r);
DscReport dsc_report_from_json(const nlohmann::json& j);

// Seeded volume-level split into k folds; each fold lists held-out indices in
// ascending order. Throws TooFewVolumes when n < k.
std::vector<std::vector<int>> fold_split(int n, int k, std::uint64_t seed);

struct CrossvalData {
  std::vector<std::string> ids;
  std::vector<Volume> images;            // normalized
  std::vector<LabelVolume> reference;    // evaluation target
};

struct Supervision {
  std::string name;
  std::vector<LabelVolume> labels;  // training targets, one per volume
};

// Segments held-out volume `index` after training on `train_indices`.
using Segmenter = std::function<LabelVolume(int index)>;
using Trainer = std::function<Segmenter(const std::vector<int>& train_indices, const Supervision& supervision,
                                        int fold)>;

struct CrossvalProgress {
  std::string supervision;
  int fold = 0;
  TrainingLogEntry entry;
};

// FCN trainer: patch sites come from the reference labels of the training
// volumes so every supervision type trains on the same locations, with the
// same initial weights.
Trainer fcn_trainer(const CrossvalData& data, const TrainingConfig& cfg, const fcn::FcnConfig& net = {},
                    std::function<void(const CrossvalProgress&)> progress = {});

// One DscReport per supervision, evaluated against data.reference.
std::vector<DscReport> crossval(const CrossvalData& data, const std::vector<Supervision>& supervisions, int k,
                                std::uint64_t seed, const Trainer& trainer);

}  // namespace weakseg
