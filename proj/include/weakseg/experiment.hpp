#pragma once
// One JSON document describing a supervision comparison: phantom series,
// label synthesis, network, training and cross-validation. Every random
// stream derives from the master seed.
//
//   {"seed": 0, "folds": 3, "supervision": ["full", "expert_weak", "crowd_weak"],
//    "phantom": {...}, "training": {...}, "network": {...}, "slic": {...},
//    "weak_threshold": 0.5, "crowd": {"n_raters": 12, "noise": {...}}}

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "weakseg/fcn/model.hpp"
#include "weakseg/phantom.hpp"
#include "weakseg/slic.hpp"
#include "weakseg/train.hpp"
#include "weakseg/weak_labels.hpp"

namespace weakseg {

struct ExperimentConfig {
  std::uint64_t seed = 0;
  int folds = 3;
  std::vector<std::string> supervision{"full", "expert_weak", "crowd_weak"};
  PhantomSpec phantom;
  TrainingConfig training = desk_scale_config();
  fcn::FcnConfig network;
  SlicParams slic;
  double weak_threshold = 0.5;
  int n_raters = 12;
  CrowdNoiseModel noise;

  void validate() const;  // throws InvalidConfig
};

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

// Seeds of the sub-configs, derived from cfg.seed.
TrainingConfig seeded_training(const ExperimentConfig& cfg);
CrowdNoiseModel seeded_noise(const ExperimentConfig& cfg);

// Training labels for one volume: "full" (the reference), "expert_weak" or
// "crowd_weak". Throws InvalidArgument for other names.
LabelVolume make_supervision(const std::string& name, const Volume& image, const LabelVolume& reference,
                             const std::string& volume_id, const ExperimentConfig& cfg);

// Cross-validates every configured supervision type on the given volumes
// (raw intensities; normalized internally).
std::vector<DscReport> run_experiment(const std::vector<std::string>& ids, const std::vector<Volume>& images,
                                      const std::vector<LabelVolume>& reference, const ExperimentConfig& cfg,
                                      std::function<void(const CrossvalProgress&)> progress = {});

// Table rows {supervision, n, mean_pct, std_pct} and the CSV equivalent.
nlohmann::json summary_table(const std::vector<DscReport>& reports);
std::string summary_csv(const std::vector<DscReport>& reports);

}  // namespace weakseg
