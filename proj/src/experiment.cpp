#include "weakseg/experiment.hpp"

#include <cstdio>
#include <sstream>

#include "weakseg/error.hpp"
#include "weakseg/random.hpp"

namespace weakseg {

using nlohmann::json;

void ExperimentConfig::validate() const {
  if (folds < 2) throw Error(ErrorCode::InvalidConfig, "folds must be >= 2");
  if (supervision.empty()) throw Error(ErrorCode::InvalidConfig, "no supervision types");
  for (const auto& s : supervision) {
    if (s != "full" && s != "expert_weak" && s != "crowd_weak") {
      throw Error(ErrorCode::InvalidConfig, "unknown supervision '" + s + "'");
    }
  }
  if (!(weak_threshold > 0.0 && weak_threshold <= 1.0)) throw Error(ErrorCode::InvalidConfig, "weak_threshold must lie in (0, 1]");
  if (n_raters < 1) throw Error(ErrorCode::InvalidConfig, "n_raters must be >= 1");
  phantom.validate();
  training.validate();
  network.validate();
  slic.validate();
  noise.validate();
}

json to_json(const ExperimentConfig& cfg) {
  return {{"seed", cfg.seed},
          {"folds", cfg.folds},
          {"supervision", cfg.supervision},
          {"phantom", to_json(cfg.phantom)},
          {"training", to_json(cfg.training)},
          {"network", fcn::to_json(cfg.network)},
          {"slic",
           {{"region_size", cfg.slic.region_size},
            {"compactness", cfg.slic.compactness},
            {"iterations", cfg.slic.iterations},
            {"min_region_fraction", cfg.slic.min_region_fraction}}},
          {"weak_threshold", cfg.weak_threshold},
          {"crowd", {{"n_raters", cfg.n_raters}, {"noise", to_json(cfg.noise)}}}};
}

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig cfg;
  try {
    cfg.seed = j.value("seed", cfg.seed);
    cfg.folds = j.value("folds", cfg.folds);
    if (j.contains("supervision")) cfg.supervision = j.at("supervision").get<std::vector<std::string>>();
    if (j.contains("phantom")) cfg.phantom = phantom_spec_from_json(j.at("phantom"));
    if (j.contains("training")) {
      json t = to_json(cfg.training);
      t.update(j.at("training"));
      cfg.training = training_config_from_json(t);
    }
    if (j.contains("network")) cfg.network = fcn::fcn_config_from_json(j.at("network"));
    if (j.contains("slic")) {
      const auto& s = j.at("slic");
      cfg.slic.region_size = s.value("region_size", cfg.slic.region_size);
      cfg.slic.compactness = s.value("compactness", cfg.slic.compactness);
      cfg.slic.iterations = s.value("iterations", cfg.slic.iterations);
      cfg.slic.min_region_fraction = s.value("min_region_fraction", cfg.slic.min_region_fraction);
    }
    cfg.weak_threshold = j.value("weak_threshold", cfg.weak_threshold);
    if (j.contains("crowd")) {
      const auto& c = j.at("crowd");
      cfg.n_raters = c.value("n_raters", cfg.n_raters);
      if (c.contains("noise")) cfg.noise = crowd_noise_from_json(c.at("noise"));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  cfg.validate();
  return cfg;
}

TrainingConfig seeded_training(const ExperimentConfig& cfg) {
  TrainingConfig t = cfg.training;
  t.seed = mix_seed({cfg.seed, hash_string("training")});
  return t;
}

CrowdNoiseModel seeded_noise(const ExperimentConfig& cfg) {
  CrowdNoiseModel n = cfg.noise;
  n.seed = mix_seed({cfg.seed, hash_string("crowd")});
  return n;
}

LabelVolume make_supervision(const std::string& name, const Volume& image, const LabelVolume& reference,
                             const std::string& volume_id, const ExperimentConfig& cfg) {
  if (name == "full") return reference;
  if (name == "expert_weak") return expert_weak_labels(image, reference, cfg.slic, cfg.weak_threshold);
  if (name == "crowd_weak") {
    const auto annotations = simulate_crowd_annotations(image, reference, volume_id, default_rater_ids(cfg.n_raters),
                                                        seeded_noise(cfg), cfg.slic);
    return labels_from_annotations(annotations, volume_id, image.dims());
  }
  throw Error(ErrorCode::InvalidArgument, "unknown supervision '" + name + "'");
}

std::vector<DscReport> run_experiment(const std::vector<std::string>& ids, const std::vector<Volume>& images,
                                      const std::vector<LabelVolume>& reference, const ExperimentConfig& cfg,
                                      std::function<void(const CrossvalProgress&)> progress) {
  cfg.validate();
  if (ids.size() != images.size() || reference.size() != images.size()) {
    throw Error(ErrorCode::DimMismatch, "ids, images and labels differ in length");
  }
  if (images.size() < static_cast<std::size_t>(cfg.folds)) {
    throw Error(ErrorCode::TooFewVolumes, std::to_string(images.size()) + " volumes cannot fill " +
                                              std::to_string(cfg.folds) + " folds");
  }
  CrossvalData data;
  data.ids = ids;
  data.reference = reference;
  for (const auto& v : images) data.images.push_back(normalize(v));
  std::vector<Supervision> sups;
  for (const auto& name : cfg.supervision) {
    Supervision s{name, {}};
    for (std::size_t i = 0; i < images.size(); ++i) {
      s.labels.push_back(make_supervision(name, images[i], reference[i], ids[i], cfg));
    }
    sups.push_back(std::move(s));
  }
  const Trainer trainer = fcn_trainer(data, seeded_training(cfg), cfg.network, std::move(progress));
  return crossval(data, sups, cfg.folds, cfg.seed, trainer);
}

json summary_table(const std::vector<DscReport>& reports) {
  json rows = json::array();
  for (const auto& r : reports) {
    rows.push_back({{"supervision", r.supervision},
                    {"n", r.per_volume.size()},
                    {"mean_pct", 100.0 * r.mean},
                    {"std_pct", 100.0 * r.std}});
  }
  return rows;
}

std::string summary_csv(const std::vector<DscReport>& reports) {
  std::ostringstream out;
  out << "supervision,n,mean_pct,std_pct\n";
  char buf[128];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.2f,%.2f\n", r.supervision.c_str(), r.per_volume.size(), 100.0 * r.mean,
                  100.0 * r.std);
    out << buf;
  }
  return out.str();
}

}  // namespace weakseg
