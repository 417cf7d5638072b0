#include "commands.hpp"

#include <cstdio>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include "weakseg/dataset.hpp"
#include "weakseg/error.hpp"
#include "weakseg/experiment.hpp"
#include "weakseg/fcn/checkpoint.hpp"
#include "weakseg/http_api.hpp"
#include "weakseg/metrics.hpp"
#include "weakseg/phantom.hpp"
#include "weakseg/random.hpp"
#include "weakseg/task_service.hpp"

namespace weakseg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void emit(const json& j) { std::cout << j.dump() << std::endl; }

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
}

ExperimentConfig experiment(const Common& c) {
  ExperimentConfig cfg = experiment_config_from_json(load_config(c));
  if (c.seed_set) cfg.seed = c.seed;
  return cfg;
}

fs::path require_out(const Common& c, const char* what) {
  if (c.out.empty()) throw Error(ErrorCode::FlagError, std::string("--out is required (") + what + ")");
  return c.out;
}

// Stem `name` under `dir`, recorded relative to the dataset root.
std::string relative_stem(const fs::path& dir, const std::string& name, const fs::path& root) {
  return fs::relative(dir / name, root).generic_string();
}

struct LoadedCase {
  std::string id;
  Volume image;
  LabelVolume reference;
};

std::vector<LoadedCase> load_cases(const DatasetManifest& m) {
  std::vector<LoadedCase> cases;
  for (const auto& e : m.entries) {
    if (e.labels.empty()) throw Error(ErrorCode::NotFound, e.id + " has no reference labels");
    cases.push_back({e.id, load_volume(m.image_path(e)), load_labels(m.labels_path(e))});
  }
  return cases;
}

}  // namespace

json load_config(const Common& common) {
  if (common.config.empty()) return json::object();
  return read_json(common.config);
}

int cmd_phantom(const Common& c, const PhantomArgs& a) {
  const fs::path out = require_out(c, "output directory");
  ExperimentConfig cfg = experiment(c);
  PhantomSpec spec = cfg.phantom;
  if (c.seed_set) spec.seed = mix_seed({cfg.seed, hash_string("phantom")});
  if (a.n_volumes >= 0) spec.n_volumes = a.n_volumes;
  if (!a.dims.empty()) {
    if (a.dims.size() != 3) throw Error(ErrorCode::FlagError, "--dims takes three values");
    spec.dims = {a.dims[0], a.dims[1], a.dims[2]};
  }
  if (a.fraction >= 0) spec.object_fraction = a.fraction;
  if (a.noise >= 0) spec.noise_sigma = a.noise;
  spec.validate();

  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + out.string());
  DatasetManifest manifest;
  manifest.root = out;
  manifest.extra["phantom"] = to_json(spec);
  json summary = json::array();
  for (int i = 0; i < spec.n_volumes; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "case%03d", i);
    const PhantomCase pc = make_phantom(spec, i);
    save_volume(pc.image, out / id);
    save_labels(pc.labels, out / (std::string(id) + "_labels"));
    manifest.entries.push_back({id, id, std::string(id) + "_labels", {}});
    summary.push_back({{"id", id}, {"object_fraction", object_fraction(pc.labels)}});
  }
  save_dataset_manifest(manifest);
  emit({{"command", "phantom"}, {"out", out.string()}, {"volumes", summary}});
  return 0;
}

int cmd_slic(const Common& c, const SlicArgs& a) {
  SlicParams params = experiment(c).slic;
  if (a.region_size > 0) params.region_size = a.region_size;
  if (a.compactness > 0) params.compactness = a.compactness;
  if (a.iterations > 0) params.iterations = a.iterations;
  const Volume v = load_volume(a.volume);
  const SuperpixelMap map = compute_slic(extract_slice(v, a.slice), params);
  const json j = to_json(map);
  if (c.out.empty()) {
    emit(j);
  } else {
    write_json(c.out, j);
    emit({{"command", "slic"}, {"out", c.out}, {"regions", map.region_count()}});
  }
  return 0;
}

int cmd_weak_labels(const Common& c, const WeakLabelArgs& a) {
  ExperimentConfig cfg = experiment(c);
  if (a.threshold > 0) cfg.weak_threshold = a.threshold;
  DatasetManifest m = load_dataset_manifest(a.dataset);
  const fs::path out = c.out.empty() ? m.root : fs::path(c.out);
  fs::create_directories(out);
  json summary = json::array();
  for (auto& e : m.entries) {
    const Volume image = load_volume(m.image_path(e));
    const LabelVolume ref = load_labels(m.labels_path(e));
    const LabelVolume weak = make_supervision("expert_weak", image, ref, e.id, cfg);
    const std::string name = e.id + "_expert_weak";
    save_labels(weak, out / name);
    e.supervision["expert_weak"] = relative_stem(out, name, m.root);
    summary.push_back({{"id", e.id}, {"dsc_vs_reference", dsc(weak, ref)}});
  }
  save_dataset_manifest(m);
  emit({{"command", "weak-labels"}, {"threshold", cfg.weak_threshold}, {"volumes", summary}});
  return 0;
}

int cmd_simulate_crowd(const Common& c, const CrowdArgs& a) {
  ExperimentConfig cfg = experiment(c);
  if (a.n_raters > 0) cfg.n_raters = a.n_raters;
  DatasetManifest m = load_dataset_manifest(a.dataset);
  const fs::path out = c.out.empty() ? m.root : fs::path(c.out);
  fs::create_directories(out);
  const auto raters = default_rater_ids(cfg.n_raters);
  const CrowdNoiseModel noise = seeded_noise(cfg);
  std::map<std::string, std::vector<double>> per_rater;
  json summary = json::array();
  for (auto& e : m.entries) {
    const Volume image = load_volume(m.image_path(e));
    const LabelVolume ref = load_labels(m.labels_path(e));
    const auto annotations = simulate_crowd_annotations(image, ref, e.id, raters, noise, cfg.slic);
    const LabelVolume crowd = labels_from_annotations(annotations, e.id, image.dims());
    const std::string name = e.id + "_crowd_weak";
    save_labels(crowd, out / name);
    json list = json::array();
    for (const auto& an : annotations) list.push_back(to_json(an));
    write_json(out / (e.id + "_crowd_annotations.json"), list);
    e.supervision["crowd_weak"] = relative_stem(out, name, m.root);
    for (const auto& r : rater_reliability(annotations, ref)) {
      auto& v = per_rater[r.rater_id];
      v.insert(v.end(), r.dsc_values.begin(), r.dsc_values.end());
    }
    summary.push_back({{"id", e.id}, {"annotations", annotations.size()}, {"dsc_vs_reference", dsc(crowd, ref)}});
  }
  ReliabilityReport report;
  for (const auto& [id, values] : per_rater) {
    const auto ms = mean_std(values);
    report.push_back({id, static_cast<int>(values.size()), ms.mean, ms.stddev, values});
  }
  write_json(out / "crowd_reliability.json", to_json(report));
  save_dataset_manifest(m);
  emit({{"command", "simulate-crowd"}, {"raters", cfg.n_raters}, {"noise", to_json(noise)}, {"volumes", summary}});
  return 0;
}

int cmd_serve(const Common& c, const ServeArgs& a) {
  (void)c;
  TaskServiceConfig cfg{a.data_dir, a.lease_seconds, a.redundancy};
  TaskService service(cfg);
  emit({{"command", "serve"}, {"host", a.host}, {"port", a.port}, {"data_dir", a.data_dir},
        {"volumes", service.volume_ids().size()}});
  run_http_server(service, a.host, a.port);
  return 0;
}

int cmd_train(const Common& c, const TrainArgs& a) {
  const fs::path out = require_out(c, "checkpoint directory");
  const ExperimentConfig cfg = experiment(c);
  TrainingConfig tc = seeded_training(cfg);
  if (a.patch_size > 0) tc.patch_size = a.patch_size;
  if (a.n_patches > 0) tc.n_training_patches = a.n_patches;
  if (a.epochs > 0) tc.epochs = a.epochs;
  if (a.batch_size > 0) tc.batch_size = a.batch_size;
  tc.validate();

  const DatasetManifest m = load_dataset_manifest(a.dataset);
  std::vector<Volume> images;
  std::vector<LabelVolume> targets;
  std::vector<LabelVolume> reference;
  for (const auto& e : m.entries) {
    if (!a.volumes.empty() && std::find(a.volumes.begin(), a.volumes.end(), e.id) == a.volumes.end()) continue;
    images.push_back(normalize(load_volume(m.image_path(e))));
    targets.push_back(load_labels(m.supervision_path(e, a.supervision)));
    reference.push_back(e.labels.empty() ? targets.back() : load_labels(m.labels_path(e)));
  }
  if (images.empty()) throw Error(ErrorCode::TooFewVolumes, "no training volumes selected");
  std::vector<const Volume*> img_ptrs;
  std::vector<const LabelVolume*> tgt_ptrs;
  std::vector<const LabelVolume*> ref_ptrs;
  for (std::size_t i = 0; i < images.size(); ++i) {
    img_ptrs.push_back(&images[i]);
    tgt_ptrs.push_back(&targets[i]);
    ref_ptrs.push_back(&reference[i]);
  }
  fs::create_directories(out);
  std::ofstream log(out / "train_log.jsonl", std::ios::trunc);
  const auto sites = sample_training_sites(ref_ptrs, tc);
  auto result = train(img_ptrs, tgt_ptrs, sites, tc, cfg.network,
                      [&log](const TrainingLogEntry& e) { log << to_json(e).dump() << '\n'; });
  fcn::save_checkpoint(result.model, out);
  emit({{"command", "train"}, {"out", out.string()}, {"supervision", a.supervision}, {"volumes", images.size()},
        {"steps", result.log.size()}, {"epoch_loss", result.epoch_loss}});
  return 0;
}

int cmd_infer(const Common& c, const InferArgs& a) {
  const fs::path out = require_out(c, "output stem");
  auto model = fcn::load_checkpoint(a.model);
  const Volume image = normalize(load_volume(a.volume));
  const InferenceResult r = infer_volume(model, image);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_labels(r.labels, out);
  save_volume(r.probability, fs::path(out.string() + "_prob"));
  emit({{"command", "infer"}, {"labels", out.string()}, {"object_voxels", r.labels.count()}});
  return 0;
}

int cmd_eval(const Common& c, const EvalArgs& a) {
  (void)c;
  const double value = dsc(load_labels(a.pred), load_labels(a.ref));
  emit({{"command", "eval"}, {"dsc", value}});
  return 0;
}

int cmd_crossval(const Common& c, const CrossvalArgs& a) {
  ExperimentConfig cfg = experiment(c);
  if (a.folds > 0) cfg.folds = a.folds;
  if (!a.supervision.empty()) cfg.supervision = a.supervision;
  if (a.n_patches > 0) cfg.training.n_training_patches = a.n_patches;
  if (a.epochs > 0) cfg.training.epochs = a.epochs;
  cfg.validate();

  const DatasetManifest m = load_dataset_manifest(a.dataset);
  if (m.entries.size() < static_cast<std::size_t>(cfg.folds)) {
    throw Error(ErrorCode::TooFewVolumes, std::to_string(m.entries.size()) + " volumes cannot fill " +
                                              std::to_string(cfg.folds) + " folds");
  }
  const fs::path out = c.out.empty() ? m.root / "crossval" : fs::path(c.out);
  fs::create_directories(out);
  const auto cases = load_cases(m);
  std::vector<std::string> ids;
  std::vector<Volume> images;
  std::vector<LabelVolume> reference;
  for (const auto& lc : cases) {
    ids.push_back(lc.id);
    images.push_back(lc.image);
    reference.push_back(lc.reference);
  }
  std::ofstream log(out / "train_log.jsonl", std::ios::trunc);
  const auto reports = run_experiment(ids, images, reference, cfg, [&log](const CrossvalProgress& p) {
    json j = to_json(p.entry);
    j["supervision"] = p.supervision;
    j["fold"] = p.fold;
    log << j.dump() << '\n';
  });
  json doc = {{"config", to_json(cfg)}, {"reports", json::array()}, {"summary", summary_table(reports)}};
  for (const auto& r : reports) doc["reports"].push_back(to_json(r));
  write_json(out / "reports.json", doc);
  emit({{"command", "crossval"}, {"out", (out / "reports.json").string()}, {"summary", summary_table(reports)}});
  return 0;
}

int cmd_report(const Common& c, const ReportArgs& a) {
  (void)c;
  fs::path path = a.input;
  if (fs::is_directory(path)) path /= "reports.json";
  const json doc = read_json(path);
  std::vector<DscReport> reports;
  for (const auto& r : doc.at("reports")) reports.push_back(dsc_report_from_json(r));
  if (a.format == "csv") {
    std::cout << summary_csv(reports);
  } else if (a.format == "json") {
    emit({{"command", "report"}, {"summary", summary_table(reports)}});
  } else {
    throw Error(ErrorCode::FlagError, "--format must be json or csv");
  }
  return 0;
}

}  // namespace weakseg::cli
