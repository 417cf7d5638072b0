#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace weakseg::cli {

struct Common {
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string config;  // experiment JSON path
  bool deterministic = false;
  std::string out;
};

nlohmann::json load_config(const Common& common);

struct PhantomArgs {
  int n_volumes = -1;
  std::vector<int> dims;
  double fraction = -1.0;
  double noise = -1.0;
};
int cmd_phantom(const Common& c, const PhantomArgs& a);

struct SlicArgs {
  std::string volume;
  int slice = 0;
  int region_size = -1;
  double compactness = -1.0;
  int iterations = -1;
};
int cmd_slic(const Common& c, const SlicArgs& a);

struct WeakLabelArgs {
  std::string dataset;
  double threshold = -1.0;
};
int cmd_weak_labels(const Common& c, const WeakLabelArgs& a);

struct CrowdArgs {
  std::string dataset;
  int n_raters = -1;
};
int cmd_simulate_crowd(const Common& c, const CrowdArgs& a);

struct ServeArgs {
  std::string data_dir;
  std::string host = "127.0.0.1";
  int port = 8080;
  double lease_seconds = 300.0;
  int redundancy = 1;
};
int cmd_serve(const Common& c, const ServeArgs& a);

struct TrainArgs {
  std::string dataset;
  std::string supervision = "full";
  std::vector<std::string> volumes;
  int patch_size = -1;
  int n_patches = -1;
  int epochs = -1;
  int batch_size = -1;
};
int cmd_train(const Common& c, const TrainArgs& a);

struct InferArgs {
  std::string model;
  std::string volume;
};
int cmd_infer(const Common& c, const InferArgs& a);

struct EvalArgs {
  std::string pred;
  std::string ref;
};
int cmd_eval(const Common& c, const EvalArgs& a);

struct CrossvalArgs {
  std::string dataset;
  int folds = -1;
  std::vector<std::string> supervision;
  int n_patches = -1;
  int epochs = -1;
};
int cmd_crossval(const Common& c, const CrossvalArgs& a);

struct ReportArgs {
  std::string input;
  std::string format = "json";
};
int cmd_report(const Common& c, const ReportArgs& a);

}  // namespace weakseg::cli
