#include <CLI11.hpp>

#include <iostream>

#include "commands.hpp"
#include "weakseg/error.hpp"
#include "weakseg/event_log.hpp"

using namespace weakseg;
using namespace weakseg::cli;

namespace {

void print_error(std::string_view code, const std::string& message) {
  std::cerr << nlohmann::json{{"error", code}, {"message", message}}.dump() << std::endl;
}

void add_common(CLI::App* app, Common& common) {
  app->add_option("--seed", common.seed, "Master seed for every random stream")
      ->each([&common](const std::string&) { common.seed_set = true; });
  app->add_option("--config", common.config, "Experiment JSON file (sections: phantom, training, network, slic, crowd)");
  app->add_flag("--deterministic", common.deterministic, "Single-threaded, bit-reproducible numerics");
  app->add_option("--out", common.out, "Output file or directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised segmentation from superpixel annotations"};
  app.require_subcommand(1);
  std::function<int()> run;

  Common common;

  PhantomArgs phantom;
  auto* sub = app.add_subcommand("phantom", "Generate a synthetic phantom dataset");
  add_common(sub, common);
  sub->add_option("--n", phantom.n_volumes, "Number of volumes");
  sub->add_option("--dims", phantom.dims, "Volume dims W H D")->expected(3);
  sub->add_option("--fraction", phantom.fraction, "Target object volume fraction");
  sub->add_option("--noise", phantom.noise, "Gaussian noise sigma");
  sub->callback([&] { run = [&] { return cmd_phantom(common, phantom); }; });

  SlicArgs slic;
  sub = app.add_subcommand("slic", "Superpixels of one slice as JSON");
  add_common(sub, common);
  sub->add_option("--volume", slic.volume, "Volume file")->required();
  sub->add_option("--slice", slic.slice, "Slice index")->required();
  sub->add_option("--region-size", slic.region_size, "Superpixel grid step in pixels");
  sub->add_option("--compactness", slic.compactness, "Spatial weight");
  sub->add_option("--iterations", slic.iterations, "k-means iterations");
  sub->callback([&] { run = [&] { return cmd_slic(common, slic); }; });

  WeakLabelArgs weak;
  sub = app.add_subcommand("weak-labels", "Expert-weak labels from reference masks");
  add_common(sub, common);
  sub->add_option("--dataset", weak.dataset, "Dataset directory")->required();
  sub->add_option("--threshold", weak.threshold, "Superpixel coverage threshold");
  sub->callback([&] { run = [&] { return cmd_weak_labels(common, weak); }; });

  CrowdArgs crowd;
  sub = app.add_subcommand("simulate-crowd", "Simulated crowd annotations and labels");
  add_common(sub, common);
  sub->add_option("--dataset", crowd.dataset, "Dataset directory")->required();
  sub->add_option("--raters", crowd.n_raters, "Number of simulated raters");
  sub->callback([&] { run = [&] { return cmd_simulate_crowd(common, crowd); }; });

  ServeArgs serve;
  sub = app.add_subcommand("serve", "Run the annotation task service");
  add_common(sub, common);
  sub->add_option("--data-dir", serve.data_dir, "Persistent state directory")->required();
  sub->add_option("--host", serve.host, "Listen address");
  sub->add_option("--port", serve.port, "Listen port");
  sub->add_option("--lease-seconds", serve.lease_seconds, "Task lease before reassignment");
  sub->add_option("--redundancy", serve.redundancy, "Raters per slice");
  sub->callback([&] { run = [&] { return cmd_serve(common, serve); }; });

  TrainArgs train;
  sub = app.add_subcommand("train", "Train the FCN and write a checkpoint");
  add_common(sub, common);
  sub->add_option("--dataset", train.dataset, "Dataset directory")->required();
  sub->add_option("--supervision", train.supervision, "full, expert_weak or crowd_weak");
  sub->add_option("--volumes", train.volumes, "Volume ids to train on (default all)")->delimiter(',');
  sub->add_option("--patch-size", train.patch_size, "Patch edge in pixels");
  sub->add_option("--patches", train.n_patches, "Number of training patches");
  sub->add_option("--epochs", train.epochs, "Training epochs");
  sub->add_option("--batch-size", train.batch_size, "Mini-batch size");
  sub->callback([&] { run = [&] { return cmd_train(common, train); }; });

  InferArgs infer;
  sub = app.add_subcommand("infer", "Segment a volume with a checkpoint");
  add_common(sub, common);
  sub->add_option("--model", infer.model, "Checkpoint directory")->required();
  sub->add_option("--volume", infer.volume, "Volume file")->required();
  sub->callback([&] { run = [&] { return cmd_infer(common, infer); }; });

  EvalArgs eval;
  sub = app.add_subcommand("eval", "Dice coefficient of two label volumes");
  add_common(sub, common);
  sub->add_option("--pred", eval.pred, "Predicted labels")->required();
  sub->add_option("--ref", eval.ref, "Reference labels")->required();
  sub->callback([&] { run = [&] { return cmd_eval(common, eval); }; });

  CrossvalArgs cv;
  sub = app.add_subcommand("crossval", "k-fold cross-validation per supervision type");
  add_common(sub, common);
  sub->add_option("--dataset", cv.dataset, "Dataset directory")->required();
  sub->add_option("--folds", cv.folds, "Number of folds");
  sub->add_option("--supervision", cv.supervision, "Supervision types")->delimiter(',');
  sub->add_option("--patches", cv.n_patches, "Training patches per fold");
  sub->add_option("--epochs", cv.epochs, "Training epochs");
  sub->callback([&] { run = [&] { return cmd_crossval(common, cv); }; });

  ReportArgs report;
  sub = app.add_subcommand("report", "Summarize cross-validation reports");
  add_common(sub, common);
  sub->add_option("--input", report.input, "reports.json or its directory")->required();
  sub->add_option("--format", report.format, "json or csv");
  sub->callback([&] { run = [&] { return cmd_report(common, report); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("FlagError", e.what());
    return 2;
  }
  try {
    return run();
  } catch (const Error& e) {
    print_error(to_string(e.code()), e.what());
    return e.code() == ErrorCode::FlagError ? 2 : 1;
  } catch (const std::exception& e) {
    print_error("IoFailure", e.what());
    return 1;
  }
}
