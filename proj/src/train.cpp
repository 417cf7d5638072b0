#include "weakseg/train.hpp"

#include <algorithm>
#include <memory>
#include <tuple>

#include "weakseg/error.hpp"
#include "weakseg/metrics.hpp"
#include "weakseg/random.hpp"

namespace weakseg {

using fcn::FcnModel;
using fcn::Tensor4;

void TrainingConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  if (patch_size < 16) fail("patch_size must be >= 16");
  if (n_training_patches < 2 || n_training_patches % 2 != 0) fail("n_training_patches must be even and >= 2");
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(augment_sigma >= 0.0)) fail("augment_sigma must be >= 0");
  if (foreground_stride < 1) fail("foreground_stride must be >= 1");
  sgd.validate();
}

TrainingConfig desk_scale_config() {
  TrainingConfig cfg;
  cfg.patch_size = 32;
  cfg.n_training_patches = 4000;
  cfg.epochs = 10;
  cfg.batch_size = 16;
  return cfg;
}

nlohmann::json to_json(const TrainingConfig& cfg) {
  return {{"patch_size", cfg.patch_size},
          {"n_training_patches", cfg.n_training_patches},
          {"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"augment_sigma", cfg.augment_sigma},
          {"foreground_stride", cfg.foreground_stride},
          {"sgd", fcn::to_json(cfg.sgd)},
          {"seed", cfg.seed}};
}

TrainingConfig training_config_from_json(const nlohmann::json& j) {
  TrainingConfig cfg;
  try {
    cfg.patch_size = j.value("patch_size", cfg.patch_size);
    cfg.n_training_patches = j.value("n_training_patches", cfg.n_training_patches);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.augment_sigma = j.value("augment_sigma", cfg.augment_sigma);
    cfg.foreground_stride = j.value("foreground_stride", cfg.foreground_stride);
    if (j.contains("sgd")) cfg.sgd = fcn::sgd_config_from_json(j.at("sgd"));
    cfg.seed = j.value("seed", cfg.seed);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------- sampling

std::vector<PatchSite> sample_patch_sites(const LabelVolume& labels, const TrainingConfig& cfg, int n_patches,
                                          std::uint64_t seed, int volume_index) {
  const Dims3& d = labels.dims();
  const int p = cfg.patch_size;
  if (p > d.width || p > d.height) {
    throw Error(ErrorCode::PatchLargerThanSlice, "patch " + std::to_string(p) + " exceeds slice " +
                                                     std::to_string(d.width) + "x" + std::to_string(d.height));
  }
  if (n_patches < 0 || n_patches % 2 != 0) throw Error(ErrorCode::InvalidArgument, "patch count must be even");

  // Summed-area table of the slice to test each crop in O(1).
  std::vector<std::size_t> sat(static_cast<std::size_t>(d.width + 1) * (d.height + 1));
  auto sat_at = [&](int x, int y) -> std::size_t& { return sat[static_cast<std::size_t>(y) * (d.width + 1) + x]; };

  std::vector<PatchSite> fg;
  std::vector<PatchSite> bg;
  for (int z = 0; z < d.depth; ++z) {
    const auto slice = labels.slice(z);
    for (int y = 0; y < d.height; ++y) {
      std::size_t row = 0;
      for (int x = 0; x < d.width; ++x) {
        row += slice[static_cast<std::size_t>(y) * d.width + x];
        sat_at(x + 1, y + 1) = sat_at(x + 1, y) + row;
      }
    }
    std::vector<std::pair<int, int>> corners;
    for (int cy = 0; cy < d.height; cy += cfg.foreground_stride) {
      for (int cx = 0; cx < d.width; cx += cfg.foreground_stride) {
        corners.emplace_back(std::clamp(cx - p / 2, 0, d.width - p), std::clamp(cy - p / 2, 0, d.height - p));
      }
    }
    std::sort(corners.begin(), corners.end(),
              [](const auto& a, const auto& b) { return std::tie(a.second, a.first) < std::tie(b.second, b.first); });
    corners.erase(std::unique(corners.begin(), corners.end()), corners.end());
    for (const auto& [x0, y0] : corners) {
      const std::size_t count = sat_at(x0 + p, y0 + p) + sat_at(x0, y0) - sat_at(x0 + p, y0) - sat_at(x0, y0 + p);
      PatchSite site{volume_index, z, x0, y0, count > 0};
      (count > 0 ? fg : bg).push_back(site);
    }
  }
  if (fg.empty()) throw Error(ErrorCode::NoForeground, "no patch contains object");
  if (bg.empty()) throw Error(ErrorCode::NoBackground, "every patch contains object");

  Rng rng(mix_seed({seed, hash_string("patch-sites"), static_cast<std::uint64_t>(volume_index)}));
  const auto half = static_cast<std::size_t>(n_patches / 2);
  auto pick = [&](std::vector<PatchSite>& candidates) {
    std::vector<PatchSite> out;
    if (candidates.size() <= half) {
      out = candidates;
      while (out.size() < half) out.push_back(candidates[rng.below(candidates.size())]);
    } else {
      // Partial Fisher-Yates: the first `half` entries form a uniform sample.
      for (std::size_t i = 0; i < half; ++i) {
        const std::size_t j = i + rng.below(candidates.size() - i);
        std::swap(candidates[i], candidates[j]);
      }
      out.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(half));
    }
    return out;
  };
  std::vector<PatchSite> sites = pick(fg);
  const auto background = pick(bg);
  sites.insert(sites.end(), background.begin(), background.end());
  return sites;
}

Patch extract_patch(const Volume& image, const LabelVolume& labels, const PatchSite& site, int size) {
  const Dims3& d = image.dims();
  if (!(labels.dims() == d)) throw Error(ErrorCode::DimMismatch, "image and labels differ in dims");
  if (site.x0 < 0 || site.y0 < 0 || site.x0 + size > d.width || site.y0 + size > d.height || site.slice < 0 ||
      site.slice >= d.depth) {
    throw Error(ErrorCode::IndexOutOfRange, "patch site outside the volume");
  }
  Patch patch;
  patch.size = size;
  patch.is_foreground = site.foreground;
  const auto plane = static_cast<std::size_t>(size) * size;
  patch.data.resize(3 * plane);
  patch.target.resize(plane);
  const int sources[3] = {std::max(site.slice - 1, 0), site.slice, std::min(site.slice + 1, d.depth - 1)};
  for (int c = 0; c < 3; ++c) {
    const auto s = image.slice(sources[c]);
    for (int y = 0; y < size; ++y) {
      const float* row = s.data() + static_cast<std::size_t>(site.y0 + y) * d.width + site.x0;
      std::copy(row, row + size, patch.data.begin() + static_cast<std::ptrdiff_t>(c * plane + y * size));
    }
  }
  const auto t = labels.slice(site.slice);
  for (int y = 0; y < size; ++y) {
    const std::uint8_t* row = t.data() + static_cast<std::size_t>(site.y0 + y) * d.width + site.x0;
    std::copy(row, row + size, patch.target.begin() + static_cast<std::ptrdiff_t>(y * size));
  }
  return patch;
}

std::vector<Patch> sample_patches(const Volume& image, const LabelVolume& labels, const TrainingConfig& cfg,
                                  std::uint64_t seed) {
  cfg.validate();
  if (!(image.dims() == labels.dims())) throw Error(ErrorCode::DimMismatch, "image and labels differ in dims");
  std::vector<Patch> patches;
  for (const auto& site : sample_patch_sites(labels, cfg, cfg.n_training_patches, seed)) {
    patches.push_back(extract_patch(image, labels, site, cfg.patch_size));
  }
  return patches;
}

Patch augment(const Patch& p, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  const bool flip_h = rng.bernoulli(0.5);
  const bool flip_v = rng.bernoulli(0.5);
  const auto offset = static_cast<float>(rng.normal(0.0, sigma));
  Patch out = p;
  const int n = p.size;
  const auto plane = static_cast<std::size_t>(n) * n;
  auto src_index = [&](int x, int y) {
    const int sx = flip_h ? n - 1 - x : x;
    const int sy = flip_v ? n - 1 - y : y;
    return static_cast<std::size_t>(sy) * n + sx;
  };
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const std::size_t dst = static_cast<std::size_t>(y) * n + x;
      const std::size_t src = src_index(x, y);
      for (int c = 0; c < 3; ++c) out.data[c * plane + dst] = p.data[c * plane + src] + offset;
      out.target[dst] = p.target[src];
    }
  }
  return out;
}

std::vector<PatchSite> sample_training_sites(const std::vector<const LabelVolume*>& labels,
                                             const TrainingConfig& cfg) {
  cfg.validate();
  if (labels.empty()) throw Error(ErrorCode::InvalidArgument, "no training volumes");
  const auto n = static_cast<int>(labels.size());
  const int pairs = cfg.n_training_patches / 2;
  std::vector<PatchSite> sites;
  for (int i = 0; i < n; ++i) {
    const int share = pairs / n + (i < pairs % n ? 1 : 0);
    if (share == 0) continue;
    auto v = sample_patch_sites(*labels[static_cast<std::size_t>(i)], cfg, 2 * share, cfg.seed, i);
    sites.insert(sites.end(), v.begin(), v.end());
  }
  return sites;
}

// ---------------------------------------------------------------- training

nlohmann::json to_json(const TrainingLogEntry& e) {
  return {{"epoch", e.epoch}, {"step", e.step}, {"loss", e.loss}};
}

TrainResult train(const std::vector<const Volume*>& images, const std::vector<const LabelVolume*>& labels,
                  const std::vector<PatchSite>& sites, const TrainingConfig& cfg, const fcn::FcnConfig& net,
                  const TrainLogSink& sink) {
  cfg.validate();
  if (images.size() != labels.size()) throw Error(ErrorCode::DimMismatch, "image and label counts differ");
  if (sites.empty()) throw Error(ErrorCode::InvalidArgument, "no patch sites");
  for (const auto& s : sites) {
    if (s.volume < 0 || static_cast<std::size_t>(s.volume) >= images.size()) {
      throw Error(ErrorCode::IndexOutOfRange, "patch site refers to a missing volume");
    }
  }
  if (net.in_channels != 3) throw Error(ErrorCode::InvalidConfig, "patches carry 3 channels");

  TrainResult result{FcnModel<float>(net, cfg.seed), {}, {}};
  auto& model = result.model;
  const int p = cfg.patch_size;
  const auto plane = static_cast<std::size_t>(p) * p;
  const std::size_t n = sites.size();
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t steps = (n + batch - 1) / batch;

  std::vector<std::size_t> order(n);
  int global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle_rng(mix_seed({cfg.seed, hash_string("epoch-order"), static_cast<std::uint64_t>(epoch)}));
    shuffle_rng.shuffle(order.begin(), order.end());
    double epoch_sum = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      const std::size_t begin = step * batch;
      const std::size_t count = std::min(batch, n - begin);
      Tensor4<float> x(static_cast<int>(count), 3, p, p);
      std::vector<std::uint8_t> targets(count * plane);
      for (std::size_t b = 0; b < count; ++b) {
        const PatchSite& site = sites[order[begin + b]];
        const auto idx = static_cast<std::size_t>(site.volume);
        const Patch patch = augment(extract_patch(*images[idx], *labels[idx], site, p), cfg.augment_sigma,
                                    mix_seed({cfg.seed, hash_string("augment"), static_cast<std::uint64_t>(epoch),
                                              static_cast<std::uint64_t>(begin + b)}));
        std::copy(patch.data.begin(), patch.data.end(), x.image(static_cast<int>(b)));
        std::copy(patch.target.begin(), patch.target.end(), targets.begin() + static_cast<std::ptrdiff_t>(b * plane));
      }
      model.zero_grad();
      const auto scores = model.forward(x, fcn::Mode::train,
                                        mix_seed({cfg.seed, hash_string("dropout"),
                                                  static_cast<std::uint64_t>(global_step)}));
      const auto loss = fcn::loss_softmax_ce(scores, targets);
      model.backward(loss.grad);
      fcn::sgd_step(model, cfg.sgd);
      const TrainingLogEntry entry{epoch, global_step, loss.loss};
      result.log.push_back(entry);
      if (sink) sink(entry);
      epoch_sum += loss.loss;
      ++global_step;
    }
    result.epoch_loss.push_back(epoch_sum / static_cast<double>(steps));
    model.epoch = epoch + 1;
  }
  return result;
}

TrainResult train(const std::vector<const Volume*>& images, const std::vector<const LabelVolume*>& labels,
                  const TrainingConfig& cfg, const fcn::FcnConfig& net, const TrainLogSink& sink) {
  return train(images, labels, sample_training_sites(labels, cfg), cfg, net, sink);
}

// ---------------------------------------------------------------- inference

InferenceResult infer_volume(FcnModel<float>& model, const Volume& image) {
  const Dims3& d = image.dims();
  if (model.config().in_channels != 3) throw Error(ErrorCode::BadInputShape, "model does not take 3 channels");
  if (d.width < fcn::kFcnStride || d.height < fcn::kFcnStride) {
    throw Error(ErrorCode::BadInputShape, "slices must be at least 16x16");
  }
  std::vector<float> prob(d.voxel_count());
  std::vector<std::uint8_t> labels(d.voxel_count());
  const std::size_t plane = d.slice_size();
  const int classes = model.config().n_classes;
  for (int k = 0; k < d.depth; ++k) {
    Tensor4<float> x(1, 3, d.height, d.width);
    const int sources[3] = {std::max(k - 1, 0), k, std::min(k + 1, d.depth - 1)};
    for (int c = 0; c < 3; ++c) {
      const auto s = image.slice(sources[c]);
      std::copy(s.begin(), s.end(), x.data.begin() + static_cast<std::ptrdiff_t>(c * plane));
    }
    const auto scores = model.forward(x, fcn::Mode::infer);
    const auto soft = fcn::softmax(scores);
    const std::size_t base = static_cast<std::size_t>(k) * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      prob[base + i] = soft.data[plane + i];
      int best = 0;
      for (int c = 1; c < classes; ++c) {
        if (scores.data[c * plane + i] > scores.data[best * plane + i]) best = c;
      }
      labels[base + i] = best == 1 ? 1 : 0;
    }
  }
  return {Volume(d, image.spacing(), std::move(prob)), LabelVolume(d, std::move(labels))};
}

// ---------------------------------------------------------------- evaluation

nlohmann::json to_json(const DscReport& r) {
  return {{"supervision", r.supervision},
          {"volume_ids", r.volume_ids},
          {"per_volume", r.per_volume},
          {"mean", r.mean},
          {"std", r.std}};
}

DscReport dsc_report_from_json(const nlohmann::json& j) {
  DscReport r;
  try {
    r.supervision = j.at("supervision").get<std::string>();
    r.volume_ids = j.value("volume_ids", std::vector<std::string>{});
    r.per_volume = j.at("per_volume").get<std::vector<double>>();
    r.mean = j.at("mean").get<double>();
    r.std = j.at("std").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedHeader, std::string("DSC report: ") + e.what());
  }
  return r;
}

std::vector<std::vector<int>> fold_split(int n, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::InvalidConfig, "need at least 2 folds");
  if (n < k) {
    throw Error(ErrorCode::TooFewVolumes,
                std::to_string(n) + " volumes cannot fill " + std::to_string(k) + " folds");
  }
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  Rng rng(mix_seed({seed, hash_string("folds")}));
  rng.shuffle(idx.begin(), idx.end());
  std::vector<std::vector<int>> folds(static_cast<std::size_t>(k));
  for (int i = 0; i < n; ++i) folds[static_cast<std::size_t>(i % k)].push_back(idx[static_cast<std::size_t>(i)]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

Trainer fcn_trainer(const CrossvalData& data, const TrainingConfig& cfg, const fcn::FcnConfig& net,
                    std::function<void(const CrossvalProgress&)> progress) {
  return [&data, cfg, net, progress](const std::vector<int>& train_indices, const Supervision& supervision,
                                     int fold) -> Segmenter {
    std::vector<const Volume*> images;
    std::vector<const LabelVolume*> reference;
    std::vector<const LabelVolume*> targets;
    for (int i : train_indices) {
      const auto idx = static_cast<std::size_t>(i);
      images.push_back(&data.images[idx]);
      reference.push_back(&data.reference[idx]);
      targets.push_back(&supervision.labels[idx]);
    }
    TrainingConfig fold_cfg = cfg;
    fold_cfg.seed = mix_seed({cfg.seed, static_cast<std::uint64_t>(fold)});
    const auto sites = sample_training_sites(reference, fold_cfg);
    TrainLogSink sink;
    if (progress) {
      sink = [&](const TrainingLogEntry& e) { progress({supervision.name, fold, e}); };
    }
    auto model = std::make_shared<FcnModel<float>>(train(images, targets, sites, fold_cfg, net, sink).model);
    return [&data, model](int index) { return infer_volume(*model, data.images[static_cast<std::size_t>(index)]).labels; };
  };
}

std::vector<DscReport> crossval(const CrossvalData& data, const std::vector<Supervision>& supervisions, int k,
                                std::uint64_t seed, const Trainer& trainer) {
  const int n = static_cast<int>(data.images.size());
  if (data.reference.size() != data.images.size() || data.ids.size() != data.images.size()) {
    throw Error(ErrorCode::DimMismatch, "crossval inputs differ in length");
  }
  const auto folds = fold_split(n, k, seed);
  std::vector<DscReport> reports;
  for (const auto& sup : supervisions) {
    if (sup.labels.size() != data.images.size()) {
      throw Error(ErrorCode::DimMismatch, "supervision '" + sup.name + "' has the wrong number of label volumes");
    }
    DscReport report;
    report.supervision = sup.name;
    report.volume_ids = data.ids;
    report.per_volume.assign(static_cast<std::size_t>(n), 0.0);
    for (int f = 0; f < k; ++f) {
      const auto& held_out = folds[static_cast<std::size_t>(f)];
      std::vector<int> train_idx;
      for (int i = 0; i < n; ++i) {
        if (!std::binary_search(held_out.begin(), held_out.end(), i)) train_idx.push_back(i);
      }
      const Segmenter segment = trainer(train_idx, sup, f);
      for (int i : held_out) {
        report.per_volume[static_cast<std::size_t>(i)] = dsc(segment(i), data.reference[static_cast<std::size_t>(i)]);
      }
    }
    const auto stats = mean_std(report.per_volume);
    report.mean = stats.mean;
    report.std = stats.stddev;
    reports.push_back(std::move(report));
  }
  return reports;
}

}  // namespace weakseg
