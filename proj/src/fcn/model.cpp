#include "weakseg/fcn/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "weakseg/error.hpp"
#include "weakseg/fcn/ops.hpp"
#include "weakseg/random.hpp"

namespace weakseg::fcn {

void FcnConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); };
  for (int k : stack_kernel_sizes) {
    if (k < 1 || k % 2 == 0) fail("stack kernel sizes must be odd and positive");
  }
  if (classifier_kernel < 1 || classifier_kernel % 2 == 0) fail("classifier kernel must be odd");
  if (in_channels < 1 || conv_filters < 1 || classifier_filters < 1) fail("channel counts must be positive");
  if (n_classes < 2) fail("n_classes must be at least 2");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must lie in [0, 1)");
  if (n_skips < 0 || n_skips > 2) fail("n_skips must be 0, 1 or 2");
}

nlohmann::json to_json(const FcnConfig& cfg) {
  return {{"stack_kernel_sizes", cfg.stack_kernel_sizes},
          {"in_channels", cfg.in_channels},
          {"conv_filters", cfg.conv_filters},
          {"classifier_filters", cfg.classifier_filters},
          {"classifier_kernel", cfg.classifier_kernel},
          {"n_classes", cfg.n_classes},
          {"dropout_rate", cfg.dropout_rate},
          {"n_skips", cfg.n_skips}};
}

FcnConfig fcn_config_from_json(const nlohmann::json& j) {
  FcnConfig cfg;
  try {
    if (j.contains("stack_kernel_sizes")) {
      const auto ks = j.at("stack_kernel_sizes").get<std::vector<int>>();
      if (ks.size() != 4) throw Error(ErrorCode::InvalidConfig, "stack_kernel_sizes needs 4 entries");
      std::copy(ks.begin(), ks.end(), cfg.stack_kernel_sizes.begin());
    }
    cfg.in_channels = j.value("in_channels", cfg.in_channels);
    cfg.conv_filters = j.value("conv_filters", cfg.conv_filters);
    cfg.classifier_filters = j.value("classifier_filters", cfg.classifier_filters);
    cfg.classifier_kernel = j.value("classifier_kernel", cfg.classifier_kernel);
    cfg.n_classes = j.value("n_classes", cfg.n_classes);
    cfg.dropout_rate = j.value("dropout_rate", cfg.dropout_rate);
    cfg.n_skips = j.value("n_skips", cfg.n_skips);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  cfg.validate();
  return cfg;
}

namespace {

template <class T>
void init_he(Parameter<T>& p, int fan_in, std::uint64_t seed) {
  Rng rng(mix_seed({seed, hash_string(p.name)}));
  const double sd = std::sqrt(2.0 / fan_in);
  for (auto& v : p.value) v = static_cast<T>(rng.normal(0.0, sd));
}

template <class T>
Tensor4<T> pad_to(const Tensor4<T>& x, int h, int w) {
  if (x.h == h && x.w == w) return x;
  Tensor4<T> out(x.n, x.c, h, w);
  for (int i = 0; i < x.n; ++i) {
    for (int c = 0; c < x.c; ++c) {
      for (int y = 0; y < x.h; ++y) {
        const T* src = &x.at(i, c, y, 0);
        std::copy(src, src + x.w, &out.at(i, c, y, 0));
      }
    }
  }
  return out;
}

template <class T>
Tensor4<T> crop_to(const Tensor4<T>& x, int h, int w) {
  if (x.h == h && x.w == w) return x;
  Tensor4<T> out(x.n, x.c, h, w);
  for (int i = 0; i < x.n; ++i) {
    for (int c = 0; c < x.c; ++c) {
      for (int y = 0; y < h; ++y) {
        const T* src = &x.at(i, c, y, 0);
        std::copy(src, src + w, &out.at(i, c, y, 0));
      }
    }
  }
  return out;
}

int round_up(int v, int m) { return (v + m - 1) / m * m; }

}  // namespace

template <class T>
FcnModel<T>::FcnModel(const FcnConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
  cfg_.validate();
  int in = cfg_.in_channels;
  const int f = cfg_.conv_filters;
  for (int s = 0; s < 4; ++s) {
    const int k = cfg_.stack_kernel_sizes[static_cast<std::size_t>(s)];
    const std::string prefix = "stack" + std::to_string(s + 1);
    auto& st = stacks_[static_cast<std::size_t>(s)];
    st.conv_a = Conv2d<T>(prefix + ".conv1", in, f, k);
    st.conv_b = Conv2d<T>(prefix + ".conv2", f, f, k);
    init_he(st.conv_a.weight, in * k * k, seed);
    init_he(st.conv_b.weight, f * k * k, seed);
    in = f;
  }
  const int ck = cfg_.classifier_kernel;
  const int cf = cfg_.classifier_filters;
  fc1_ = Conv2d<T>("classifier1", f, cf, ck);
  fc2_ = Conv2d<T>("classifier2", cf, cf, ck);
  score_ = Conv2d<T>("score", cf, cfg_.n_classes, 1);
  init_he(fc1_.weight, f * ck * ck, seed);
  init_he(fc2_.weight, cf * ck * ck, seed);
  init_he(score_.weight, cf, seed);
  fc1_drop_ = Dropout<T>(cfg_.dropout_rate);
  fc2_drop_ = Dropout<T>(cfg_.dropout_rate);

  for (int i = 0; i < cfg_.n_skips; ++i) {
    up_.emplace_back("upsample" + std::to_string(i + 1), cfg_.n_classes, cfg_.n_classes, 4, 2, 1);
    up_.back().init_bilinear();
    // Zero-initialized so the fused model starts out as the plain upsampler.
    proj_.emplace_back("skip" + std::to_string(i + 1), f, cfg_.n_classes, 1);
  }
  const int factor = kFcnStride >> cfg_.n_skips;
  final_up_ = ConvTranspose2d<T>("upsample_final", cfg_.n_classes, cfg_.n_classes, 2 * factor, factor,
                                 factor / 2);
  final_up_.init_bilinear();
}

template <class T>
Tensor4<T> FcnModel<T>::forward(const Tensor4<T>& input, Mode mode, std::uint64_t dropout_seed) {
  cache_valid_ = false;
  if (input.c != cfg_.in_channels) throw Error(ErrorCode::BadInputShape, "input channel count mismatch");
  if (input.n < 1 || input.h < kFcnStride || input.w < kFcnStride) {
    throw Error(ErrorCode::BadInputShape, "input spatial dims must be at least 16");
  }
  in_h_ = input.h;
  in_w_ = input.w;
  pad_h_ = round_up(input.h, kFcnStride);
  pad_w_ = round_up(input.w, kFcnStride);

  Tensor4<T> x = pad_to(input, pad_h_, pad_w_);
  std::array<Tensor4<T>, 4> pooled;
  for (std::size_t s = 0; s < 4; ++s) {
    auto& st = stacks_[s];
    x = st.relu_a.forward(st.conv_a.forward(x));
    x = st.relu_b.forward(st.conv_b.forward(x));
    pooled[s] = st.pool.forward(x);
    x = pooled[s];
  }
  const bool train = mode == Mode::train;
  x = fc1_relu_.forward(fc1_.forward(x));
  x = fc1_drop_.forward(x, train, mix_seed({dropout_seed, 1}));
  x = fc2_relu_.forward(fc2_.forward(x));
  x = fc2_drop_.forward(x, train, mix_seed({dropout_seed, 2}));
  x = score_.forward(x);
  for (std::size_t i = 0; i < up_.size(); ++i) {
    x = add(up_[i].forward(x), proj_[i].forward(pooled[2 - i]));
  }
  x = final_up_.forward(x);
  cache_valid_ = true;
  return crop_to(x, in_h_, in_w_);
}

template <class T>
Tensor4<T> FcnModel<T>::backward(const Tensor4<T>& grad_scores, bool need_input_grad) {
  if (!cache_valid_) throw Error(ErrorCode::StaleCache, "backward without a matching forward");
  if (grad_scores.c != cfg_.n_classes || grad_scores.h != in_h_ || grad_scores.w != in_w_) {
    throw Error(ErrorCode::StaleCache, "upstream gradient does not match the last forward");
  }
  cache_valid_ = false;
  Tensor4<T> g = final_up_.backward(pad_to(grad_scores, pad_h_, pad_w_));
  std::array<Tensor4<T>, 4> pool_grad;
  for (int i = static_cast<int>(up_.size()) - 1; i >= 0; --i) {
    const auto idx = static_cast<std::size_t>(i);
    pool_grad[2 - idx] = proj_[idx].backward(g, true);
    g = up_[idx].backward(g);
  }
  g = score_.backward(g);
  g = fc2_drop_.backward(g);
  g = fc2_.backward(fc2_relu_.backward(g));
  g = fc1_drop_.backward(g);
  g = fc1_.backward(fc1_relu_.backward(g));
  for (int s = 3; s >= 0; --s) {
    const auto idx = static_cast<std::size_t>(s);
    auto& st = stacks_[idx];
    if (pool_grad[idx].size() != 0) g = add(g, pool_grad[idx]);
    g = st.pool.backward(g);
    g = st.conv_b.backward(st.relu_b.backward(g));
    g = st.conv_a.backward(st.relu_a.backward(g), need_input_grad || s > 0);
  }
  if (!need_input_grad) return {};
  return crop_to(g, in_h_, in_w_);
}

template <class T>
std::vector<Parameter<T>*> FcnModel<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& st : stacks_) {
    out.insert(out.end(), {&st.conv_a.weight, &st.conv_a.bias, &st.conv_b.weight, &st.conv_b.bias});
  }
  out.insert(out.end(), {&fc1_.weight, &fc1_.bias, &fc2_.weight, &fc2_.bias, &score_.weight, &score_.bias});
  for (std::size_t i = 0; i < up_.size(); ++i) {
    out.insert(out.end(), {&up_[i].weight, &proj_[i].weight, &proj_[i].bias});
  }
  out.push_back(&final_up_.weight);
  return out;
}

template <class T>
std::vector<const Parameter<T>*> FcnModel<T>::parameters() const {
  auto mut = const_cast<FcnModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

template <class T>
std::vector<std::uint8_t> FcnModel<T>::switch_pattern() const {
  std::vector<std::uint8_t> out;
  auto relu_states = [&](const Relu<T>& r) {
    for (T v : r.output().data) out.push_back(v > T(0));
  };
  for (const auto& st : stacks_) {
    relu_states(st.relu_a);
    relu_states(st.relu_b);
    out.insert(out.end(), st.pool.argmax().begin(), st.pool.argmax().end());
  }
  relu_states(fc1_relu_);
  relu_states(fc2_relu_);
  return out;
}

template <class T>
std::size_t FcnModel<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->size();
  return n;
}

template <class T>
void FcnModel<T>::zero_grad() {
  for (auto* p : parameters()) std::fill(p->grad.begin(), p->grad.end(), T(0));
}

template <class T>
Tensor4<T> softmax(const Tensor4<T>& scores) {
  Tensor4<T> out(scores.n, scores.c, scores.h, scores.w);
  const std::size_t hw = scores.plane_size();
  for (int i = 0; i < scores.n; ++i) {
    const T* s = scores.image(i);
    T* o = out.image(i);
    for (std::size_t p = 0; p < hw; ++p) {
      T top = s[p];
      for (int c = 1; c < scores.c; ++c) top = std::max(top, s[c * hw + p]);
      T sum = T(0);
      for (int c = 0; c < scores.c; ++c) {
        const T e = std::exp(s[c * hw + p] - top);
        o[c * hw + p] = e;
        sum += e;
      }
      for (int c = 0; c < scores.c; ++c) o[c * hw + p] /= sum;
    }
  }
  return out;
}

template <class T>
LossResult<T> loss_softmax_ce(const Tensor4<T>& scores, const std::vector<std::uint8_t>& targets) {
  const std::size_t hw = scores.plane_size();
  const std::size_t pixels = static_cast<std::size_t>(scores.n) * hw;
  if (targets.size() != pixels) throw Error(ErrorCode::DimMismatch, "target map does not match scores");
  LossResult<T> result;
  result.grad = Tensor4<T>(scores.n, scores.c, scores.h, scores.w);
  const T inv = T(1) / static_cast<T>(pixels);
  double total = 0.0;
  for (int i = 0; i < scores.n; ++i) {
    const T* s = scores.image(i);
    T* g = result.grad.image(i);
    for (std::size_t p = 0; p < hw; ++p) {
      const int t = targets[static_cast<std::size_t>(i) * hw + p];
      if (t >= scores.c) throw Error(ErrorCode::InvalidArgument, "target class out of range");
      T top = s[p];
      for (int c = 1; c < scores.c; ++c) top = std::max(top, s[c * hw + p]);
      T sum = T(0);
      for (int c = 0; c < scores.c; ++c) sum += std::exp(s[c * hw + p] - top);
      const T log_z = top + std::log(sum);
      total += static_cast<double>(log_z - s[t * hw + p]);
      for (int c = 0; c < scores.c; ++c) {
        const T prob = std::exp(s[c * hw + p] - log_z);
        g[c * hw + p] = (prob - (c == t ? T(1) : T(0))) * inv;
      }
    }
  }
  result.loss = total / static_cast<double>(pixels);
  return result;
}

void SgdConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidConfig, "learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorCode::InvalidConfig, "momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw Error(ErrorCode::InvalidConfig, "weight_decay must be non-negative");
}

nlohmann::json to_json(const SgdConfig& cfg) {
  return {{"learning_rate", cfg.learning_rate}, {"momentum", cfg.momentum}, {"weight_decay", cfg.weight_decay}};
}

SgdConfig sgd_config_from_json(const nlohmann::json& j) {
  SgdConfig cfg;
  try {
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.momentum = j.value("momentum", cfg.momentum);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  cfg.validate();
  return cfg;
}

template <class T>
void sgd_update(Parameter<T>& p, const SgdConfig& opt) {
  if (p.grad.size() != p.value.size() || p.momentum.size() != p.value.size()) {
    throw Error(ErrorCode::DimMismatch, p.name + ": gradient shape differs from parameter");
  }
  Ops<T>::sgd_momentum(p.value.data(), p.momentum.data(), p.grad.data(), p.size(),
                       static_cast<T>(opt.learning_rate), static_cast<T>(opt.momentum),
                       p.decay ? static_cast<T>(opt.weight_decay) : T(0));
}

template <class T>
void sgd_step(FcnModel<T>& model, const SgdConfig& opt) {
  for (auto* p : model.parameters()) sgd_update(*p, opt);
}

template class FcnModel<float>;
template class FcnModel<double>;
template Tensor4<float> softmax(const Tensor4<float>&);
template Tensor4<double> softmax(const Tensor4<double>&);
template LossResult<float> loss_softmax_ce(const Tensor4<float>&, const std::vector<std::uint8_t>&);
template LossResult<double> loss_softmax_ce(const Tensor4<double>&, const std::vector<std::uint8_t>&);
template void sgd_update(Parameter<float>&, const SgdConfig&);
template void sgd_update(Parameter<double>&, const SgdConfig&);
template void sgd_step(FcnModel<float>&, const SgdConfig&);
template void sgd_step(FcnModel<double>&, const SgdConfig&);

}  // namespace weakseg::fcn
