#pragma once
// Fully convolutional segmentation network: four conv/conv/pool stacks, a
// 1x1 classifier with dropout, and a transposed-conv decoder fused with
// projected pool outputs of stacks 3 and 2.

#include <array>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "weakseg/fcn/layers.hpp"
#include "weakseg/fcn/tensor.hpp"

namespace weakseg::fcn {

struct FcnConfig {
  std::array<int, 4> stack_kernel_sizes{5, 5, 5, 3};
  int in_channels = 3;
  int conv_filters = 32;
  int classifier_filters = 128;
  int classifier_kernel = 1;
  int n_classes = 2;
  double dropout_rate = 0.5;
  int n_skips = 2;  // 0, 1 or 2 skip fusions

  void validate() const;  // throws InvalidConfig
};

nlohmann::json to_json(const FcnConfig& cfg);
FcnConfig fcn_config_from_json(const nlohmann::json& j);

enum class Mode { train, infer };

// Total downsampling of the encoder; inputs are zero-padded to a multiple of it.
inline constexpr int kFcnStride = 16;

template <class T>
class FcnModel {
 public:
  FcnModel(const FcnConfig& cfg, std::uint64_t seed);

  // scores (n, n_classes, h, w) for input (n, in_channels, h, w), h, w >= 16.
  Tensor4<T> forward(const Tensor4<T>& input, Mode mode, std::uint64_t dropout_seed = 0);
  // Accumulates parameter gradients for the last forward. Returns the input
  // gradient when requested, else an empty tensor.
  Tensor4<T> backward(const Tensor4<T>& grad_scores, bool need_input_grad = false);

  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;
  // ReLU on/off states and pooling choices of the last forward. Two inputs
  // with equal patterns lie in the same linear piece of the network.
  std::vector<std::uint8_t> switch_pattern() const;
  std::size_t parameter_count() const;
  void zero_grad();

  // Copies values (not gradients or momentum) from a model of the same config.
  template <class U>
  void copy_values_from(const FcnModel<U>& other) {
    auto dst = parameters();
    auto src = other.parameters();
    for (std::size_t i = 0; i < dst.size(); ++i) {
      for (std::size_t j = 0; j < dst[i]->size(); ++j) dst[i]->value[j] = static_cast<T>(src[i]->value[j]);
    }
  }

  const FcnConfig& config() const noexcept { return cfg_; }
  std::uint64_t seed() const noexcept { return seed_; }
  int epoch = 0;

 private:
  struct Stack {
    Conv2d<T> conv_a;
    Relu<T> relu_a;
    Conv2d<T> conv_b;
    Relu<T> relu_b;
    MaxPool2<T> pool;
  };

  FcnConfig cfg_;
  std::uint64_t seed_;
  std::array<Stack, 4> stacks_;
  Conv2d<T> fc1_;
  Relu<T> fc1_relu_;
  Dropout<T> fc1_drop_;
  Conv2d<T> fc2_;
  Relu<T> fc2_relu_;
  Dropout<T> fc2_drop_;
  Conv2d<T> score_;
  std::vector<ConvTranspose2d<T>> up_;
  std::vector<Conv2d<T>> proj_;
  ConvTranspose2d<T> final_up_;

  int in_h_ = 0;
  int in_w_ = 0;
  int pad_h_ = 0;
  int pad_w_ = 0;
  bool cache_valid_ = false;
};

// Per-pixel softmax over channels.
template <class T>
Tensor4<T> softmax(const Tensor4<T>& scores);

template <class T>
struct LossResult {
  double loss = 0.0;
  Tensor4<T> grad;
};

// Mean over pixels of -log softmax(scores)[target]; targets are n*h*w class
// ids in NHW order.
template <class T>
LossResult<T> loss_softmax_ce(const Tensor4<T>& scores, const std::vector<std::uint8_t>& targets);

struct SgdConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0005;

  void validate() const;  // throws InvalidConfig
};

nlohmann::json to_json(const SgdConfig& cfg);
SgdConfig sgd_config_from_json(const nlohmann::json& j);

// g' = g + decay*w (weights only), v = momentum*v + g', w -= rate*v.
template <class T>
void sgd_update(Parameter<T>& p, const SgdConfig& opt);

template <class T>
void sgd_step(FcnModel<T>& model, const SgdConfig& opt);

}  // namespace weakseg::fcn
