#pragma once
// Layers with cached state for exact backpropagation. Each forward caches
// what its backward needs; parameter gradients accumulate into
// Parameter::grad until the caller clears them.

#include <cstdint>
#include <string>
#include <vector>

#include "weakseg/fcn/tensor.hpp"

namespace weakseg::fcn {

// Stride-1 convolution with same padding (odd kernels only) and a bias.
template <class T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::string name, int in_channels, int out_channels, int kernel);

  Tensor4<T> forward(const Tensor4<T>& x);
  // Returns the input gradient when need_input_grad, else an empty tensor.
  Tensor4<T> backward(const Tensor4<T>& grad_out, bool need_input_grad = true);

  Parameter<T> weight;  // [out, in, k, k]
  Parameter<T> bias;    // [out]
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;

 private:
  Tensor4<T> input_;
};

template <class T>
class Relu {
 public:
  Tensor4<T> forward(const Tensor4<T>& x);
  Tensor4<T> backward(const Tensor4<T>& grad_out) const;
  // Cached output from the last forward (its sign pattern marks the active units).
  const Tensor4<T>& output() const noexcept { return output_; }

 private:
  Tensor4<T> output_;
};

// 2x2 max pooling, stride 2; ties go to the first element in scan order.
template <class T>
class MaxPool2 {
 public:
  Tensor4<T> forward(const Tensor4<T>& x);
  Tensor4<T> backward(const Tensor4<T>& grad_out) const;
  const std::vector<std::uint8_t>& argmax() const noexcept { return argmax_; }

 private:
  int in_h_ = 0;
  int in_w_ = 0;
  int n_ = 0;
  int c_ = 0;
  std::vector<std::uint8_t> argmax_;  // 0..3 within each window
};

// Inverted dropout: training masks units with probability `rate` and scales
// survivors by 1/(1-rate); inference is the identity.
template <class T>
class Dropout {
 public:
  explicit Dropout(double rate = 0.5) : rate_(rate) {}

  Tensor4<T> forward(const Tensor4<T>& x, bool train, std::uint64_t seed);
  Tensor4<T> backward(const Tensor4<T>& grad_out) const;
  double rate() const noexcept { return rate_; }

 private:
  double rate_;
  std::vector<T> scale_;
};

// Transposed (fractionally strided) convolution without bias:
// out = (in - 1) * stride - 2 * pad + kernel.
template <class T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(std::string name, int in_channels, int out_channels, int kernel, int stride, int pad);

  Tensor4<T> forward(const Tensor4<T>& x);
  Tensor4<T> backward(const Tensor4<T>& grad_out);

  // Channel-diagonal bilinear interpolation kernel.
  void init_bilinear();

  Parameter<T> weight;  // [in, out, k, k]
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;
  int stride = 1;
  int pad = 0;

 private:
  Tensor4<T> input_;
};

template <class T>
Tensor4<T> add(const Tensor4<T>& a, const Tensor4<T>& b);

}  // namespace weakseg::fcn
