#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

namespace weakseg::fcn {

// Dense NCHW tensor.
template <class T>
struct Tensor4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<T> data;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_),
        data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  std::size_t size() const noexcept { return data.size(); }
  std::size_t plane_size() const noexcept { return static_cast<std::size_t>(h) * w; }
  std::size_t image_size() const noexcept { return static_cast<std::size_t>(c) * plane_size(); }
  T* image(int i) noexcept { return data.data() + static_cast<std::size_t>(i) * image_size(); }
  const T* image(int i) const noexcept { return data.data() + static_cast<std::size_t>(i) * image_size(); }
  T& at(int i, int ch, int y, int x) {
    return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }
  const T& at(int i, int ch, int y, int x) const {
    return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }
  bool same_shape(const Tensor4& o) const noexcept { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

// Trainable tensor with its gradient and momentum buffers (identical sizes).
template <class T>
struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;
  std::vector<T> momentum;
  bool decay = true;  // weight decay applies to weights, not biases

  Parameter() = default;
  Parameter(std::string name_, std::vector<int> shape_, bool decay_)
      : name(std::move(name_)), shape(std::move(shape_)), decay(decay_) {
    std::size_t count = 1;
    for (int d : shape) count *= static_cast<std::size_t>(d);
    value.assign(count, T(0));
    grad.assign(count, T(0));
    momentum.assign(count, T(0));
  }

  std::size_t size() const noexcept { return value.size(); }
};

}  // namespace weakseg::fcn
