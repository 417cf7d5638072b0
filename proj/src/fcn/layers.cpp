#include "weakseg/fcn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "weakseg/error.hpp"
#include "weakseg/fcn/ops.hpp"
#include "weakseg/random.hpp"

namespace weakseg::fcn {

namespace {

// Upper bound on im2col buffer size; larger images are processed in row bands.
constexpr std::size_t kMaxColumnElements = std::size_t{1} << 22;

int rows_per_band(int row_elems, int width) {
  const std::size_t per_row = static_cast<std::size_t>(row_elems) * static_cast<std::size_t>(width);
  return static_cast<int>(std::max<std::size_t>(1, kMaxColumnElements / std::max<std::size_t>(per_row, 1)));
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

template <class T>
Conv2d<T>::Conv2d(std::string name, int in_ch, int out_ch, int k)
    : weight(name + ".weight", {out_ch, in_ch, k, k}, true),
      bias(name + ".bias", {out_ch}, false),
      in_channels(in_ch),
      out_channels(out_ch),
      kernel(k) {
  if (k < 1 || k % 2 == 0) throw Error(ErrorCode::InvalidConfig, "conv kernel must be odd");
}

template <class T>
Tensor4<T> Conv2d<T>::forward(const Tensor4<T>& x) {
  if (x.c != in_channels) throw Error(ErrorCode::BadInputShape, weight.name + ": channel mismatch");
  input_ = x;
  Tensor4<T> y(x.n, out_channels, x.h, x.w);
  const int ckk = in_channels * kernel * kernel;
  const int hw = static_cast<int>(x.plane_size());
  const int pad = kernel / 2;
  const int band = rows_per_band(ckk, x.w);
  std::vector<T> col;
  for (int i = 0; i < x.n; ++i) {
    const T* xi = x.image(i);
    T* yi = y.image(i);
    if (kernel == 1) {
      Ops<T>::gemm(Trans::no, Trans::no, out_channels, hw, in_channels, T(1), weight.value.data(),
                   in_channels, xi, hw, T(0), yi, hw);
    } else {
      for (int oy0 = 0; oy0 < x.h; oy0 += band) {
        const int oy1 = std::min(x.h, oy0 + band);
        const int cols = (oy1 - oy0) * x.w;
        const std::size_t ld = padded_ld(static_cast<std::size_t>(cols));
        col.resize(static_cast<std::size_t>(ckk) * ld);
        im2col(xi, in_channels, x.h, x.w, kernel, 1, pad, x.w, oy0, oy1, col.data(), ld);
        Ops<T>::gemm(Trans::no, Trans::no, out_channels, cols, ckk, T(1), weight.value.data(), ckk,
                     col.data(), static_cast<int>(ld), T(0), yi + static_cast<std::size_t>(oy0) * x.w, hw);
      }
    }
    for (int o = 0; o < out_channels; ++o) {
      T* plane = yi + static_cast<std::size_t>(o) * hw;
      const T b = bias.value[static_cast<std::size_t>(o)];
      for (int p = 0; p < hw; ++p) plane[p] += b;
    }
  }
  return y;
}

template <class T>
Tensor4<T> Conv2d<T>::backward(const Tensor4<T>& dy, bool need_input_grad) {
  const Tensor4<T>& x = input_;
  if (x.size() == 0 || dy.n != x.n || dy.c != out_channels || dy.h != x.h || dy.w != x.w) {
    throw Error(ErrorCode::StaleCache, weight.name + ": backward without matching forward");
  }
  const int ckk = in_channels * kernel * kernel;
  const int hw = static_cast<int>(x.plane_size());
  const int pad = kernel / 2;
  const int band = rows_per_band(ckk, x.w);

  Tensor4<T> dx;
  if (need_input_grad) dx = Tensor4<T>(x.n, x.c, x.h, x.w);
  // Weight gradient is accumulated transposed ([ckk, out]) so the large
  // column matrix is the streamed, untransposed operand.
  std::vector<T> wgrad_t(static_cast<std::size_t>(ckk) * out_channels, T(0));
  std::vector<T> col;
  std::vector<T> dcol;

  for (int i = 0; i < x.n; ++i) {
    const T* xi = x.image(i);
    const T* dyi = dy.image(i);
    for (int o = 0; o < out_channels; ++o) {
      const T* plane = dyi + static_cast<std::size_t>(o) * hw;
      T sum = T(0);
      for (int p = 0; p < hw; ++p) sum += plane[p];
      bias.grad[static_cast<std::size_t>(o)] += sum;
    }
    if (kernel == 1) {
      Ops<T>::gemm(Trans::no, Trans::yes, in_channels, out_channels, hw, T(1), xi, hw, dyi, hw, T(1),
                   wgrad_t.data(), out_channels);
      if (need_input_grad) {
        Ops<T>::gemm(Trans::yes, Trans::no, in_channels, hw, out_channels, T(1), weight.value.data(),
                     in_channels, dyi, hw, T(0), dx.image(i), hw);
      }
      continue;
    }
    for (int oy0 = 0; oy0 < x.h; oy0 += band) {
      const int oy1 = std::min(x.h, oy0 + band);
      const int cols = (oy1 - oy0) * x.w;
      const std::size_t ld = padded_ld(static_cast<std::size_t>(cols));
      const T* dy_band = dyi + static_cast<std::size_t>(oy0) * x.w;
      col.resize(static_cast<std::size_t>(ckk) * ld);
      im2col(xi, in_channels, x.h, x.w, kernel, 1, pad, x.w, oy0, oy1, col.data(), ld);
      Ops<T>::gemm(Trans::no, Trans::yes, ckk, out_channels, cols, T(1), col.data(), static_cast<int>(ld),
                   dy_band, hw, T(1), wgrad_t.data(), out_channels);
      if (need_input_grad) {
        dcol.resize(static_cast<std::size_t>(ckk) * ld);
        Ops<T>::gemm(Trans::yes, Trans::no, ckk, cols, out_channels, T(1), weight.value.data(), ckk,
                     dy_band, hw, T(0), dcol.data(), static_cast<int>(ld));
        col2im(dcol.data(), ld, in_channels, x.h, x.w, kernel, 1, pad, x.w, oy0, oy1, dx.image(i));
      }
    }
  }
  for (int o = 0; o < out_channels; ++o) {
    for (int r = 0; r < ckk; ++r) {
      weight.grad[static_cast<std::size_t>(o) * ckk + r] += wgrad_t[static_cast<std::size_t>(r) * out_channels + o];
    }
  }
  return dx;
}

// ---------------------------------------------------------------- Relu

template <class T>
Tensor4<T> Relu<T>::forward(const Tensor4<T>& x) {
  output_ = Tensor4<T>(x.n, x.c, x.h, x.w);
  Ops<T>::relu_forward(x.data.data(), output_.data.data(), x.size());
  return output_;
}

template <class T>
Tensor4<T> Relu<T>::backward(const Tensor4<T>& dy) const {
  if (!dy.same_shape(output_)) throw Error(ErrorCode::StaleCache, "relu: backward without matching forward");
  Tensor4<T> dx(dy.n, dy.c, dy.h, dy.w);
  Ops<T>::relu_backward(output_.data.data(), dy.data.data(), dx.data.data(), dy.size());
  return dx;
}

// ---------------------------------------------------------------- MaxPool2

template <class T>
Tensor4<T> MaxPool2<T>::forward(const Tensor4<T>& x) {
  if (x.h % 2 != 0 || x.w % 2 != 0) throw Error(ErrorCode::BadInputShape, "max pooling needs even dims");
  n_ = x.n;
  c_ = x.c;
  in_h_ = x.h;
  in_w_ = x.w;
  const int oh = x.h / 2;
  const int ow = x.w / 2;
  Tensor4<T> y(x.n, x.c, oh, ow);
  argmax_.assign(y.size(), 0);
  std::size_t o = 0;
  for (int i = 0; i < x.n; ++i) {
    for (int ch = 0; ch < x.c; ++ch) {
      const T* plane = x.image(i) + static_cast<std::size_t>(ch) * x.plane_size();
      for (int yy = 0; yy < oh; ++yy) {
        const T* r0 = plane + static_cast<std::size_t>(2 * yy) * x.w;
        const T* r1 = r0 + x.w;
        for (int xx = 0; xx < ow; ++xx, ++o) {
          const T v[4] = {r0[2 * xx], r0[2 * xx + 1], r1[2 * xx], r1[2 * xx + 1]};
          std::uint8_t best = 0;
          for (std::uint8_t q = 1; q < 4; ++q) {
            if (v[q] > v[best]) best = q;
          }
          argmax_[o] = best;
          y.data[o] = v[best];
        }
      }
    }
  }
  return y;
}

template <class T>
Tensor4<T> MaxPool2<T>::backward(const Tensor4<T>& dy) const {
  if (dy.n != n_ || dy.c != c_ || dy.h * 2 != in_h_ || dy.w * 2 != in_w_ || dy.size() != argmax_.size()) {
    throw Error(ErrorCode::StaleCache, "maxpool: backward without matching forward");
  }
  Tensor4<T> dx(n_, c_, in_h_, in_w_);
  std::size_t o = 0;
  for (int i = 0; i < n_; ++i) {
    for (int ch = 0; ch < c_; ++ch) {
      T* plane = dx.image(i) + static_cast<std::size_t>(ch) * dx.plane_size();
      for (int yy = 0; yy < dy.h; ++yy) {
        for (int xx = 0; xx < dy.w; ++xx, ++o) {
          const int q = argmax_[o];
          plane[static_cast<std::size_t>(2 * yy + q / 2) * in_w_ + 2 * xx + q % 2] += dy.data[o];
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------- Dropout

template <class T>
Tensor4<T> Dropout<T>::forward(const Tensor4<T>& x, bool train, std::uint64_t seed) {
  if (!train || rate_ == 0.0) {
    scale_.assign(x.size(), T(1));
    return x;
  }
  Rng rng(seed);
  const T keep_scale = T(1) / static_cast<T>(1.0 - rate_);
  scale_.resize(x.size());
  Tensor4<T> y(x.n, x.c, x.h, x.w);
  for (std::size_t i = 0; i < x.size(); ++i) {
    scale_[i] = rng.uniform() < rate_ ? T(0) : keep_scale;
    y.data[i] = x.data[i] * scale_[i];
  }
  return y;
}

template <class T>
Tensor4<T> Dropout<T>::backward(const Tensor4<T>& dy) const {
  if (dy.size() != scale_.size()) throw Error(ErrorCode::StaleCache, "dropout: backward without matching forward");
  Tensor4<T> dx(dy.n, dy.c, dy.h, dy.w);
  for (std::size_t i = 0; i < dy.size(); ++i) dx.data[i] = dy.data[i] * scale_[i];
  return dx;
}

// ---------------------------------------------------------------- ConvTranspose2d

template <class T>
ConvTranspose2d<T>::ConvTranspose2d(std::string name, int in_ch, int out_ch, int k, int s, int p)
    : weight(name + ".weight", {in_ch, out_ch, k, k}, true),
      in_channels(in_ch),
      out_channels(out_ch),
      kernel(k),
      stride(s),
      pad(p) {
  if (k < 1 || s < 1 || p < 0) throw Error(ErrorCode::InvalidConfig, "bad transposed conv geometry");
}

template <class T>
void ConvTranspose2d<T>::init_bilinear() {
  const int factor = (kernel + 1) / 2;
  const double center = kernel % 2 == 1 ? factor - 1 : factor - 0.5;
  std::fill(weight.value.begin(), weight.value.end(), T(0));
  const std::size_t kk = static_cast<std::size_t>(kernel) * kernel;
  for (int c = 0; c < std::min(in_channels, out_channels); ++c) {
    T* filt = weight.value.data() + (static_cast<std::size_t>(c) * out_channels + c) * kk;
    for (int y = 0; y < kernel; ++y) {
      for (int x = 0; x < kernel; ++x) {
        filt[static_cast<std::size_t>(y) * kernel + x] =
            static_cast<T>((1.0 - std::abs(y - center) / factor) * (1.0 - std::abs(x - center) / factor));
      }
    }
  }
}

template <class T>
Tensor4<T> ConvTranspose2d<T>::forward(const Tensor4<T>& x) {
  if (x.c != in_channels) throw Error(ErrorCode::BadInputShape, weight.name + ": channel mismatch");
  input_ = x;
  const int oh = (x.h - 1) * stride - 2 * pad + kernel;
  const int ow = (x.w - 1) * stride - 2 * pad + kernel;
  if (oh < 1 || ow < 1) throw Error(ErrorCode::BadInputShape, weight.name + ": output would be empty");
  Tensor4<T> y(x.n, out_channels, oh, ow);
  const int okk = out_channels * kernel * kernel;
  const int hw = static_cast<int>(x.plane_size());
  const std::size_t ld = padded_ld(static_cast<std::size_t>(hw));
  std::vector<T> col(static_cast<std::size_t>(okk) * ld);
  for (int i = 0; i < x.n; ++i) {
    Ops<T>::gemm(Trans::yes, Trans::no, okk, hw, in_channels, T(1), weight.value.data(), okk, x.image(i),
                 hw, T(0), col.data(), static_cast<int>(ld));
    col2im(col.data(), ld, out_channels, oh, ow, kernel, stride, pad, x.w, 0, x.h, y.image(i));
  }
  return y;
}

template <class T>
Tensor4<T> ConvTranspose2d<T>::backward(const Tensor4<T>& dy) {
  const Tensor4<T>& x = input_;
  const int oh = (x.h - 1) * stride - 2 * pad + kernel;
  const int ow = (x.w - 1) * stride - 2 * pad + kernel;
  if (x.size() == 0 || dy.n != x.n || dy.c != out_channels || dy.h != oh || dy.w != ow) {
    throw Error(ErrorCode::StaleCache, weight.name + ": backward without matching forward");
  }
  Tensor4<T> dx(x.n, x.c, x.h, x.w);
  const int okk = out_channels * kernel * kernel;
  const int hw = static_cast<int>(x.plane_size());
  const std::size_t ld = padded_ld(static_cast<std::size_t>(hw));
  std::vector<T> dcol(static_cast<std::size_t>(okk) * ld);
  for (int i = 0; i < x.n; ++i) {
    im2col(dy.image(i), out_channels, oh, ow, kernel, stride, pad, x.w, 0, x.h, dcol.data(), ld);
    Ops<T>::gemm(Trans::no, Trans::no, in_channels, hw, okk, T(1), weight.value.data(), okk, dcol.data(),
                 static_cast<int>(ld), T(0), dx.image(i), hw);
    Ops<T>::gemm(Trans::no, Trans::yes, in_channels, okk, hw, T(1), x.image(i), hw, dcol.data(),
                 static_cast<int>(ld), T(1), weight.grad.data(), okk);
  }
  return dx;
}

template <class T>
Tensor4<T> add(const Tensor4<T>& a, const Tensor4<T>& b) {
  if (!a.same_shape(b)) throw Error(ErrorCode::BadInputShape, "sum of differently shaped tensors");
  Tensor4<T> out = a;
  Ops<T>::axpy(T(1), b.data.data(), out.data.data(), out.size());
  return out;
}

template class Conv2d<float>;
template class Conv2d<double>;
template class Relu<float>;
template class Relu<double>;
template class MaxPool2<float>;
template class MaxPool2<double>;
template class Dropout<float>;
template class Dropout<double>;
template class ConvTranspose2d<float>;
template class ConvTranspose2d<double>;
template Tensor4<float> add(const Tensor4<float>&, const Tensor4<float>&);
template Tensor4<double> add(const Tensor4<double>&, const Tensor4<double>&);

}  // namespace weakseg::fcn
