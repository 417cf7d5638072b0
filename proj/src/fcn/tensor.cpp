#include <algorithm>
#include <cstring>

#include "weakseg/fcn/ops.hpp"

namespace weakseg::fcn {

template <class T>
void im2col(const T* src, int channels, int h, int w, int kernel, int stride, int pad, int out_w,
            int oy0, int oy1, T* col, std::size_t ld) {
  const int rows = oy1 - oy0;
  for (int ch = 0; ch < channels; ++ch) {
    const T* plane = src + static_cast<std::size_t>(ch) * h * w;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        T* dst = col + (static_cast<std::size_t>(ch) * kernel * kernel + ky * kernel + kx) * ld;
        for (int r = 0; r < rows; ++r) {
          const int iy = (oy0 + r) * stride - pad + ky;
          T* out = dst + static_cast<std::size_t>(r) * out_w;
          if (iy < 0 || iy >= h) {
            std::fill(out, out + out_w, T(0));
            continue;
          }
          const T* in = plane + static_cast<std::size_t>(iy) * w;
          if (stride == 1) {
            // Valid ox range: 0 <= ox - pad + kx < w.
            const int lo = std::clamp(pad - kx, 0, out_w);
            const int hi = std::clamp(w + pad - kx, lo, out_w);
            std::fill(out, out + lo, T(0));
            std::memcpy(out + lo, in + lo - pad + kx, static_cast<std::size_t>(hi - lo) * sizeof(T));
            std::fill(out + hi, out + out_w, T(0));
          } else {
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * stride - pad + kx;
              out[ox] = (ix >= 0 && ix < w) ? in[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const T* col, std::size_t ld, int channels, int h, int w, int kernel, int stride,
            int pad, int out_w, int oy0, int oy1, T* dst) {
  const int rows = oy1 - oy0;
  for (int ch = 0; ch < channels; ++ch) {
    T* plane = dst + static_cast<std::size_t>(ch) * h * w;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const T* src = col + (static_cast<std::size_t>(ch) * kernel * kernel + ky * kernel + kx) * ld;
        for (int r = 0; r < rows; ++r) {
          const int iy = (oy0 + r) * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const T* in = src + static_cast<std::size_t>(r) * out_w;
          T* out = plane + static_cast<std::size_t>(iy) * w;
          if (stride == 1) {
            const int lo = std::clamp(pad - kx, 0, out_w);
            const int hi = std::clamp(w + pad - kx, lo, out_w);
            T* o = out - pad + kx;
            for (int ox = lo; ox < hi; ++ox) o[ox] += in[ox];
          } else {
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * stride - pad + kx;
              if (ix >= 0 && ix < w) out[ix] += in[ox];
            }
          }
        }
      }
    }
  }
}

template void im2col<float>(const float*, int, int, int, int, int, int, int, int, int, float*, std::size_t);
template void im2col<double>(const double*, int, int, int, int, int, int, int, int, int, double*, std::size_t);
template void col2im<float>(const float*, std::size_t, int, int, int, int, int, int, int, int, int, float*);
template void col2im<double>(const double*, std::size_t, int, int, int, int, int, int, int, int, int, double*);

}  // namespace weakseg::fcn
