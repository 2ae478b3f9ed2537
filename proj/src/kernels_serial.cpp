#include <atomic>
#include <limits>

#include "fssd/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fssd::kernels {

ConvShape conv_shape(int in_c, int in_h, int in_w, int out_c, int kernel, int stride, int pad) {
  FSSD_CHECK(in_c > 0 && in_h > 0 && in_w > 0, "bad conv input dims ", in_c, "x", in_h, "x", in_w);
  FSSD_CHECK(out_c > 0, "bad conv output channels ", out_c);
  FSSD_CHECK(kernel > 0, "bad conv kernel ", kernel);
  FSSD_CHECK(stride > 0, "bad conv stride ", stride);
  FSSD_CHECK(pad >= 0, "bad conv padding ", pad);
  FSSD_CHECK(kernel <= in_h + 2 * pad && kernel <= in_w + 2 * pad,
             "conv kernel ", kernel, " larger than padded input ", in_h + 2 * pad, "x",
             in_w + 2 * pad);
  ConvShape s;
  s.in_c = in_c;
  s.in_h = in_h;
  s.in_w = in_w;
  s.out_c = out_c;
  s.kernel = kernel;
  s.stride = stride;
  s.pad = pad;
  s.out_h = (in_h + 2 * pad - kernel) / stride + 1;
  s.out_w = (in_w + 2 * pad - kernel) / stride + 1;
  FSSD_CHECK(s.out_h > 0 && s.out_w > 0, "empty conv output");
  return s;
}

PoolShape pool_shape(int channels, int in_h, int in_w, int kernel, int stride, int pad) {
  FSSD_CHECK(channels > 0 && in_h > 0 && in_w > 0, "bad pool input dims");
  FSSD_CHECK(kernel > 0 && stride > 0 && pad >= 0, "bad pool params");
  FSSD_CHECK(pad < kernel, "pool padding ", pad, " must be smaller than kernel ", kernel);
  FSSD_CHECK(kernel <= in_h + 2 * pad && kernel <= in_w + 2 * pad,
             "pool kernel larger than padded input");
  PoolShape s;
  s.channels = channels;
  s.in_h = in_h;
  s.in_w = in_w;
  s.kernel = kernel;
  s.stride = stride;
  s.pad = pad;
  s.out_h = (in_h + 2 * pad - kernel) / stride + 1;
  s.out_w = (in_w + 2 * pad - kernel) / stride + 1;
  FSSD_CHECK(s.out_h > 0 && s.out_w > 0, "empty pool output");
  return s;
}

namespace {
std::atomic<Backend> g_backend{Backend::parallel};
}

Backend active_backend() { return g_backend.load(); }
void set_backend(Backend b) { g_backend.store(b); }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
  FSSD_CHECK(n >= 1, "thread count must be >= 1, got ", n);
#ifdef _OPENMP
  omp_set_num_threads(n);
#else
  (void)n;
#endif
}

// Direct six-loop convolution. The accumulator starts at the bias and walks
// input channels then kernel rows then kernel columns, the same order the
// im2col path uses, so the two backends agree to rounding.
template <typename T>
void conv2d_forward_serial(const T* x, const T* w, const T* bias, T* y, const ConvShape& s) {
  for (int co = 0; co < s.out_c; ++co) {
    for (int oy = 0; oy < s.out_h; ++oy) {
      for (int ox = 0; ox < s.out_w; ++ox) {
        T acc = bias ? bias[co] : T(0);
        for (int ci = 0; ci < s.in_c; ++ci) {
          for (int ky = 0; ky < s.kernel; ++ky) {
            int iy = oy * s.stride + ky - s.pad;
            if (iy < 0 || iy >= s.in_h) continue;
            for (int kx = 0; kx < s.kernel; ++kx) {
              int ix = ox * s.stride + kx - s.pad;
              if (ix < 0 || ix >= s.in_w) continue;
              acc += x[(static_cast<std::int64_t>(ci) * s.in_h + iy) * s.in_w + ix] *
                     w[((static_cast<std::int64_t>(co) * s.in_c + ci) * s.kernel + ky) * s.kernel +
                       kx];
            }
          }
        }
        y[(static_cast<std::int64_t>(co) * s.out_h + oy) * s.out_w + ox] = acc;
      }
    }
  }
}

template <typename T>
void conv2d_backward_serial(const T* x, const T* w, const T* dy, T* dx, T* dw, T* dbias,
                            const ConvShape& s) {
  for (int co = 0; co < s.out_c; ++co) {
    for (int oy = 0; oy < s.out_h; ++oy) {
      for (int ox = 0; ox < s.out_w; ++ox) {
        T g = dy[(static_cast<std::int64_t>(co) * s.out_h + oy) * s.out_w + ox];
        if (dbias) dbias[co] += g;
        for (int ci = 0; ci < s.in_c; ++ci) {
          for (int ky = 0; ky < s.kernel; ++ky) {
            int iy = oy * s.stride + ky - s.pad;
            if (iy < 0 || iy >= s.in_h) continue;
            for (int kx = 0; kx < s.kernel; ++kx) {
              int ix = ox * s.stride + kx - s.pad;
              if (ix < 0 || ix >= s.in_w) continue;
              std::int64_t xi = (static_cast<std::int64_t>(ci) * s.in_h + iy) * s.in_w + ix;
              std::int64_t wi =
                  ((static_cast<std::int64_t>(co) * s.in_c + ci) * s.kernel + ky) * s.kernel + kx;
              if (dw) dw[wi] += g * x[xi];
              if (dx) dx[xi] += g * w[wi];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void maxpool_forward_serial(const T* x, T* y, std::int32_t* argmax, const PoolShape& s) {
  for (int c = 0; c < s.channels; ++c) {
    for (int oy = 0; oy < s.out_h; ++oy) {
      for (int ox = 0; ox < s.out_w; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::int32_t best_idx = -1;
        for (int ky = 0; ky < s.kernel; ++ky) {
          int iy = oy * s.stride + ky - s.pad;
          if (iy < 0 || iy >= s.in_h) continue;
          for (int kx = 0; kx < s.kernel; ++kx) {
            int ix = ox * s.stride + kx - s.pad;
            if (ix < 0 || ix >= s.in_w) continue;
            std::int64_t xi = (static_cast<std::int64_t>(c) * s.in_h + iy) * s.in_w + ix;
            if (x[xi] > best) {  // ties keep the first position in scan order
              best = x[xi];
              best_idx = static_cast<std::int32_t>(xi);
            }
          }
        }
        FSSD_CHECK(best_idx >= 0, "pool window has no valid input position");
        std::int64_t yi = (static_cast<std::int64_t>(c) * s.out_h + oy) * s.out_w + ox;
        y[yi] = best;
        if (argmax) argmax[yi] = best_idx;
      }
    }
  }
}

template <typename T>
void maxpool_backward_serial(const std::int32_t* argmax, const T* dy, T* dx,
                             const PoolShape& s) {
  std::int64_t n = static_cast<std::int64_t>(s.channels) * s.out_h * s.out_w;
  for (std::int64_t i = 0; i < n; ++i) dx[argmax[i]] += dy[i];
}

template <typename T>
void gemm_serial(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T acc = accumulate ? c[static_cast<std::int64_t>(i) * n + j] : T(0);
      for (int l = 0; l < k; ++l) {
        acc += a[static_cast<std::int64_t>(i) * k + l] * b[static_cast<std::int64_t>(l) * n + j];
      }
      c[static_cast<std::int64_t>(i) * n + j] = acc;
    }
  }
}

#define FSSD_INSTANTIATE(T)                                                                   \
  template void conv2d_forward_serial<T>(const T*, const T*, const T*, T*, const ConvShape&); \
  template void conv2d_backward_serial<T>(const T*, const T*, const T*, T*, T*, T*,           \
                                          const ConvShape&);                                  \
  template void maxpool_forward_serial<T>(const T*, T*, std::int32_t*, const PoolShape&);     \
  template void maxpool_backward_serial<T>(const std::int32_t*, const T*, T*,                 \
                                           const PoolShape&);                                 \
  template void gemm_serial<T>(int, int, int, const T*, const T*, T*, bool);

FSSD_INSTANTIATE(float)
FSSD_INSTANTIATE(double)

#undef FSSD_INSTANTIATE

}  // namespace fssd::kernels
