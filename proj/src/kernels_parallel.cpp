#include <algorithm>
#include <cstring>
#include <limits>
#include <vector>

#include "fssd/kernels.hpp"

namespace fssd::kernels {

template <typename T>
void im2col(const T* x, T* col, const ConvShape& s) {
  const std::int64_t spatial = static_cast<std::int64_t>(s.out_h) * s.out_w;
#pragma omp parallel for collapse(2) schedule(static)
  for (int ci = 0; ci < s.in_c; ++ci) {
    for (int ky = 0; ky < s.kernel; ++ky) {
      for (int kx = 0; kx < s.kernel; ++kx) {
        T* dst = col + ((static_cast<std::int64_t>(ci) * s.kernel + ky) * s.kernel + kx) * spatial;
        const T* src = x + static_cast<std::int64_t>(ci) * s.in_h * s.in_w;
        for (int oy = 0; oy < s.out_h; ++oy) {
          int iy = oy * s.stride + ky - s.pad;
          if (iy < 0 || iy >= s.in_h) {
            for (int ox = 0; ox < s.out_w; ++ox) *dst++ = T(0);
            continue;
          }
          for (int ox = 0; ox < s.out_w; ++ox) {
            int ix = ox * s.stride + kx - s.pad;
            *dst++ = (ix < 0 || ix >= s.in_w) ? T(0) : src[static_cast<std::int64_t>(iy) * s.in_w + ix];
          }
        }
      }
    }
  }
}

namespace {

// Register-blocked GEMM core. Each thread owns whole C tiles and walks the
// shared dimension sequentially, so output bits do not depend on the thread
// count. row_init, when given, seeds every element of row m with row_init[m]
// (used to fold the conv bias into the product).
template <typename T, bool kAccumulate>
void gemm_core(int m, int n, int k, const T* a, const T* b, T* c, const T* row_init) {
  constexpr int MB = 4;
  constexpr int NB = 32;
#pragma omp parallel for collapse(2) schedule(static)
  for (int m0 = 0; m0 < m; m0 += MB) {
    for (int n0 = 0; n0 < n; n0 += NB) {
      const int mb = std::min(MB, m - m0);
      const int nb = std::min(NB, n - n0);
      T acc[MB][NB];
      for (int mi = 0; mi < mb; ++mi) {
        T init = row_init ? row_init[m0 + mi] : T(0);
        for (int ni = 0; ni < nb; ++ni) {
          acc[mi][ni] = kAccumulate ? init + c[static_cast<std::int64_t>(m0 + mi) * n + n0 + ni]
                                    : init;
        }
      }
      if (mb == MB && nb == NB) {
        for (int l = 0; l < k; ++l) {
          const T* brow = b + static_cast<std::int64_t>(l) * n + n0;
          for (int mi = 0; mi < MB; ++mi) {
            const T av = a[static_cast<std::int64_t>(m0 + mi) * k + l];
#pragma omp simd
            for (int ni = 0; ni < NB; ++ni) acc[mi][ni] += av * brow[ni];
          }
        }
      } else {
        for (int l = 0; l < k; ++l) {
          const T* brow = b + static_cast<std::int64_t>(l) * n + n0;
          for (int mi = 0; mi < mb; ++mi) {
            const T av = a[static_cast<std::int64_t>(m0 + mi) * k + l];
            for (int ni = 0; ni < nb; ++ni) acc[mi][ni] += av * brow[ni];
          }
        }
      }
      for (int mi = 0; mi < mb; ++mi) {
        for (int ni = 0; ni < nb; ++ni) {
          c[static_cast<std::int64_t>(m0 + mi) * n + n0 + ni] = acc[mi][ni];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
void gemm(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
  if (accumulate) {
    gemm_core<T, true>(m, n, k, a, b, c, nullptr);
  } else {
    gemm_core<T, false>(m, n, k, a, b, c, nullptr);
  }
}

// Row-by-row dot products with explicit partial-sum lanes. The lanes and the
// final fold are in a fixed order, so results are reproducible while the lane
// loop still vectorizes.
template <typename T>
void gemm_nt(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
  constexpr int MB = 2;
  constexpr int NB = 4;
  constexpr int VW = 8;
#pragma omp parallel for collapse(2) schedule(static)
  for (int m0 = 0; m0 < m; m0 += MB) {
    for (int n0 = 0; n0 < n; n0 += NB) {
      const int mb = std::min(MB, m - m0);
      const int nb = std::min(NB, n - n0);
      T part[MB][NB][VW];
      for (int mi = 0; mi < mb; ++mi)
        for (int ni = 0; ni < nb; ++ni)
          for (int v = 0; v < VW; ++v) part[mi][ni][v] = T(0);
      std::int64_t l = 0;
      if (mb == MB && nb == NB) {
        for (; l + VW <= k; l += VW) {
          for (int mi = 0; mi < MB; ++mi) {
            const T* ar = a + static_cast<std::int64_t>(m0 + mi) * k + l;
            for (int ni = 0; ni < NB; ++ni) {
              const T* br = b + static_cast<std::int64_t>(n0 + ni) * k + l;
#pragma omp simd
              for (int v = 0; v < VW; ++v) part[mi][ni][v] += ar[v] * br[v];
            }
          }
        }
      } else {
        for (; l + VW <= k; l += VW) {
          for (int mi = 0; mi < mb; ++mi) {
            const T* ar = a + static_cast<std::int64_t>(m0 + mi) * k + l;
            for (int ni = 0; ni < nb; ++ni) {
              const T* br = b + static_cast<std::int64_t>(n0 + ni) * k + l;
              for (int v = 0; v < VW; ++v) part[mi][ni][v] += ar[v] * br[v];
            }
          }
        }
      }
      for (; l < k; ++l) {
        for (int mi = 0; mi < mb; ++mi)
          for (int ni = 0; ni < nb; ++ni)
            part[mi][ni][0] += a[static_cast<std::int64_t>(m0 + mi) * k + l] *
                               b[static_cast<std::int64_t>(n0 + ni) * k + l];
      }
      for (int mi = 0; mi < mb; ++mi) {
        for (int ni = 0; ni < nb; ++ni) {
          T dot = T(0);
          for (int v = 0; v < VW; ++v) dot += part[mi][ni][v];
          std::int64_t ci = static_cast<std::int64_t>(m0 + mi) * n + n0 + ni;
          c[ci] = accumulate ? c[ci] + dot : dot;
        }
      }
    }
  }
}

namespace {

inline bool is_pointwise(const ConvShape& s) {
  return s.kernel == 1 && s.stride == 1 && s.pad == 0;
}

// dx[c,iy,ix] += sum over kernel taps of dcol rows that read that input
// element. Each thread owns whole input channels, so overlapping windows
// never race.
template <typename T>
void col2im_gather(const T* dcol, T* dx, const ConvShape& s) {
  const std::int64_t spatial = static_cast<std::int64_t>(s.out_h) * s.out_w;
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < s.in_c; ++ci) {
    T* dst = dx + static_cast<std::int64_t>(ci) * s.in_h * s.in_w;
    const T* base = dcol + static_cast<std::int64_t>(ci) * s.kernel * s.kernel * spatial;
    for (int iy = 0; iy < s.in_h; ++iy) {
      for (int ix = 0; ix < s.in_w; ++ix) {
        T acc = T(0);
        for (int ky = 0; ky < s.kernel; ++ky) {
          int ty = iy + s.pad - ky;
          if (ty < 0 || ty % s.stride != 0) continue;
          int oy = ty / s.stride;
          if (oy >= s.out_h) continue;
          for (int kx = 0; kx < s.kernel; ++kx) {
            int tx = ix + s.pad - kx;
            if (tx < 0 || tx % s.stride != 0) continue;
            int ox = tx / s.stride;
            if (ox >= s.out_w) continue;
            acc += base[(static_cast<std::int64_t>(ky) * s.kernel + kx) * spatial +
                        static_cast<std::int64_t>(oy) * s.out_w + ox];
          }
        }
        dst[static_cast<std::int64_t>(iy) * s.in_w + ix] += acc;
      }
    }
  }
}

}  // namespace

template <typename T>
void conv2d_forward_parallel(const T* x, const T* w, const T* bias, T* y, const ConvShape& s) {
  const int kk = s.in_c * s.kernel * s.kernel;
  const std::int64_t spatial = static_cast<std::int64_t>(s.out_h) * s.out_w;
  const int n = static_cast<int>(spatial);
  if (is_pointwise(s)) {
    gemm_core<T, false>(s.out_c, n, kk, w, x, y, bias);
    return;
  }
  std::vector<T> col(static_cast<size_t>(kk) * spatial);
  im2col(x, col.data(), s);
  gemm_core<T, false>(s.out_c, n, kk, w, col.data(), y, bias);
}

template <typename T>
void conv2d_backward_parallel(const T* x, const T* w, const T* dy, T* dx, T* dw, T* dbias,
                              const ConvShape& s) {
  const int kk = s.in_c * s.kernel * s.kernel;
  const std::int64_t spatial = static_cast<std::int64_t>(s.out_h) * s.out_w;
  const int n = static_cast<int>(spatial);

  if (dbias) {
    constexpr int VW = 8;
#pragma omp parallel for schedule(static)
    for (int co = 0; co < s.out_c; ++co) {
      const T* row = dy + static_cast<std::int64_t>(co) * spatial;
      T part[VW] = {};
      std::int64_t i = 0;
      for (; i + VW <= spatial; i += VW) {
#pragma omp simd
        for (int v = 0; v < VW; ++v) part[v] += row[i + v];
      }
      for (; i < spatial; ++i) part[0] += row[i];
      T acc = T(0);
      for (int v = 0; v < VW; ++v) acc += part[v];
      dbias[co] += acc;
    }
  }

  const bool pointwise = is_pointwise(s);
  std::vector<T> col;
  const T* col_ptr = x;
  if (!pointwise && (dw || dx)) {
    col.resize(static_cast<size_t>(kk) * spatial);
    im2col(x, col.data(), s);
    col_ptr = col.data();
  }

  if (dw) gemm_nt(s.out_c, kk, n, dy, col_ptr, dw, true);

  if (dx) {
    std::vector<T> wt(static_cast<size_t>(kk) * s.out_c);
#pragma omp parallel for collapse(2) schedule(static)
    for (int co = 0; co < s.out_c; ++co) {
      for (int r = 0; r < kk; ++r) {
        wt[static_cast<std::int64_t>(r) * s.out_c + co] =
            w[static_cast<std::int64_t>(co) * kk + r];
      }
    }
    if (pointwise) {
      gemm_core<T, true>(kk, n, s.out_c, wt.data(), dy, dx, nullptr);
    } else {
      std::vector<T> dcol(static_cast<size_t>(kk) * spatial);
      gemm_core<T, false>(kk, n, s.out_c, wt.data(), dy, dcol.data(), nullptr);
      col2im_gather(dcol.data(), dx, s);
    }
  }
}

template <typename T>
void maxpool_forward_parallel(const T* x, T* y, std::int32_t* argmax, const PoolShape& s) {
#pragma omp parallel for collapse(2) schedule(static)
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

// Overlapping pool windows only overlap within a channel, so parallelizing
// over channels keeps per-element accumulation sequential.
template <typename T>
void maxpool_backward_parallel(const std::int32_t* argmax, const T* dy, T* dx,
                               const PoolShape& s) {
  const std::int64_t per_c = static_cast<std::int64_t>(s.out_h) * s.out_w;
#pragma omp parallel for schedule(static)
  for (int c = 0; c < s.channels; ++c) {
    const std::int64_t base = static_cast<std::int64_t>(c) * per_c;
    for (std::int64_t i = base; i < base + per_c; ++i) dx[argmax[i]] += dy[i];
  }
}

template <typename T>
void conv2d_forward(const T* x, const T* w, const T* bias, T* y, const ConvShape& s) {
  if (active_backend() == Backend::serial) {
    conv2d_forward_serial(x, w, bias, y, s);
  } else {
    conv2d_forward_parallel(x, w, bias, y, s);
  }
}

template <typename T>
void conv2d_backward(const T* x, const T* w, const T* dy, T* dx, T* dw, T* dbias,
                     const ConvShape& s) {
  if (active_backend() == Backend::serial) {
    conv2d_backward_serial(x, w, dy, dx, dw, dbias, s);
  } else {
    conv2d_backward_parallel(x, w, dy, dx, dw, dbias, s);
  }
}

template <typename T>
void maxpool_forward(const T* x, T* y, std::int32_t* argmax, const PoolShape& s) {
  if (active_backend() == Backend::serial) {
    maxpool_forward_serial(x, y, argmax, s);
  } else {
    maxpool_forward_parallel(x, y, argmax, s);
  }
}

template <typename T>
void maxpool_backward(const std::int32_t* argmax, const T* dy, T* dx, const PoolShape& s) {
  if (active_backend() == Backend::serial) {
    maxpool_backward_serial(argmax, dy, dx, s);
  } else {
    maxpool_backward_parallel(argmax, dy, dx, s);
  }
}

#define FSSD_INSTANTIATE(T)                                                                     \
  template void im2col<T>(const T*, T*, const ConvShape&);                                      \
  template void gemm<T>(int, int, int, const T*, const T*, T*, bool);                           \
  template void gemm_nt<T>(int, int, int, const T*, const T*, T*, bool);                        \
  template void conv2d_forward_parallel<T>(const T*, const T*, const T*, T*, const ConvShape&); \
  template void conv2d_backward_parallel<T>(const T*, const T*, const T*, T*, T*, T*,           \
                                            const ConvShape&);                                  \
  template void maxpool_forward_parallel<T>(const T*, T*, std::int32_t*, const PoolShape&);     \
  template void maxpool_backward_parallel<T>(const std::int32_t*, const T*, T*,                 \
                                             const PoolShape&);                                 \
  template void conv2d_forward<T>(const T*, const T*, const T*, T*, const ConvShape&);          \
  template void conv2d_backward<T>(const T*, const T*, const T*, T*, T*, T*, const ConvShape&); \
  template void maxpool_forward<T>(const T*, T*, std::int32_t*, const PoolShape&);              \
  template void maxpool_backward<T>(const std::int32_t*, const T*, T*, const PoolShape&);

FSSD_INSTANTIATE(float)
FSSD_INSTANTIATE(double)

#undef FSSD_INSTANTIATE

}  // namespace fssd::kernels
