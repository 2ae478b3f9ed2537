#pragma once

#include <cstdint>

#include "fssd/check.hpp"

// Raw-buffer compute kernels. Every kernel comes in two flavors: a serial
// reference written for clarity, and an OpenMP version parallelized over
// disjoint output regions with a fixed per-element accumulation order, so its
// results do not depend on the thread count. Layouts are dense row-major,
// images [C,H,W], conv weights [K,C,kh,kw].
namespace fssd::kernels {

struct ConvShape {
  int in_c, in_h, in_w;
  int out_c, kernel, stride, pad;
  int out_h, out_w;
};

struct PoolShape {
  int channels, in_h, in_w;
  int kernel, stride, pad;
  int out_h, out_w;
};

// out = floor((in + 2*pad - kernel) / stride) + 1; errors when the window
// does not fit or the output would be empty.
ConvShape conv_shape(int in_c, int in_h, int in_w, int out_c, int kernel, int stride, int pad);
PoolShape pool_shape(int channels, int in_h, int in_w, int kernel, int stride, int pad);

enum class Backend { serial, parallel };
Backend active_backend();
void set_backend(Backend b);
int max_threads();
void set_threads(int n);

// Serial reference implementations.
template <typename T>
void conv2d_forward_serial(const T* x, const T* w, const T* bias, T* y, const ConvShape& s);
template <typename T>
void conv2d_backward_serial(const T* x, const T* w, const T* dy, T* dx, T* dw, T* dbias,
                            const ConvShape& s);
template <typename T>
void maxpool_forward_serial(const T* x, T* y, std::int32_t* argmax, const PoolShape& s);
template <typename T>
void maxpool_backward_serial(const std::int32_t* argmax, const T* dy, T* dx, const PoolShape& s);

// Parallel implementations: im2col plus register-blocked matrix kernels.
template <typename T>
void conv2d_forward_parallel(const T* x, const T* w, const T* bias, T* y, const ConvShape& s);
template <typename T>
void conv2d_backward_parallel(const T* x, const T* w, const T* dy, T* dx, T* dw, T* dbias,
                              const ConvShape& s);
template <typename T>
void maxpool_forward_parallel(const T* x, T* y, std::int32_t* argmax, const PoolShape& s);
template <typename T>
void maxpool_backward_parallel(const std::int32_t* argmax, const T* dy, T* dx,
                               const PoolShape& s);

// Dispatch on the active backend. Backward kernels accumulate into dx, dw,
// dbias; any of those may be null to skip that gradient.
template <typename T>
void conv2d_forward(const T* x, const T* w, const T* bias, T* y, const ConvShape& s);
template <typename T>
void conv2d_backward(const T* x, const T* w, const T* dy, T* dx, T* dw, T* dbias,
                     const ConvShape& s);
template <typename T>
void maxpool_forward(const T* x, T* y, std::int32_t* argmax, const PoolShape& s);
template <typename T>
void maxpool_backward(const std::int32_t* argmax, const T* dy, T* dx, const PoolShape& s);

// Building blocks, exposed for tests and the kernel benchmark.
// im2col rows are (c, kh, kw), columns are output positions (oh, ow).
template <typename T>
void im2col(const T* x, T* col, const ConvShape& s);
// C[m,n] = sum_k A[m,k] * B[k,n], optionally accumulating into C.
template <typename T>
void gemm(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate);
template <typename T>
void gemm_serial(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate);
// C[m,n] (+)= sum_k A[m,k] * B[n,k]; both operands are walked along rows.
template <typename T>
void gemm_nt(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate);

}  // namespace fssd::kernels
