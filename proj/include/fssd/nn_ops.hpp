#pragma once

#include <memory>
#include <optional>
#include <span>

#include "fssd/kernels.hpp"
#include "fssd/tensor.hpp"

namespace fssd {

// (num_kernels, kernel_size, stride, padding), matching the order the layer
// tables use everywhere in this codebase.
struct ConvSpec {
  int num_kernels;
  int kernel_size;
  int stride;
  int padding;
};

struct PoolSpec {
  int kernel_size;
  int stride;
  int padding;
};

template <typename T>
struct ConvLayer {
  Tensor<T> w;  // [K, C, k, k]
  Tensor<T> b;  // [K]
  ConvSpec spec;
};

template <typename T>
ConvLayer<T> make_conv_layer(int in_channels, const ConvSpec& spec, std::uint64_t seed) {
  ConvLayer<T> layer;
  layer.spec = spec;
  layer.w = Tensor<T>::random_init(
      {spec.num_kernels, in_channels, spec.kernel_size, spec.kernel_size}, seed);
  layer.b = Tensor<T>::zeros({spec.num_kernels});
  layer.w.set_requires_grad(true);
  layer.b.set_requires_grad(true);
  return layer;
}

// x is one image [C,H,W]; no batch axis anywhere in the graph.
template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 const ConvSpec& spec) {
  FSSD_CHECK(x.rank() == 3, "conv2d input must be [C,H,W], got ", shape_str(x.shape()));
  FSSD_CHECK(w.rank() == 4 && w.dim(0) == spec.num_kernels && w.dim(1) == x.dim(0) &&
                 w.dim(2) == spec.kernel_size && w.dim(3) == spec.kernel_size,
             "conv2d weight shape ", shape_str(w.shape()), " does not match input ",
             shape_str(x.shape()), " and spec k=", spec.kernel_size);
  FSSD_CHECK(b.rank() == 1 && b.dim(0) == spec.num_kernels, "conv2d bias shape ",
             shape_str(b.shape()), " must be [", spec.num_kernels, "]");
  kernels::ConvShape s = kernels::conv_shape(x.dim(0), x.dim(1), x.dim(2), spec.num_kernels,
                                             spec.kernel_size, spec.stride, spec.padding);
  Tensor<T> out = Tensor<T>::zeros({s.out_c, s.out_h, s.out_w});
  kernels::conv2d_forward(x.data(), w.data(), b.data(), out.data(), s);
  tape.record({x, w, b}, out, [x = x, w = w, b = b, out, s]() mutable {
    T* dx = wants_grad(x) ? x.grad_data() : nullptr;
    T* dw = wants_grad(w) ? w.grad_data() : nullptr;
    T* db = wants_grad(b) ? b.grad_data() : nullptr;
    kernels::conv2d_backward(x.data(), w.data(), out.grad_data(), dx, dw, db, s);
  });
  return out;
}

template <typename T>
Tensor<T> maxpool2d(Tape<T>& tape, const Tensor<T>& x, const PoolSpec& spec) {
  FSSD_CHECK(x.rank() == 3, "maxpool2d input must be [C,H,W], got ", shape_str(x.shape()));
  kernels::PoolShape s = kernels::pool_shape(x.dim(0), x.dim(1), x.dim(2), spec.kernel_size,
                                             spec.stride, spec.padding);
  Tensor<T> out = Tensor<T>::zeros({s.channels, s.out_h, s.out_w});
  auto argmax = std::make_shared<std::vector<std::int32_t>>(static_cast<size_t>(out.size()));
  kernels::maxpool_forward(x.data(), out.data(), argmax->data(), s);
  tape.record({x}, out, [x = x, out, argmax, s]() mutable {
    if (!wants_grad(x)) return;
    kernels::maxpool_backward(argmax->data(), out.grad_data(), x.grad_data(), s);
  });
  return out;
}

// A group of convs, each followed by ReLU, then an optional max pool.
// pre_pool_out, when given, receives the activation before the pool; the
// detection and analysis branches tap one group that way.
template <typename T>
Tensor<T> conv_block(Tape<T>& tape, const Tensor<T>& x, std::span<const ConvLayer<T>> layers,
                     const std::optional<PoolSpec>& pool, Tensor<T>* pre_pool_out = nullptr) {
  FSSD_CHECK(!layers.empty(), "conv_block needs at least one layer");
  Tensor<T> cur = x;
  for (const auto& layer : layers) {
    cur = relu(tape, conv2d(tape, cur, layer.w, layer.b, layer.spec));
  }
  if (pre_pool_out) *pre_pool_out = cur;
  if (pool) cur = maxpool2d(tape, cur, *pool);
  return cur;
}

}  // namespace fssd
