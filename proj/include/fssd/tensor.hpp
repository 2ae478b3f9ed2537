#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fssd/check.hpp"

namespace fssd {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    FSSD_CHECK(d > 0, "shape dims must be positive, got ", d);
    n *= d;
  }
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

enum class InitScheme { fan_scaled_uniform };

namespace detail {

template <typename T>
struct TensorStorage {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;  // empty until first needed
  bool requires_grad = false;
  bool is_leaf = true;  // false once produced by a taped op
  std::string name;
};

}  // namespace detail

// Shared handle to a dense row-major array plus an optional gradient buffer.
// Copying a Tensor copies the handle, not the data; two copies see the same
// values and the same gradient. Rank and dtype are fixed at construction.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape) {
    Tensor t;
    t.s_ = std::make_shared<detail::TensorStorage<T>>();
    t.s_->values.assign(static_cast<size_t>(shape_numel(shape)), T(0));
    t.s_->shape = std::move(shape);
    return t;
  }

  static Tensor full(Shape shape, T value) {
    Tensor t = zeros(std::move(shape));
    for (T& v : t.s_->values) v = value;
    return t;
  }

  static Tensor from_values(Shape shape, std::vector<T> values) {
    FSSD_CHECK(shape_numel(shape) == static_cast<std::int64_t>(values.size()),
               "value count ", values.size(), " does not fill shape ", shape_str(shape));
    Tensor t;
    t.s_ = std::make_shared<detail::TensorStorage<T>>();
    t.s_->shape = std::move(shape);
    t.s_->values = std::move(values);
    return t;
  }

  static Tensor scalar(T value) { return full({1}, value); }

  // Uniform init scaled by fan-in and fan-out: bound = sqrt(6 / (fan_in + fan_out)).
  // Rank 4 [K,C,kh,kw]: fan_in = C*kh*kw, fan_out = K*kh*kw. Rank 2 [K,C]: C and K.
  // Rank 1 [N]: both N.
  static Tensor random_init(Shape shape, std::uint64_t seed,
                            InitScheme scheme = InitScheme::fan_scaled_uniform);

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return st().shape; }
  int rank() const { return static_cast<int>(st().shape.size()); }
  int dim(int axis) const {
    FSSD_CHECK(axis >= 0 && axis < rank(), "axis ", axis, " out of range for ", shape_str(shape()));
    return st().shape[static_cast<size_t>(axis)];
  }
  std::int64_t size() const { return static_cast<std::int64_t>(st().values.size()); }

  std::span<T> values() { return {st().values.data(), st().values.size()}; }
  std::span<const T> values() const { return {st().values.data(), st().values.size()}; }
  T* data() { return st().values.data(); }
  const T* data() const { return st().values.data(); }

  T item() const {
    FSSD_CHECK(size() == 1, "item() needs a scalar, got shape ", shape_str(shape()));
    return st().values[0];
  }

  bool requires_grad() const { return st().requires_grad; }
  void set_requires_grad(bool rg) { st().requires_grad = rg; }
  bool is_leaf() const { return st().is_leaf; }

  bool grad_allocated() const { return !st().grad.empty(); }

  // Allocates a zero gradient on first access, so a leaf untouched by
  // backward reads as all zeros rather than as an error.
  std::span<T> grad() {
    auto& s = st();
    if (s.grad.empty()) s.grad.assign(s.values.size(), T(0));
    return {s.grad.data(), s.grad.size()};
  }
  T* grad_data() { return grad().data(); }

  void zero_grad() {
    auto& s = st();
    for (T& g : s.grad) g = T(0);
  }

  const std::string& name() const { return st().name; }
  void set_name(std::string n) { st().name = std::move(n); }

  void check_finite(const char* context) const {
    for (T v : st().values) {
      FSSD_CHECK(std::isfinite(static_cast<double>(v)), context, ": non-finite value in ",
                 st().name.empty() ? std::string("tensor") : st().name);
    }
  }

  // Handle identity, used by the tape and by parameter bookkeeping.
  const void* id() const { return s_.get(); }

  detail::TensorStorage<T>& st() {
    FSSD_CHECK(s_, "use of undefined tensor");
    return *s_;
  }
  const detail::TensorStorage<T>& st() const {
    FSSD_CHECK(s_, "use of undefined tensor");
    return *s_;
  }

 private:
  std::shared_ptr<detail::TensorStorage<T>> s_;
};

// Records ops in creation order, which is already a topological order of the
// graph. backward() zeroes the gradients of every recorded op output, seeds
// the loss gradient, then runs the recorded pullbacks in reverse. Gradients
// of leaves are only ever accumulated into, so two backward calls without
// zero_grad add up.
template <typename T>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  // Returns true (and stores the node) when the op must participate in
  // backward, i.e. the tape is recording and some input carries gradient.
  bool record(std::vector<Tensor<T>> inputs, Tensor<T> output, std::function<void()> pullback) {
    bool wants_grad = false;
    for (const auto& in : inputs) {
      if (in.requires_grad() || !in.is_leaf()) wants_grad = true;
    }
    if (!recording_ || !wants_grad) return false;
    output.st().is_leaf = false;
    output.st().requires_grad = true;
    nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(pullback)});
    return true;
  }

  void backward(const Tensor<T>& loss, T seed = T(1)) {
    FSSD_CHECK(loss.size() == 1, "backward needs a scalar loss, got shape ",
               shape_str(loss.shape()));
    FSSD_CHECK(!loss.is_leaf(), "backward needs a loss produced through this tape");
    for (auto& n : nodes_) n.output.zero_grad();
    const_cast<Tensor<T>&>(loss).grad()[0] += seed;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (!it->output.grad_allocated()) continue;  // no gradient reached this op
      it->pullback();
    }
  }

  std::size_t num_nodes() const { return nodes_.size(); }

  void clear() { nodes_.clear(); }

 private:
  struct Node {
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    std::function<void()> pullback;
  };
  std::vector<Node> nodes_;
  bool recording_;
};

// True when gradient must be pushed into this input during a pullback.
template <typename T>
inline bool wants_grad(const Tensor<T>& t) {
  return t.requires_grad() || !t.is_leaf();
}

namespace detail {

// Resolves the output shape of a binary op: equal shapes, or one scalar
// operand broadcast over the other.
template <typename T>
Shape binary_shape(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() == b.shape()) return a.shape();
  if (a.size() == 1) return b.shape();
  if (b.size() == 1) return a.shape();
  FSSD_FAIL("shape mismatch: ", shape_str(a.shape()), " vs ", shape_str(b.shape()));
}

template <typename T>
void accumulate_span(Tensor<T> t, std::span<const T> g, bool broadcast, T sign) {
  auto dst = t.grad();
  if (broadcast) {
    T s = 0;
    for (T v : g) s += v;
    dst[0] += sign * s;
  } else {
    for (size_t i = 0; i < g.size(); ++i) dst[i] += sign * g[i];
  }
}

}  // namespace detail

// Elementwise and reduction ops. Binary ops need matching shapes, except that
// a scalar (shape [1]) operand broadcasts. Ops that record pullback closures
// live in the header so each translation unit instantiates them itself.
template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out = Tensor<T>::zeros(detail::binary_shape(a, b));
  auto av = a.values(), bv = b.values();
  auto ov = out.values();
  const bool abc = a.size() == 1 && out.size() > 1;
  const bool bbc = b.size() == 1 && out.size() > 1;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[abc ? 0 : i] + bv[bbc ? 0 : i];
  tape.record({a, b}, out, [a = a, b = b, out, abc, bbc]() mutable {
    auto g = out.grad();
    std::span<const T> cg(g.data(), g.size());
    if (wants_grad(a)) detail::accumulate_span(a, cg, abc, T(1));
    if (wants_grad(b)) detail::accumulate_span(b, cg, bbc, T(1));
  });
  return out;
}

template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out = Tensor<T>::zeros(detail::binary_shape(a, b));
  auto av = a.values(), bv = b.values();
  auto ov = out.values();
  const bool abc = a.size() == 1 && out.size() > 1;
  const bool bbc = b.size() == 1 && out.size() > 1;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[abc ? 0 : i] - bv[bbc ? 0 : i];
  tape.record({a, b}, out, [a = a, b = b, out, abc, bbc]() mutable {
    auto g = out.grad();
    std::span<const T> cg(g.data(), g.size());
    if (wants_grad(a)) detail::accumulate_span(a, cg, abc, T(1));
    if (wants_grad(b)) detail::accumulate_span(b, cg, bbc, T(-1));
  });
  return out;
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> out = Tensor<T>::zeros(detail::binary_shape(a, b));
  auto av = a.values(), bv = b.values();
  auto ov = out.values();
  const bool abc = a.size() == 1 && out.size() > 1;
  const bool bbc = b.size() == 1 && out.size() > 1;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[abc ? 0 : i] * bv[bbc ? 0 : i];
  tape.record({a, b}, out, [a = a, b = b, out, abc, bbc]() mutable {
    auto g = out.grad();
    auto av2 = a.values(), bv2 = b.values();
    if (wants_grad(a)) {
      auto dst = a.grad();
      if (abc) {
        T s = 0;
        for (size_t i = 0; i < g.size(); ++i) s += g[i] * bv2[bbc ? 0 : i];
        dst[0] += s;
      } else {
        for (size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * bv2[bbc ? 0 : i];
      }
    }
    if (wants_grad(b)) {
      auto dst = b.grad();
      if (bbc) {
        T s = 0;
        for (size_t i = 0; i < g.size(); ++i) s += g[i] * av2[abc ? 0 : i];
        dst[0] += s;
      } else {
        for (size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * av2[abc ? 0 : i];
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  auto av = a.values();
  auto ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] > T(0) ? av[i] : T(0);
  tape.record({a}, out, [a = a, out]() mutable {
    if (!wants_grad(a)) return;
    auto g = out.grad();
    auto av2 = a.values();
    auto dst = a.grad();
    for (size_t i = 0; i < g.size(); ++i) {
      if (av2[i] > T(0)) dst[i] += g[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  auto av = a.values();
  auto ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) {
    T x = av[i];
    if (x >= T(0)) {
      ov[i] = T(1) / (T(1) + std::exp(-x));
    } else {
      T e = std::exp(x);
      ov[i] = e / (T(1) + e);
    }
  }
  tape.record({a}, out, [a = a, out]() mutable {
    if (!wants_grad(a)) return;
    auto g = out.grad();
    auto yv = out.values();
    auto dst = a.grad();
    for (size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * yv[i] * (T(1) - yv[i]);
  });
  return out;
}

template <typename T>
Tensor<T> log(Tape<T>& tape, const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  auto av = a.values();
  auto ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) {
    FSSD_CHECK(av[i] > T(0), "log of non-positive value ", av[i]);
    ov[i] = std::log(av[i]);
  }
  tape.record({a}, out, [a = a, out]() mutable {
    if (!wants_grad(a)) return;
    auto g = out.grad();
    auto av2 = a.values();
    auto dst = a.grad();
    for (size_t i = 0; i < g.size(); ++i) dst[i] += g[i] / av2[i];
  });
  return out;
}

template <typename T>
Tensor<T> square(Tape<T>& tape, const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  auto av = a.values();
  auto ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * av[i];
  tape.record({a}, out, [a = a, out]() mutable {
    if (!wants_grad(a)) return;
    auto g = out.grad();
    auto av2 = a.values();
    auto dst = a.grad();
    for (size_t i = 0; i < g.size(); ++i) dst[i] += T(2) * av2[i] * g[i];
  });
  return out;
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::zeros({1});
  T s = 0;
  for (T v : a.values()) s += v;
  out.values()[0] = s;
  tape.record({a}, out, [a = a, out]() mutable {
    if (!wants_grad(a)) return;
    T g = out.grad()[0];
    auto dst = a.grad();
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += g;
  });
  return out;
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T factor) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  auto av = a.values();
  auto ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * factor;
  tape.record({a}, out, [a = a, out, factor]() mutable {
    if (!wants_grad(a)) return;
    auto g = out.grad();
    auto dst = a.grad();
    for (size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * factor;
  });
  return out;
}

template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& a, Shape shape) {
  FSSD_CHECK(shape_numel(shape) == a.size(), "reshape to ", shape_str(shape),
             " does not preserve element count of ", shape_str(a.shape()));
  Tensor<T> out = Tensor<T>::zeros(std::move(shape));
  auto av = a.values();
  auto ov = out.values();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i];
  tape.record({a}, out, [a = a, out]() mutable {
    if (!wants_grad(a)) return;
    auto g = out.grad();
    auto dst = a.grad();
    for (size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  });
  return out;
}

// Strided subsampling of a rank-4 weight tensor: keeps indices 0, f, 2f, ...
// along each mode, so the output dim is ceil(in_dim / f).
template <typename T>
Tensor<T> subsample_weight_tensor(const Tensor<T>& w, const std::array<int, 4>& factors);

// Binary tensor file: magic "FSSD", format version, rank, dims, a dtype tag
// (0 = f32, 1 = f64), then the raw little-endian values. read_tensor converts
// between float widths when the stored dtype differs from T.
template <typename T> void write_tensor(std::ostream& os, const Tensor<T>& t);
template <typename T> Tensor<T> read_tensor(std::istream& is);

}  // namespace fssd
