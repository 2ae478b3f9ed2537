#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <vector>

#include "fssd/nn_ops.hpp"
#include "fssd/rng.hpp"
#include "testing.hpp"

using namespace fssd;

namespace {

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  auto t = Tensor<double>::zeros(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("conv2d and maxpool2d produce the layer-table shapes") {
  Tape<double> tape(false);
  auto x = random_tensor({3, 300, 300}, 1);
  ConvSpec g1{64, 3, 1, 1};
  auto layer = make_conv_layer<double>(3, g1, 7);
  auto y = conv2d(tape, x, layer.w, layer.b, g1);
  CHECK(y.shape() == Shape{64, 300, 300});
  auto pooled = maxpool2d(tape, y, PoolSpec{2, 2, 0});
  CHECK(pooled.shape() == Shape{64, 150, 150});

  auto down = conv2d(tape, random_tensor({8, 18, 18}, 2),
                     Tensor<double>::random_init({4, 8, 3, 3}, 3),
                     Tensor<double>::zeros({4}), ConvSpec{4, 3, 2, 1});
  CHECK(down.shape() == Shape{4, 9, 9});
}

TEST_CASE("conv2d validates shapes") {
  Tape<double> tape(false);
  auto x = random_tensor({3, 8, 8}, 4);
  ConvSpec spec{4, 3, 1, 1};
  auto w_bad = Tensor<double>::random_init({4, 2, 3, 3}, 5);
  auto b = Tensor<double>::zeros({4});
  CHECK_THROWS_AS(conv2d(tape, x, w_bad, b, spec), Error);
  auto w = Tensor<double>::random_init({4, 3, 3, 3}, 5);
  CHECK_THROWS_AS(conv2d(tape, x, w, Tensor<double>::zeros({5}), spec), Error);
  CHECK_THROWS_AS(conv2d(tape, random_tensor({8, 8}, 6), w, b, spec), Error);
}

TEST_CASE("conv2d is linear in the input") {
  Tape<double> tape(false);
  auto x = random_tensor({2, 9, 9}, 10);
  ConvSpec spec{3, 3, 1, 1};
  auto w = Tensor<double>::random_init({3, 2, 3, 3}, 11);
  auto zero_b = Tensor<double>::zeros({3});
  auto y1 = conv2d(tape, x, w, zero_b, spec);
  auto xs = Tensor<double>::zeros(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) xs.values()[i] = 3.5 * x.values()[i];
  auto y2 = conv2d(tape, xs, w, zero_b, spec);
  for (std::int64_t i = 0; i < y1.size(); ++i) {
    CHECK(testing::rel_diff(3.5 * y1.values()[i], y2.values()[i]) < 1e-12);
  }
}

TEST_CASE("gradients of a conv stack match finite differences") {
  for (std::uint64_t seed : {21ull, 22ull, 23ull}) {
    auto x = random_tensor({2, 5, 5}, seed);
    x.set_requires_grad(true);
    ConvSpec c1{3, 3, 1, 1};
    ConvSpec c2{2, 1, 1, 0};
    auto l1 = make_conv_layer<double>(2, c1, seed * 31 + 1);
    auto l2 = make_conv_layer<double>(3, c2, seed * 31 + 2);
    std::vector<Tensor<double>> params = {x, l1.w, l1.b, l2.w, l2.b};
    auto build = [&](Tape<double>& t) {
      auto h = relu(t, conv2d(t, x, l1.w, l1.b, c1));
      auto p = maxpool2d(t, h, PoolSpec{2, 2, 0});
      auto o = sigmoid(t, conv2d(t, p, l2.w, l2.b, c2));
      return sum(t, square(t, o));
    };
    double err = testing::max_grad_error(std::span<Tensor<double>>(params), build);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("maxpool gradient goes to the argmax only") {
  Tape<double> tape;
  // distinct values, well separated so finite differences cannot flip the max
  auto x = Tensor<double>::from_values({1, 2, 2}, {0.1, 0.4, 0.3, 0.2});
  x.set_requires_grad(true);
  auto y = maxpool2d(tape, x, PoolSpec{2, 2, 0});
  auto loss = sum(tape, y);
  tape.backward(loss);
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[2] == 0.0);
  CHECK(x.grad()[3] == 0.0);

  // a tie routes gradient to the first window position in scan order
  Tape<double> tape2;
  auto flat = Tensor<double>::full({1, 2, 2}, 2.0);
  flat.set_requires_grad(true);
  auto y2 = maxpool2d(tape2, flat, PoolSpec{2, 2, 0});
  tape2.backward(sum(tape2, y2));
  CHECK(flat.grad()[0] == 1.0);
  CHECK(flat.grad()[1] == 0.0);
}

TEST_CASE("conv_block chains conv relu pool and exposes the pre-pool tap") {
  Tape<double> tape;
  auto x = random_tensor({3, 12, 12}, 33);
  std::vector<ConvLayer<double>> layers;
  layers.push_back(make_conv_layer<double>(3, ConvSpec{4, 3, 1, 1}, 40));
  layers.push_back(make_conv_layer<double>(4, ConvSpec{6, 3, 1, 1}, 41));
  Tensor<double> tap;
  auto out = conv_block(tape, x, std::span<const ConvLayer<double>>(layers),
                        PoolSpec{2, 2, 0}, &tap);
  CHECK(out.shape() == Shape{6, 6, 6});
  CHECK(tap.shape() == Shape{6, 12, 12});
  for (double v : out.values()) CHECK(v >= 0.0);  // relu output

  // the tap is the activation the pool consumed, so a loss on the tap
  // reaches the weights
  auto loss = sum(tape, tap);
  tape.backward(loss);
  bool any = false;
  for (double g : layers[0].w.grad()) {
    if (g != 0.0) any = true;
  }
  CHECK(any);

  auto no_pool = conv_block(tape, x, std::span<const ConvLayer<double>>(layers), std::nullopt);
  CHECK(no_pool.shape() == Shape{6, 12, 12});
  CHECK_THROWS_AS(
      conv_block(tape, x, std::span<const ConvLayer<double>>(), std::nullopt), Error);
}
