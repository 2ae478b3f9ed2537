#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <vector>

#include "fssd/kernels.hpp"
#include "fssd/rng.hpp"
#include "testing.hpp"

using namespace fssd;
using namespace fssd::kernels;

namespace {

std::vector<double> random_vec(size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

struct ConvCase {
  int in_c, in_h, in_w, out_c, kernel, stride, pad;
};

const ConvCase kConvCases[] = {
    {3, 12, 12, 8, 3, 1, 1},  // the common 3x3 same-size block
    {4, 11, 13, 6, 3, 2, 1},  // downsampling, odd non-square input
    {8, 9, 9, 5, 1, 1, 0},    // pointwise
    {2, 7, 7, 3, 3, 1, 0},    // valid conv
    {1, 5, 5, 2, 5, 1, 2},    // kernel as large as the input
    {6, 8, 8, 4, 2, 2, 0},
};

}  // namespace

TEST_CASE("output size formula and validation") {
  auto s = conv_shape(3, 300, 300, 64, 3, 1, 1);
  CHECK(s.out_h == 300);
  CHECK(s.out_w == 300);
  auto s2 = conv_shape(128, 18, 18, 256, 3, 2, 1);
  CHECK(s2.out_h == 9);
  auto p = pool_shape(64, 300, 300, 2, 2, 0);
  CHECK(p.out_h == 150);
  auto p2 = pool_shape(64, 37, 37, 2, 2, 0);
  CHECK(p2.out_h == 18);  // floor division
  auto p3 = pool_shape(64, 18, 18, 3, 1, 1);
  CHECK(p3.out_h == 18);

  CHECK_THROWS_AS(conv_shape(3, 4, 4, 8, 7, 1, 1), Error);
  CHECK_THROWS_AS(conv_shape(3, 8, 8, 8, 3, 0, 1), Error);
  CHECK_THROWS_AS(conv_shape(3, 8, 8, 0, 3, 1, 1), Error);
  CHECK_THROWS_AS(pool_shape(3, 8, 8, 2, 2, 2), Error);
}

TEST_CASE("conv forward matches a worked example") {
  // 3x3 input 1..9, 2x2 identity-corner kernel, bias 0.5
  std::vector<double> x = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<double> w = {1, 0, 0, 1};
  std::vector<double> b = {0.5};
  auto s = conv_shape(1, 3, 3, 1, 2, 1, 0);
  std::vector<double> y(4, 0.0);
  conv2d_forward_serial(x.data(), w.data(), b.data(), y.data(), s);
  CHECK(y[0] == 6.5);
  CHECK(y[1] == 8.5);
  CHECK(y[2] == 12.5);
  CHECK(y[3] == 14.5);

  std::vector<double> yp(4, 0.0);
  conv2d_forward_parallel(x.data(), w.data(), b.data(), yp.data(), s);
  for (int i = 0; i < 4; ++i) CHECK(testing::near(y[i], yp[i], 1e-12));
}

TEST_CASE("conv serial and parallel forward agree") {
  Rng rng(101);
  for (const auto& c : kConvCases) {
    auto s = conv_shape(c.in_c, c.in_h, c.in_w, c.out_c, c.kernel, c.stride, c.pad);
    auto x = random_vec(static_cast<size_t>(s.in_c) * s.in_h * s.in_w, rng);
    auto w = random_vec(static_cast<size_t>(s.out_c) * s.in_c * s.kernel * s.kernel, rng);
    auto b = random_vec(static_cast<size_t>(s.out_c), rng);
    size_t yn = static_cast<size_t>(s.out_c) * s.out_h * s.out_w;
    std::vector<double> ys(yn, 0.0), yp(yn, 0.0);
    conv2d_forward_serial(x.data(), w.data(), b.data(), ys.data(), s);
    conv2d_forward_parallel(x.data(), w.data(), b.data(), yp.data(), s);
    for (size_t i = 0; i < yn; ++i) CHECK(testing::rel_diff(ys[i], yp[i]) < 1e-12);
  }
}

TEST_CASE("conv serial and parallel backward agree and accumulate") {
  Rng rng(202);
  for (const auto& c : kConvCases) {
    auto s = conv_shape(c.in_c, c.in_h, c.in_w, c.out_c, c.kernel, c.stride, c.pad);
    size_t xn = static_cast<size_t>(s.in_c) * s.in_h * s.in_w;
    size_t wn = static_cast<size_t>(s.out_c) * s.in_c * s.kernel * s.kernel;
    size_t yn = static_cast<size_t>(s.out_c) * s.out_h * s.out_w;
    auto x = random_vec(xn, rng);
    auto w = random_vec(wn, rng);
    auto dy = random_vec(yn, rng);
    // both sides start from the same nonzero gradient to check the += contract
    auto dx0 = random_vec(xn, rng);
    auto dw0 = random_vec(wn, rng);
    auto db0 = random_vec(static_cast<size_t>(s.out_c), rng);
    auto dxs = dx0, dws = dw0, dbs = db0;
    auto dxp = dx0, dwp = dw0, dbp = db0;
    conv2d_backward_serial(x.data(), w.data(), dy.data(), dxs.data(), dws.data(), dbs.data(), s);
    conv2d_backward_parallel(x.data(), w.data(), dy.data(), dxp.data(), dwp.data(), dbp.data(),
                             s);
    for (size_t i = 0; i < xn; ++i) CHECK(testing::rel_diff(dxs[i], dxp[i]) < 1e-12);
    for (size_t i = 0; i < wn; ++i) CHECK(testing::rel_diff(dws[i], dwp[i]) < 1e-12);
    for (size_t i = 0; i < dbs.size(); ++i) CHECK(testing::rel_diff(dbs[i], dbp[i]) < 1e-12);

    // null slots skip that gradient
    auto dw_only = dw0;
    conv2d_backward_parallel<double>(x.data(), w.data(), dy.data(), nullptr, dw_only.data(),
                                     nullptr, s);
    for (size_t i = 0; i < wn; ++i) CHECK(testing::rel_diff(dw_only[i], dwp[i]) < 1e-12);
  }
}

TEST_CASE("conv is linear in the input") {
  Rng rng(303);
  auto s = conv_shape(3, 10, 10, 4, 3, 1, 1);
  size_t xn = 300, yn = static_cast<size_t>(4) * 10 * 10;
  auto x = random_vec(xn, rng);
  auto w = random_vec(static_cast<size_t>(4) * 3 * 9, rng);
  std::vector<double> zero_bias(4, 0.0);
  std::vector<double> y1(yn, 0.0), y2(yn, 0.0);
  conv2d_forward_parallel(x.data(), w.data(), zero_bias.data(), y1.data(), s);
  auto xs = x;
  const double alpha = -2.75;
  for (auto& v : xs) v *= alpha;
  conv2d_forward_parallel(xs.data(), w.data(), zero_bias.data(), y2.data(), s);
  for (size_t i = 0; i < yn; ++i) CHECK(testing::rel_diff(alpha * y1[i], y2[i]) < 1e-12);
}

TEST_CASE("maxpool matches worked examples") {
  std::vector<double> x(16);
  for (int i = 0; i < 16; ++i) x[i] = i + 1;
  auto s = pool_shape(1, 4, 4, 2, 2, 0);
  std::vector<double> y(4, 0.0);
  std::vector<std::int32_t> am(4, -1);
  maxpool_forward_serial(x.data(), y.data(), am.data(), s);
  CHECK(y == std::vector<double>{6, 8, 14, 16});
  CHECK(am == std::vector<std::int32_t>{5, 7, 13, 15});

  // global pooling when kernel and stride span the whole input
  auto g = pool_shape(1, 4, 4, 4, 4, 0);
  std::vector<double> gy(1, 0.0);
  maxpool_forward_serial(x.data(), gy.data(), nullptr, g);
  CHECK(gy[0] == 16.0);

  // ties keep the first position in scan order
  std::vector<double> flat(16, 3.0);
  maxpool_forward_serial(flat.data(), y.data(), am.data(), s);
  CHECK(am == std::vector<std::int32_t>{0, 2, 8, 10});
}

TEST_CASE("maxpool serial and parallel are identical") {
  Rng rng(404);
  struct { int c, h, w, k, s, p; } cases[] = {
      {4, 10, 10, 2, 2, 0},
      {3, 18, 18, 3, 1, 1},  // overlapping windows
      {2, 7, 9, 3, 2, 1},
  };
  for (const auto& c : cases) {
    auto s = pool_shape(c.c, c.h, c.w, c.k, c.s, c.p);
    size_t xn = static_cast<size_t>(c.c) * c.h * c.w;
    size_t yn = static_cast<size_t>(c.c) * s.out_h * s.out_w;
    auto x = random_vec(xn, rng);
    std::vector<double> ys(yn, 0.0), yp(yn, 0.0);
    std::vector<std::int32_t> ams(yn, -1), amp(yn, -1);
    maxpool_forward_serial(x.data(), ys.data(), ams.data(), s);
    maxpool_forward_parallel(x.data(), yp.data(), amp.data(), s);
    CHECK(ys == yp);
    CHECK(ams == amp);

    auto dy = random_vec(yn, rng);
    auto dx0 = random_vec(xn, rng);
    auto dxs = dx0, dxp = dx0;
    maxpool_backward_serial(ams.data(), dy.data(), dxs.data(), s);
    maxpool_backward_parallel(amp.data(), dy.data(), dxp.data(), s);
    for (size_t i = 0; i < xn; ++i) CHECK(testing::rel_diff(dxs[i], dxp[i]) < 1e-12);
  }
}

TEST_CASE("gemm variants match the serial reference") {
  Rng rng(505);
  struct { int m, n, k; } cases[] = {{4, 32, 8}, {5, 37, 13}, {1, 1, 1}, {7, 3, 40}, {16, 64, 27}};
  for (const auto& c : cases) {
    auto a = random_vec(static_cast<size_t>(c.m) * c.k, rng);
    auto b = random_vec(static_cast<size_t>(c.k) * c.n, rng);
    auto c0 = random_vec(static_cast<size_t>(c.m) * c.n, rng);

    auto cs = c0, cp = c0;
    gemm_serial(c.m, c.n, c.k, a.data(), b.data(), cs.data(), true);
    gemm(c.m, c.n, c.k, a.data(), b.data(), cp.data(), true);
    for (size_t i = 0; i < cs.size(); ++i) CHECK(testing::rel_diff(cs[i], cp[i]) < 1e-12);

    gemm_serial(c.m, c.n, c.k, a.data(), b.data(), cs.data(), false);
    gemm(c.m, c.n, c.k, a.data(), b.data(), cp.data(), false);
    for (size_t i = 0; i < cs.size(); ++i) CHECK(testing::rel_diff(cs[i], cp[i]) < 1e-12);

    // A[m,l] * B[n,l] with B stored row-major by n
    auto bt = random_vec(static_cast<size_t>(c.n) * c.k, rng);
    std::vector<double> want(static_cast<size_t>(c.m) * c.n, 0.0);
    for (int i = 0; i < c.m; ++i)
      for (int j = 0; j < c.n; ++j) {
        double acc = 0.0;
        for (int l = 0; l < c.k; ++l) acc += a[i * c.k + l] * bt[j * c.k + l];
        want[i * c.n + j] = acc;
      }
    std::vector<double> got(static_cast<size_t>(c.m) * c.n, 0.0);
    gemm_nt(c.m, c.n, c.k, a.data(), bt.data(), got.data(), false);
    for (size_t i = 0; i < got.size(); ++i) CHECK(testing::rel_diff(want[i], got[i]) < 1e-12);
  }
}

TEST_CASE("results do not depend on the thread count") {
  Rng rng(606);
  auto s = conv_shape(5, 14, 14, 7, 3, 1, 1);
  size_t xn = static_cast<size_t>(5) * 14 * 14;
  size_t wn = static_cast<size_t>(7) * 5 * 9;
  size_t yn = static_cast<size_t>(7) * 14 * 14;
  auto x = random_vec(xn, rng);
  auto w = random_vec(wn, rng);
  auto b = random_vec(7, rng);
  auto dy = random_vec(yn, rng);

  auto run = [&](int threads) {
    set_threads(threads);
    std::vector<double> y(yn, 0.0), dx(xn, 0.0), dw(wn, 0.0), db(7, 0.0);
    conv2d_forward_parallel(x.data(), w.data(), b.data(), y.data(), s);
    conv2d_backward_parallel(x.data(), w.data(), dy.data(), dx.data(), dw.data(), db.data(), s);
    std::vector<double> all;
    all.insert(all.end(), y.begin(), y.end());
    all.insert(all.end(), dx.begin(), dx.end());
    all.insert(all.end(), dw.begin(), dw.end());
    all.insert(all.end(), db.begin(), db.end());
    return all;
  };

  auto base = run(1);
  for (int t : {2, 3, 4, 8}) {
    auto other = run(t);
    CHECK(other == base);  // bitwise, not just close
  }
  set_threads(1);
}

TEST_CASE("backend dispatch honors the setting") {
  set_backend(Backend::serial);
  CHECK(active_backend() == Backend::serial);
  set_backend(Backend::parallel);
  CHECK(active_backend() == Backend::parallel);
  CHECK_THROWS_AS(set_threads(0), Error);
}
