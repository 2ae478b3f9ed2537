// Times the serial reference kernels against the OpenMP ones over the conv
// and pool shapes the network actually runs. Usage: bench_kernels [reps].

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "fssd/kernels.hpp"
#include "fssd/rng.hpp"

using namespace fssd;
using namespace fssd::kernels;
using Clock = std::chrono::steady_clock;

namespace {

std::vector<float> random_buffer(std::int64_t n, std::uint64_t seed) {
  std::vector<float> out(static_cast<size_t>(n));
  Rng rng(seed);
  for (auto& v : out) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return out;
}

template <typename Fn>
double best_ms(int reps, Fn&& fn) {
  double best = 1e30;
  for (int r = 0; r < reps; ++r) {
    auto t0 = Clock::now();
    fn();
    auto t1 = Clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void bench_conv(const char* name, int c, int h, int w, int k, int kernel, int stride, int pad,
                int reps) {
  auto s = conv_shape(c, h, w, k, kernel, stride, pad);
  auto x = random_buffer(static_cast<std::int64_t>(c) * h * w, 1);
  auto wt = random_buffer(static_cast<std::int64_t>(k) * c * kernel * kernel, 2);
  auto bias = random_buffer(k, 3);
  std::vector<float> y(static_cast<size_t>(s.out_c) * s.out_h * s.out_w);
  auto dy = random_buffer(static_cast<std::int64_t>(s.out_c) * s.out_h * s.out_w, 4);
  std::vector<float> dx(x.size()), dw(wt.size()), db(bias.size());

  double fwd_serial = best_ms(reps, [&] {
    conv2d_forward_serial(x.data(), wt.data(), bias.data(), y.data(), s);
  });
  double fwd_parallel = best_ms(reps, [&] {
    conv2d_forward_parallel(x.data(), wt.data(), bias.data(), y.data(), s);
  });
  double bwd_serial = best_ms(reps, [&] {
    std::fill(dx.begin(), dx.end(), 0.0f);
    std::fill(dw.begin(), dw.end(), 0.0f);
    std::fill(db.begin(), db.end(), 0.0f);
    conv2d_backward_serial(x.data(), wt.data(), dy.data(), dx.data(), dw.data(), db.data(), s);
  });
  double bwd_parallel = best_ms(reps, [&] {
    std::fill(dx.begin(), dx.end(), 0.0f);
    std::fill(dw.begin(), dw.end(), 0.0f);
    std::fill(db.begin(), db.end(), 0.0f);
    conv2d_backward_parallel(x.data(), wt.data(), dy.data(), dx.data(), dw.data(), db.data(), s);
  });
  std::printf("%-22s fwd %8.2f ms -> %8.2f ms (%.2fx)   bwd %8.2f ms -> %8.2f ms (%.2fx)\n",
              name, fwd_serial, fwd_parallel, fwd_serial / fwd_parallel, bwd_serial,
              bwd_parallel, bwd_serial / bwd_parallel);
}

void bench_pool(const char* name, int c, int h, int w, int kernel, int stride, int pad,
                int reps) {
  auto s = pool_shape(c, h, w, kernel, stride, pad);
  auto x = random_buffer(static_cast<std::int64_t>(c) * h * w, 5);
  std::vector<float> y(static_cast<size_t>(s.channels) * s.out_h * s.out_w);
  std::vector<std::int32_t> argmax(y.size());
  auto dy = random_buffer(static_cast<std::int64_t>(y.size()), 6);
  std::vector<float> dx(x.size());

  double fwd_serial = best_ms(reps, [&] {
    maxpool_forward_serial(x.data(), y.data(), argmax.data(), s);
  });
  double fwd_parallel = best_ms(reps, [&] {
    maxpool_forward_parallel(x.data(), y.data(), argmax.data(), s);
  });
  double bwd_serial = best_ms(reps, [&] {
    std::fill(dx.begin(), dx.end(), 0.0f);
    maxpool_backward_serial(argmax.data(), dy.data(), dx.data(), s);
  });
  double bwd_parallel = best_ms(reps, [&] {
    std::fill(dx.begin(), dx.end(), 0.0f);
    maxpool_backward_parallel(argmax.data(), dy.data(), dx.data(), s);
  });
  std::printf("%-22s fwd %8.2f ms -> %8.2f ms (%.2fx)   bwd %8.2f ms -> %8.2f ms (%.2fx)\n",
              name, fwd_serial, fwd_parallel, fwd_serial / fwd_parallel, bwd_serial,
              bwd_parallel, bwd_serial / bwd_parallel);
}

}  // namespace

int main(int argc, char** argv) {
  int reps = argc > 1 ? std::atoi(argv[1]) : 3;
  if (reps < 1) reps = 1;
  std::printf("kernel benchmark, %d reps, best-of timing, %d threads\n", reps,
              omp_get_max_threads());
  std::printf("%-22s %s\n", "shape", "serial -> parallel");

  bench_conv("conv 3x300x300 k64", 3, 300, 300, 64, 3, 1, 1, reps);
  bench_conv("conv 64x150x150 k128", 64, 150, 150, 128, 3, 1, 1, reps);
  bench_conv("conv 256x37x37 k512", 256, 37, 37, 512, 3, 1, 1, reps);
  bench_conv("conv 512x18x18 k1024", 512, 18, 18, 1024, 3, 1, 1, reps);
  bench_conv("conv 1024x18x18 1x1", 1024, 18, 18, 256, 1, 1, 0, reps);
  bench_conv("conv 256x9x9 s2 k512", 256, 9, 9, 512, 3, 2, 1, reps);
  bench_pool("pool 64x300x300 2/2", 64, 300, 300, 2, 2, 0, reps);
  bench_pool("pool 512x37x37 3/1", 512, 37, 37, 3, 1, 1, reps);
  return 0;
}
