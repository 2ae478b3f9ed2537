#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "doctest.h"
#include "fssd/tensor.hpp"

namespace fssd::testing {

// Central-difference gradient check. build must construct the scalar loss on
// the given tape from the current parameter values; it is re-run twice per
// element with a perturbed value. Returns the worst relative error, with the
// denominator floored at 1 so tiny gradients are compared absolutely.
template <typename BuildFn>
double max_grad_error(std::span<Tensor<double>> params, BuildFn build, double step = 1e-5) {
  Tape<double> tape;
  Tensor<double> loss = build(tape);
  for (auto& p : params) p.zero_grad();
  tape.backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) {
    auto g = p.grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  auto eval = [&]() {
    Tape<double> t(false);
    return build(t).item();
  };

  double worst = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto v = params[pi].values();
    for (size_t i = 0; i < v.size(); ++i) {
      double saved = v[i];
      v[i] = saved + step;
      double up = eval();
      v[i] = saved - step;
      double down = eval();
      v[i] = saved;
      double fd = (up - down) / (2.0 * step);
      double g = analytic[pi][i];
      double err = std::abs(fd - g) / std::max(1.0, std::abs(g));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

inline bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

inline double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace fssd::testing
