#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "fssd/anchors.hpp"
#include "fssd/model.hpp"
#include "fssd/tensor.hpp"

namespace fssd {

struct FaceLossConfig {
  double lambda = 1.0;         // regression weight
  double neg_pos_ratio = 3.0;  // location-level mining keeps ratio*num_pos negatives
  double eps = 1e-7;           // probability clamp for the log terms
  bool use_hnm = true;         // off keeps every negative location

  void validate() const {
    FSSD_CHECK(lambda > 0, "lambda must be positive, got ", lambda);
    FSSD_CHECK(neg_pos_ratio > 0, "neg_pos_ratio must be positive, got ", neg_pos_ratio);
    FSSD_CHECK(eps > 0 && eps < 0.5, "eps must lie in (0, 0.5), got ", eps);
  }
};

inline double smooth_l1(double k) {
  double a = std::abs(k);
  return a < 1.0 ? 0.5 * k * k : a - 0.5;
}

inline double smooth_l1_grad(double k) {
  if (std::abs(k) < 1.0) return k;
  return k > 0 ? 1.0 : -1.0;
}

inline double clamp_prob(double c, double eps) {
  return c < eps ? eps : (c > 1.0 - eps ? 1.0 - eps : c);
}

inline double bce(double y, double c, double eps = 1e-7) {
  double p = clamp_prob(c, eps);
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

// Derivative in c; zero where the clamp is active.
inline double bce_grad(double y, double c, double eps = 1e-7) {
  if (c < eps || c > 1.0 - eps) return 0.0;
  return -y / c + (1.0 - y) / (1.0 - c);
}

// Top min(floor(ratio*num_pos), #negatives) indices by descending loss,
// ties toward the lower index. Returned in selection order.
inline std::vector<int> select_hard_negatives(std::span<const double> losses_at_negatives,
                                              int num_pos, double ratio) {
  FSSD_CHECK(num_pos >= 0, "negative positive count");
  FSSD_CHECK(ratio > 0, "mining ratio must be positive, got ", ratio);
  const int n = static_cast<int>(losses_at_negatives.size());
  const double want = std::floor(ratio * num_pos);
  const int k = static_cast<int>(std::min<double>(want, n));
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
    double la = losses_at_negatives[static_cast<size_t>(a)];
    double lb = losses_at_negatives[static_cast<size_t>(b)];
    if (la != lb) return la > lb;
    return a < b;
  });
  idx.resize(static_cast<size_t>(k));
  return idx;
}

// Top ceil(fraction*B) sample indices by descending loss, ties toward the
// lower index; the trainer prepends these to the next minibatch.
inline std::vector<int> recycle_hard_samples(std::span<const double> batch_losses,
                                             double fraction) {
  FSSD_CHECK(fraction > 0 && fraction < 1, "recycle fraction must lie in (0,1), got ",
             fraction);
  const int n = static_cast<int>(batch_losses.size());
  FSSD_CHECK(n >= 1, "empty batch");
  const int k = static_cast<int>(std::ceil(fraction * n));
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
    double la = batch_losses[static_cast<size_t>(a)];
    double lb = batch_losses[static_cast<size_t>(b)];
    if (la != lb) return la > lb;
    return a < b;
  });
  idx.resize(static_cast<size_t>(k));
  return idx;
}

namespace detail {

struct LocGrad {
  int scale = 0;
  std::int64_t idx = 0;
  double coeff = 0;  // raw derivative; scaled at pullback time
};

template <typename T>
void check_assignment(const DefaultBoxGrid& grid, const MatchAssignment& match) {
  grid.validate();
  FSSD_CHECK(static_cast<std::int64_t>(match.positive.size()) == grid.total_locations() &&
                 match.gt_index.size() == match.positive.size() &&
                 match.offsets.size() == match.positive.size(),
             "assignment covers ", match.positive.size(), " locations, grid has ",
             grid.total_locations());
}

template <typename T>
void check_task_maps(std::vector<HeatmapVolume<T>>& vols, const DefaultBoxGrid& grid,
                     int channels) {
  FSSD_CHECK(static_cast<int>(vols.size()) == grid.num_scales(), "expected ",
             grid.num_scales(), " scales, got ", vols.size());
  for (int s = 0; s < grid.num_scales(); ++s) {
    int side = grid.sizes[static_cast<size_t>(s)];
    auto& t = vols[static_cast<size_t>(s)].tasks;
    Shape want = {channels, side, side};
    FSSD_CHECK(t.defined() && t.shape() == want, "task map at scale ", s, " must be [",
               channels, ",", side, ",", side, "], got ",
               t.defined() ? shape_str(t.shape()) : "undefined");
  }
}

// Shared epilogue of the per-positive-location task losses: all of them
// reduce to raw_value * final_scale with gradients final_scale * coeff.
template <typename T>
Tensor<T> record_task_loss(Tape<T>& tape, std::vector<HeatmapVolume<T>>& vols,
                           double raw_value, double final_scale,
                           std::vector<LocGrad> grads) {
  auto out = Tensor<T>::scalar(static_cast<T>(raw_value * final_scale));
  std::vector<Tensor<T>> inputs;
  inputs.reserve(vols.size());
  for (auto& v : vols) inputs.push_back(v.tasks);
  std::vector<Tensor<T>> tasks = inputs;
  tape.record(std::move(inputs), out,
              [tasks, out, final_scale, grads = std::move(grads)]() mutable {
                T seed = out.grad_data()[0];
                for (const auto& g : grads) {
                  auto& t = tasks[static_cast<size_t>(g.scale)];
                  if (!wants_grad(t)) continue;
                  t.grad_data()[g.idx] += seed * static_cast<T>(final_scale * g.coeff);
                }
              });
  return out;
}

}  // namespace detail

template <typename T>
struct FaceLossResult {
  Tensor<T> loss;
  int num_positive = 0;
  int num_negatives_selected = 0;
  double cls_sum = 0;  // unscaled classification sum
  double reg_sum = 0;  // unscaled regression sum
};

// Detection objective over one sample: (1/N) (sum of BCE over positives and
// mined negatives + lambda * sum of smooth L1 over positive offsets), with
// N the number of matched locations. Empty scenes contribute zero.
template <typename T>
FaceLossResult<T> face_loss(Tape<T>& tape, std::vector<HeatmapVolume<T>>& vols,
                            const DefaultBoxGrid& grid, const MatchAssignment& match,
                            const FaceLossConfig& cfg = {}) {
  cfg.validate();
  detail::check_assignment<T>(grid, match);
  FSSD_CHECK(static_cast<int>(vols.size()) == grid.num_scales(), "expected ",
             grid.num_scales(), " scales, got ", vols.size());
  for (int s = 0; s < grid.num_scales(); ++s) {
    int side = grid.sizes[static_cast<size_t>(s)];
    auto& v = vols[static_cast<size_t>(s)];
    Shape want_face = {side, side};
    Shape want_off = {4, side, side};
    FSSD_CHECK(v.face.defined() && v.face.shape() == want_face, "face map at scale ", s,
               " must be [", side, ",", side, "]");
    FSSD_CHECK(v.offsets.defined() && v.offsets.shape() == want_off, "offset map at scale ",
               s, " must be [4,", side, ",", side, "]");
  }

  FaceLossResult<T> result;
  result.num_positive = match.num_positive;
  if (match.num_positive == 0) {
    result.loss = Tensor<T>::scalar(T(0));
    return result;
  }

  std::vector<detail::LocGrad> fgrads, ograds;
  std::vector<double> neg_losses;
  std::vector<std::pair<int, std::int64_t>> neg_locs;
  double cls = 0, reg = 0;
  std::int64_t flat = 0;
  for (int s = 0; s < grid.num_scales(); ++s) {
    auto& v = vols[static_cast<size_t>(s)];
    auto fv = v.face.values();
    auto ov = v.offsets.values();
    const std::int64_t hw = grid.locations_at(s);
    for (std::int64_t i = 0; i < hw; ++i, ++flat) {
      double p = fv[static_cast<size_t>(i)];
      if (match.positive[static_cast<size_t>(flat)]) {
        cls += bce(1.0, p, cfg.eps);
        fgrads.push_back({s, i, bce_grad(1.0, p, cfg.eps)});
        const auto& target = match.offsets[static_cast<size_t>(flat)];
        for (int m = 0; m < 4; ++m) {
          double k = ov[static_cast<size_t>(m * hw + i)] - target[static_cast<size_t>(m)];
          reg += smooth_l1(k);
          ograds.push_back({s, m * hw + i, cfg.lambda * smooth_l1_grad(k)});
        }
      } else {
        neg_losses.push_back(bce(0.0, p, cfg.eps));
        neg_locs.emplace_back(s, i);
      }
    }
  }

  std::vector<int> selected;
  if (cfg.use_hnm) {
    selected = select_hard_negatives(std::span<const double>(neg_losses),
                                     match.num_positive, cfg.neg_pos_ratio);
  } else {
    selected.resize(neg_losses.size());
    std::iota(selected.begin(), selected.end(), 0);
  }
  std::sort(selected.begin(), selected.end());
  for (int j : selected) {
    cls += neg_losses[static_cast<size_t>(j)];
    auto [s, i] = neg_locs[static_cast<size_t>(j)];
    double p = vols[static_cast<size_t>(s)].face.values()[static_cast<size_t>(i)];
    fgrads.push_back({s, i, bce_grad(0.0, p, cfg.eps)});
  }

  result.cls_sum = cls;
  result.reg_sum = reg;
  result.num_negatives_selected = static_cast<int>(selected.size());
  const double inv_n = 1.0 / match.num_positive;
  auto out = Tensor<T>::scalar(static_cast<T>(inv_n * (cls + cfg.lambda * reg)));

  std::vector<Tensor<T>> inputs, faces, offs;
  for (auto& v : vols) {
    inputs.push_back(v.face);
    inputs.push_back(v.offsets);
    faces.push_back(v.face);
    offs.push_back(v.offsets);
  }
  tape.record(std::move(inputs), out,
              [faces, offs, out, inv_n, fgrads = std::move(fgrads),
               ograds = std::move(ograds)]() mutable {
                T seed = out.grad_data()[0];
                for (const auto& g : fgrads) {
                  auto& t = faces[static_cast<size_t>(g.scale)];
                  if (!wants_grad(t)) continue;
                  t.grad_data()[g.idx] += seed * static_cast<T>(inv_n * g.coeff);
                }
                for (const auto& g : ograds) {
                  auto& t = offs[static_cast<size_t>(g.scale)];
                  if (!wants_grad(t)) continue;
                  t.grad_data()[g.idx] += seed * static_cast<T>(inv_n * g.coeff);
                }
              });
  result.loss = out;
  return result;
}

// Mean BCE of the smile plane against the matched face's label over all
// positive locations.
template <typename T>
Tensor<T> smile_loss(Tape<T>& tape, std::vector<HeatmapVolume<T>>& vols,
                     const DefaultBoxGrid& grid, const MatchAssignment& match,
                     std::span<const int> smile_labels, double eps = 1e-7) {
  detail::check_assignment<T>(grid, match);
  detail::check_task_maps(vols, grid, 1);
  for (int y : smile_labels) FSSD_CHECK(y == 0 || y == 1, "smile labels are 0/1, got ", y);
  if (match.num_positive == 0) return Tensor<T>::scalar(T(0));

  std::vector<detail::LocGrad> grads;
  double raw = 0;
  std::int64_t flat = 0;
  for (int s = 0; s < grid.num_scales(); ++s) {
    auto tv = vols[static_cast<size_t>(s)].tasks.values();
    const std::int64_t hw = grid.locations_at(s);
    for (std::int64_t i = 0; i < hw; ++i, ++flat) {
      if (!match.positive[static_cast<size_t>(flat)]) continue;
      int gt = match.gt_index[static_cast<size_t>(flat)];
      FSSD_CHECK(gt >= 0 && gt < static_cast<int>(smile_labels.size()),
                 "matched face ", gt, " has no smile label");
      double y = smile_labels[static_cast<size_t>(gt)];
      double p = tv[static_cast<size_t>(i)];
      raw += bce(y, p, eps);
      grads.push_back({s, i, bce_grad(y, p, eps)});
    }
  }
  return detail::record_task_loss(tape, vols, raw, 1.0 / match.num_positive,
                                  std::move(grads));
}

// Mean BCE over attribute planes and positive locations; labels arrive as
// bit masks, bit a giving the target of plane a.
template <typename T>
Tensor<T> attribute_loss(Tape<T>& tape, std::vector<HeatmapVolume<T>>& vols,
                         const DefaultBoxGrid& grid, const MatchAssignment& match,
                         std::span<const std::uint64_t> attr_bits, int num_attributes,
                         double eps = 1e-7) {
  FSSD_CHECK(num_attributes >= 1 && num_attributes <= 64,
             "attribute count must lie in [1,64], got ", num_attributes);
  detail::check_assignment<T>(grid, match);
  detail::check_task_maps(vols, grid, num_attributes);
  if (match.num_positive == 0) return Tensor<T>::scalar(T(0));

  std::vector<detail::LocGrad> grads;
  double raw = 0;
  std::int64_t flat = 0;
  for (int s = 0; s < grid.num_scales(); ++s) {
    auto tv = vols[static_cast<size_t>(s)].tasks.values();
    const std::int64_t hw = grid.locations_at(s);
    for (std::int64_t i = 0; i < hw; ++i, ++flat) {
      if (!match.positive[static_cast<size_t>(flat)]) continue;
      int gt = match.gt_index[static_cast<size_t>(flat)];
      FSSD_CHECK(gt >= 0 && gt < static_cast<int>(attr_bits.size()),
                 "matched face ", gt, " has no attribute labels");
      std::uint64_t bits = attr_bits[static_cast<size_t>(gt)];
      for (int a = 0; a < num_attributes; ++a) {
        double y = static_cast<double>((bits >> a) & 1u);
        double p = tv[static_cast<size_t>(a * hw + i)];
        raw += bce(y, p, eps);
        grads.push_back({s, a * hw + i, bce_grad(y, p, eps)});
      }
    }
  }
  return detail::record_task_loss(tape, vols, raw,
                                  1.0 / (static_cast<double>(match.num_positive) * num_attributes),
                                  std::move(grads));
}

// Valence/arousal regression: E_v + E_a with E = (1/2N) sum of squared
// errors over the N positive locations.
template <typename T>
Tensor<T> va_loss(Tape<T>& tape, std::vector<HeatmapVolume<T>>& vols,
                  const DefaultBoxGrid& grid, const MatchAssignment& match,
                  std::span<const std::array<double, 2>> va_targets) {
  detail::check_assignment<T>(grid, match);
  detail::check_task_maps(vols, grid, 2);
  for (const auto& t : va_targets) {
    FSSD_CHECK(t[0] >= -1 && t[0] <= 1 && t[1] >= -1 && t[1] <= 1,
               "valence/arousal targets must lie in [-1,1]");
  }
  if (match.num_positive == 0) return Tensor<T>::scalar(T(0));

  std::vector<detail::LocGrad> grads;
  double raw = 0;
  std::int64_t flat = 0;
  for (int s = 0; s < grid.num_scales(); ++s) {
    auto tv = vols[static_cast<size_t>(s)].tasks.values();
    const std::int64_t hw = grid.locations_at(s);
    for (std::int64_t i = 0; i < hw; ++i, ++flat) {
      if (!match.positive[static_cast<size_t>(flat)]) continue;
      int gt = match.gt_index[static_cast<size_t>(flat)];
      FSSD_CHECK(gt >= 0 && gt < static_cast<int>(va_targets.size()),
                 "matched face ", gt, " has no valence/arousal target");
      for (int c = 0; c < 2; ++c) {
        double d = tv[static_cast<size_t>(c * hw + i)] -
                   va_targets[static_cast<size_t>(gt)][static_cast<size_t>(c)];
        raw += d * d;
        grads.push_back({s, c * hw + i, 2.0 * d});
      }
    }
  }
  return detail::record_task_loss(tape, vols, raw, 1.0 / (2.0 * match.num_positive),
                                  std::move(grads));
}

// Euclidean norm of the weighted per-task losses. With one task this is a
// pass-through of |w*L|.
template <typename T>
Tensor<T> multitask_total(Tape<T>& tape, const std::vector<Tensor<T>>& losses,
                          const std::vector<double>& weights) {
  FSSD_CHECK(!losses.empty(), "need at least one task loss");
  FSSD_CHECK(losses.size() == weights.size(), "got ", losses.size(), " losses but ",
             weights.size(), " weights");
  double sq = 0;
  std::vector<double> vals(losses.size());
  for (size_t t = 0; t < losses.size(); ++t) {
    FSSD_CHECK(losses[t].defined() && losses[t].size() == 1, "task losses must be scalars");
    FSSD_CHECK(weights[t] > 0, "task weights must be positive, got ", weights[t]);
    double v = static_cast<double>(losses[t].values()[0]);
    FSSD_CHECK(v >= 0, "task losses are nonnegative, got ", v);
    vals[t] = v;
    sq += weights[t] * v * weights[t] * v;
  }
  const double total = std::sqrt(sq);
  auto out = Tensor<T>::scalar(static_cast<T>(total));
  std::vector<Tensor<T>> inputs(losses.begin(), losses.end());
  std::vector<double> ws(weights.begin(), weights.end());
  std::vector<Tensor<T>> ls = inputs;
  tape.record(std::move(inputs), out, [ls, out, ws, vals, total]() mutable {
    if (total == 0) return;
    T seed = out.grad_data()[0];
    for (size_t t = 0; t < ls.size(); ++t) {
      if (!wants_grad(ls[t])) continue;
      ls[t].grad_data()[0] += seed * static_cast<T>(ws[t] * ws[t] * vals[t] / total);
    }
  });
  return out;
}

}  // namespace fssd
