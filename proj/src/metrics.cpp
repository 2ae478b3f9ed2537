#include "fssd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fssd/check.hpp"
#include "fssd/text.hpp"

namespace fssd {

MatchResult match_detections_to_gt(const std::vector<ScoredBox>& dets,
                                   const std::vector<Box>& gts, double iou_min) {
  FSSD_CHECK(iou_min > 0 && iou_min <= 1, "iou_min out of (0,1]");
  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return dets[static_cast<size_t>(a)].score > dets[static_cast<size_t>(b)].score;
  });

  MatchResult result;
  result.det_of_gt.assign(gts.size(), -1);
  std::vector<char> taken(gts.size(), 0);
  for (int di : order) {
    const auto& d = dets[static_cast<size_t>(di)];
    int best_gt = -1;
    double best_iou = 0;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      double v = iou(d.box, gts[g]);
      if (v > best_iou) {
        best_iou = v;
        best_gt = static_cast<int>(g);
      }
    }
    ScoredOutcome oc;
    oc.score = d.score;
    oc.is_true_positive = best_gt >= 0 && best_iou >= iou_min;
    if (oc.is_true_positive) {
      taken[static_cast<size_t>(best_gt)] = 1;
      result.det_of_gt[static_cast<size_t>(best_gt)] = di;
    }
    result.outcomes.push_back(oc);
  }
  return result;
}

double average_precision(const std::vector<ScoredOutcome>& outcomes, std::int64_t total_gt) {
  FSSD_CHECK(total_gt >= 0, "negative ground truth count");
  if (total_gt == 0 || outcomes.empty()) return 0.0;

  auto sorted = outcomes;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ScoredOutcome& a, const ScoredOutcome& b) { return a.score > b.score; });

  // one precision/recall point per distinct score level
  std::vector<double> precision, recall;
  std::int64_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < sorted.size()) {
    size_t j = i;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) {
      (sorted[j].is_true_positive ? tp : fp) += 1;
      ++j;
    }
    FSSD_CHECK(tp <= total_gt, "more true positives than ground truths");
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
    i = j;
  }

  // precision envelope: best precision at this recall or beyond
  for (size_t k = precision.size() - 1; k > 0; --k) {
    precision[k - 1] = std::max(precision[k - 1], precision[k]);
  }
  double ap = 0, prev_recall = 0;
  for (size_t k = 0; k < precision.size(); ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

double equal_error_rate(const std::vector<double>& scores_pos,
                        const std::vector<double>& scores_neg) {
  FSSD_CHECK(!scores_pos.empty(), "no positive scores");
  FSSD_CHECK(!scores_neg.empty(), "no negative scores");

  std::vector<double> levels = scores_pos;
  levels.insert(levels.end(), scores_neg.begin(), scores_neg.end());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());

  const double np = static_cast<double>(scores_pos.size());
  const double nn = static_cast<double>(scores_neg.size());
  // operating point after raising the threshold just past level s:
  // accepted means score >= t, so score > s survives
  auto far_at = [&](double s) {
    std::int64_t n = 0;
    for (double v : scores_neg) n += v > s ? 1 : 0;
    return static_cast<double>(n) / nn;
  };
  auto frr_at = [&](double s) {
    std::int64_t n = 0;
    for (double v : scores_pos) n += v <= s ? 1 : 0;
    return static_cast<double>(n) / np;
  };

  // walk operating points from accept-all (far 1, frr 0) upward until the
  // curves cross, then interpolate along the connecting segment
  double prev_far = 1.0, prev_frr = 0.0;
  for (double s : levels) {
    double far = far_at(s), frr = frr_at(s);
    double d_prev = prev_far - prev_frr;
    double d_cur = far - frr;
    if (d_cur <= 0) {
      double alpha = d_prev / (d_prev - d_cur);
      return prev_far + alpha * (far - prev_far);
    }
    prev_far = far;
    prev_frr = frr;
  }
  FSSD_FAIL("no operating point crossing found");
}

void TaskCounts::accumulate(const TaskCounts& other) {
  if (correct.empty()) correct.assign(other.correct.size(), 0);
  FSSD_CHECK(correct.size() == other.correct.size(), "attribute count mismatch");
  for (size_t a = 0; a < correct.size(); ++a) correct[a] += other.correct[a];
  total_faces += other.total_faces;
}

double TaskCounts::accuracy() const {
  FSSD_CHECK(!correct.empty(), "no attributes counted");
  FSSD_CHECK(total_faces > 0, "no ground truth faces counted");
  double sum = 0;
  for (std::int64_t c : correct) {
    sum += static_cast<double>(c) / static_cast<double>(total_faces);
  }
  return sum / static_cast<double>(correct.size());
}

TaskCounts task_counts(const std::vector<ScoredBox>& dets,
                       const std::vector<std::vector<int>>& det_bits,
                       const std::vector<Box>& gts,
                       const std::vector<std::uint64_t>& gt_bits, int num_attributes,
                       double iou_min) {
  FSSD_CHECK(num_attributes >= 1 && num_attributes <= 64, "bad attribute count");
  FSSD_CHECK(det_bits.size() == dets.size(), "detection bit rows do not match detections");
  FSSD_CHECK(gt_bits.size() == gts.size(), "ground truth bits do not match boxes");
  for (const auto& bits : det_bits) {
    FSSD_CHECK(static_cast<int>(bits.size()) == num_attributes,
               "detection bit row has wrong width");
  }

  auto matching = match_detections_to_gt(dets, gts, iou_min);
  TaskCounts counts;
  counts.correct.assign(static_cast<size_t>(num_attributes), 0);
  counts.total_faces = static_cast<std::int64_t>(gts.size());
  for (size_t g = 0; g < gts.size(); ++g) {
    int di = matching.det_of_gt[g];
    for (int a = 0; a < num_attributes; ++a) {
      // a missed face counts as an all-zero prediction
      int predicted = di < 0 ? 0 : det_bits[static_cast<size_t>(di)][static_cast<size_t>(a)];
      int truth = static_cast<int>((gt_bits[g] >> a) & 1u);
      counts.correct[static_cast<size_t>(a)] += predicted == truth ? 1 : 0;
    }
  }
  return counts;
}

VaReport va_metrics(const std::vector<double>& pred, const std::vector<double>& gt) {
  FSSD_CHECK(pred.size() == gt.size(), "prediction/target length mismatch");
  FSSD_CHECK(pred.size() >= 2, "need at least two pairs");
  const auto n = static_cast<double>(pred.size());

  double se = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    double d = pred[i] - gt[i];
    se += d * d;
  }

  double mp = 0, mg = 0;
  bool const_p = true, const_g = true;
  for (size_t i = 0; i < pred.size(); ++i) {
    mp += pred[i];
    mg += gt[i];
    const_p = const_p && pred[i] == pred[0];
    const_g = const_g && gt[i] == gt[0];
  }
  mp /= n;
  mg /= n;
  double vp = 0, vg = 0, cov = 0;
  std::int64_t agree = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    double dp = pred[i] - mp, dg = gt[i] - mg;
    vp += dp * dp;
    vg += dg * dg;
    cov += dp * dg;
    bool sp = pred[i] >= 0, sg = gt[i] >= 0;
    agree += sp == sg ? 1 : 0;
  }
  vp /= n;
  vg /= n;
  cov /= n;
  // a constant side has exactly zero variance; the mean-subtracted sums can
  // round away from it
  if (const_p) vp = 0;
  if (const_g) vg = 0;
  if (const_p || const_g) cov = 0;

  VaReport r;
  r.rmse = std::sqrt(se / n);
  // a constant side has no correlation; the concordance form only breaks
  // down when both sides are constant and equal
  r.corr = vp > 0 && vg > 0 ? cov / std::sqrt(vp * vg)
                            : std::numeric_limits<double>::quiet_NaN();
  r.sagr = static_cast<double>(agree) / n;
  double dm = mp - mg;
  double denom = vp + vg + dm * dm;
  r.ccc = denom > 0 ? 2 * cov / denom : std::numeric_limits<double>::quiet_NaN();
  return r;
}

std::string metrics_text(const std::vector<std::pair<std::string, double>>& rows) {
  std::string out;
  for (const auto& [key, value] : rows) {
    out += key;
    out += ": ";
    out += format_double(value);
    out += '\n';
  }
  return out;
}

std::string metrics_csv(const std::vector<std::pair<std::string, double>>& rows) {
  std::string header, values;
  for (size_t i = 0; i < rows.size(); ++i) {
    if (i > 0) {
      header += ',';
      values += ',';
    }
    header += rows[i].first;
    values += format_double(rows[i].second);
  }
  return header + "\n" + values + "\n";
}

}  // namespace fssd
