#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fssd/anchors.hpp"

namespace fssd {

// One detection reduced to what evaluation needs.
struct ScoredBox {
  Box box;
  double score = 0;
};

// A scored detection with its matching verdict against the ground truth.
struct ScoredOutcome {
  double score = 0;
  bool is_true_positive = false;
};

struct MatchResult {
  std::vector<ScoredOutcome> outcomes;  // in greedy (descending score) order
  std::vector<int> det_of_gt;           // detection index per ground truth, -1 if missed
};

// Greedy evaluation matching: detections in descending score order each try
// to claim the unmatched ground truth with the highest IoU; a claim needs
// IoU >= iou_min and each ground truth is claimable once. Score ties break
// toward the earlier detection, IoU ties toward the lower ground truth index.
MatchResult match_detections_to_gt(const std::vector<ScoredBox>& dets,
                                   const std::vector<Box>& gts, double iou_min = 0.5);

// Area under the precision envelope with all-points interpolation.
// Detections with equal scores enter together, so the result is the same
// as sweeping a score threshold. total_gt of zero gives 0.
double average_precision(const std::vector<ScoredOutcome>& outcomes, std::int64_t total_gt);

// Rate at the crossing of false-accept (negative scored >= t) and
// false-reject (positive scored < t) curves, linearly interpolated
// between adjacent operating points. Errors on an empty side.
double equal_error_rate(const std::vector<double>& scores_pos,
                        const std::vector<double>& scores_neg);

// Per-attribute correct counts for binary task evaluation. A ground truth
// matched to a detection scores its predicted bits; an unmatched one is
// treated as an all-zero prediction.
struct TaskCounts {
  std::vector<std::int64_t> correct;  // one slot per attribute
  std::int64_t total_faces = 0;

  void accumulate(const TaskCounts& other);
  // mean over the per-attribute accuracies
  double accuracy() const;
};

TaskCounts task_counts(const std::vector<ScoredBox>& dets,
                       const std::vector<std::vector<int>>& det_bits,
                       const std::vector<Box>& gts,
                       const std::vector<std::uint64_t>& gt_bits, int num_attributes,
                       double iou_min = 0.5);

struct VaReport {
  double rmse = 0;
  double corr = 0;  // NaN when either side is constant
  double sagr = 0;
  double ccc = 0;   // NaN only when both sides are constant and equal
};

// rmse over pairs; Pearson correlation (NaN on zero variance); sign
// agreement with sign(0) counted positive; concordance via population
// moments: 2 cov / (var_p + var_g + (mean_p - mean_g)^2).
VaReport va_metrics(const std::vector<double>& pred, const std::vector<double>& gt);

// Report serialization: "key: value" lines in the given order, and a CSV
// with a header row and a single value row.
std::string metrics_text(const std::vector<std::pair<std::string, double>>& rows);
std::string metrics_csv(const std::vector<std::pair<std::string, double>>& rows);

}  // namespace fssd
