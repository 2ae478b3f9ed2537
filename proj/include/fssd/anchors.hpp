#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fssd/check.hpp"

namespace fssd {

// Boxes use normalized image coordinates: center and sides as fractions of
// the image, stored (cx, cy, w, h).
struct Box {
  double cx = 0, cy = 0, w = 0, h = 0;
};

double iou(const Box& a, const Box& b);

// Regression targets of a ground-truth box g against a default box d:
// ((g_cx - d_cx)/d_w, (g_cy - d_cy)/d_h, log(g_w/d_w), log(g_h/d_h)).
std::array<double, 4> encode_box(const Box& g, const Box& d);
// Inverse map; exponent arguments are clamped to [-20, 20] so far-off
// regression outputs cannot overflow.
Box decode_box(const std::array<double, 4>& offsets, const Box& d);

// One square default box per heatmap location. Location (scale s, row r,
// col c) has center ((c+0.5)/size_s, (r+0.5)/size_s) and side side_s.
struct DefaultBoxGrid {
  std::vector<int> sizes;      // heatmap sizes, strictly decreasing
  std::vector<double> sides;   // default box sides, strictly increasing

  static DefaultBoxGrid standard();

  void validate() const;
  int num_scales() const { return static_cast<int>(sizes.size()); }
  std::int64_t locations_at(int scale) const {
    return static_cast<std::int64_t>(sizes[static_cast<size_t>(scale)]) *
           sizes[static_cast<size_t>(scale)];
  }
  std::int64_t total_locations() const;
  // Flat location ids run scale-major, then row-major within a scale; all
  // location-ordered data (matches, losses, tie breaks) uses this order.
  std::int64_t flat_index(int scale, int row, int col) const;
  Box box_at(int scale, int row, int col) const;
};

struct MatchAssignment {
  std::vector<std::uint8_t> positive;           // per flat location
  std::vector<int> gt_index;                    // -1 where negative
  std::vector<std::array<double, 4>> offsets;   // encoded targets at positives
  int num_positive = 0;
};

// Two-stage assignment: first every ground truth claims its best-IoU free
// location (in ground-truth order, regardless of the threshold), then each
// remaining location joins its highest-IoU ground truth if that IoU reaches
// the threshold. Location ties break toward the lower flat index, ground
// truth ties toward the lower index.
MatchAssignment match(const std::vector<Box>& gts, const DefaultBoxGrid& grid,
                      double iou_threshold);

}  // namespace fssd
