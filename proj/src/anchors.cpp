#include "fssd/anchors.hpp"

#include <algorithm>
#include <cmath>

namespace fssd {

double iou(const Box& a, const Box& b) {
  if (a.w <= 0 || a.h <= 0 || b.w <= 0 || b.h <= 0) return 0.0;
  double ax1 = a.cx - a.w / 2, ax2 = a.cx + a.w / 2;
  double ay1 = a.cy - a.h / 2, ay2 = a.cy + a.h / 2;
  double bx1 = b.cx - b.w / 2, bx2 = b.cx + b.w / 2;
  double by1 = b.cy - b.h / 2, by2 = b.cy + b.h / 2;
  double iw = std::min(ax2, bx2) - std::max(ax1, bx1);
  double ih = std::min(ay2, by2) - std::max(ay1, by1);
  if (iw <= 0 || ih <= 0) return 0.0;
  double inter = iw * ih;
  double uni = a.w * a.h + b.w * b.h - inter;
  return inter / uni;
}

std::array<double, 4> encode_box(const Box& g, const Box& d) {
  FSSD_CHECK(d.w > 0 && d.h > 0, "default box must have positive sides");
  FSSD_CHECK(g.w > 0 && g.h > 0, "cannot encode a degenerate ground-truth box");
  return {(g.cx - d.cx) / d.w, (g.cy - d.cy) / d.h, std::log(g.w / d.w), std::log(g.h / d.h)};
}

Box decode_box(const std::array<double, 4>& offsets, const Box& d) {
  FSSD_CHECK(d.w > 0 && d.h > 0, "default box must have positive sides");
  auto clamp_exp = [](double v) { return std::clamp(v, -20.0, 20.0); };
  Box g;
  g.cx = offsets[0] * d.w + d.cx;
  g.cy = offsets[1] * d.h + d.cy;
  g.w = std::exp(clamp_exp(offsets[2])) * d.w;
  g.h = std::exp(clamp_exp(offsets[3])) * d.h;
  return g;
}

DefaultBoxGrid DefaultBoxGrid::standard() {
  DefaultBoxGrid grid;
  grid.sizes = {37, 18, 9, 5, 3, 1};
  grid.sides = {0.07, 0.15, 0.33, 0.51, 0.69, 0.87};
  grid.validate();
  return grid;
}

void DefaultBoxGrid::validate() const {
  FSSD_CHECK(!sizes.empty(), "default box grid has no scales");
  FSSD_CHECK(sizes.size() == sides.size(), "grid has ", sizes.size(), " sizes but ",
             sides.size(), " box sides");
  for (size_t i = 0; i < sizes.size(); ++i) {
    FSSD_CHECK(sizes[i] > 0, "heatmap size must be positive");
    FSSD_CHECK(sides[i] > 0 && sides[i] <= 1.0, "box side must lie in (0,1], got ", sides[i]);
    if (i > 0) {
      FSSD_CHECK(sizes[i] < sizes[i - 1], "heatmap sizes must strictly decrease");
      FSSD_CHECK(sides[i] > sides[i - 1], "box sides must strictly increase");
    }
  }
}

std::int64_t DefaultBoxGrid::total_locations() const {
  std::int64_t n = 0;
  for (int s = 0; s < num_scales(); ++s) n += locations_at(s);
  return n;
}

std::int64_t DefaultBoxGrid::flat_index(int scale, int row, int col) const {
  FSSD_CHECK(scale >= 0 && scale < num_scales(), "scale ", scale, " out of range");
  int size = sizes[static_cast<size_t>(scale)];
  FSSD_CHECK(row >= 0 && row < size && col >= 0 && col < size, "location (", row, ",", col,
             ") outside ", size, "x", size, " heatmap");
  std::int64_t base = 0;
  for (int s = 0; s < scale; ++s) base += locations_at(s);
  return base + static_cast<std::int64_t>(row) * size + col;
}

Box DefaultBoxGrid::box_at(int scale, int row, int col) const {
  FSSD_CHECK(scale >= 0 && scale < num_scales(), "scale ", scale, " out of range");
  int size = sizes[static_cast<size_t>(scale)];
  FSSD_CHECK(row >= 0 && row < size && col >= 0 && col < size, "location (", row, ",", col,
             ") outside ", size, "x", size, " heatmap");
  Box b;
  b.cx = (col + 0.5) / size;
  b.cy = (row + 0.5) / size;
  b.w = sides[static_cast<size_t>(scale)];
  b.h = sides[static_cast<size_t>(scale)];
  return b;
}

MatchAssignment match(const std::vector<Box>& gts, const DefaultBoxGrid& grid,
                      double iou_threshold) {
  grid.validate();
  FSSD_CHECK(iou_threshold > 0 && iou_threshold < 1, "match threshold must lie in (0,1), got ",
             iou_threshold);
  const std::int64_t total = grid.total_locations();
  MatchAssignment out;
  out.positive.assign(static_cast<size_t>(total), 0);
  out.gt_index.assign(static_cast<size_t>(total), -1);
  out.offsets.assign(static_cast<size_t>(total), {0, 0, 0, 0});
  if (gts.empty()) return out;

  std::vector<Box> boxes(static_cast<size_t>(total));
  std::int64_t loc = 0;
  for (int s = 0; s < grid.num_scales(); ++s) {
    int size = grid.sizes[static_cast<size_t>(s)];
    for (int r = 0; r < size; ++r)
      for (int c = 0; c < size; ++c) boxes[static_cast<size_t>(loc++)] = grid.box_at(s, r, c);
  }

  // IoU of every (gt, location) pair; at the sizes in play this stays small.
  std::vector<std::vector<double>> overlap(gts.size());
  for (size_t g = 0; g < gts.size(); ++g) {
    overlap[g].resize(static_cast<size_t>(total));
    for (std::int64_t i = 0; i < total; ++i) {
      overlap[g][static_cast<size_t>(i)] = iou(gts[g], boxes[static_cast<size_t>(i)]);
    }
  }

  // Stage one: each ground truth claims its best free location, so every
  // face owns at least one positive even below the threshold.
  for (size_t g = 0; g < gts.size(); ++g) {
    std::int64_t best = -1;
    double best_iou = -1.0;
    for (std::int64_t i = 0; i < total; ++i) {
      if (out.positive[static_cast<size_t>(i)]) continue;
      double v = overlap[g][static_cast<size_t>(i)];
      if (v > best_iou) {
        best_iou = v;
        best = i;
      }
    }
    FSSD_CHECK(best >= 0, "more ground truths than grid locations");
    out.positive[static_cast<size_t>(best)] = 1;
    out.gt_index[static_cast<size_t>(best)] = static_cast<int>(g);
  }

  // Stage two: remaining locations join their best ground truth when the
  // overlap reaches the threshold.
  for (std::int64_t i = 0; i < total; ++i) {
    if (out.positive[static_cast<size_t>(i)]) continue;
    int best_g = -1;
    double best_iou = -1.0;
    for (size_t g = 0; g < gts.size(); ++g) {
      double v = overlap[g][static_cast<size_t>(i)];
      if (v > best_iou) {
        best_iou = v;
        best_g = static_cast<int>(g);
      }
    }
    if (best_iou >= iou_threshold) {
      out.positive[static_cast<size_t>(i)] = 1;
      out.gt_index[static_cast<size_t>(i)] = best_g;
    }
  }

  for (std::int64_t i = 0; i < total; ++i) {
    if (!out.positive[static_cast<size_t>(i)]) continue;
    out.offsets[static_cast<size_t>(i)] =
        encode_box(gts[static_cast<size_t>(out.gt_index[static_cast<size_t>(i)])],
                   boxes[static_cast<size_t>(i)]);
    ++out.num_positive;
  }
  return out;
}

}  // namespace fssd
