#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <vector>

#include "fssd/anchors.hpp"
#include "fssd/rng.hpp"
#include "testing.hpp"

using namespace fssd;

namespace {

// Independent assignment oracle: literal two-pass transcription kept free of
// the production code's indexing shortcuts.
MatchAssignment match_oracle(const std::vector<Box>& gts, const DefaultBoxGrid& grid,
                             double threshold) {
  std::vector<Box> boxes;
  for (int s = 0; s < grid.num_scales(); ++s) {
    for (int r = 0; r < grid.sizes[static_cast<size_t>(s)]; ++r) {
      for (int c = 0; c < grid.sizes[static_cast<size_t>(s)]; ++c) {
        boxes.push_back(grid.box_at(s, r, c));
      }
    }
  }
  MatchAssignment out;
  out.positive.assign(boxes.size(), 0);
  out.gt_index.assign(boxes.size(), -1);
  out.offsets.assign(boxes.size(), {0, 0, 0, 0});
  for (size_t g = 0; g < gts.size(); ++g) {
    double best = -1.0;
    std::int64_t arg = -1;
    for (size_t i = 0; i < boxes.size(); ++i) {
      if (out.positive[i]) continue;
      double v = iou(gts[g], boxes[i]);
      if (v > best) {
        best = v;
        arg = static_cast<std::int64_t>(i);
      }
    }
    out.positive[static_cast<size_t>(arg)] = 1;
    out.gt_index[static_cast<size_t>(arg)] = static_cast<int>(g);
  }
  for (size_t i = 0; i < boxes.size(); ++i) {
    if (out.positive[i]) continue;
    double best = -1.0;
    int arg = -1;
    for (size_t g = 0; g < gts.size(); ++g) {
      double v = iou(gts[g], boxes[i]);
      if (v > best) {
        best = v;
        arg = static_cast<int>(g);
      }
    }
    if (arg >= 0 && best >= threshold) {
      out.positive[i] = 1;
      out.gt_index[i] = arg;
    }
  }
  for (size_t i = 0; i < boxes.size(); ++i) {
    if (out.positive[i]) {
      out.offsets[i] = encode_box(gts[static_cast<size_t>(out.gt_index[i])], boxes[i]);
      ++out.num_positive;
    }
  }
  return out;
}

DefaultBoxGrid small_grid() {
  DefaultBoxGrid g;
  g.sizes = {7, 3, 1};
  g.sides = {0.15, 0.45, 0.8};
  g.validate();
  return g;
}

}  // namespace

TEST_CASE("iou on hand-checked boxes") {
  Box a{0.5, 0.5, 1.0, 1.0};
  CHECK(iou(a, a) == 1.0);
  Box b{1.0, 0.5, 1.0, 1.0};
  CHECK(testing::near(iou(a, b), 1.0 / 3.0, 1e-12));
  Box far{5.0, 5.0, 1.0, 1.0};
  CHECK(iou(a, far) == 0.0);
  Box degenerate{0.5, 0.5, 0.0, 1.0};
  CHECK(iou(a, degenerate) == 0.0);
  Box inside{0.5, 0.5, 0.5, 0.5};
  CHECK(testing::near(iou(a, inside), 0.25, 1e-12));
}

TEST_CASE("encode of a box onto itself is zero") {
  Box d{0.3, 0.6, 0.2, 0.1};
  auto off = encode_box(d, d);
  for (double v : off) CHECK(testing::near(v, 0.0, 1e-15));
}

TEST_CASE("center offsets divide by the matching default box side") {
  Box d{0.5, 0.5, 0.2, 0.4};
  Box g{0.54, 0.58, 0.2, 0.4};
  auto off = encode_box(g, d);
  CHECK(testing::near(off[0], 0.2, 1e-12));  // dx scaled by width
  CHECK(testing::near(off[1], 0.2, 1e-12));  // dy scaled by height
  CHECK(testing::near(off[2], 0.0, 1e-12));
  CHECK(testing::near(off[3], 0.0, 1e-12));
}

TEST_CASE("decode inverts encode") {
  Rng rng(77);
  for (int i = 0; i < 200; ++i) {
    Box d{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.05, 0.5),
          rng.uniform(0.05, 0.5)};
    Box g{rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.05, 0.5),
          rng.uniform(0.05, 0.5)};
    Box back = decode_box(encode_box(g, d), d);
    CHECK(testing::near(back.cx, g.cx, 1e-9));
    CHECK(testing::near(back.cy, g.cy, 1e-9));
    CHECK(testing::near(back.w, g.w, 1e-9));
    CHECK(testing::near(back.h, g.h, 1e-9));
  }
  // wild offsets stay finite thanks to the exponent clamp
  Box d{0.5, 0.5, 0.2, 0.2};
  Box wild = decode_box({0, 0, 1e6, -1e6}, d);
  CHECK(std::isfinite(wild.w));
  CHECK(wild.h > 0);
}

TEST_CASE("standard grid geometry") {
  auto grid = DefaultBoxGrid::standard();
  CHECK(grid.num_scales() == 6);
  CHECK(grid.sizes == std::vector<int>{37, 18, 9, 5, 3, 1});
  CHECK(grid.total_locations() == 1369 + 324 + 81 + 25 + 9 + 1);
  CHECK(grid.flat_index(0, 0, 0) == 0);
  CHECK(grid.flat_index(0, 0, 1) == 1);
  CHECK(grid.flat_index(1, 0, 0) == 1369);
  CHECK(grid.flat_index(5, 0, 0) == 1808);
  Box b = grid.box_at(0, 0, 0);
  CHECK(testing::near(b.cx, 0.5 / 37, 1e-15));
  CHECK(testing::near(b.w, 0.07, 1e-15));
  Box last = grid.box_at(5, 0, 0);
  CHECK(last.cx == 0.5);
  CHECK(last.w == 0.87);

  DefaultBoxGrid bad = grid;
  bad.sides[2] = bad.sides[1];
  CHECK_THROWS_AS(bad.validate(), Error);
  DefaultBoxGrid bad2 = grid;
  bad2.sizes[1] = 37;
  CHECK_THROWS_AS(bad2.validate(), Error);
}

TEST_CASE("every ground truth owns a positive even below threshold") {
  auto grid = small_grid();
  // a box far smaller than any default box matches nothing at 0.35
  std::vector<Box> gts = {{0.31, 0.42, 0.02, 0.02}};
  auto m = match(gts, grid, 0.35);
  CHECK(m.num_positive == 1);
  std::int64_t pos = -1;
  for (size_t i = 0; i < m.positive.size(); ++i) {
    if (m.positive[i]) pos = static_cast<std::int64_t>(i);
  }
  CHECK(m.gt_index[static_cast<size_t>(pos)] == 0);
  // forced location is the nearest scale-0 cell (best IoU among all boxes)
  CHECK(pos == grid.flat_index(0, 2, 2));
}

TEST_CASE("forced locations are exclusive across ground truths") {
  auto grid = small_grid();
  std::vector<Box> gts = {{0.5, 0.5, 0.44, 0.44}, {0.5, 0.5, 0.44, 0.44}};
  auto m = match(gts, grid, 0.99);  // threshold high enough that only forcing fires
  CHECK(m.num_positive == 2);
  std::vector<std::int64_t> where;
  for (size_t i = 0; i < m.positive.size(); ++i) {
    if (m.positive[i]) where.push_back(static_cast<std::int64_t>(i));
  }
  CHECK(where.size() == 2);
  CHECK(where[0] != where[1]);
  CHECK(m.gt_index[static_cast<size_t>(where[0])] != m.gt_index[static_cast<size_t>(where[1])]);
}

TEST_CASE("matching equals the oracle on random scenes") {
  auto grid = small_grid();
  Rng rng(5150);
  for (int trial = 0; trial < 300; ++trial) {
    int n = static_cast<int>(rng.uniform_int(1, 4));
    std::vector<Box> gts;
    for (int i = 0; i < n; ++i) {
      gts.push_back({rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.05, 0.6),
                     rng.uniform(0.05, 0.6)});
    }
    double th = rng.uniform(0.2, 0.6);
    auto got = match(gts, grid, th);
    auto want = match_oracle(gts, grid, th);
    CHECK(got.num_positive == want.num_positive);
    CHECK(got.positive == want.positive);
    CHECK(got.gt_index == want.gt_index);
    for (size_t i = 0; i < got.offsets.size(); ++i) {
      for (int k = 0; k < 4; ++k) CHECK(got.offsets[i][k] == want.offsets[i][k]);
    }
    CHECK(got.num_positive >= n);
  }
}

TEST_CASE("match validates inputs") {
  auto grid = small_grid();
  std::vector<Box> gts = {{0.5, 0.5, 0.3, 0.3}};
  CHECK_THROWS_AS(match(gts, grid, 0.0), Error);
  CHECK_THROWS_AS(match(gts, grid, 1.0), Error);

  DefaultBoxGrid tiny;
  tiny.sizes = {1};
  tiny.sides = {0.8};
  std::vector<Box> two = {{0.5, 0.5, 0.8, 0.8}, {0.5, 0.5, 0.8, 0.8}};
  CHECK_THROWS_AS(match(two, tiny, 0.35), Error);

  auto empty = match({}, grid, 0.35);
  CHECK(empty.num_positive == 0);
}
