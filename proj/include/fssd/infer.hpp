#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "fssd/anchors.hpp"
#include "fssd/model.hpp"
#include "fssd/text.hpp"

namespace fssd {

struct InferConfig {
  double th_face = 0.1;     // face confidence floor for candidates
  double nms_overlap = 0.35;
  double th_task = 0.5;     // bit threshold for binary task scores

  void validate() const {
    FSSD_CHECK(th_face > 0 && th_face < 1, "th_face out of (0,1)");
    FSSD_CHECK(nms_overlap > 0 && nms_overlap < 1, "nms_overlap out of (0,1)");
    FSSD_CHECK(th_task > 0 && th_task < 1, "th_task out of (0,1)");
  }
};

struct Detection {
  Box box;                          // decoded, clamped to [0,1]
  double face_score = 0;
  std::vector<double> task_scores;  // sigmoid scores or raw regression values
  std::vector<int> task_bits;       // filled for binary heads only
  int scale = 0;
  int row = 0;
  int col = 0;
};

// Candidate extraction: one detection per location whose face plane value
// exceeds th_face, with the box decoded against that location's default box
// and task scores read from the same location.
template <typename T>
std::vector<Detection> candidates(const std::vector<HeatmapVolume<T>>& vols,
                                  const DefaultBoxGrid& grid, double th_face) {
  FSSD_CHECK(static_cast<int>(vols.size()) == grid.num_scales(),
             "expected ", grid.num_scales(), " volumes, got ", vols.size());
  std::vector<Detection> out;
  for (int s = 0; s < grid.num_scales(); ++s) {
    const auto& v = vols[static_cast<size_t>(s)];
    const int side = grid.sizes[static_cast<size_t>(s)];
    Shape want_face = {side, side};
    FSSD_CHECK(v.face.shape() == want_face, "face plane shape mismatch at scale ", s);
    Shape want_off = {4, side, side};
    FSSD_CHECK(v.offsets.shape() == want_off, "offset plane shape mismatch at scale ", s);
    FSSD_CHECK(v.tasks.rank() == 3 && v.tasks.dim(1) == side && v.tasks.dim(2) == side,
               "task plane shape mismatch at scale ", s);
    const int num_tasks = v.tasks.dim(0);
    auto face = v.face.values();
    auto off = v.offsets.values();
    auto tasks = v.tasks.values();
    const auto plane = static_cast<std::int64_t>(side) * side;
    for (int r = 0; r < side; ++r) {
      for (int c = 0; c < side; ++c) {
        const std::int64_t at = static_cast<std::int64_t>(r) * side + c;
        const double score = static_cast<double>(face[static_cast<size_t>(at)]);
        if (score <= th_face) continue;
        Detection d;
        d.face_score = score;
        d.scale = s;
        d.row = r;
        d.col = c;
        std::array<double, 4> enc;
        for (int k = 0; k < 4; ++k) {
          enc[static_cast<size_t>(k)] = static_cast<double>(off[static_cast<size_t>(k * plane + at)]);
        }
        Box raw = decode_box(enc, grid.box_at(s, r, c));
        double lo_x = std::clamp(raw.cx - raw.w / 2, 0.0, 1.0);
        double hi_x = std::clamp(raw.cx + raw.w / 2, 0.0, 1.0);
        double lo_y = std::clamp(raw.cy - raw.h / 2, 0.0, 1.0);
        double hi_y = std::clamp(raw.cy + raw.h / 2, 0.0, 1.0);
        d.box = {(lo_x + hi_x) / 2, (lo_y + hi_y) / 2, hi_x - lo_x, hi_y - lo_y};
        d.task_scores.resize(static_cast<size_t>(num_tasks));
        for (int k = 0; k < num_tasks; ++k) {
          d.task_scores[static_cast<size_t>(k)] =
              static_cast<double>(tasks[static_cast<size_t>(k * plane + at)]);
        }
        out.push_back(std::move(d));
      }
    }
  }
  return out;
}

// Greedy NMS, global across scales: repeatedly keep the highest-scoring
// candidate and discard the rest with IoU >= overlap against it. Ties on
// the score break toward the smaller (scale, row, col).
inline std::vector<Detection> nms(std::vector<Detection> cands, double overlap) {
  FSSD_CHECK(overlap > 0 && overlap < 1, "nms overlap out of (0,1)");
  std::stable_sort(cands.begin(), cands.end(), [](const Detection& a, const Detection& b) {
    if (a.face_score != b.face_score) return a.face_score > b.face_score;
    return std::tie(a.scale, a.row, a.col) < std::tie(b.scale, b.row, b.col);
  });
  std::vector<Detection> kept;
  std::vector<char> dead(cands.size(), 0);
  for (size_t i = 0; i < cands.size(); ++i) {
    if (dead[i]) continue;
    kept.push_back(cands[i]);
    for (size_t j = i + 1; j < cands.size(); ++j) {
      if (!dead[j] && iou(cands[i].box, cands[j].box) >= overlap) dead[j] = 1;
    }
  }
  return kept;
}

// Threshold, decode, NMS, then task readout on already-computed volumes.
// Binary heads get task_bits thresholded at th_task; regression heads
// report raw values only.
template <typename T>
std::vector<Detection> detections_from_volumes(const std::vector<HeatmapVolume<T>>& vols,
                                               const DefaultBoxGrid& grid, const InferConfig& cfg,
                                               TaskActivation activation) {
  cfg.validate();
  auto dets = nms(candidates(vols, grid, cfg.th_face), cfg.nms_overlap);
  if (activation == TaskActivation::sigmoid) {
    for (auto& d : dets) {
      d.task_bits.resize(d.task_scores.size());
      for (size_t k = 0; k < d.task_scores.size(); ++k) {
        d.task_bits[k] = d.task_scores[k] >= cfg.th_task ? 1 : 0;
      }
    }
  }
  return dets;
}

// Full pipeline on a normalized [3,300,300] image.
template <typename T>
std::vector<Detection> detect(FaceSSDModel<T>& model, const Tensor<T>& image,
                              const DefaultBoxGrid& grid, const InferConfig& cfg) {
  Tape<T> tape;
  auto vols = model.forward(tape, image);
  return detections_from_volumes(vols, grid, cfg, model.head().activation());
}

// One detection per line: id, box, face score, then task scores.
inline std::string detection_line(const std::string& image_id, const Detection& d) {
  std::string line = image_id;
  for (double v : {d.box.cx, d.box.cy, d.box.w, d.box.h, d.face_score}) {
    line += ' ';
    line += format_double(v);
  }
  for (double v : d.task_scores) {
    line += ' ';
    line += format_double(v);
  }
  return line;
}

namespace detail {

inline unsigned char sigmoid_byte(double v) {
  double b = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
  return static_cast<unsigned char>(std::clamp(b, 0.0, 255.0));
}

inline unsigned char linear_byte(double v) {
  double b = std::floor((std::clamp(v, -1.0, 1.0) + 1.0) * 127.5);
  return static_cast<unsigned char>(std::clamp(b, 0.0, 255.0));
}

template <typename T>
void write_pgm(const std::string& path, const T* data, int side, bool is_sigmoid) {
  std::ofstream os(path, std::ios::binary);
  FSSD_CHECK(os.good(), "cannot open ", path, " for writing");
  os << "P5\n" << side << " " << side << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(side));
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      double v = static_cast<double>(data[static_cast<std::int64_t>(y) * side + x]);
      row[static_cast<size_t>(x)] = is_sigmoid ? sigmoid_byte(v) : linear_byte(v);
    }
    os.write(reinterpret_cast<const char*>(row.data()), side);
  }
  FSSD_CHECK(os.good(), "write failed for ", path);
}

}  // namespace detail

// One PGM per plane per scale. Sigmoid planes map [0,1] to [0,255] with
// round-half-up; linear planes map [-1,1] to [0,255] with floor, so 0 lands
// on 127. Out-of-range values clamp.
template <typename T>
std::vector<std::string> dump_heatmaps(const std::vector<HeatmapVolume<T>>& vols,
                                       TaskActivation task_activation,
                                       const std::string& prefix) {
  std::vector<std::string> written;
  for (const auto& v : vols) {
    FSSD_CHECK(v.face.rank() == 2 && v.offsets.rank() == 3 && v.tasks.rank() == 3,
               "heatmap volume has unexpected ranks");
    const int side = v.face.dim(0);
    const auto plane = static_cast<std::int64_t>(side) * side;
    const std::string base = prefix + "_s" + std::to_string(v.scale);

    written.push_back(base + "_face.pgm");
    detail::write_pgm(written.back(), v.face.values().data(), side, true);
    for (int k = 0; k < 4; ++k) {
      written.push_back(base + "_off" + std::to_string(k) + ".pgm");
      detail::write_pgm(written.back(), v.offsets.values().data() + k * plane, side, false);
    }
    for (int k = 0; k < v.tasks.dim(0); ++k) {
      written.push_back(base + "_task" + std::to_string(k) + ".pgm");
      detail::write_pgm(written.back(), v.tasks.values().data() + k * plane, side,
                        task_activation == TaskActivation::sigmoid);
    }
  }
  return written;
}

}  // namespace fssd
