#pragma once

#include <array>
#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fssd/nn_ops.hpp"
#include "fssd/rng.hpp"
#include "fssd/tensor.hpp"
#include "fssd/text.hpp"

namespace fssd {

enum class TaskKind { binary, multi_binary, regression };
enum class TaskActivation { sigmoid, linear };

// The analysis head: how many task planes each scale outputs and how the
// final conv is activated. Binary heads read through a sigmoid, regression
// heads stay linear.
struct HeadConfig {
  int num_task_channels = 1;
  TaskKind kind = TaskKind::binary;

  static HeadConfig smile() { return {1, TaskKind::binary}; }
  static HeadConfig attributes(int n) { return {n, TaskKind::multi_binary}; }
  static HeadConfig valence_arousal() { return {2, TaskKind::regression}; }

  TaskActivation activation() const {
    return kind == TaskKind::regression ? TaskActivation::linear : TaskActivation::sigmoid;
  }

  void validate() const {
    FSSD_CHECK(num_task_channels >= 1, "head needs at least one task channel");
    if (kind == TaskKind::binary) {
      FSSD_CHECK(num_task_channels == 1, "binary head must have exactly one channel");
    }
    if (kind == TaskKind::regression) {
      FSSD_CHECK(num_task_channels == 2, "regression head carries valence and arousal");
    }
  }
};

inline const char* task_kind_name(TaskKind k) {
  switch (k) {
    case TaskKind::binary: return "binary";
    case TaskKind::multi_binary: return "multi_binary";
    case TaskKind::regression: return "regression";
  }
  return "?";
}

inline TaskKind task_kind_from_name(const std::string& s) {
  if (s == "binary") return TaskKind::binary;
  if (s == "multi_binary") return TaskKind::multi_binary;
  if (s == "regression") return TaskKind::regression;
  FSSD_FAIL("unknown task kind '", s, "'");
}

enum class ModelPart { trunk, detection, analysis };
enum class ForwardMode { full, detection_only, analysis_only };

// One output scale: face confidence heatmap, box offset planes, task planes.
// Depending on the forward mode, face/offsets or tasks may be undefined.
template <typename T>
struct HeatmapVolume {
  int scale = -1;
  Tensor<T> face;     // [H,W], sigmoid
  Tensor<T> offsets;  // [4,H,W], linear, ordered (cx, cy, w, h)
  Tensor<T> tasks;    // [n,H,W], activation per head config
};

template <typename T>
struct ConvGroup {
  std::vector<ConvLayer<T>> convs;
  std::optional<PoolSpec> pool;
};

constexpr int kInputSide = 300;
constexpr int kNumScales = 6;

// The full face network: a shared trunk (groups 1-3), then two structurally
// identical branches (groups 4-10), detection feeding face/box heads and
// analysis feeding task heads, each tapping six scales.
template <typename T>
class FaceSSDModel {
 public:
  FaceSSDModel() = default;

  static FaceSSDModel build(const HeadConfig& head, double channel_scale, std::uint64_t seed) {
    head.validate();
    FSSD_CHECK(channel_scale > 0 && channel_scale <= 1.0,
               "channel scale must lie in (0,1], got ", channel_scale);
    FaceSSDModel m;
    m.head_ = head;
    m.channel_scale_ = channel_scale;
    std::uint64_t counter = 0;
    auto next_seed = [&]() { return derive_seed(seed, counter++); };
    auto ch = [&](int c) {
      int scaled = static_cast<int>(std::ceil(c * channel_scale));
      return scaled < 1 ? 1 : scaled;
    };

    // trunk groups 1-3
    int in_c = 3;
    auto add_group = [&](std::vector<ConvGroup<T>>& dst, std::vector<ConvSpec> specs,
                         std::optional<PoolSpec> pool) {
      ConvGroup<T> g;
      for (const auto& spec : specs) {
        g.convs.push_back(make_conv_layer<T>(in_c, spec, next_seed()));
        in_c = spec.num_kernels;
      }
      g.pool = pool;
      dst.push_back(std::move(g));
    };

    add_group(m.trunk_, {{ch(64), 3, 1, 1}, {ch(64), 3, 1, 1}}, PoolSpec{2, 2, 0});
    add_group(m.trunk_, {{ch(128), 3, 1, 1}, {ch(128), 3, 1, 1}}, PoolSpec{2, 2, 0});
    add_group(m.trunk_, {{ch(256), 3, 1, 1}, {ch(256), 3, 1, 1}, {ch(256), 3, 1, 1}},
              PoolSpec{2, 2, 0});
    const int trunk_out = in_c;

    auto build_branch = [&](std::vector<ConvGroup<T>>& dst) {
      in_c = trunk_out;
      add_group(dst, {{ch(512), 3, 1, 1}, {ch(512), 3, 1, 1}, {ch(512), 3, 1, 1}},
                PoolSpec{2, 2, 0});
      add_group(dst, {{ch(512), 3, 1, 1}, {ch(512), 3, 1, 1}, {ch(512), 3, 1, 1}},
                PoolSpec{3, 1, 1});
      add_group(dst, {{ch(1024), 3, 1, 1}, {ch(1024), 1, 1, 0}}, std::nullopt);
      add_group(dst, {{ch(256), 1, 1, 0}, {ch(512), 3, 2, 1}}, std::nullopt);
      add_group(dst, {{ch(128), 1, 1, 0}, {ch(256), 3, 2, 1}}, std::nullopt);
      add_group(dst, {{ch(128), 1, 1, 0}, {ch(256), 3, 1, 0}}, std::nullopt);
      add_group(dst, {{ch(128), 1, 1, 0}, {ch(256), 3, 1, 0}}, std::nullopt);
    };
    build_branch(m.det_);
    build_branch(m.ana_);

    // head convs per scale; channels at each tap
    std::array<int, kNumScales> tap_c = {ch(512),  ch(1024), ch(512),
                                         ch(256),  ch(256),  ch(256)};
    for (int s = 0; s < kNumScales; ++s) {
      in_c = tap_c[static_cast<size_t>(s)];
      ConvSpec face_spec{1, 3, 1, 1};
      ConvSpec box_spec{4, 3, 1, 1};
      ConvSpec task_spec{head.num_task_channels, 3, 1, 1};
      m.face_heads_.push_back(make_conv_layer<T>(in_c, face_spec, next_seed()));
      m.box_heads_.push_back(make_conv_layer<T>(in_c, box_spec, next_seed()));
      m.task_heads_.push_back(make_conv_layer<T>(in_c, task_spec, next_seed()));
    }
    return m;
  }

  const HeadConfig& head() const { return head_; }
  double channel_scale() const { return channel_scale_; }

  std::vector<HeatmapVolume<T>> forward(Tape<T>& tape, const Tensor<T>& image,
                                        ForwardMode mode = ForwardMode::full) {
    FSSD_CHECK(image.rank() == 3 && image.dim(0) == 3 && image.dim(1) == kInputSide &&
                   image.dim(2) == kInputSide,
               "model input must be [3,", kInputSide, ",", kInputSide, "], got ",
               shape_str(image.shape()));
    Tensor<T> cur = image;
    for (auto& g : trunk_) {
      cur = conv_block(tape, cur, std::span<const ConvLayer<T>>(g.convs), g.pool);
    }

    std::vector<HeatmapVolume<T>> vols(kNumScales);
    for (int s = 0; s < kNumScales; ++s) vols[static_cast<size_t>(s)].scale = s;

    if (mode != ForwardMode::analysis_only) {
      auto taps = run_branch(tape, det_, cur);
      for (int s = 0; s < kNumScales; ++s) {
        auto& tap = taps[static_cast<size_t>(s)];
        auto& fh = face_heads_[static_cast<size_t>(s)];
        auto& bh = box_heads_[static_cast<size_t>(s)];
        auto logits = conv2d(tape, tap, fh.w, fh.b, fh.spec);
        vols[static_cast<size_t>(s)].face =
            reshape(tape, sigmoid(tape, logits), {logits.dim(1), logits.dim(2)});
        vols[static_cast<size_t>(s)].offsets = conv2d(tape, tap, bh.w, bh.b, bh.spec);
      }
    }
    if (mode != ForwardMode::detection_only) {
      auto taps = run_branch(tape, ana_, cur);
      for (int s = 0; s < kNumScales; ++s) {
        auto& th = task_heads_[static_cast<size_t>(s)];
        auto logits = conv2d(tape, taps[static_cast<size_t>(s)], th.w, th.b, th.spec);
        vols[static_cast<size_t>(s)].tasks =
            head_.activation() == TaskActivation::sigmoid ? sigmoid(tape, logits) : logits;
      }
    }
    return vols;
  }

  // Overwrites the analysis branch groups with the detection values. Heads
  // are left alone; their shapes differ.
  void copy_detection_to_analysis() {
    FSSD_CHECK(det_.size() == ana_.size(), "branch structure mismatch");
    for (size_t g = 0; g < det_.size(); ++g) {
      FSSD_CHECK(det_[g].convs.size() == ana_[g].convs.size(), "branch structure mismatch");
      for (size_t c = 0; c < det_[g].convs.size(); ++c) {
        copy_values(det_[g].convs[c].w, ana_[g].convs[c].w);
        copy_values(det_[g].convs[c].b, ana_[g].convs[c].b);
      }
    }
  }

  // Frozen parts keep requires_grad off so backward skips them entirely;
  // the trainer also consults the flag to skip optimizer updates.
  void set_frozen(ModelPart part, bool frozen) {
    frozen_[part_index(part)] = frozen;
    for (auto& p : parameters()) {
      if (p.part == part) p.tensor.set_requires_grad(!frozen);
    }
  }

  bool frozen(ModelPart part) const { return frozen_[part_index(part)]; }

  struct ParamRef {
    std::string name;
    Tensor<T> tensor;
    ModelPart part;
  };

  // Stable enumeration order; checkpoints and the optimizer state both key
  // off it.
  std::vector<ParamRef> parameters() {
    std::vector<ParamRef> out;
    auto add_groups = [&](std::vector<ConvGroup<T>>& groups, const char* prefix, int first,
                          ModelPart part) {
      for (size_t g = 0; g < groups.size(); ++g) {
        for (size_t c = 0; c < groups[g].convs.size(); ++c) {
          std::string base = std::string(prefix) + ".g" + std::to_string(first + static_cast<int>(g)) +
                             ".conv" + std::to_string(c + 1);
          out.push_back({base + ".w", groups[g].convs[c].w, part});
          out.push_back({base + ".b", groups[g].convs[c].b, part});
        }
      }
    };
    add_groups(trunk_, "trunk", 1, ModelPart::trunk);
    add_groups(det_, "det", 4, ModelPart::detection);
    add_groups(ana_, "ana", 4, ModelPart::analysis);
    for (int s = 0; s < kNumScales; ++s) {
      std::string base = "det.head" + std::to_string(s);
      out.push_back({base + ".face.w", face_heads_[static_cast<size_t>(s)].w, ModelPart::detection});
      out.push_back({base + ".face.b", face_heads_[static_cast<size_t>(s)].b, ModelPart::detection});
      out.push_back({base + ".box.w", box_heads_[static_cast<size_t>(s)].w, ModelPart::detection});
      out.push_back({base + ".box.b", box_heads_[static_cast<size_t>(s)].b, ModelPart::detection});
    }
    for (int s = 0; s < kNumScales; ++s) {
      std::string base = "ana.head" + std::to_string(s);
      out.push_back({base + ".task.w", task_heads_[static_cast<size_t>(s)].w, ModelPart::analysis});
      out.push_back({base + ".task.b", task_heads_[static_cast<size_t>(s)].b, ModelPart::analysis});
    }
    return out;
  }

  void save_weights(const std::string& path,
                    const std::vector<std::pair<std::string, std::string>>& extra = {}) {
    std::ofstream os(path, std::ios::binary);
    FSSD_CHECK(os.good(), "cannot open ", path, " for writing");
    os << "FSSD-WEIGHTS 1\n";
    os << "dtype: " << (std::is_same_v<T, float> ? "f32" : "f64") << "\n";
    os << "channel_scale: " << format_double(channel_scale_) << "\n";
    os << "head_channels: " << head_.num_task_channels << "\n";
    os << "head_kind: " << task_kind_name(head_.kind) << "\n";
    for (const auto& [k, v] : extra) os << k << ": " << v << "\n";
    auto params = parameters();
    os << "tensor_count: " << params.size() << "\n";
    for (auto& p : params) {
      os << "tensor: " << p.name;
      for (int d : p.tensor.shape()) os << " " << d;
      os << "\n";
    }
    os << "data:\n";
    for (auto& p : params) write_tensor(os, p.tensor);
    FSSD_CHECK(os.good(), "failed writing weights to ", path);
  }

  struct Loaded {
    FaceSSDModel model;
    std::vector<std::pair<std::string, std::string>> extra;
  };

  static Loaded load_weights(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    FSSD_CHECK(is.good(), "cannot open weights file ", path);
    std::string line;
    FSSD_CHECK(std::getline(is, line) && line == "FSSD-WEIGHTS 1",
               "bad weights header in ", path);
    std::optional<double> channel_scale;
    std::optional<int> head_channels;
    std::optional<TaskKind> head_kind;
    std::optional<std::size_t> tensor_count;
    std::vector<std::pair<std::string, Shape>> manifest;
    std::vector<std::pair<std::string, std::string>> extra;
    bool saw_data = false;
    while (std::getline(is, line)) {
      if (line == "data:") {
        saw_data = true;
        break;
      }
      auto colon = line.find(": ");
      FSSD_CHECK(colon != std::string::npos, "bad manifest line '", line, "'");
      std::string key = line.substr(0, colon);
      std::string value = line.substr(colon + 2);
      if (key == "dtype") {
        FSSD_CHECK(value == "f32" || value == "f64", "bad dtype '", value, "'");
      } else if (key == "channel_scale") {
        channel_scale = parse_double(value);
      } else if (key == "head_channels") {
        head_channels = static_cast<int>(parse_double(value));
      } else if (key == "head_kind") {
        head_kind = task_kind_from_name(value);
      } else if (key == "tensor_count") {
        tensor_count = static_cast<std::size_t>(parse_double(value));
      } else if (key == "tensor") {
        std::istringstream ls(value);
        std::string name;
        ls >> name;
        Shape shape;
        int d;
        while (ls >> d) shape.push_back(d);
        FSSD_CHECK(!name.empty() && !shape.empty(), "bad tensor line '", line, "'");
        manifest.emplace_back(name, shape);
      } else {
        extra.emplace_back(key, value);
      }
    }
    FSSD_CHECK(saw_data, "weights file has no data section");
    FSSD_CHECK(channel_scale && head_channels && head_kind && tensor_count,
               "weights manifest missing required keys");
    FSSD_CHECK(manifest.size() == *tensor_count, "manifest lists ", manifest.size(),
               " tensors but tensor_count says ", *tensor_count);

    HeadConfig head;
    head.num_task_channels = *head_channels;
    head.kind = *head_kind;
    Loaded result{build(head, *channel_scale, 0), std::move(extra)};
    auto params = result.model.parameters();
    FSSD_CHECK(params.size() == manifest.size(), "weights file carries ", manifest.size(),
               " tensors, model needs ", params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      FSSD_CHECK(params[i].name == manifest[i].first, "tensor ", i, " is '",
                 manifest[i].first, "', expected '", params[i].name, "'");
      FSSD_CHECK(params[i].tensor.shape() == manifest[i].second, "tensor ", manifest[i].first,
                 " has shape ", shape_str(manifest[i].second), ", expected ",
                 shape_str(params[i].tensor.shape()));
      Tensor<T> stored = read_tensor<T>(is);
      FSSD_CHECK(stored.shape() == params[i].tensor.shape(), "stored tensor ",
                 manifest[i].first, " shape mismatch");
      copy_values(stored, params[i].tensor);
    }
    is.peek();
    FSSD_CHECK(is.eof(), "trailing bytes after weights data in ", path);
    return result;
  }

  static std::string format_double(double v) { return fssd::format_double(v); }
  static double parse_double(const std::string& s) { return fssd::parse_double(s); }

 private:
  static size_t part_index(ModelPart part) { return static_cast<size_t>(part); }

  static void copy_values(const Tensor<T>& from, Tensor<T>& to) {
    FSSD_CHECK(from.shape() == to.shape(), "copy shape mismatch");
    auto src = from.values();
    auto dst = to.values();
    for (size_t i = 0; i < src.size(); ++i) dst[i] = src[i];
  }

  std::array<Tensor<T>, kNumScales> run_branch(Tape<T>& tape,
                                               std::vector<ConvGroup<T>>& branch,
                                               const Tensor<T>& trunk_out) {
    std::array<Tensor<T>, kNumScales> taps;
    Tensor<T> cur = trunk_out;
    // group 4 taps before its pool, groups 6-10 tap their outputs
    cur = conv_block(tape, cur, std::span<const ConvLayer<T>>(branch[0].convs), branch[0].pool,
                     &taps[0]);
    cur = conv_block(tape, cur, std::span<const ConvLayer<T>>(branch[1].convs), branch[1].pool);
    for (size_t g = 2; g < branch.size(); ++g) {
      cur = conv_block(tape, cur, std::span<const ConvLayer<T>>(branch[g].convs),
                       branch[g].pool);
      taps[g - 1] = cur;
    }
    return taps;
  }

  HeadConfig head_;
  double channel_scale_ = 1.0;
  std::vector<ConvGroup<T>> trunk_, det_, ana_;
  std::vector<ConvLayer<T>> face_heads_, box_heads_, task_heads_;
  std::array<bool, 3> frozen_ = {false, false, false};
};

}  // namespace fssd
