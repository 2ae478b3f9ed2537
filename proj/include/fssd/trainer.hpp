#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "fssd/augment.hpp"
#include "fssd/data.hpp"
#include "fssd/losses.hpp"
#include "fssd/model.hpp"
#include "fssd/text.hpp"

namespace fssd {

enum class TrainPhase { detection, analysis };

inline const char* phase_name(TrainPhase p) {
  return p == TrainPhase::detection ? "detection" : "analysis";
}

struct LrStage {
  int iterations = 0;
  double lr = 0;
};

// Warm start at 1e-3, raise to 1e-2, then decay a decade per stage down to
// 1e-5, in five equal-length stages.
inline std::vector<LrStage> desk_schedule(int stage_iterations = 400) {
  return {{stage_iterations, 1e-3},
          {stage_iterations, 1e-2},
          {stage_iterations, 1e-3},
          {stage_iterations, 1e-4},
          {stage_iterations, 1e-5}};
}

struct TrainConfig {
  std::vector<LrStage> schedule = desk_schedule();
  double momentum = 0.9;
  double weight_decay = 0.0005;
  int batch_size = 16;
  bool recycle_hard = true;         // re-queue the hardest samples of each batch
  double recycle_fraction = 0.3;
  TrainPhase phase = TrainPhase::detection;
  std::vector<double> loss_weights = {1.0};  // analysis multitask weights
  FaceLossConfig face_loss;
  AugmentConfig augment;
  double match_iou = 0.5;
  std::uint64_t seed = 0;
  int checkpoint_every = 100;
  std::string checkpoint_prefix;    // empty disables checkpoint files

  int total_iterations() const {
    int n = 0;
    for (const auto& s : schedule) n += s.iterations;
    return n;
  }

  double lr_at(int iteration) const {
    int at = 0;
    for (const auto& s : schedule) {
      at += s.iterations;
      if (iteration < at) return s.lr;
    }
    FSSD_FAIL("iteration ", iteration, " beyond the schedule");
  }

  void validate() const {
    FSSD_CHECK(!schedule.empty(), "empty learning rate schedule");
    for (const auto& s : schedule) {
      FSSD_CHECK(s.iterations >= 1, "stage needs at least one iteration");
      FSSD_CHECK(s.lr > 0, "learning rates must be positive");
    }
    FSSD_CHECK(momentum >= 0 && momentum < 1, "momentum out of [0,1)");
    FSSD_CHECK(weight_decay >= 0, "negative weight decay");
    FSSD_CHECK(batch_size >= 1, "batch size must be at least 1");
    if (recycle_hard) {
      FSSD_CHECK(recycle_fraction > 0 && recycle_fraction < 1,
                 "recycle fraction out of (0,1)");
    }
    FSSD_CHECK(!loss_weights.empty(), "need at least one loss weight");
    for (double w : loss_weights) FSSD_CHECK(w > 0, "loss weights must be positive");
    FSSD_CHECK(match_iou > 0 && match_iou <= 1, "match_iou out of (0,1]");
    FSSD_CHECK(checkpoint_every >= 1, "checkpoint cadence must be positive");
    face_loss.validate();
    augment.validate();
  }
};

// One SGD update with classical momentum and decoupled-from-nothing weight
// decay folded into the gradient: v <- m v + g + wd p; p <- p - lr v.
template <typename T>
inline void sgd_step(std::span<T> param, std::span<const T> grad, std::span<T> velocity,
                     double lr, double momentum, double weight_decay) {
  FSSD_CHECK(param.size() == grad.size() && param.size() == velocity.size(),
             "parameter, gradient and velocity sizes disagree");
  for (size_t i = 0; i < param.size(); ++i) {
    double v = momentum * static_cast<double>(velocity[i]) + static_cast<double>(grad[i]) +
               weight_decay * static_cast<double>(param[i]);
    velocity[i] = static_cast<T>(v);
    param[i] = static_cast<T>(static_cast<double>(param[i]) - lr * v);
  }
}

struct LogRow {
  int iteration = 0;
  TrainPhase phase = TrainPhase::detection;
  double lr = 0;
  double loss = 0;        // batch mean objective
  double cls_sum = 0;     // detection classification sum over the batch
  double reg_sum = 0;     // detection regression sum over the batch
  int num_positive = 0;   // matched locations over the batch
  int batch = 0;
};

inline std::string log_csv_header() {
  return "iteration,phase,lr,loss,cls_sum,reg_sum,num_positive,batch\n";
}

inline std::string log_csv_row(const LogRow& r) {
  std::string out;
  out += std::to_string(r.iteration);
  out += ',';
  out += phase_name(r.phase);
  out += ',';
  out += format_double(r.lr);
  out += ',';
  out += format_double(r.loss);
  out += ',';
  out += format_double(r.cls_sum);
  out += ',';
  out += format_double(r.reg_sum);
  out += ',';
  out += std::to_string(r.num_positive);
  out += ',';
  out += std::to_string(r.batch);
  out += '\n';
  return out;
}

struct TrainResult {
  std::vector<LogRow> log;
  std::vector<std::string> checkpoints;
};

namespace detail {

// Fisher-Yates off the provided stream.
inline void shuffle_ids(std::vector<int>& ids, Rng& rng) {
  for (size_t i = ids.size(); i > 1; --i) {
    auto j = static_cast<size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
    std::swap(ids[i - 1], ids[j]);
  }
}

inline std::vector<Box> face_boxes(const AnnotatedImage& ai) {
  std::vector<Box> boxes;
  for (const auto& f : ai.faces) boxes.push_back(f.box);
  return boxes;
}

}  // namespace detail

// One training phase over the train split: shuffled epochs, per-sample
// augmentation and backward passes, SGD on the unfrozen parameters, hard
// sample recycling into the next batch, CSV-ready log rows, periodic
// checkpoints. Deterministic in cfg.seed.
template <typename T>
TrainResult train_phase(FaceSSDModel<T>& model, const Dataset& data,
                        const DatasetStats& stats, const DefaultBoxGrid& grid,
                        const TrainConfig& cfg, double lr_scale = 1.0) {
  cfg.validate();
  grid.validate();
  FSSD_CHECK(lr_scale >= 0, "negative learning rate scale");
  auto train_ids = data.ids_of(Split::train);
  FSSD_CHECK(!train_ids.empty(), "dataset has no training images");
  if (cfg.phase == TrainPhase::analysis) {
    FSSD_CHECK(static_cast<int>(cfg.loss_weights.size()) == 1,
               "one analysis task per phase, got ", cfg.loss_weights.size(), " weights");
  }

  auto params = model.parameters();
  std::vector<std::vector<T>> velocity(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    velocity[i].assign(static_cast<size_t>(params[i].tensor.size()), T(0));
  }

  const ForwardMode mode = cfg.phase == TrainPhase::detection ? ForwardMode::detection_only
                                                              : ForwardMode::analysis_only;
  const int total = cfg.total_iterations();

  // stage boundaries get a checkpoint regardless of the cadence
  std::vector<int> boundaries;
  int acc = 0;
  for (const auto& s : cfg.schedule) {
    acc += s.iterations;
    boundaries.push_back(acc);
  }

  TrainResult result;
  std::vector<int> recycled;
  int it = 0;
  std::uint64_t epoch = 0;
  while (it < total) {
    auto order = train_ids;
    Rng shuffle_rng(derive_seed(cfg.seed, 0x5348554600000000ull + epoch));
    detail::shuffle_ids(order, shuffle_rng);
    size_t cursor = 0;
    while (cursor < order.size() && it < total) {
      // hard samples from the previous batch lead, fresh samples fill
      std::vector<int> batch = recycled;
      while (static_cast<int>(batch.size()) < cfg.batch_size && cursor < order.size()) {
        batch.push_back(order[cursor++]);
      }
      const auto bsize = static_cast<int>(batch.size());

      for (auto& p : params) p.tensor.zero_grad();

      LogRow row;
      row.iteration = it;
      row.phase = cfg.phase;
      row.lr = cfg.lr_at(it) * lr_scale;
      row.batch = bsize;
      std::vector<double> sample_losses;
      for (int slot = 0; slot < bsize; ++slot) {
        const int id = batch[static_cast<size_t>(slot)];
        const auto& ai = data.images[static_cast<size_t>(id)];
        Rng srng(derive_seed(derive_seed(cfg.seed, 0x4155470000000000ull + static_cast<std::uint64_t>(it)),
                             static_cast<std::uint64_t>(id)));
        auto outcome = augment_sample(ai, cfg.augment, stats, srng);
        auto image = normalize_image(image_to_tensor<T>(outcome.sample.image), stats);
        auto assignment = match(detail::face_boxes(outcome.sample), grid, cfg.match_iou);

        Tape<T> tape;
        auto vols = model.forward(tape, image, mode);
        Tensor<T> loss;
        if (cfg.phase == TrainPhase::detection) {
          auto res = face_loss(tape, vols, grid, assignment, cfg.face_loss);
          loss = res.loss;
          row.cls_sum += res.cls_sum;
          row.reg_sum += res.reg_sum;
          row.num_positive += res.num_positive;
        } else {
          Tensor<T> task;
          switch (model.head().kind) {
            case TaskKind::binary: {
              std::vector<int> labels;
              for (const auto& f : outcome.sample.faces) labels.push_back(f.smile);
              task = smile_loss(tape, vols, grid, assignment, labels, cfg.face_loss.eps);
              break;
            }
            case TaskKind::multi_binary: {
              std::vector<std::uint64_t> bits;
              for (const auto& f : outcome.sample.faces) bits.push_back(f.attributes);
              task = attribute_loss(tape, vols, grid, assignment, bits,
                                    model.head().num_task_channels, cfg.face_loss.eps);
              break;
            }
            case TaskKind::regression: {
              std::vector<std::array<double, 2>> targets;
              for (const auto& f : outcome.sample.faces) {
                targets.push_back({f.valence, f.arousal});
              }
              task = va_loss(tape, vols, grid, assignment, targets);
              break;
            }
          }
          row.num_positive += assignment.num_positive;
          loss = multitask_total(tape, {task}, cfg.loss_weights);
        }

        const double v = static_cast<double>(loss.values()[0]);
        FSSD_CHECK(std::isfinite(v), "loss went non-finite at iteration ", it, " on image ",
                   ai.id);
        sample_losses.push_back(v);
        row.loss += v / bsize;
        if (!loss.is_leaf()) tape.backward(loss, static_cast<T>(1.0 / bsize));
      }

      for (size_t i = 0; i < params.size(); ++i) {
        auto& t = params[i].tensor;
        if (!t.requires_grad()) continue;  // frozen parts stay untouched
        sgd_step(t.values(), std::span<const T>(t.grad_data(), static_cast<size_t>(t.size())),
                 std::span<T>(velocity[i]), row.lr, cfg.momentum, cfg.weight_decay);
      }

      recycled.clear();
      if (cfg.recycle_hard) {
        for (int slot : recycle_hard_samples(sample_losses, cfg.recycle_fraction)) {
          recycled.push_back(batch[static_cast<size_t>(slot)]);
        }
      }

      result.log.push_back(row);
      ++it;
      if (!cfg.checkpoint_prefix.empty()) {
        bool boundary = std::find(boundaries.begin(), boundaries.end(), it) != boundaries.end();
        if (boundary || it % cfg.checkpoint_every == 0) {
          char tag[32];
          std::snprintf(tag, sizeof tag, "_iter%06d.weights", it);
          std::string path = cfg.checkpoint_prefix + tag;
          model.save_weights(path, {{"trained_phase", phase_name(cfg.phase)},
                                    {"iteration", std::to_string(it)}});
          result.checkpoints.push_back(path);
        }
      }
    }
    ++epoch;
  }
  return result;
}

// Transfers weights from a (typically full-width) source model into a
// narrower one by regular subsampling along every mismatched dimension.
template <typename T>
void transfer_subsampled(FaceSSDModel<T>& from, FaceSSDModel<T>& to) {
  auto src = from.parameters();
  auto dst = to.parameters();
  FSSD_CHECK(src.size() == dst.size(), "parameter lists disagree: ", src.size(), " vs ",
             dst.size());
  for (size_t i = 0; i < src.size(); ++i) {
    FSSD_CHECK(src[i].name == dst[i].name, "parameter order mismatch at ", src[i].name);
    auto& s = src[i].tensor;
    auto& d = dst[i].tensor;
    if (s.shape() == d.shape()) {
      std::copy(s.values().begin(), s.values().end(), d.values().begin());
      continue;
    }
    FSSD_CHECK(s.rank() == d.rank(), "rank mismatch at ", src[i].name);
    if (s.rank() == 4) {
      std::array<int, 4> factors;
      for (int m = 0; m < 4; ++m) {
        int f = (s.dim(m) + d.dim(m) - 1) / d.dim(m);
        FSSD_CHECK((s.dim(m) + f - 1) / f == d.dim(m), "cannot subsample ", src[i].name,
                   " dim ", m, " from ", s.dim(m), " to ", d.dim(m));
        factors[static_cast<size_t>(m)] = f;
      }
      auto sub = subsample_weight_tensor(s, factors);
      std::copy(sub.values().begin(), sub.values().end(), d.values().begin());
    } else {
      FSSD_CHECK(s.rank() == 1, "unexpected rank at ", src[i].name);
      int f = (s.dim(0) + d.dim(0) - 1) / d.dim(0);
      FSSD_CHECK((s.dim(0) + f - 1) / f == d.dim(0), "cannot subsample ", src[i].name,
                 " from ", s.dim(0), " to ", d.dim(0));
      for (int k = 0; k < d.dim(0); ++k) {
        d.values()[static_cast<size_t>(k)] =
            s.values()[static_cast<size_t>(k) * static_cast<size_t>(f)];
      }
    }
  }
}

struct PipelineConfig {
  HeadConfig head;
  double channel_scale = 1.0;
  std::uint64_t seed = 0;
  std::string init_weights;   // optional source weights to subsample from
  TrainConfig detection;      // phase forced to detection
  TrainConfig analysis;       // phase forced to analysis
  bool skip_copy = false;     // ablation: leave the analysis branch at random init
  std::string out_prefix;     // step weight files written when nonempty
};

template <typename T>
struct PipelineResult {
  FaceSSDModel<T> model;
  TrainResult detection_log;
  TrainResult analysis_log;
  std::vector<std::string> step_files;
};

// The four-step procedure: initialize, finetune detection with the analysis
// branch frozen, copy the detection branch onto the analysis branch, then
// finetune the analysis branch with trunk and detection frozen.
template <typename T>
PipelineResult<T> run_four_step_pipeline(const Dataset& data, const DatasetStats& stats,
                                         const DefaultBoxGrid& grid, PipelineConfig cfg) {
  cfg.detection.phase = TrainPhase::detection;
  cfg.analysis.phase = TrainPhase::analysis;

  // step 1: weights, random or subsampled from a wider checkpoint
  auto model = FaceSSDModel<T>::build(cfg.head, cfg.channel_scale, cfg.seed);
  if (!cfg.init_weights.empty()) {
    auto loaded = FaceSSDModel<T>::load_weights(cfg.init_weights);
    transfer_subsampled(loaded.model, model);
  }

  auto save_step = [&](PipelineResult<T>& r, const char* step) {
    if (cfg.out_prefix.empty()) return;
    std::string path = cfg.out_prefix + "_" + step + ".weights";
    r.model.save_weights(path, {{"pipeline_step", step}});
    r.step_files.push_back(path);
  };

  PipelineResult<T> result{std::move(model), {}, {}, {}};

  // step 2: detection finetune, analysis frozen
  result.model.set_frozen(ModelPart::analysis, true);
  result.model.set_frozen(ModelPart::trunk, false);
  result.model.set_frozen(ModelPart::detection, false);
  result.detection_log = train_phase(result.model, data, stats, grid, cfg.detection);
  save_step(result, "step2");

  // step 3: seed the analysis branch from the trained detection branch
  if (!cfg.skip_copy) result.model.copy_detection_to_analysis();
  save_step(result, "step3");

  // step 4: analysis finetune, everything else frozen
  result.model.set_frozen(ModelPart::trunk, true);
  result.model.set_frozen(ModelPart::detection, true);
  result.model.set_frozen(ModelPart::analysis, false);
  result.analysis_log = train_phase(result.model, data, stats, grid, cfg.analysis);
  save_step(result, "step4");

  return result;
}

}  // namespace fssd
