#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fssd/augment.hpp"
#include "fssd/data.hpp"
#include "fssd/infer.hpp"
#include "fssd/model.hpp"
#include "fssd/trainer.hpp"

namespace fssd {

// Strict "key: value" text. Blank lines and lines starting with '#' are
// skipped, anything else must carry a key, a colon and a value. Order is
// preserved; duplicate handling is the consumer's business.
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text);

std::string read_text_file(const std::string& path);

// Everything a run needs in one flat key set: model head and width, the
// training recipe, augmentation knobs, inference thresholds and paths.
// Command line flags override file values through apply_run_key.
struct RunConfig {
  std::string task = "smile";  // smile | attributes | va
  int num_attributes = 8;      // head width for the attributes task
  double channel_scale = 1.0;
  std::uint64_t seed = 0;
  int threads = 0;  // 0 keeps the OpenMP default

  std::string data;          // dataset directory
  std::string out;           // output path prefix
  std::string weights;  // warm start source for train, model source for eval/predict

  TrainPhase phase = TrainPhase::detection;
  bool pipeline = false;
  bool skip_copy = false;  // ablation: skip the detection-to-analysis copy

  TrainConfig train;
  InferConfig infer;
  bool shrink_min_explicit = false;  // set via config/flag, disables the va preset

  void validate() const;
  HeadConfig head() const;

  // Phase-ready recipe: forces the phase and, for the valence/arousal task,
  // narrows analysis-phase shrink unless shrink_min was given explicitly.
  TrainConfig phase_config(TrainPhase p) const;
};

// Sets one key, rejecting unknown names and unparsable values.
void apply_run_key(RunConfig& cfg, const std::string& key, const std::string& value);

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Dataset generator spec files use the same key syntax.
SyntheticSpec parse_synthetic_spec(const std::string& text);
SyntheticSpec load_synthetic_spec(const std::string& path);

// Normalization stats ride along inside weights files as one extra pair.
std::string stats_to_text(const DatasetStats& stats);
DatasetStats stats_from_text(const std::string& text);

}  // namespace fssd
