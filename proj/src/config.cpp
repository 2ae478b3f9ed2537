#include "fssd/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "fssd/check.hpp"
#include "fssd/text.hpp"

namespace fssd {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& value, const char* what) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream is(value);
  while (std::getline(is, cur, ',')) {
    cur = trim(cur);
    FSSD_CHECK(!cur.empty(), "empty entry in ", what, " list '", value, "'");
    parts.push_back(cur);
  }
  FSSD_CHECK(!parts.empty(), what, " list is empty");
  return parts;
}

int parse_int(const std::string& value, const char* what) {
  long long v = parse_i64(value, what);
  FSSD_CHECK(v >= -2147483648LL && v <= 2147483647LL, what, " out of range: ", value);
  return static_cast<int>(v);
}

bool parse_bool(const std::string& value, const char* what) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  FSSD_FAIL(what, " must be true/false/1/0, got '", value, "'");
}

Mechanism mechanism_from_name(const std::string& name) {
  if (name == "shrink") return Mechanism::shrink;
  if (name == "crop") return Mechanism::crop;
  if (name == "gamma") return Mechanism::gamma;
  if (name == "has") return Mechanism::has;
  FSSD_FAIL("unknown augmentation mechanism '", name, "'");
}

std::vector<LrStage> parse_schedule(const std::string& value) {
  std::vector<LrStage> schedule;
  for (const auto& part : split_list(value, "schedule")) {
    size_t x = part.find('x');
    FSSD_CHECK(x != std::string::npos && x > 0 && x + 1 < part.size(),
               "schedule stage must look like 400x0.001, got '", part, "'");
    LrStage stage;
    stage.iterations = parse_int(trim(part.substr(0, x)), "stage iterations");
    stage.lr = parse_double(trim(part.substr(x + 1)), "stage learning rate");
    schedule.push_back(stage);
  }
  return schedule;
}

std::vector<int> parse_int_list(const std::string& value, const char* what) {
  std::vector<int> out;
  for (const auto& part : split_list(value, what)) out.push_back(parse_int(part, what));
  return out;
}

std::vector<double> parse_double_list(const std::string& value, const char* what) {
  std::vector<double> out;
  for (const auto& part : split_list(value, what)) out.push_back(parse_double(part, what));
  return out;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::istringstream is(text);
  std::string line;
  int number = 0;
  while (std::getline(is, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    size_t colon = stripped.find(':');
    FSSD_CHECK(colon != std::string::npos, "line ", number, " has no colon: '", line, "'");
    std::string key = trim(stripped.substr(0, colon));
    std::string value = trim(stripped.substr(colon + 1));
    FSSD_CHECK(!key.empty(), "line ", number, " has an empty key");
    FSSD_CHECK(key.find_first_of(" \t") == std::string::npos,
               "line ", number, " key '", key, "' contains whitespace");
    FSSD_CHECK(!value.empty(), "line ", number, " has an empty value for key '", key, "'");
    pairs.emplace_back(key, value);
  }
  return pairs;
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  FSSD_CHECK(is.good(), "cannot open ", path);
  std::ostringstream os;
  os << is.rdbuf();
  FSSD_CHECK(!is.bad(), "failed reading ", path);
  return os.str();
}

void apply_run_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "task") {
    FSSD_CHECK(value == "smile" || value == "attributes" || value == "va",
               "task must be smile, attributes or va, got '", value, "'");
    cfg.task = value;
  } else if (key == "num_attributes") {
    cfg.num_attributes = parse_int(value, "num_attributes");
  } else if (key == "channel_scale") {
    cfg.channel_scale = parse_double(value, "channel_scale");
  } else if (key == "seed") {
    cfg.seed = parse_u64(value, "seed");
  } else if (key == "threads") {
    cfg.threads = parse_int(value, "threads");
  } else if (key == "data") {
    cfg.data = value;
  } else if (key == "out") {
    cfg.out = value;
  } else if (key == "weights") {
    cfg.weights = value;
  } else if (key == "phase") {
    FSSD_CHECK(value == "detection" || value == "analysis",
               "phase must be detection or analysis, got '", value, "'");
    cfg.phase = value == "detection" ? TrainPhase::detection : TrainPhase::analysis;
  } else if (key == "pipeline") {
    cfg.pipeline = parse_bool(value, "pipeline");
  } else if (key == "skip_copy") {
    cfg.skip_copy = parse_bool(value, "skip_copy");
  } else if (key == "schedule") {
    cfg.train.schedule = parse_schedule(value);
  } else if (key == "momentum") {
    cfg.train.momentum = parse_double(value, "momentum");
  } else if (key == "weight_decay") {
    cfg.train.weight_decay = parse_double(value, "weight_decay");
  } else if (key == "batch_size") {
    cfg.train.batch_size = parse_int(value, "batch_size");
  } else if (key == "recycle_hard") {
    cfg.train.recycle_hard = parse_bool(value, "recycle_hard");
  } else if (key == "recycle_fraction") {
    cfg.train.recycle_fraction = parse_double(value, "recycle_fraction");
  } else if (key == "loss_weights") {
    cfg.train.loss_weights = parse_double_list(value, "loss_weights");
  } else if (key == "match_iou") {
    cfg.train.match_iou = parse_double(value, "match_iou");
  } else if (key == "checkpoint_every") {
    cfg.train.checkpoint_every = parse_int(value, "checkpoint_every");
  } else if (key == "loss_lambda") {
    cfg.train.face_loss.lambda = parse_double(value, "loss_lambda");
  } else if (key == "hnm") {
    cfg.train.face_loss.use_hnm = parse_bool(value, "hnm");
  } else if (key == "neg_pos_ratio") {
    cfg.train.face_loss.neg_pos_ratio = parse_double(value, "neg_pos_ratio");
  } else if (key == "flip_prob") {
    cfg.train.augment.flip_prob = parse_double(value, "flip_prob");
  } else if (key == "mechanisms") {
    cfg.train.augment.mechanisms.clear();
    for (const auto& name : split_list(value, "mechanisms")) {
      cfg.train.augment.mechanisms.push_back(mechanism_from_name(name));
    }
  } else if (key == "has_mode") {
    FSSD_CHECK(value == "coarse" || value == "fine",
               "has_mode must be coarse or fine, got '", value, "'");
    cfg.train.augment.has_mode = value == "coarse" ? HasMode::coarse : HasMode::fine;
  } else if (key == "has_apply_prob") {
    cfg.train.augment.has_apply_prob = parse_double(value, "has_apply_prob");
  } else if (key == "has_hide_prob") {
    cfg.train.augment.has_hide_prob = parse_double(value, "has_hide_prob");
  } else if (key == "coarse_divisions") {
    cfg.train.augment.coarse_divisions = parse_int_list(value, "coarse_divisions");
  } else if (key == "fine_divisions") {
    cfg.train.augment.fine_divisions = parse_int_list(value, "fine_divisions");
  } else if (key == "gamma_min") {
    cfg.train.augment.gamma_min = parse_double(value, "gamma_min");
  } else if (key == "gamma_max") {
    cfg.train.augment.gamma_max = parse_double(value, "gamma_max");
  } else if (key == "shrink_min") {
    cfg.train.augment.shrink_min = parse_double(value, "shrink_min");
    cfg.shrink_min_explicit = true;
  } else if (key == "shrink_max") {
    cfg.train.augment.shrink_max = parse_double(value, "shrink_max");
  } else if (key == "crop_min") {
    cfg.train.augment.crop_min = parse_double(value, "crop_min");
  } else if (key == "crop_max") {
    cfg.train.augment.crop_max = parse_double(value, "crop_max");
  } else if (key == "th_face") {
    cfg.infer.th_face = parse_double(value, "th_face");
  } else if (key == "nms_overlap") {
    cfg.infer.nms_overlap = parse_double(value, "nms_overlap");
  } else if (key == "th_task") {
    cfg.infer.th_task = parse_double(value, "th_task");
  } else {
    FSSD_FAIL("unknown config key '", key, "'");
  }
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  for (const auto& [key, value] : parse_key_values(text)) {
    FSSD_CHECK(seen.insert(key).second, "duplicate config key '", key, "'");
    apply_run_key(cfg, key, value);
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config(read_text_file(path));
}

void RunConfig::validate() const {
  FSSD_CHECK(task == "smile" || task == "attributes" || task == "va",
             "task must be smile, attributes or va");
  FSSD_CHECK(num_attributes >= 1 && num_attributes <= 64, "num_attributes out of [1,64]");
  FSSD_CHECK(channel_scale > 0 && channel_scale <= 1, "channel_scale out of (0,1]");
  FSSD_CHECK(threads >= 0, "threads must be nonnegative");
  train.validate();
  infer.validate();
}

HeadConfig RunConfig::head() const {
  if (task == "smile") return HeadConfig::smile();
  if (task == "attributes") return HeadConfig::attributes(num_attributes);
  return HeadConfig::valence_arousal();
}

TrainConfig RunConfig::phase_config(TrainPhase p) const {
  TrainConfig t = train;
  t.phase = p;
  t.seed = seed;
  if (p == TrainPhase::analysis && task == "va" && !shrink_min_explicit) {
    t.augment.shrink_min = AugmentConfig::valence_arousal_preset().shrink_min;
  }
  return t;
}

SyntheticSpec parse_synthetic_spec(const std::string& text) {
  SyntheticSpec spec;
  std::set<std::string> seen;
  for (const auto& [key, value] : parse_key_values(text)) {
    FSSD_CHECK(seen.insert(key).second, "duplicate spec key '", key, "'");
    if (key == "num_train") {
      spec.num_train = parse_int(value, "num_train");
    } else if (key == "num_val") {
      spec.num_val = parse_int(value, "num_val");
    } else if (key == "num_test") {
      spec.num_test = parse_int(value, "num_test");
    } else if (key == "min_faces") {
      spec.min_faces = parse_int(value, "min_faces");
    } else if (key == "max_faces") {
      spec.max_faces = parse_int(value, "max_faces");
    } else if (key == "min_face_size") {
      spec.min_face_size = parse_double(value, "min_face_size");
    } else if (key == "max_face_size") {
      spec.max_face_size = parse_double(value, "max_face_size");
    } else if (key == "num_attributes") {
      spec.num_attributes = parse_int(value, "num_attributes");
    } else if (key == "seed") {
      spec.seed = parse_u64(value, "seed");
    } else {
      FSSD_FAIL("unknown dataset spec key '", key, "'");
    }
  }
  spec.validate();
  return spec;
}

SyntheticSpec load_synthetic_spec(const std::string& path) {
  return parse_synthetic_spec(read_text_file(path));
}

std::string stats_to_text(const DatasetStats& stats) {
  std::string out;
  for (int c = 0; c < 3; ++c) {
    if (c) out += ' ';
    out += format_double(stats.mean[static_cast<size_t>(c)]);
  }
  for (int c = 0; c < 3; ++c) {
    out += ' ';
    out += format_double(stats.stddev[static_cast<size_t>(c)]);
  }
  return out;
}

DatasetStats stats_from_text(const std::string& text) {
  std::istringstream is(text);
  std::vector<std::string> tokens;
  std::string tok;
  while (is >> tok) tokens.push_back(tok);
  FSSD_CHECK(tokens.size() == 6, "stats need 6 numbers, got ", tokens.size());
  DatasetStats stats;
  for (int c = 0; c < 3; ++c) {
    stats.mean[static_cast<size_t>(c)] = parse_double(tokens[static_cast<size_t>(c)], "stats mean");
    stats.stddev[static_cast<size_t>(c)] =
        parse_double(tokens[static_cast<size_t>(c + 3)], "stats stddev");
    FSSD_CHECK(stats.stddev[static_cast<size_t>(c)] > 0, "stats stddev must be positive");
  }
  return stats;
}

}  // namespace fssd
