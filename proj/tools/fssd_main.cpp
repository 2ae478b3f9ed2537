#include <omp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fssd/config.hpp"
#include "fssd/infer.hpp"
#include "fssd/log.hpp"
#include "fssd/metrics.hpp"
#include "fssd/trainer.hpp"

namespace fs = std::filesystem;
using namespace fssd;

namespace {

using Real = float;

void require_file(const std::string& path, const char* what) {
  FSSD_CHECK(!path.empty(), what, " path is required");
  FSSD_CHECK(fs::exists(path), what, " not found: ", path);
}

void require_dataset_dir(const std::string& path) {
  FSSD_CHECK(!path.empty(), "dataset directory is required (--data)");
  FSSD_CHECK(fs::exists(fs::path(path) / "manifest.txt"), "no dataset manifest under ", path);
}

void prepare_out(const std::string& out) {
  FSSD_CHECK(!out.empty(), "output path is required (--out)");
  auto parent = fs::path(out).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

void apply_threads(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  FSSD_CHECK(os.good(), "cannot open ", path, " for writing");
  os << content;
  FSSD_CHECK(os.good(), "failed writing ", path);
}

// EER with the degenerate sides pinned: no false positives anywhere means
// perfect separation, no true positives at all means total failure.
double eer_or_limit(const std::vector<double>& pos, const std::vector<double>& neg) {
  if (pos.empty()) return 1.0;
  if (neg.empty()) return 0.0;
  return equal_error_rate(pos, neg);
}

std::optional<DatasetStats> stats_from_extra(
    const std::vector<std::pair<std::string, std::string>>& extra) {
  for (const auto& [k, v] : extra) {
    if (k == "stats") return stats_from_text(v);
  }
  return std::nullopt;
}

FaceSSDModel<Real> initial_model(const RunConfig& cfg) {
  if (cfg.weights.empty()) {
    return FaceSSDModel<Real>::build(cfg.head(), cfg.channel_scale, cfg.seed);
  }
  auto loaded = FaceSSDModel<Real>::load_weights(cfg.weights);
  FSSD_CHECK(loaded.model.head().kind == cfg.head().kind &&
                 loaded.model.head().num_task_channels == cfg.head().num_task_channels,
             "weights in ", cfg.weights, " carry a different task head");
  if (loaded.model.channel_scale() == cfg.channel_scale) return std::move(loaded.model);
  auto model = FaceSSDModel<Real>::build(cfg.head(), cfg.channel_scale, cfg.seed);
  transfer_subsampled(loaded.model, model);
  return model;
}

int run_gen(const std::string& spec_path, const RunConfig& cfg, bool seed_given) {
  SyntheticSpec spec;
  if (!spec_path.empty()) {
    require_file(spec_path, "spec");
    spec = load_synthetic_spec(spec_path);
  }
  if (seed_given) spec.seed = cfg.seed;
  prepare_out(cfg.out);
  spec.validate();
  auto data = generate(spec);
  save_dataset(data, cfg.out);
  log_info("wrote " + std::to_string(data.images.size()) + " images to " + cfg.out);
  return 0;
}

int run_train(const RunConfig& cfg) {
  cfg.validate();
  require_dataset_dir(cfg.data);
  if (!cfg.weights.empty()) require_file(cfg.weights, "weights");
  prepare_out(cfg.out);
  apply_threads(cfg.threads);

  auto data = load_dataset(cfg.data);
  if (cfg.task == "attributes") {
    FSSD_CHECK(data.num_attributes == cfg.num_attributes, "dataset has ", data.num_attributes,
               " attributes but the run wants ", cfg.num_attributes);
  }
  auto stats = compute_stats(data);
  auto grid = DefaultBoxGrid::standard();

  std::string csv = log_csv_header();
  std::vector<std::pair<std::string, std::string>> extra = {{"stats", stats_to_text(stats)}};

  if (cfg.pipeline) {
    PipelineConfig p;
    p.head = cfg.head();
    p.channel_scale = cfg.channel_scale;
    p.seed = cfg.seed;
    p.init_weights = cfg.weights;
    p.detection = cfg.phase_config(TrainPhase::detection);
    p.analysis = cfg.phase_config(TrainPhase::analysis);
    p.detection.checkpoint_prefix = cfg.out + "_det";
    p.analysis.checkpoint_prefix = cfg.out + "_ana";
    p.skip_copy = cfg.skip_copy;
    p.out_prefix = cfg.out;
    auto result = run_four_step_pipeline<Real>(data, stats, grid, p);
    for (const auto& r : result.detection_log.log) csv += log_csv_row(r);
    for (const auto& r : result.analysis_log.log) csv += log_csv_row(r);
    extra.emplace_back("trained_phase", "pipeline");
    result.model.save_weights(cfg.out + ".weights", extra);
    for (const auto& f : result.step_files) log_info("checkpoint " + f);
  } else {
    auto model = initial_model(cfg);
    bool detection = cfg.phase == TrainPhase::detection;
    model.set_frozen(ModelPart::trunk, !detection);
    model.set_frozen(ModelPart::detection, !detection);
    model.set_frozen(ModelPart::analysis, detection);
    auto t = cfg.phase_config(cfg.phase);
    t.checkpoint_prefix = cfg.out + "_ckpt";
    auto result = train_phase(model, data, stats, grid, t);
    for (const auto& r : result.log) csv += log_csv_row(r);
    extra.emplace_back("trained_phase", phase_name(cfg.phase));
    model.save_weights(cfg.out + ".weights", extra);
  }
  write_file(cfg.out + "_log.csv", csv);
  log_info("wrote " + cfg.out + ".weights");
  return 0;
}

int run_eval(const RunConfig& cfg) {
  cfg.infer.validate();
  require_file(cfg.weights, "weights");
  require_dataset_dir(cfg.data);
  apply_threads(cfg.threads);

  auto loaded = FaceSSDModel<Real>::load_weights(cfg.weights);
  auto& model = loaded.model;
  FSSD_CHECK(model.head().kind == cfg.head().kind, "task ", cfg.task,
             " does not match the head stored in ", cfg.weights);

  auto data = load_dataset(cfg.data);
  const int num_tasks = model.head().num_task_channels;
  if (model.head().kind == TaskKind::multi_binary) {
    FSSD_CHECK(num_tasks == data.num_attributes, "weights head has ", num_tasks,
               " channels, dataset has ", data.num_attributes, " attributes");
  }
  DatasetStats stats;
  if (auto s = stats_from_extra(loaded.extra)) {
    stats = *s;
  } else {
    stats = compute_stats(data);
    log_debug("weights carry no stats, normalizing with dataset stats");
  }
  auto grid = DefaultBoxGrid::standard();
  auto ids = data.ids_of(Split::test);
  FSSD_CHECK(!ids.empty(), "dataset has no test split");

  std::vector<ScoredOutcome> outcomes;
  std::int64_t total_gt = 0;
  std::vector<double> pos, neg;
  TaskCounts task_sum;
  task_sum.correct.assign(static_cast<size_t>(num_tasks), 0);
  std::vector<double> pred_v, gt_v, pred_a, gt_a;

  for (int id : ids) {
    const auto& img = data.images[static_cast<size_t>(id)];
    auto x = normalize_image(image_to_tensor<Real>(img.image), stats);
    auto dets = detect(model, x, grid, cfg.infer);

    std::vector<ScoredBox> boxes;
    for (const auto& d : dets) boxes.push_back({d.box, d.face_score});
    std::vector<Box> gts;
    for (const auto& f : img.faces) gts.push_back(f.box);
    auto mr = match_detections_to_gt(boxes, gts);
    for (const auto& o : mr.outcomes) {
      outcomes.push_back(o);
      (o.is_true_positive ? pos : neg).push_back(o.score);
    }
    total_gt += static_cast<std::int64_t>(gts.size());

    if (model.head().kind == TaskKind::regression) {
      // valence/arousal is scored over matched faces only
      for (size_t g = 0; g < gts.size(); ++g) {
        int di = mr.det_of_gt[g];
        if (di < 0) continue;
        pred_v.push_back(dets[static_cast<size_t>(di)].task_scores[0]);
        pred_a.push_back(dets[static_cast<size_t>(di)].task_scores[1]);
        gt_v.push_back(img.faces[g].valence);
        gt_a.push_back(img.faces[g].arousal);
      }
    } else {
      std::vector<std::vector<int>> det_bits;
      for (const auto& d : dets) det_bits.push_back(d.task_bits);
      std::vector<std::uint64_t> gt_bits;
      for (const auto& f : img.faces) {
        gt_bits.push_back(model.head().kind == TaskKind::binary
                              ? static_cast<std::uint64_t>(f.smile)
                              : f.attributes);
      }
      task_sum.accumulate(task_counts(boxes, det_bits, gts, gt_bits, num_tasks));
    }
  }

  std::vector<std::pair<std::string, double>> rows;
  rows.emplace_back("ap", average_precision(outcomes, total_gt));
  rows.emplace_back("eer", eer_or_limit(pos, neg));
  if (model.head().kind == TaskKind::binary) {
    rows.emplace_back("smile_accuracy", task_sum.accuracy());
  } else if (model.head().kind == TaskKind::multi_binary) {
    rows.emplace_back("attribute_accuracy", task_sum.accuracy());
  } else {
    FSSD_CHECK(gt_v.size() >= 2, "valence/arousal metrics need at least 2 matched faces, got ",
               gt_v.size());
    auto v = va_metrics(pred_v, gt_v);
    auto a = va_metrics(pred_a, gt_a);
    rows.emplace_back("rmse_valence", v.rmse);
    rows.emplace_back("corr_valence", v.corr);
    rows.emplace_back("sagr_valence", v.sagr);
    rows.emplace_back("ccc_valence", v.ccc);
    rows.emplace_back("rmse_arousal", a.rmse);
    rows.emplace_back("corr_arousal", a.corr);
    rows.emplace_back("sagr_arousal", a.sagr);
    rows.emplace_back("ccc_arousal", a.ccc);
  }

  std::fputs(metrics_text(rows).c_str(), stdout);
  if (!cfg.out.empty()) {
    prepare_out(cfg.out);
    write_file(cfg.out, metrics_csv(rows));
  }
  return 0;
}

int run_predict(const RunConfig& cfg, const std::string& image_path, bool dump) {
  cfg.infer.validate();
  require_file(cfg.weights, "weights");
  require_file(image_path, "image");
  if (dump) FSSD_CHECK(!cfg.out.empty(), "--dump-heatmaps needs --out");
  apply_threads(cfg.threads);

  auto loaded = FaceSSDModel<Real>::load_weights(cfg.weights);
  auto stats = stats_from_extra(loaded.extra);
  FSSD_CHECK(stats.has_value(), "weights file ", cfg.weights,
             " carries no normalization stats; train through this tool first");

  Image img = load_ppm(image_path);
  if (img.height != 300 || img.width != 300) img = resize_bilinear(img, 300, 300);
  auto x = normalize_image(image_to_tensor<Real>(img), *stats);
  auto grid = DefaultBoxGrid::standard();

  Tape<Real> tape(false);
  auto vols = loaded.model.forward(tape, x);
  auto dets = detections_from_volumes(vols, grid, cfg.infer, loaded.model.head().activation());

  std::string text;
  std::string id = fs::path(image_path).stem().string();
  for (const auto& d : dets) text += detection_line(id, d) + "\n";
  if (cfg.out.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    prepare_out(cfg.out);
    write_file(cfg.out, text);
  }
  log_info(std::to_string(dets.size()) + " detections");

  if (dump) {
    std::string prefix = cfg.out;
    if (prefix.size() > 4 && prefix.substr(prefix.size() - 4) == ".txt") {
      prefix = prefix.substr(0, prefix.size() - 4);
    }
    auto files = dump_heatmaps(vols, loaded.model.head().activation(), prefix);
    log_info("wrote " + std::to_string(files.size()) + " heatmaps");
  }
  return 0;
}

#include "selftest.hpp"

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"single shot multi-task face analysis"};
  app.require_subcommand(1);

  std::string config_path, spec_path, image_path;
  std::string seed_str, threads_str, out, weights, data, task, phase;
  bool pipeline = false, dump = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run configuration file");
    cmd->add_option("--seed", seed_str, "random seed");
    cmd->add_option("--threads", threads_str, "worker thread count");
  };

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen->add_option("--spec", spec_path, "dataset spec file");
  gen->add_option("--out", out, "output dataset directory")->required();
  add_common(gen);

  auto* train = app.add_subcommand("train", "train a phase or the full pipeline");
  train->add_option("--out", out, "output prefix");
  train->add_option("--data", data, "dataset directory");
  train->add_option("--weights", weights, "warm start weights");
  train->add_option("--task", task, "smile | attributes | va");
  train->add_option("--phase", phase, "detection | analysis");
  train->add_flag("--pipeline", pipeline, "run the four-step pipeline");
  add_common(train);

  auto* eval = app.add_subcommand("eval", "evaluate weights on a dataset");
  eval->add_option("--weights", weights, "weights file");
  eval->add_option("--data", data, "dataset directory");
  eval->add_option("--task", task, "smile | attributes | va");
  eval->add_option("--out", out, "also write the report as CSV here");
  add_common(eval);

  auto* predict = app.add_subcommand("predict", "detect faces on one image");
  predict->add_option("--weights", weights, "weights file");
  predict->add_option("--image", image_path, "input PPM image");
  predict->add_option("--out", out, "detections file");
  predict->add_flag("--dump-heatmaps", dump, "also write heatmap PGMs next to --out");
  add_common(predict);

  auto* selftest = app.add_subcommand("selftest", "run built-in gradient and oracle checks");
  add_common(selftest);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) {
      require_file(config_path, "config");
      cfg = load_run_config(config_path);
    }
    // flags override file values
    if (!seed_str.empty()) apply_run_key(cfg, "seed", seed_str);
    if (!threads_str.empty()) apply_run_key(cfg, "threads", threads_str);
    if (!out.empty()) apply_run_key(cfg, "out", out);
    if (!weights.empty()) apply_run_key(cfg, "weights", weights);
    if (!data.empty()) apply_run_key(cfg, "data", data);
    if (!task.empty()) apply_run_key(cfg, "task", task);
    if (!phase.empty()) apply_run_key(cfg, "phase", phase);
    if (pipeline) cfg.pipeline = true;

    if (gen->parsed()) {
      log_header("gen");
      return run_gen(spec_path, cfg, !seed_str.empty());
    }
    if (train->parsed()) {
      log_header("train");
      return run_train(cfg);
    }
    if (eval->parsed()) {
      log_header("eval");
      return run_eval(cfg);
    }
    if (predict->parsed()) {
      log_header("predict");
      return run_predict(cfg, image_path, dump);
    }
    log_header("selftest");
    apply_threads(cfg.threads);
    return run_selftest(cfg.seed);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (auto& c : msg) {
      if (c == '\n') c = ' ';
    }
    std::fprintf(stderr, "error: %s\n", msg.c_str());
    return 1;
  }
}
