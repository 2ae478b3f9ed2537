// Built-in sanity suites behind the selftest subcommand: quick analytic
// values, property checks against the geometry and ranking contracts, finite
// difference gradient probes and serialization roundtrips. The test binaries
// carry the heavyweight brute-force oracles; this runs in seconds anywhere.
// Included from fssd_main.cpp inside its anonymous namespace.

double fd_worst_error(std::vector<Tensor<double>>& params,
                      const std::function<Tensor<double>(Tape<double>&)>& build) {
  Tape<double> tape;
  auto loss = build(tape);
  for (auto& p : params) p.zero_grad();
  if (!loss.is_leaf()) tape.backward(loss);

  std::vector<std::vector<double>> analytic;
  for (auto& p : params) {
    auto g = p.grad();
    analytic.emplace_back(g.begin(), g.end());
  }
  auto eval = [&]() {
    Tape<double> t(false);
    return static_cast<double>(build(t).values()[0]);
  };
  const double step = 1e-5;
  double worst = 0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto v = params[pi].values();
    for (size_t i = 0; i < v.size(); ++i) {
      double saved = v[i];
      v[i] = saved + step;
      double up = eval();
      v[i] = saved - step;
      double down = eval();
      v[i] = saved;
      double fd = (up - down) / (2 * step);
      double err = std::abs(fd - analytic[pi][i]) / std::max(1.0, std::abs(analytic[pi][i]));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

Tensor<double> uniform_tensor(Shape shape, Rng& rng, double lo, double hi) {
  auto t = Tensor<double>::zeros(shape);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  t.set_requires_grad(true);
  return t;
}

Box random_box(Rng& rng) {
  double w = rng.uniform(0.1, 0.5);
  double h = rng.uniform(0.1, 0.5);
  return {rng.uniform(w / 2, 1 - w / 2), rng.uniform(h / 2, 1 - h / 2), w, h};
}

int run_selftest(std::uint64_t seed) {
  int suites = 0;
  auto pass = [&](const char* name) {
    ++suites;
    log_info(std::string("selftest: ") + name + " ok");
  };

  {
    FSSD_CHECK(std::abs(smooth_l1(0.0)) < 1e-9, "smooth_l1(0)");
    FSSD_CHECK(std::abs(smooth_l1(0.5) - 0.125) < 1e-9, "smooth_l1(0.5)");
    FSSD_CHECK(std::abs(smooth_l1(2.0) - 1.5) < 1e-9, "smooth_l1(2)");
    FSSD_CHECK(std::abs(bce(1, 0.5) - std::log(2.0)) < 1e-9, "bce(1,0.5)");
    Box b{0.4, 0.6, 0.2, 0.3};
    auto enc = encode_box(b, b);
    for (double e : enc) FSSD_CHECK(std::abs(e) < 1e-9, "identity encode is not zero");
    Tape<double> tape;
    auto l1 = Tensor<double>::scalar(3);
    auto l2 = Tensor<double>::scalar(4);
    auto total = multitask_total(tape, std::vector<Tensor<double>>{l1, l2}, {1.0, 1.0});
    FSSD_CHECK(std::abs(static_cast<double>(total.values()[0]) - 5.0) < 1e-9,
               "multitask((3,4),(1,1)) is not 5");
    pass("analytic values");
  }

  {
    Rng rng(derive_seed(seed, 0xA1));
    for (int trial = 0; trial < 300; ++trial) {
      Box gt = random_box(rng);
      Box anchor = random_box(rng);
      Box back = decode_box(encode_box(gt, anchor), anchor);
      FSSD_CHECK(std::abs(back.cx - gt.cx) < 1e-9 && std::abs(back.cy - gt.cy) < 1e-9 &&
                     std::abs(back.w - gt.w) < 1e-9 && std::abs(back.h - gt.h) < 1e-9,
                 "decode(encode) drifted");
    }
    pass("box roundtrip");
  }

  {
    Rng rng(derive_seed(seed, 0xA2));
    for (int trial = 0; trial < 300; ++trial) {
      int n = rng.uniform_int(0, 8);
      std::vector<Detection> cands;
      for (int i = 0; i < n; ++i) {
        Detection d;
        d.box = random_box(rng);
        d.face_score = rng.uniform(0.1, 1.0);
        d.scale = rng.uniform_int(0, 2);
        d.row = rng.uniform_int(0, 4);
        d.col = rng.uniform_int(0, 4);
        cands.push_back(d);
      }
      double overlap = rng.uniform(0.2, 0.8);
      auto kept = nms(cands, overlap);
      FSSD_CHECK(kept.size() <= cands.size(), "nms grew the set");
      for (size_t i = 0; i + 1 < kept.size(); ++i) {
        FSSD_CHECK(kept[i].face_score >= kept[i + 1].face_score, "nms output not sorted");
      }
      for (size_t i = 0; i < kept.size(); ++i) {
        for (size_t j = i + 1; j < kept.size(); ++j) {
          FSSD_CHECK(iou(kept[i].box, kept[j].box) < overlap, "kept boxes overlap");
        }
      }
      // every suppressed candidate overlaps some kept, not-lower-scored one
      for (const auto& c : cands) {
        bool survives = false;
        bool covered = false;
        for (const auto& k : kept) {
          if (k.scale == c.scale && k.row == c.row && k.col == c.col &&
              k.face_score == c.face_score) {
            survives = true;
          }
          if (k.face_score >= c.face_score && iou(k.box, c.box) >= overlap) covered = true;
        }
        FSSD_CHECK(survives || covered, "candidate vanished without a suppressor");
      }
    }
    pass("nms properties");
  }

  {
    Rng rng(derive_seed(seed, 0xA3));
    std::vector<ScoredOutcome> perfect = {{0.9, true}, {0.8, true}, {0.1, false}};
    FSSD_CHECK(std::abs(average_precision(perfect, 2) - 1.0) < 1e-9, "perfect ranking ap");
    std::vector<ScoredOutcome> hopeless = {{0.9, false}, {0.8, false}};
    FSSD_CHECK(average_precision(hopeless, 3) == 0.0, "all-miss ap");
    std::vector<ScoredOutcome> mixed = {{0.9, true}, {0.8, false}, {0.7, true}};
    FSSD_CHECK(std::abs(average_precision(mixed, 3) - (1.0 / 3 + (1.0 / 3) * (2.0 / 3))) < 1e-9,
               "hand-computed ap");
    for (int trial = 0; trial < 300; ++trial) {
      int n = rng.uniform_int(1, 9);
      std::vector<ScoredOutcome> outcomes;
      std::int64_t tp = 0;
      for (int i = 0; i < n; ++i) {
        bool hit = rng.bernoulli(0.5);
        tp += hit;
        outcomes.push_back({rng.uniform(0.0, 1.0), hit});
      }
      std::int64_t total_gt = tp + rng.uniform_int(0, 3);
      if (total_gt == 0) continue;
      double ap = average_precision(outcomes, total_gt);
      FSSD_CHECK(ap >= 0 && ap <= 1, "ap out of [0,1]");
      auto shuffled = outcomes;
      for (size_t i = shuffled.size(); i > 1; --i) {
        std::swap(shuffled[i - 1], shuffled[static_cast<size_t>(rng.uniform_int(
                                       0, static_cast<int>(i) - 1))]);
      }
      FSSD_CHECK(average_precision(shuffled, total_gt) == ap, "ap depends on input order");
    }
    pass("average precision");
  }

  {
    std::vector<double> o = {0.1, 0.5, 0.9};
    FSSD_CHECK(std::abs(equal_error_rate(o, o) - 0.5) < 1e-9, "identical distributions eer");
    FSSD_CHECK(equal_error_rate({0.8, 0.9}, {0.1, 0.2}) == 0.0, "separated eer");
    FSSD_CHECK(std::abs(equal_error_rate({0.4, 0.8}, {0.2, 0.6}) - 0.5) < 1e-9,
               "interpolated crossing eer");
    FSSD_CHECK(std::abs(equal_error_rate({0.2}, {0.8}) - 1.0) < 1e-9, "inverted pair eer");
    pass("equal error rate");
  }

  {
    Rng rng(derive_seed(seed, 0xA4));
    for (int trial = 0; trial < 300; ++trial) {
      int nd = rng.uniform_int(0, 6);
      int ng = rng.uniform_int(0, 6);
      std::vector<ScoredBox> dets;
      for (int i = 0; i < nd; ++i) dets.push_back({random_box(rng), rng.uniform(0.0, 1.0)});
      std::vector<Box> gts;
      for (int i = 0; i < ng; ++i) gts.push_back(random_box(rng));
      auto mr = match_detections_to_gt(dets, gts);
      std::vector<char> used(dets.size(), 0);
      int tp = 0;
      for (size_t g = 0; g < gts.size(); ++g) {
        int di = mr.det_of_gt[g];
        if (di < 0) continue;
        FSSD_CHECK(di < nd, "bad detection index");
        FSSD_CHECK(!used[static_cast<size_t>(di)], "detection claimed twice");
        used[static_cast<size_t>(di)] = 1;
        FSSD_CHECK(iou(dets[static_cast<size_t>(di)].box, gts[g]) >= 0.5,
                   "claimed pair under the iou floor");
      }
      for (const auto& o : mr.outcomes) tp += o.is_true_positive;
      FSSD_CHECK(tp <= std::min(nd, ng), "more hits than possible");
    }
    pass("matching properties");
  }

  {
    Rng rng(derive_seed(seed, 0xA5));
    for (int trial = 0; trial < 300; ++trial) {
      int n = rng.uniform_int(0, 9);
      std::vector<double> losses;
      for (int i = 0; i < n; ++i) losses.push_back(rng.uniform(0.0, 2.0));
      int num_pos = rng.uniform_int(0, 4);
      double ratio = rng.uniform(0.5, 4.0);
      auto picked = select_hard_negatives(losses, num_pos, ratio);
      size_t want = std::min<size_t>(static_cast<size_t>(std::floor(ratio * num_pos)),
                                     losses.size());
      FSSD_CHECK(picked.size() == want, "selection size off");
      // nothing unpicked beats anything picked
      double floor_loss = 2.1;
      for (int i : picked) floor_loss = std::min(floor_loss, losses[static_cast<size_t>(i)]);
      std::vector<char> in(losses.size(), 0);
      for (int i : picked) in[static_cast<size_t>(i)] = 1;
      for (size_t i = 0; i < losses.size(); ++i) {
        if (!in[i] && !picked.empty()) {
          FSSD_CHECK(losses[i] <= floor_loss, "harder negative left unpicked");
        }
      }
    }
    pass("hard negative selection");
  }

  {
    Rng rng(derive_seed(seed, 0xA6));
    ConvSpec spec{3, 3, 1, 1};
    auto layer = make_conv_layer<double>(2, spec, derive_seed(seed, 0xB0));
    auto x = uniform_tensor({2, 5, 5}, rng, -1, 1);
    std::vector<Tensor<double>> params = {x, layer.w, layer.b};
    auto sum_all = [](Tape<double>& tape, const Tensor<double>& y) {
      double raw = 0;
      for (double v : y.values()) raw += v;
      auto out = Tensor<double>::scalar(raw);
      Tensor<double> yy = y;
      tape.record({y}, out, [yy, out]() mutable {
        if (!wants_grad(yy)) return;
        double s = out.grad_data()[0];
        for (std::int64_t i = 0; i < yy.size(); ++i) yy.grad_data()[i] += s;
      });
      return out;
    };
    auto build = [&](Tape<double>& tape) {
      auto y = relu(tape, conv2d(tape, x, layer.w, layer.b, layer.spec));
      return sum_all(tape, maxpool2d(tape, y, PoolSpec{2, 2, 0}));
    };
    FSSD_CHECK(fd_worst_error(params, build) < 1e-4, "conv gradient check failed");
    pass("conv gradients");
  }

  {
    Rng rng(derive_seed(seed, 0xA7));
    DefaultBoxGrid grid{{2}, {0.5}};
    std::vector<Box> gts = {{0.3, 0.3, 0.45, 0.45}};
    auto assignment = match(gts, grid, 0.35);
    auto face = uniform_tensor({2, 2}, rng, 0.05, 0.95);
    auto off = uniform_tensor({4, 2, 2}, rng, -1, 1);
    auto tasks = uniform_tensor({1, 2, 2}, rng, 0.05, 0.95);
    std::vector<Tensor<double>> params = {face, off, tasks};
    std::vector<int> smiles = {1};
    auto build_face = [&](Tape<double>& tape) {
      std::vector<HeatmapVolume<double>> vols(1);
      vols[0].face = face;
      vols[0].offsets = off;
      vols[0].tasks = tasks;
      return face_loss(tape, vols, grid, assignment).loss;
    };
    FSSD_CHECK(fd_worst_error(params, build_face) < 1e-4, "face loss gradient check failed");
    auto build_smile = [&](Tape<double>& tape) {
      std::vector<HeatmapVolume<double>> vols(1);
      vols[0].face = face;
      vols[0].offsets = off;
      vols[0].tasks = tasks;
      return smile_loss(tape, vols, grid, assignment, smiles);
    };
    FSSD_CHECK(fd_worst_error(params, build_smile) < 1e-4, "smile loss gradient check failed");
    pass("loss gradients");
  }

  {
    namespace sfs = std::filesystem;
    auto dir = sfs::temp_directory_path() / "fssd_selftest";
    sfs::create_directories(dir);
    auto model = FaceSSDModel<double>::build(HeadConfig::smile(), 0.05, derive_seed(seed, 0xC0));
    auto path = (dir / "model.weights").string();
    model.save_weights(path);
    auto loaded = FaceSSDModel<double>::load_weights(path);
    auto a = model.parameters();
    auto b = loaded.model.parameters();
    FSSD_CHECK(a.size() == b.size(), "parameter count changed in the roundtrip");
    for (size_t i = 0; i < a.size(); ++i) {
      auto av = a[i].tensor.values();
      auto bv = b[i].tensor.values();
      FSSD_CHECK(std::equal(av.begin(), av.end(), bv.begin()), "weights roundtrip differs");
    }

    SyntheticSpec spec;
    spec.num_train = 2;
    spec.num_val = 0;
    spec.num_test = 1;
    spec.seed = derive_seed(seed, 0xC1);
    auto data = generate(spec);
    auto ddir = (dir / "data").string();
    save_dataset(data, ddir);
    auto back = load_dataset(ddir);
    FSSD_CHECK(back.images.size() == data.images.size(), "dataset size changed");
    for (size_t i = 0; i < data.images.size(); ++i) {
      FSSD_CHECK(back.images[i].id == data.images[i].id &&
                     back.images[i].image.pixels == data.images[i].image.pixels,
                 "dataset roundtrip differs");
    }
    sfs::remove_all(dir);
    pass("serialization roundtrips");
  }

  std::printf("selftest passed (%d suites)\n", suites);
  return 0;
}
