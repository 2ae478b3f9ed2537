#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "fssd/model.hpp"
#include "testing.hpp"

using namespace fssd;

namespace {

Tensor<double> test_image(std::uint64_t seed) {
  Rng rng(seed);
  auto img = Tensor<double>::zeros({3, kInputSide, kInputSide});
  for (auto& v : img.values()) v = rng.uniform01();
  return img;
}

Tensor<double> volume_norm(Tape<double>& tape, std::vector<HeatmapVolume<double>>& vols,
                           bool detection, bool analysis) {
  auto acc = Tensor<double>::scalar(0.0);
  for (auto& v : vols) {
    if (detection) {
      acc = add(tape, acc, sum(tape, square(tape, v.face)));
      acc = add(tape, acc, sum(tape, square(tape, v.offsets)));
    }
    if (analysis) {
      acc = add(tape, acc, sum(tape, square(tape, v.tasks)));
    }
  }
  return acc;
}

}  // namespace

TEST_CASE("six scales with the right plane counts for several head widths") {
  const std::array<int, kNumScales> sides = {37, 18, 9, 5, 3, 1};
  for (int n : {1, 2, 40}) {
    HeadConfig head;
    head.num_task_channels = n;
    head.kind = n == 2 ? TaskKind::regression : (n == 1 ? TaskKind::binary : TaskKind::multi_binary);
    auto model = FaceSSDModel<double>::build(head, 0.125, 7);
    Tape<double> tape(false);
    auto vols = model.forward(tape, test_image(3));
    REQUIRE(vols.size() == kNumScales);
    for (int s = 0; s < kNumScales; ++s) {
      auto& v = vols[static_cast<size_t>(s)];
      int side = sides[static_cast<size_t>(s)];
      CHECK(v.scale == s);
      CHECK(v.face.shape() == Shape{side, side});
      CHECK(v.offsets.shape() == Shape{4, side, side});
      CHECK(v.tasks.shape() == Shape{n, side, side});
    }
  }
}

TEST_CASE("face maps are sigmoid activated, offsets stay linear") {
  auto model = FaceSSDModel<double>::build(HeadConfig::smile(), 0.125, 11);
  Tape<double> tape(false);
  auto vols = model.forward(tape, test_image(5));
  for (auto& v : vols) {
    for (double x : v.face.values()) {
      CHECK(x > 0.0);
      CHECK(x < 1.0);
    }
    CHECK(v.tasks.values()[0] > 0.0);
    CHECK(v.tasks.values()[0] < 1.0);
  }
  auto va = FaceSSDModel<double>::build(HeadConfig::valence_arousal(), 0.125, 11);
  auto va_vols = va.forward(tape, test_image(5));
  bool any_outside_unit = false;
  for (auto& v : va_vols) {
    for (double x : v.tasks.values()) {
      if (x <= 0.0 || x >= 1.0) any_outside_unit = true;
    }
  }
  CHECK(any_outside_unit);
}

TEST_CASE("head config validation") {
  HeadConfig bad = HeadConfig::smile();
  bad.num_task_channels = 2;
  CHECK_THROWS_AS(FaceSSDModel<double>::build(bad, 0.125, 0), Error);
  HeadConfig va = HeadConfig::valence_arousal();
  va.num_task_channels = 3;
  CHECK_THROWS_AS(FaceSSDModel<double>::build(va, 0.125, 0), Error);
  CHECK_THROWS_AS(FaceSSDModel<double>::build(HeadConfig::smile(), 0.0, 0), Error);
  CHECK_THROWS_AS(FaceSSDModel<double>::build(HeadConfig::smile(), 1.5, 0), Error);
}

TEST_CASE("channel scaling rounds up and never hits zero") {
  auto model = FaceSSDModel<double>::build(HeadConfig::smile(), 0.125, 1);
  auto params = model.parameters();
  // first trunk conv: 64/8 = 8 kernels over 3 input channels
  CHECK(params[0].name == "trunk.g1.conv1.w");
  CHECK(params[0].tensor.shape() == Shape{8, 3, 3, 3});
  // a 1/100 scale would give 64*0.01 = 0.64, ceil to 1
  auto tiny = FaceSSDModel<double>::build(HeadConfig::smile(), 0.01, 1);
  CHECK(tiny.parameters()[0].tensor.shape() == Shape{1, 3, 3, 3});
  // head planes are semantic and never scaled
  for (auto& p : model.parameters()) {
    if (p.name == "det.head0.box.w") CHECK(p.tensor.dim(0) == 4);
    if (p.name == "det.head0.face.w") CHECK(p.tensor.dim(0) == 1);
  }
}

TEST_CASE("parameter names are unique and split by part") {
  auto model = FaceSSDModel<double>::build(HeadConfig::attributes(8), 0.125, 2);
  auto params = model.parameters();
  std::set<std::string> names;
  int trunk = 0, det = 0, ana = 0;
  for (auto& p : params) {
    CHECK(names.insert(p.name).second);
    if (p.part == ModelPart::trunk) ++trunk;
    if (p.part == ModelPart::detection) ++det;
    if (p.part == ModelPart::analysis) ++ana;
  }
  // trunk: 7 convs, branch: 16 convs, det heads: 12 tensors, ana heads: 6
  CHECK(trunk == 14);
  CHECK(det == 16 * 2 + 24);
  CHECK(ana == 16 * 2 + 12);
}

TEST_CASE("same seed builds identical weights, different seed does not") {
  auto a = FaceSSDModel<double>::build(HeadConfig::smile(), 0.125, 42);
  auto b = FaceSSDModel<double>::build(HeadConfig::smile(), 0.125, 42);
  auto c = FaceSSDModel<double>::build(HeadConfig::smile(), 0.125, 43);
  auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool all_equal = true, any_differ = false;
  for (size_t i = 0; i < pa.size(); ++i) {
    auto va = pa[i].tensor.values(), vb = pb[i].tensor.values(), vc = pc[i].tensor.values();
    for (size_t j = 0; j < va.size(); ++j) {
      if (va[j] != vb[j]) all_equal = false;
      if (va[j] != vc[j]) any_differ = true;
    }
  }
  CHECK(all_equal);
  CHECK(any_differ);
}

TEST_CASE("analysis weights cannot influence detection outputs") {
  auto model = FaceSSDModel<double>::build(HeadConfig::smile(), 0.125, 9);
  auto img = test_image(17);
  Tape<double> tape(false);
  auto before = model.forward(tape, img, ForwardMode::detection_only);
  for (auto& p : model.parameters()) {
    if (p.part == ModelPart::analysis) {
      for (auto& v : p.tensor.values()) v += 0.25;
    }
  }
  auto after = model.forward(tape, img, ForwardMode::detection_only);
  for (int s = 0; s < kNumScales; ++s) {
    auto fb = before[static_cast<size_t>(s)].face.values();
    auto fa = after[static_cast<size_t>(s)].face.values();
    for (size_t i = 0; i < fb.size(); ++i) CHECK(fb[i] == fa[i]);
  }
}

TEST_CASE("copying the detection branch is by value") {
  auto model = FaceSSDModel<double>::build(HeadConfig::smile(), 0.125, 13);
  model.copy_detection_to_analysis();
  auto params = model.parameters();
  auto find = [&](const std::string& name) -> Tensor<double>& {
    for (auto& p : params) {
      if (p.name == name) return p.tensor;
    }
    FSSD_FAIL("missing param ", name);
  };
  auto& det_w = find("det.g4.conv1.w");
  auto& ana_w = find("ana.g4.conv1.w");
  auto dv = det_w.values();
  auto av = ana_w.values();
  for (size_t i = 0; i < dv.size(); ++i) CHECK(dv[i] == av[i]);
  // later detection updates must not leak into analysis
  dv[0] += 1.0;
  CHECK(av[0] != dv[0]);
  // heads keep their own weights
  Tape<double> tape(false);
  auto img = test_image(19);
  auto vols = model.forward(tape, img);
  CHECK(vols[0].face.values()[0] != vols[0].tasks.values()[0]);
}

TEST_CASE("frozen parts receive no gradient") {
  auto model = FaceSSDModel<double>::build(HeadConfig::smile(), 0.125, 23);
  model.set_frozen(ModelPart::trunk, true);
  model.set_frozen(ModelPart::detection, true);
  CHECK(model.frozen(ModelPart::trunk));
  CHECK(!model.frozen(ModelPart::analysis));
  auto img = test_image(29);
  Tape<double> tape;
  auto vols = model.forward(tape, img, ForwardMode::analysis_only);
  auto loss = volume_norm(tape, vols, false, true);
  tape.backward(loss);
  for (auto& p : model.parameters()) {
    if (p.part == ModelPart::analysis) {
      CHECK(p.tensor.grad_allocated());
    } else {
      CHECK(!p.tensor.grad_allocated());
      CHECK(!p.tensor.requires_grad());
    }
  }
  model.set_frozen(ModelPart::trunk, false);
  model.set_frozen(ModelPart::detection, false);
  for (auto& p : model.parameters()) CHECK(p.tensor.requires_grad());
}

TEST_CASE("full forward trains both branches through the shared trunk") {
  auto model = FaceSSDModel<double>::build(HeadConfig::smile(), 0.125, 31);
  auto img = test_image(37);
  Tape<double> tape;
  auto vols = model.forward(tape, img, ForwardMode::full);
  auto loss = volume_norm(tape, vols, true, true);
  tape.backward(loss);
  for (auto& p : model.parameters()) {
    CHECK(p.tensor.grad_allocated());
    bool any_nonzero = false;
    for (double g : p.tensor.grad()) {
      if (g != 0.0) any_nonzero = true;
    }
    CHECK(any_nonzero);
  }
}

TEST_CASE("weights survive a save and load bit for bit") {
  auto model = FaceSSDModel<double>::build(HeadConfig::attributes(8), 0.25, 41);
  const std::string path = "test_model_weights.bin";
  model.save_weights(path, {{"mean_r", "0.5"}, {"std_r", "0.25"}});
  auto loaded = FaceSSDModel<double>::load_weights(path);
  CHECK(loaded.model.head().num_task_channels == 8);
  CHECK(loaded.model.head().kind == TaskKind::multi_binary);
  CHECK(loaded.model.channel_scale() == 0.25);
  REQUIRE(loaded.extra.size() == 2);
  CHECK(loaded.extra[0].first == "mean_r");
  CHECK(loaded.extra[0].second == "0.5");
  auto pa = model.parameters();
  auto pb = loaded.model.parameters();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    auto va = pa[i].tensor.values(), vb = pb[i].tensor.values();
    REQUIRE(va.size() == vb.size());
    for (size_t j = 0; j < va.size(); ++j) CHECK(va[j] == vb[j]);
  }
  // saving the loaded model reproduces the file byte for byte
  const std::string path2 = "test_model_weights2.bin";
  loaded.model.save_weights(path2, loaded.extra);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("corrupt weights files are rejected") {
  auto model = FaceSSDModel<double>::build(HeadConfig::smile(), 0.125, 43);
  const std::string path = "test_model_weights_bad.bin";
  model.save_weights(path);
  {
    std::ofstream os(path, std::ios::binary | std::ios::app);
    os << "x";
  }
  CHECK_THROWS_AS(FaceSSDModel<double>::load_weights(path), Error);
  {
    std::ifstream is(path, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    is.close();
    all = all.substr(0, all.size() / 2);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << all;
  }
  CHECK_THROWS_AS(FaceSSDModel<double>::load_weights(path), Error);
  {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << "NOT-WEIGHTS\n";
  }
  CHECK_THROWS_AS(FaceSSDModel<double>::load_weights(path), Error);
  std::remove(path.c_str());
}

TEST_CASE("float and double models share the same structure") {
  auto f = FaceSSDModel<float>::build(HeadConfig::smile(), 0.125, 47);
  auto d = FaceSSDModel<double>::build(HeadConfig::smile(), 0.125, 47);
  auto pf = f.parameters();
  auto pd = d.parameters();
  REQUIRE(pf.size() == pd.size());
  for (size_t i = 0; i < pf.size(); ++i) {
    CHECK(pf[i].name == pd[i].name);
    CHECK(pf[i].tensor.shape() == pd[i].tensor.shape());
  }
}

TEST_CASE("bad input shapes are rejected") {
  auto model = FaceSSDModel<double>::build(HeadConfig::smile(), 0.125, 53);
  Tape<double> tape(false);
  auto bad = Tensor<double>::zeros({3, 200, 300});
  CHECK_THROWS_AS(model.forward(tape, bad), Error);
  auto bad2 = Tensor<double>::zeros({1, 300, 300});
  CHECK_THROWS_AS(model.forward(tape, bad2), Error);
}
