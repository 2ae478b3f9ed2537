#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fssd/data.hpp"
#include "testing.hpp"

using namespace fssd;
using fssd::testing::near;

namespace {

SyntheticSpec tiny_spec() {
  SyntheticSpec spec;
  spec.num_train = 6;
  spec.num_val = 1;
  spec.num_test = 2;
  spec.max_faces = 2;
  spec.seed = 77;
  return spec;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("generation is deterministic in the seed") {
  auto spec = tiny_spec();
  auto a = generate(spec);
  auto b = generate(spec);
  REQUIRE(a.images.size() == 9);
  for (size_t i = 0; i < a.images.size(); ++i) {
    CHECK(a.images[i].id == b.images[i].id);
    CHECK(a.images[i].image.pixels == b.images[i].image.pixels);
    REQUIRE(a.images[i].faces.size() == b.images[i].faces.size());
    for (size_t f = 0; f < a.images[i].faces.size(); ++f) {
      CHECK(a.images[i].faces[f].box.cx == b.images[i].faces[f].box.cx);
      CHECK(a.images[i].faces[f].valence == b.images[i].faces[f].valence);
      CHECK(a.images[i].faces[f].attributes == b.images[i].faces[f].attributes);
    }
  }
  spec.seed = 78;
  auto c = generate(spec);
  CHECK(a.images[0].image.pixels != c.images[0].image.pixels);
}

TEST_CASE("labels derive exactly from style parameters") {
  FaceStyle s;
  s.curvature = 1.0;
  s.openness = 1.0;
  auto l = labels_from_style(s);
  CHECK(l.smile == 1);
  CHECK(l.valence == 1.0);
  CHECK(l.arousal == 1.0);
  s.curvature = -0.25;
  s.openness = 0.0;
  l = labels_from_style(s);
  CHECK(l.smile == 0);
  CHECK(l.valence == -0.25);
  CHECK(l.arousal == -1.0);
  s.curvature = 0.0;
  CHECK(labels_from_style(s).smile == 0);
}

TEST_CASE("dataset labels replay from the per-image draw streams") {
  auto spec = tiny_spec();
  auto ds = generate(spec);
  for (size_t i = 0; i < ds.images.size(); ++i) {
    Rng face_rng(derive_seed(spec.seed, 2 * static_cast<std::uint64_t>(i)));
    auto placed = sample_faces(spec, face_rng);
    REQUIRE(placed.size() == ds.images[i].faces.size());
    for (size_t f = 0; f < placed.size(); ++f) {
      const auto& gt = ds.images[i].faces[f];
      auto labels = labels_from_style(placed[f].style);
      CHECK(gt.box.cx == placed[f].box.cx);
      CHECK(gt.box.w == placed[f].box.w);
      CHECK(gt.smile == labels.smile);
      CHECK(gt.valence == labels.valence);
      CHECK(gt.arousal == labels.arousal);
      CHECK(gt.attributes == placed[f].style.attribute_bits);
    }
  }
}

TEST_CASE("faces stay inside the frame, square, and nearly disjoint") {
  auto spec = tiny_spec();
  spec.num_train = 20;
  spec.max_faces = 3;
  auto ds = generate(spec);
  for (const auto& ai : ds.images) {
    for (size_t f = 0; f < ai.faces.size(); ++f) {
      const auto& b = ai.faces[f].box;
      CHECK(b.w == b.h);
      CHECK(b.cx - b.w / 2 >= 0.0);
      CHECK(b.cx + b.w / 2 <= 1.0);
      CHECK(b.cy - b.h / 2 >= 0.0);
      CHECK(b.cy + b.h / 2 <= 1.0);
      CHECK(b.w >= spec.min_face_size);
      CHECK(b.w <= spec.max_face_size);
      for (size_t g = 0; g < f; ++g) {
        CHECK(iou(b, ai.faces[g].box) <= 0.1);
      }
      CHECK(ai.faces[f].valence >= -1.0);
      CHECK(ai.faces[f].valence <= 1.0);
      CHECK(ai.faces[f].arousal >= -1.0);
      CHECK(ai.faces[f].arousal <= 1.0);
      CHECK(ai.faces[f].attributes < 256);
    }
  }
}

TEST_CASE("a zero-face spec yields empty ground truth") {
  auto spec = tiny_spec();
  spec.min_faces = 0;
  spec.max_faces = 0;
  auto ds = generate(spec);
  for (const auto& ai : ds.images) CHECK(ai.faces.empty());
}

TEST_CASE("pixels are quantized to 255ths and in range") {
  auto spec = tiny_spec();
  spec.num_train = 2;
  spec.num_val = 0;
  spec.num_test = 0;
  auto ds = generate(spec);
  for (float v : ds.images[0].image.pixels) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
    double scaled = static_cast<double>(v) * 255.0;
    CHECK(near(scaled, std::round(scaled), 1e-4));
  }
}

TEST_CASE("the marker ring recovers the face box") {
  SyntheticSpec spec;
  spec.num_train = 8;
  spec.num_val = 0;
  spec.num_test = 0;
  spec.min_faces = 1;
  spec.max_faces = 1;
  spec.min_face_size = 0.3;
  spec.max_face_size = 0.6;
  spec.seed = 5;
  auto ds = generate(spec);
  for (const auto& ai : ds.images) {
    auto found = marker_bounding_box(ai.image);
    REQUIRE(found.has_value());
    CHECK(iou(*found, ai.faces[0].box) >= 0.95);
  }
  // background-only images carry no marker pixels
  spec.min_faces = 0;
  spec.max_faces = 0;
  auto empty = generate(spec);
  CHECK(!marker_bounding_box(empty.images[0].image).has_value());
}

TEST_CASE("split bookkeeping") {
  auto ds = generate(tiny_spec());
  CHECK(ds.ids_of(Split::train) == std::vector<int>{0, 1, 2, 3, 4, 5});
  CHECK(ds.ids_of(Split::val) == std::vector<int>{6});
  CHECK(ds.ids_of(Split::test) == std::vector<int>{7, 8});
}

TEST_CASE("statistics match hand arithmetic and a two-pass oracle") {
  Dataset toy;
  toy.images.resize(1);
  toy.splits = {Split::train};
  toy.images[0].id = "toy";
  toy.images[0].image = make_image(1, 2);
  // channel means (0.25, 0.45, 0.65), stds (0.15, 0.05, 0.25)
  toy.images[0].image.at(0, 0, 0) = 0.1f;
  toy.images[0].image.at(0, 0, 1) = 0.4f;
  toy.images[0].image.at(1, 0, 0) = 0.4f;
  toy.images[0].image.at(1, 0, 1) = 0.5f;
  toy.images[0].image.at(2, 0, 0) = 0.4f;
  toy.images[0].image.at(2, 0, 1) = 0.9f;
  auto stats = compute_stats(toy);
  CHECK(near(stats.mean[0], 0.25, 1e-7));
  CHECK(near(stats.stddev[0], 0.15, 1e-7));
  CHECK(near(stats.mean[1], 0.45, 1e-7));
  CHECK(near(stats.stddev[1], 0.05, 1e-7));
  CHECK(near(stats.mean[2], 0.65, 1e-7));
  CHECK(near(stats.stddev[2], 0.25, 1e-7));

  auto ds = generate(tiny_spec());
  auto streaming = compute_stats(ds);
  for (int c = 0; c < 3; ++c) {
    double sum = 0;
    std::int64_t n = 0;
    for (const auto& ai : ds.images) {
      const float* plane =
          ai.image.pixels.data() + static_cast<size_t>(c) * ai.image.height * ai.image.width;
      for (int i = 0; i < ai.image.height * ai.image.width; ++i, ++n) sum += plane[i];
    }
    double mean = sum / static_cast<double>(n);
    double acc = 0;
    for (const auto& ai : ds.images) {
      const float* plane =
          ai.image.pixels.data() + static_cast<size_t>(c) * ai.image.height * ai.image.width;
      for (int i = 0; i < ai.image.height * ai.image.width; ++i) {
        acc += (plane[i] - mean) * (plane[i] - mean);
      }
    }
    double stddev = std::sqrt(acc / static_cast<double>(n));
    CHECK(near(streaming.mean[static_cast<size_t>(c)], mean, 1e-12));
    CHECK(near(streaming.stddev[static_cast<size_t>(c)], stddev, 1e-12));
  }
}

TEST_CASE("constant images break normalization loudly") {
  Dataset flat;
  flat.images.resize(2);
  flat.splits = {Split::train, Split::train};
  for (auto& ai : flat.images) {
    ai.id = "flat";
    ai.image = make_image(4, 4);
    for (auto& v : ai.image.pixels) v = 0.5f;
  }
  CHECK_THROWS_AS(compute_stats(flat), Error);
  Dataset none;
  CHECK_THROWS_AS(compute_stats(none), Error);
}

TEST_CASE("ppm files round trip bit for bit") {
  Rng rng(13);
  auto img = make_image(7, 5);
  for (auto& v : img.pixels) {
    v = static_cast<float>(rng.uniform_int(0, 255) / 255.0);
  }
  save_ppm(img, "test_data_img.ppm");
  auto back = load_ppm("test_data_img.ppm");
  CHECK(back.width == 5);
  CHECK(back.height == 7);
  CHECK(back.pixels == img.pixels);
  std::filesystem::remove("test_data_img.ppm");
}

TEST_CASE("datasets round trip through disk unchanged") {
  auto ds = generate(tiny_spec());
  const std::string dir = "test_data_ds";
  save_dataset(ds, dir);
  auto back = load_dataset(dir);
  CHECK(back.num_attributes == ds.num_attributes);
  REQUIRE(back.images.size() == ds.images.size());
  for (size_t i = 0; i < ds.images.size(); ++i) {
    CHECK(back.images[i].id == ds.images[i].id);
    CHECK(back.splits[i] == ds.splits[i]);
    CHECK(back.images[i].image.pixels == ds.images[i].image.pixels);
    REQUIRE(back.images[i].faces.size() == ds.images[i].faces.size());
    for (size_t f = 0; f < ds.images[i].faces.size(); ++f) {
      const auto& a = ds.images[i].faces[f];
      const auto& b = back.images[i].faces[f];
      CHECK(a.box.cx == b.box.cx);
      CHECK(a.box.cy == b.box.cy);
      CHECK(a.box.w == b.box.w);
      CHECK(a.box.h == b.box.h);
      CHECK(a.smile == b.smile);
      CHECK(a.attributes == b.attributes);
      CHECK(a.valence == b.valence);
      CHECK(a.arousal == b.arousal);
    }
  }
  // a second save writes byte-identical files
  const std::string dir2 = "test_data_ds2";
  save_dataset(back, dir2);
  namespace fs = std::filesystem;
  CHECK(slurp(fs::path(dir) / "manifest.txt") == slurp(fs::path(dir2) / "manifest.txt"));
  CHECK(slurp(fs::path(dir) / "annotations.txt") == slurp(fs::path(dir2) / "annotations.txt"));
  CHECK(slurp(fs::path(dir) / "images" / "img_00000.ppm") ==
        slurp(fs::path(dir2) / "images" / "img_00000.ppm"));
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("malformed dataset files are reported") {
  namespace fs = std::filesystem;
  auto spec = tiny_spec();
  spec.num_train = 1;
  spec.num_val = 0;
  spec.num_test = 0;
  auto ds = generate(spec);
  const std::string dir = "test_data_bad";
  save_dataset(ds, dir);

  fs::rename(fs::path(dir) / "annotations.txt", fs::path(dir) / "annotations.bak");
  CHECK_THROWS_AS(load_dataset(dir), Error);
  fs::rename(fs::path(dir) / "annotations.bak", fs::path(dir) / "annotations.txt");

  // truncate the image file
  auto ppm_path = fs::path(dir) / "images" / "img_00000.ppm";
  auto bytes = slurp(ppm_path);
  {
    std::ofstream os(ppm_path, std::ios::binary | std::ios::trunc);
    os << bytes.substr(0, bytes.size() / 2);
  }
  CHECK_THROWS_AS(load_dataset(dir), Error);
  {
    std::ofstream os(ppm_path, std::ios::binary | std::ios::trunc);
    os << "P5\n1 1\n255\n x";
  }
  CHECK_THROWS_AS(load_ppm(ppm_path.string()), Error);
  CHECK_THROWS_AS(load_dataset("no_such_dir_anywhere"), Error);
  fs::remove_all(dir);
}

TEST_CASE("image tensor conversions preserve values") {
  auto spec = tiny_spec();
  spec.num_train = 1;
  spec.num_val = 0;
  spec.num_test = 0;
  auto ds = generate(spec);
  auto t = image_to_tensor<double>(ds.images[0].image);
  CHECK(t.shape() == Shape{3, 300, 300});
  auto back = tensor_to_image(t);
  CHECK(back.pixels == ds.images[0].image.pixels);
  auto tf = image_to_tensor<float>(ds.images[0].image);
  CHECK(static_cast<float>(t.values()[500]) == tf.values()[500]);
}

TEST_CASE("spec validation") {
  SyntheticSpec spec;
  spec.num_train = 0;
  spec.num_val = 0;
  spec.num_test = 0;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = SyntheticSpec{};
  spec.min_faces = 3;
  spec.max_faces = 1;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = SyntheticSpec{};
  spec.max_face_size = 1.2;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec = SyntheticSpec{};
  spec.num_attributes = 9;
  CHECK_THROWS_AS(spec.validate(), Error);
}
