#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fssd/anchors.hpp"
#include "fssd/rng.hpp"
#include "fssd/tensor.hpp"

namespace fssd {

// Planar RGB raster, values in [0,1]. Generated images are quantized to
// multiples of 1/255 so PPM round trips are exact.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;  // [3, height, width]

  float& at(int c, int y, int x) {
    return pixels[static_cast<size_t>((c * height + y) * width + x)];
  }
  float at(int c, int y, int x) const {
    return pixels[static_cast<size_t>((c * height + y) * width + x)];
  }
};

Image make_image(int height, int width);

struct GtFace {
  Box box;  // square, normalized coordinates
  int smile = 0;
  std::uint64_t attributes = 0;  // bit a = attribute a present
  double valence = 0;
  double arousal = 0;
};

struct AnnotatedImage {
  std::string id;
  Image image;
  std::vector<GtFace> faces;
};

enum class Split { train, val, test };

const char* split_name(Split s);
Split split_from_name(const std::string& s);

struct Dataset {
  std::vector<AnnotatedImage> images;
  std::vector<Split> splits;  // parallel to images
  int num_attributes = 8;

  std::vector<int> ids_of(Split s) const;
};

struct SyntheticSpec {
  int num_train = 64;
  int num_val = 0;
  int num_test = 32;
  int min_faces = 1;
  int max_faces = 2;
  double min_face_size = 0.25;  // box side as a fraction of the image
  double max_face_size = 0.55;
  int num_attributes = 8;
  std::uint64_t seed = 0;

  void validate() const;
  int num_images() const { return num_train + num_val + num_test; }
};

// Style parameters of one schematic face. Labels derive from these exactly,
// so ground truth is noise free by construction.
struct FaceStyle {
  double curvature = 0;   // mouth curvature in [-1,1], positive bends up
  double openness = 0.5;  // eye/mouth openness in [0,1]
  std::uint64_t attribute_bits = 0;
  std::array<double, 3> skin = {0.8, 0.65, 0.5};
};

struct FaceLabels {
  int smile = 0;
  double valence = 0;
  double arousal = 0;
};

FaceLabels labels_from_style(const FaceStyle& style);

struct PlacedFace {
  Box box;
  FaceStyle style;
};

// Placement and style sampling for one image; the renderer consumes the
// result. Exposed so tests can replay the exact per-image draw sequence.
std::vector<PlacedFace> sample_faces(const SyntheticSpec& spec, Rng& rng);

// Per-image draw streams: faces use derive_seed(seed, 2*i), the background
// uses derive_seed(seed, 2*i+1).
Dataset generate(const SyntheticSpec& spec);

struct DatasetStats {
  std::array<double, 3> mean = {0, 0, 0};
  std::array<double, 3> stddev = {0, 0, 0};
};

// Population mean/std per channel over every pixel of every image.
DatasetStats compute_stats(const Dataset& dataset);

// Directory layout: manifest.txt, annotations.txt, images/<id>.ppm.
void save_dataset(const Dataset& dataset, const std::string& dir);
Dataset load_dataset(const std::string& dir);

void save_ppm(const Image& image, const std::string& path);
Image load_ppm(const std::string& path);

// The magenta ring drawn at every face's box boundary; augment tests locate
// faces after geometric transforms by scanning for it.
bool is_marker_pixel(float r, float g, float b);
std::optional<Box> marker_bounding_box(const Image& image);

template <typename T>
Tensor<T> image_to_tensor(const Image& image);
template <typename T>
Image tensor_to_image(const Tensor<T>& t);

}  // namespace fssd
