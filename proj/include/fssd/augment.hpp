#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fssd/data.hpp"
#include "fssd/rng.hpp"
#include "fssd/tensor.hpp"

namespace fssd {

enum class Mechanism { shrink, crop, gamma, has };
enum class HasMode { coarse, fine };

const char* mechanism_name(Mechanism m);

struct AugmentConfig {
  double flip_prob = 0.5;
  std::vector<Mechanism> mechanisms = {Mechanism::shrink, Mechanism::crop, Mechanism::gamma,
                                       Mechanism::has};
  HasMode has_mode = HasMode::coarse;
  double has_apply_prob = 0.5;   // gate: hide-and-seek runs on about half the samples
  double has_hide_prob = 0.25;
  std::vector<int> coarse_divisions = {3, 4, 5, 6};
  std::vector<int> fine_divisions = {16, 32, 44, 56};
  double gamma_min = 0.5;  // sampled log-uniformly
  double gamma_max = 2.0;
  double shrink_min = 0.5;
  double shrink_max = 1.0;
  double crop_min = 0.6;  // window side as a fraction of the image side
  double crop_max = 1.0;

  // Valence/arousal training sees only minor size variation.
  static AugmentConfig valence_arousal_preset() {
    AugmentConfig cfg;
    cfg.shrink_min = 0.9;
    return cfg;
  }

  const std::vector<int>& divisions() const {
    return has_mode == HasMode::coarse ? coarse_divisions : fine_divisions;
  }

  void validate() const;
};

// Pixel-space transforms. All are pure and keep the 3x300x300 shape; the
// geometric ones move ground truth boxes along with the pixels.

AnnotatedImage hflip(const AnnotatedImage& sample);

// Scales the image down by factor and pastes it at pixel offset (ox, oy) on
// a canvas filled with the dataset mean color.
AnnotatedImage shrink(const AnnotatedImage& sample, double factor, int offset_x, int offset_y,
                      const std::array<double, 3>& mean_rgb);

// Takes the square window with top-left (x0, y0) and the given side, all as
// fractions of the image, and rescales it to full size. Faces keep their
// labels when their center lies inside the window and at least half their
// area stays visible; kept boxes are clipped to the window.
AnnotatedImage crop(const AnnotatedImage& sample, double x0, double y0, double side);

Image gamma_correct(const Image& image, const std::array<double, 3>& gammas);

// Splits the image into divisions x divisions patches (the last row and
// column absorb the remainder) and independently replaces each with the
// mean color at hide_prob. One Bernoulli draw per patch, row major.
Image hide_and_seek(const Image& image, int divisions, double hide_prob,
                    const std::array<double, 3>& mean_rgb, Rng& rng);

Image resize_bilinear(const Image& image, int out_h, int out_w);

struct AugmentOutcome {
  AnnotatedImage sample;
  bool flipped = false;
  Mechanism mechanism = Mechanism::shrink;
  bool has_applied = false;  // gating result when mechanism == has
};

// Flip draw, mechanism draw, then the mechanism's own draws, in that fixed
// order off the provided stream.
AugmentOutcome augment_sample(const AnnotatedImage& sample, const AugmentConfig& cfg,
                              const DatasetStats& stats, Rng& rng);

// Per-channel (v - mean) / std; applied after all pixel-space transforms.
template <typename T>
Tensor<T> normalize_image(const Tensor<T>& image, const DatasetStats& stats);
template <typename T>
Tensor<T> denormalize_image(const Tensor<T>& image, const DatasetStats& stats);

}  // namespace fssd
