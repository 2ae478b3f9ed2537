#include "fssd/augment.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "fssd/check.hpp"

namespace fssd {

const char* mechanism_name(Mechanism m) {
  switch (m) {
    case Mechanism::shrink: return "shrink";
    case Mechanism::crop: return "crop";
    case Mechanism::gamma: return "gamma";
    case Mechanism::has: return "has";
  }
  return "?";
}

void AugmentConfig::validate() const {
  FSSD_CHECK(flip_prob >= 0 && flip_prob <= 1, "flip_prob out of [0,1]");
  FSSD_CHECK(has_apply_prob >= 0 && has_apply_prob <= 1, "has_apply_prob out of [0,1]");
  FSSD_CHECK(has_hide_prob >= 0 && has_hide_prob <= 1, "has_hide_prob out of [0,1]");
  FSSD_CHECK(!mechanisms.empty(), "mechanism set is empty");
  std::set<Mechanism> unique(mechanisms.begin(), mechanisms.end());
  FSSD_CHECK(unique.size() == mechanisms.size(), "mechanism set has duplicates");
  FSSD_CHECK(!coarse_divisions.empty() && !fine_divisions.empty(), "division set is empty");
  for (int d : coarse_divisions) FSSD_CHECK(d >= 1 && d <= 300, "bad division ", d);
  for (int d : fine_divisions) FSSD_CHECK(d >= 1 && d <= 300, "bad division ", d);
  FSSD_CHECK(gamma_min > 0 && gamma_max >= gamma_min, "bad gamma range");
  FSSD_CHECK(shrink_min > 0 && shrink_max >= shrink_min && shrink_max <= 1,
             "bad shrink range");
  FSSD_CHECK(crop_min > 0 && crop_max >= crop_min && crop_max <= 1, "bad crop range");
}

AnnotatedImage hflip(const AnnotatedImage& sample) {
  AnnotatedImage out;
  out.id = sample.id;
  const auto& img = sample.image;
  out.image = make_image(img.height, img.width);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        out.image.at(c, y, x) = img.at(c, y, img.width - 1 - x);
      }
    }
  }
  out.faces = sample.faces;
  for (auto& f : out.faces) f.box.cx = 1.0 - f.box.cx;
  return out;
}

Image resize_bilinear(const Image& image, int out_h, int out_w) {
  FSSD_CHECK(out_h > 0 && out_w > 0, "bad resize target ", out_h, "x", out_w);
  auto out = make_image(out_h, out_w);
  const double sy = static_cast<double>(image.height) / out_h;
  const double sx = static_cast<double>(image.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int y0c = std::clamp(y0, 0, image.height - 1);
    int y1c = std::clamp(y0 + 1, 0, image.height - 1);
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int x0c = std::clamp(x0, 0, image.width - 1);
      int x1c = std::clamp(x0 + 1, 0, image.width - 1);
      for (int c = 0; c < 3; ++c) {
        double v = (1 - wy) * ((1 - wx) * image.at(c, y0c, x0c) + wx * image.at(c, y0c, x1c)) +
                   wy * ((1 - wx) * image.at(c, y1c, x0c) + wx * image.at(c, y1c, x1c));
        out.at(c, y, x) = static_cast<float>(v);
      }
    }
  }
  return out;
}

AnnotatedImage shrink(const AnnotatedImage& sample, double factor, int offset_x, int offset_y,
                      const std::array<double, 3>& mean_rgb) {
  FSSD_CHECK(factor > 0 && factor <= 1, "shrink factor out of (0,1], got ", factor);
  const auto& img = sample.image;
  const int target_h = std::max(1, static_cast<int>(std::lround(img.height * factor)));
  const int target_w = std::max(1, static_cast<int>(std::lround(img.width * factor)));
  FSSD_CHECK(offset_x >= 0 && offset_x + target_w <= img.width && offset_y >= 0 &&
                 offset_y + target_h <= img.height,
             "shrink offset (", offset_x, ",", offset_y, ") puts the image out of frame");

  AnnotatedImage out;
  out.id = sample.id;
  out.image = make_image(img.height, img.width);
  for (int c = 0; c < 3; ++c) {
    float fill = static_cast<float>(mean_rgb[static_cast<size_t>(c)]);
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) out.image.at(c, y, x) = fill;
    }
  }
  Image scaled = (target_h == img.height && target_w == img.width)
                     ? img
                     : resize_bilinear(img, target_h, target_w);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < target_h; ++y) {
      for (int x = 0; x < target_w; ++x) {
        out.image.at(c, offset_y + y, offset_x + x) = scaled.at(c, y, x);
      }
    }
  }
  const double rx = static_cast<double>(target_w) / img.width;
  const double ry = static_cast<double>(target_h) / img.height;
  out.faces = sample.faces;
  for (auto& f : out.faces) {
    f.box.cx = f.box.cx * rx + static_cast<double>(offset_x) / img.width;
    f.box.cy = f.box.cy * ry + static_cast<double>(offset_y) / img.height;
    f.box.w *= rx;
    f.box.h *= ry;
  }
  return out;
}

AnnotatedImage crop(const AnnotatedImage& sample, double x0, double y0, double side) {
  FSSD_CHECK(side > 0 && x0 >= 0 && y0 >= 0 && x0 + side <= 1.0 + 1e-12 &&
                 y0 + side <= 1.0 + 1e-12,
             "crop window (", x0, ",", y0, ",", side, ") lies outside the image");
  const auto& img = sample.image;
  int px0 = static_cast<int>(std::lround(x0 * img.width));
  int py0 = static_cast<int>(std::lround(y0 * img.height));
  int pside = std::max(1, static_cast<int>(std::lround(side * img.width)));
  px0 = std::min(px0, img.width - pside);
  py0 = std::min(py0, img.height - pside);

  Image window = make_image(pside, pside);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < pside; ++y) {
      for (int x = 0; x < pside; ++x) {
        window.at(c, y, x) = img.at(c, py0 + y, px0 + x);
      }
    }
  }
  AnnotatedImage out;
  out.id = sample.id;
  out.image = (pside == img.width && pside == img.height)
                  ? window
                  : resize_bilinear(window, img.height, img.width);

  const double wx0 = static_cast<double>(px0) / img.width;
  const double wy0 = static_cast<double>(py0) / img.height;
  const double wside = static_cast<double>(pside) / img.width;
  for (const auto& f : sample.faces) {
    const Box& b = f.box;
    bool center_inside = b.cx >= wx0 && b.cx <= wx0 + wside && b.cy >= wy0 &&
                         b.cy <= wy0 + wside;
    if (!center_inside) continue;
    double inter_w = std::min(b.cx + b.w / 2, wx0 + wside) - std::max(b.cx - b.w / 2, wx0);
    double inter_h = std::min(b.cy + b.h / 2, wy0 + wside) - std::max(b.cy - b.h / 2, wy0);
    double visible = std::max(0.0, inter_w) * std::max(0.0, inter_h) / (b.w * b.h);
    if (visible < 0.5) continue;
    GtFace kept = f;
    double cx = (b.cx - wx0) / wside;
    double cy = (b.cy - wy0) / wside;
    double w = b.w / wside, h = b.h / wside;
    double lo_x = std::max(0.0, cx - w / 2), hi_x = std::min(1.0, cx + w / 2);
    double lo_y = std::max(0.0, cy - h / 2), hi_y = std::min(1.0, cy + h / 2);
    kept.box = {(lo_x + hi_x) / 2, (lo_y + hi_y) / 2, hi_x - lo_x, hi_y - lo_y};
    out.faces.push_back(kept);
  }
  return out;
}

Image gamma_correct(const Image& image, const std::array<double, 3>& gammas) {
  for (double g : gammas) FSSD_CHECK(g > 0, "gamma must be positive, got ", g);
  auto out = make_image(image.height, image.width);
  for (int c = 0; c < 3; ++c) {
    double g = gammas[static_cast<size_t>(c)];
    const float* src = image.pixels.data() + static_cast<size_t>(c) * image.height * image.width;
    float* dst = out.pixels.data() + static_cast<size_t>(c) * image.height * image.width;
    std::int64_t np = static_cast<std::int64_t>(image.height) * image.width;
    for (std::int64_t i = 0; i < np; ++i) {
      dst[i] = static_cast<float>(std::pow(static_cast<double>(src[i]), g));
    }
  }
  return out;
}

Image hide_and_seek(const Image& image, int divisions, double hide_prob,
                    const std::array<double, 3>& mean_rgb, Rng& rng) {
  FSSD_CHECK(divisions >= 1 && divisions <= std::min(image.height, image.width),
             "bad division count ", divisions);
  FSSD_CHECK(hide_prob >= 0 && hide_prob <= 1, "hide_prob out of [0,1]");
  Image out = image;
  const int base_h = image.height / divisions;
  const int base_w = image.width / divisions;
  for (int i = 0; i < divisions; ++i) {
    int y0 = i * base_h;
    int y1 = i == divisions - 1 ? image.height : (i + 1) * base_h;
    for (int j = 0; j < divisions; ++j) {
      int x0 = j * base_w;
      int x1 = j == divisions - 1 ? image.width : (j + 1) * base_w;
      if (!rng.bernoulli(hide_prob)) continue;
      for (int c = 0; c < 3; ++c) {
        float fill = static_cast<float>(mean_rgb[static_cast<size_t>(c)]);
        for (int y = y0; y < y1; ++y) {
          for (int x = x0; x < x1; ++x) out.at(c, y, x) = fill;
        }
      }
    }
  }
  return out;
}

AugmentOutcome augment_sample(const AnnotatedImage& sample, const AugmentConfig& cfg,
                              const DatasetStats& stats, Rng& rng) {
  cfg.validate();
  AugmentOutcome outcome;
  outcome.flipped = rng.bernoulli(cfg.flip_prob);
  AnnotatedImage cur = outcome.flipped ? hflip(sample) : sample;

  int pick = rng.uniform_int(0, static_cast<int>(cfg.mechanisms.size()) - 1);
  outcome.mechanism = cfg.mechanisms[static_cast<size_t>(pick)];
  switch (outcome.mechanism) {
    case Mechanism::shrink: {
      double factor = rng.uniform(cfg.shrink_min, cfg.shrink_max);
      int target = std::max(1, static_cast<int>(std::lround(cur.image.width * factor)));
      int ox = rng.uniform_int(0, cur.image.width - target);
      int oy = rng.uniform_int(0, cur.image.height - target);
      cur = shrink(cur, factor, ox, oy, stats.mean);
      break;
    }
    case Mechanism::crop: {
      double side = rng.uniform(cfg.crop_min, cfg.crop_max);
      double x0 = rng.uniform(0.0, 1.0 - side);
      double y0 = rng.uniform(0.0, 1.0 - side);
      cur = crop(cur, x0, y0, side);
      break;
    }
    case Mechanism::gamma: {
      std::array<double, 3> gammas;
      for (auto& g : gammas) {
        g = std::exp(rng.uniform(std::log(cfg.gamma_min), std::log(cfg.gamma_max)));
      }
      cur.image = gamma_correct(cur.image, gammas);
      break;
    }
    case Mechanism::has: {
      outcome.has_applied = rng.bernoulli(cfg.has_apply_prob);
      if (outcome.has_applied) {
        const auto& divs = cfg.divisions();
        int d = divs[static_cast<size_t>(
            rng.uniform_int(0, static_cast<int>(divs.size()) - 1))];
        cur.image = hide_and_seek(cur.image, d, cfg.has_hide_prob, stats.mean, rng);
      }
      break;
    }
  }
  outcome.sample = std::move(cur);
  return outcome;
}

template <typename T>
Tensor<T> normalize_image(const Tensor<T>& image, const DatasetStats& stats) {
  FSSD_CHECK(image.rank() == 3 && image.dim(0) == 3, "expected [3,H,W], got ",
             shape_str(image.shape()));
  for (double s : stats.stddev) FSSD_CHECK(s > 0, "normalization needs positive std");
  auto out = Tensor<T>::zeros(image.shape());
  auto src = image.values();
  auto dst = out.values();
  const std::int64_t plane = static_cast<std::int64_t>(image.dim(1)) * image.dim(2);
  for (int c = 0; c < 3; ++c) {
    double mean = stats.mean[static_cast<size_t>(c)];
    double inv = 1.0 / stats.stddev[static_cast<size_t>(c)];
    for (std::int64_t i = 0; i < plane; ++i) {
      auto k = static_cast<size_t>(c * plane + i);
      dst[k] = static_cast<T>((static_cast<double>(src[k]) - mean) * inv);
    }
  }
  return out;
}

template <typename T>
Tensor<T> denormalize_image(const Tensor<T>& image, const DatasetStats& stats) {
  FSSD_CHECK(image.rank() == 3 && image.dim(0) == 3, "expected [3,H,W], got ",
             shape_str(image.shape()));
  auto out = Tensor<T>::zeros(image.shape());
  auto src = image.values();
  auto dst = out.values();
  const std::int64_t plane = static_cast<std::int64_t>(image.dim(1)) * image.dim(2);
  for (int c = 0; c < 3; ++c) {
    double mean = stats.mean[static_cast<size_t>(c)];
    double sd = stats.stddev[static_cast<size_t>(c)];
    for (std::int64_t i = 0; i < plane; ++i) {
      auto k = static_cast<size_t>(c * plane + i);
      dst[k] = static_cast<T>(static_cast<double>(src[k]) * sd + mean);
    }
  }
  return out;
}

template Tensor<float> normalize_image<float>(const Tensor<float>&, const DatasetStats&);
template Tensor<double> normalize_image<double>(const Tensor<double>&, const DatasetStats&);
template Tensor<float> denormalize_image<float>(const Tensor<float>&, const DatasetStats&);
template Tensor<double> denormalize_image<double>(const Tensor<double>&, const DatasetStats&);

}  // namespace fssd
