#include "fssd/data.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "fssd/check.hpp"
#include "fssd/model.hpp"
#include "fssd/text.hpp"

namespace fssd {

namespace {

constexpr int kSuper = 2;  // supersampling factor for clean edges

std::string format_num(double v) { return format_double(v); }

double parse_num(const std::string& s, const char* what) { return parse_double(s, what); }

struct Rgb {
  double r, g, b;
};

// Palette; everything except the marker either keeps green above 0.4 or red
// below 0.85 so only the ring passes the marker test.
constexpr Rgb kMarker = {0.95, 0.08, 0.78};
constexpr Rgb kEye = {0.08, 0.08, 0.10};
constexpr Rgb kGlasses = {0.12, 0.12, 0.12};
constexpr Rgb kHat = {0.10, 0.12, 0.40};
constexpr Rgb kBrow = {0.15, 0.10, 0.05};
constexpr Rgb kBeard = {0.25, 0.18, 0.12};
constexpr Rgb kEarring = {0.90, 0.80, 0.20};
constexpr Rgb kFreckle = {0.50, 0.30, 0.20};
constexpr Rgb kHair = {0.20, 0.15, 0.10};
constexpr Rgb kBlush = {0.84, 0.45, 0.40};
constexpr Rgb kMouth = {0.72, 0.20, 0.25};

enum Attr {
  kAttrGlasses = 0,
  kAttrHat = 1,
  kAttrBeard = 2,
  kAttrEarrings = 3,
  kAttrBrows = 4,
  kAttrFreckles = 5,
  kAttrHair = 6,
  kAttrBlush = 7,
};

struct BackgroundParams {
  std::array<double, 3> base, grad_x, grad_y, amp, freq_x, freq_y, phase;
};

BackgroundParams sample_background(Rng& rng) {
  BackgroundParams p;
  for (int c = 0; c < 3; ++c) {
    p.base[static_cast<size_t>(c)] = rng.uniform(0.45, 0.75);
    p.grad_x[static_cast<size_t>(c)] = rng.uniform(-0.15, 0.15);
    p.grad_y[static_cast<size_t>(c)] = rng.uniform(-0.15, 0.15);
    p.amp[static_cast<size_t>(c)] = rng.uniform(0.0, 0.08);
    p.freq_x[static_cast<size_t>(c)] = rng.uniform(1.0, 6.0);
    p.freq_y[static_cast<size_t>(c)] = rng.uniform(1.0, 6.0);
    p.phase[static_cast<size_t>(c)] = rng.uniform(0.0, 6.283185307179586);
  }
  return p;
}

double background_at(const BackgroundParams& p, int c, double u, double v) {
  auto ci = static_cast<size_t>(c);
  double x = p.base[ci] + p.grad_x[ci] * (u - 0.5) + p.grad_y[ci] * (v - 0.5) +
             p.amp[ci] * std::sin(6.283185307179586 * (p.freq_x[ci] * u + p.freq_y[ci] * v) +
                                  p.phase[ci]);
  // green stays high enough to fail the marker test everywhere
  double lo = c == 1 ? 0.40 : 0.05;
  return std::clamp(x, lo, 0.95);
}

// Colors one supersampled pixel of a face, given coordinates relative to the
// box center in units of the box side (so the box spans [-0.5, 0.5]).
// Returns false outside the face.
bool face_color_at(const FaceStyle& style, double dx, double dy, Rgb& out) {
  double d = std::sqrt(dx * dx + dy * dy);
  if (d > 0.5) return false;
  auto has = [&](int a) { return ((style.attribute_bits >> a) & 1u) != 0; };

  // ring drawn on top of everything
  if (d >= 0.44) {
    out = kMarker;
    return true;
  }

  // eyes and their decorations
  double eye_hw = 0.07;
  double eye_hh = 0.07 * (0.25 + 0.75 * style.openness);
  for (double sx : {-1.0, 1.0}) {
    double ex = (dx - sx * 0.18) / eye_hw;
    double ey = (dy + 0.15) / eye_hh;
    if (ex * ex + ey * ey <= 1.0) {
      out = kEye;
      return true;
    }
    if (has(kAttrGlasses)) {
      double gx = dx - sx * 0.18;
      double gy = dy + 0.15;
      double gd = std::sqrt(gx * gx + gy * gy);
      if (gd >= 0.09 && gd <= 0.115) {
        out = kGlasses;
        return true;
      }
    }
  }
  if (has(kAttrGlasses) && std::abs(dy + 0.15) <= 0.012 && std::abs(dx) <= 0.09) {
    out = kGlasses;
    return true;
  }
  if (has(kAttrBrows) && dy >= -0.28 && dy <= -0.245 && std::abs(dx) >= 0.10 &&
      std::abs(dx) <= 0.26) {
    out = kBrow;
    return true;
  }

  // mouth: parabola through (0, 0.22), corners rise with positive curvature
  {
    double mx = dx / 0.16;
    if (std::abs(mx) <= 1.0) {
      double ym = 0.22 - 0.08 * style.curvature * mx * mx;
      double hm = 0.015 + 0.05 * style.openness;
      if (std::abs(dy - ym) <= hm) {
        out = kMouth;
        return true;
      }
    }
  }

  if (has(kAttrHat) && dy <= -0.34) {
    out = kHat;
    return true;
  }
  if (has(kAttrBeard) && dy >= 0.30) {
    out = kBeard;
    return true;
  }
  if (has(kAttrEarrings)) {
    for (double sx : {-1.0, 1.0}) {
      double ex = dx - sx * 0.40;
      double ey = dy - 0.05;
      if (ex * ex + ey * ey <= 0.03 * 0.03) {
        out = kEarring;
        return true;
      }
    }
  }
  if (has(kAttrFreckles)) {
    for (double sx : {-1.0, 1.0}) {
      for (auto [fx, fy] : {std::pair{0.12, 0.05}, std::pair{0.20, 0.10}}) {
        double ex = dx - sx * fx;
        double ey = dy - fy;
        if (ex * ex + ey * ey <= 0.015 * 0.015) {
          out = kFreckle;
          return true;
        }
      }
    }
  }
  if (has(kAttrHair) && d >= 0.38 && dy < -0.10) {
    out = kHair;
    return true;
  }
  if (has(kAttrBlush)) {
    for (double sx : {-1.0, 1.0}) {
      if (std::abs(dx - sx * 0.27) <= 0.05 && std::abs(dy - 0.08) <= 0.035) {
        out = kBlush;
        return true;
      }
    }
  }

  out = {style.skin[0], style.skin[1], style.skin[2]};
  return true;
}

void render_image(Image& img, const BackgroundParams& bg,
                  const std::vector<PlacedFace>& faces) {
  const int w = img.width, h = img.height;
  const int sw = w * kSuper, sh = h * kSuper;
  std::vector<float> canvas(static_cast<size_t>(3) * sw * sh);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < sh; ++y) {
      for (int x = 0; x < sw; ++x) {
        double u = (x + 0.5) / sw;
        double v = (y + 0.5) / sh;
        canvas[static_cast<size_t>((c * sh + y) * sw + x)] =
            static_cast<float>(background_at(bg, c, u, v));
      }
    }
  }
  for (const auto& f : faces) {
    double side = f.box.w * sw;
    double cx = f.box.cx * sw, cy = f.box.cy * sh;
    int x0 = std::max(0, static_cast<int>(std::floor(cx - side / 2)) - 1);
    int x1 = std::min(sw - 1, static_cast<int>(std::ceil(cx + side / 2)) + 1);
    int y0 = std::max(0, static_cast<int>(std::floor(cy - side / 2)) - 1);
    int y1 = std::min(sh - 1, static_cast<int>(std::ceil(cy + side / 2)) + 1);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        double dx = (x + 0.5 - cx) / side;
        double dy = (y + 0.5 - cy) / side;
        Rgb color;
        if (face_color_at(f.style, dx, dy, color)) {
          canvas[static_cast<size_t>((0 * sh + y) * sw + x)] = static_cast<float>(color.r);
          canvas[static_cast<size_t>((1 * sh + y) * sw + x)] = static_cast<float>(color.g);
          canvas[static_cast<size_t>((2 * sh + y) * sw + x)] = static_cast<float>(color.b);
        }
      }
    }
  }
  // box average and quantize to 1/255 steps
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0;
        for (int sy = 0; sy < kSuper; ++sy) {
          for (int sx = 0; sx < kSuper; ++sx) {
            acc += canvas[static_cast<size_t>((c * sh + y * kSuper + sy) * sw + x * kSuper + sx)];
          }
        }
        double v = acc / (kSuper * kSuper);
        img.at(c, y, x) = static_cast<float>(std::lround(v * 255.0) / 255.0);
      }
    }
  }
}

}  // namespace

Image make_image(int height, int width) {
  FSSD_CHECK(height > 0 && width > 0, "image dimensions must be positive");
  Image img;
  img.height = height;
  img.width = width;
  img.pixels.assign(static_cast<size_t>(3) * height * width, 0.0f);
  return img;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split split_from_name(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  FSSD_FAIL("unknown split '", s, "'");
}

std::vector<int> Dataset::ids_of(Split s) const {
  std::vector<int> out;
  for (size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == s) out.push_back(static_cast<int>(i));
  }
  return out;
}

void SyntheticSpec::validate() const {
  FSSD_CHECK(num_train >= 0 && num_val >= 0 && num_test >= 0 && num_images() > 0,
             "dataset needs at least one image");
  FSSD_CHECK(min_faces >= 0 && max_faces >= min_faces, "bad faces-per-image range [",
             min_faces, ",", max_faces, "]");
  FSSD_CHECK(min_face_size > 0 && max_face_size >= min_face_size && max_face_size < 1.0,
             "bad face size range [", min_face_size, ",", max_face_size, "]");
  FSSD_CHECK(num_attributes >= 1 && num_attributes <= 8,
             "renderer supports 1 to 8 attributes, got ", num_attributes);
}

FaceLabels labels_from_style(const FaceStyle& style) {
  FaceLabels l;
  l.smile = style.curvature > 0 ? 1 : 0;
  l.valence = style.curvature;
  l.arousal = 2.0 * style.openness - 1.0;
  return l;
}

std::vector<PlacedFace> sample_faces(const SyntheticSpec& spec, Rng& rng) {
  int count = rng.uniform_int(spec.min_faces, spec.max_faces);
  std::vector<PlacedFace> faces;
  for (int f = 0; f < count; ++f) {
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      double side = rng.uniform(spec.min_face_size, spec.max_face_size);
      double half = side / 2;
      Box box;
      box.w = box.h = side;
      box.cx = rng.uniform(half + 0.01, 1.0 - half - 0.01);
      box.cy = rng.uniform(half + 0.01, 1.0 - half - 0.01);
      bool clear = true;
      for (const auto& other : faces) {
        if (iou(box, other.box) > 0.1) clear = false;
      }
      if (!clear) continue;
      PlacedFace pf;
      pf.box = box;
      pf.style.curvature = rng.uniform(-1.0, 1.0);
      pf.style.openness = rng.uniform01();
      std::uint64_t bits = 0;
      for (int a = 0; a < spec.num_attributes; ++a) {
        if (rng.bernoulli(0.5)) bits |= std::uint64_t(1) << a;
      }
      pf.style.attribute_bits = bits;
      pf.style.skin[0] = rng.uniform(0.72, 0.88);
      pf.style.skin[1] = pf.style.skin[0] - rng.uniform(0.12, 0.20);
      pf.style.skin[2] = pf.style.skin[1] - rng.uniform(0.10, 0.18);
      faces.push_back(pf);
      placed = true;
    }
    FSSD_CHECK(placed, "could not place face ", f, " without overlap after 200 attempts");
  }
  return faces;
}

Dataset generate(const SyntheticSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.num_attributes = spec.num_attributes;
  const int n = spec.num_images();
  ds.images.resize(static_cast<size_t>(n));
  ds.splits.resize(static_cast<size_t>(n));

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    Rng face_rng(derive_seed(spec.seed, 2 * static_cast<std::uint64_t>(i)));
    Rng bg_rng(derive_seed(spec.seed, 2 * static_cast<std::uint64_t>(i) + 1));
    auto faces = sample_faces(spec, face_rng);
    auto bg = sample_background(bg_rng);
    auto& ai = ds.images[static_cast<size_t>(i)];
    char buf[32];
    std::snprintf(buf, sizeof buf, "img_%05d", i);
    ai.id = buf;
    ai.image = make_image(kInputSide, kInputSide);
    render_image(ai.image, bg, faces);
    for (const auto& pf : faces) {
      GtFace gt;
      gt.box = pf.box;
      auto labels = labels_from_style(pf.style);
      gt.smile = labels.smile;
      gt.valence = labels.valence;
      gt.arousal = labels.arousal;
      gt.attributes = pf.style.attribute_bits;
      ai.faces.push_back(gt);
    }
  }
  for (int i = 0; i < n; ++i) {
    ds.splits[static_cast<size_t>(i)] =
        i < spec.num_train ? Split::train
                           : (i < spec.num_train + spec.num_val ? Split::val : Split::test);
  }
  return ds;
}

DatasetStats compute_stats(const Dataset& dataset) {
  FSSD_CHECK(!dataset.images.empty(), "cannot compute statistics of an empty dataset");
  DatasetStats stats;
  for (int c = 0; c < 3; ++c) {
    // Welford over every pixel of channel c, in dataset order
    double mean = 0, m2 = 0;
    std::int64_t count = 0;
    for (const auto& ai : dataset.images) {
      const auto& img = ai.image;
      const float* plane = img.pixels.data() + static_cast<size_t>(c) * img.height * img.width;
      std::int64_t np = static_cast<std::int64_t>(img.height) * img.width;
      for (std::int64_t i = 0; i < np; ++i) {
        ++count;
        double x = plane[i];
        double delta = x - mean;
        mean += delta / static_cast<double>(count);
        m2 += delta * (x - mean);
      }
    }
    stats.mean[static_cast<size_t>(c)] = mean;
    stats.stddev[static_cast<size_t>(c)] = std::sqrt(m2 / static_cast<double>(count));
    FSSD_CHECK(stats.stddev[static_cast<size_t>(c)] > 0, "channel ", c,
               " has zero variance; normalization is undefined");
  }
  return stats;
}

void save_ppm(const Image& image, const std::string& path) {
  FSSD_CHECK(image.width > 0 && image.height > 0 &&
                 image.pixels.size() == static_cast<size_t>(3) * image.width * image.height,
             "malformed image");
  std::ofstream os(path, std::ios::binary);
  FSSD_CHECK(os.good(), "cannot open ", path, " for writing");
  os << "P6\n" << image.width << " " << image.height << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(image.width) * 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        double v = std::clamp(static_cast<double>(image.at(c, y, x)), 0.0, 1.0);
        row[static_cast<size_t>(x * 3 + c)] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  FSSD_CHECK(os.good(), "failed writing ", path);
}

Image load_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  FSSD_CHECK(is.good(), "cannot open image ", path);
  std::string magic;
  is >> magic;
  FSSD_CHECK(magic == "P6", path, ": expected P6, got '", magic, "'");
  int w = 0, h = 0, maxval = 0;
  is >> w >> h >> maxval;
  FSSD_CHECK(is.good() && w > 0 && h > 0, path, ": bad dimensions");
  FSSD_CHECK(maxval == 255, path, ": expected maxval 255, got ", maxval);
  is.get();  // single whitespace after header
  auto img = make_image(h, w);
  std::vector<unsigned char> raw(static_cast<size_t>(w) * h * 3);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  FSSD_CHECK(is.gcount() == static_cast<std::streamsize>(raw.size()), path,
             ": truncated pixel data");
  is.peek();
  FSSD_CHECK(is.eof(), path, ": trailing bytes after pixel data");
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        img.at(c, y, x) =
            static_cast<float>(raw[static_cast<size_t>((y * w + x) * 3 + c)] / 255.0);
      }
    }
  }
  return img;
}

void save_dataset(const Dataset& dataset, const std::string& dir) {
  FSSD_CHECK(dataset.images.size() == dataset.splits.size(), "splits out of step with images");
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");

  std::ofstream manifest(fs::path(dir) / "manifest.txt");
  FSSD_CHECK(manifest.good(), "cannot write manifest in ", dir);
  manifest << "FSSD-DATASET 1\n";
  manifest << "num_images: " << dataset.images.size() << "\n";
  manifest << "num_attributes: " << dataset.num_attributes << "\n";
  for (size_t i = 0; i < dataset.images.size(); ++i) {
    manifest << "image: " << dataset.images[i].id << " " << split_name(dataset.splits[i])
             << "\n";
  }
  FSSD_CHECK(manifest.good(), "failed writing manifest in ", dir);

  std::ofstream ann(fs::path(dir) / "annotations.txt");
  FSSD_CHECK(ann.good(), "cannot write annotations in ", dir);
  for (const auto& ai : dataset.images) {
    ann << "image " << ai.id << " " << ai.faces.size() << "\n";
    for (const auto& f : ai.faces) {
      ann << format_num(f.box.cx) << " " << format_num(f.box.cy) << " "
          << format_num(f.box.w) << " " << format_num(f.box.h) << " " << f.smile << " "
          << f.attributes << " " << format_num(f.valence) << " " << format_num(f.arousal)
          << "\n";
    }
    save_ppm(ai.image, (fs::path(dir) / "images" / (ai.id + ".ppm")).string());
  }
  FSSD_CHECK(ann.good(), "failed writing annotations in ", dir);
}

Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream manifest(fs::path(dir) / "manifest.txt");
  FSSD_CHECK(manifest.good(), "missing manifest.txt in ", dir);
  std::string line;
  FSSD_CHECK(std::getline(manifest, line) && line == "FSSD-DATASET 1",
             dir, "/manifest.txt: bad header");
  Dataset ds;
  std::size_t num_images = 0;
  int lineno = 1;
  std::vector<std::pair<std::string, Split>> entries;
  while (std::getline(manifest, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "num_images:") {
      ls >> num_images;
    } else if (key == "num_attributes:") {
      ls >> ds.num_attributes;
      FSSD_CHECK(ds.num_attributes >= 1 && ds.num_attributes <= 64,
                 "manifest.txt:", lineno, ": bad attribute count");
    } else if (key == "image:") {
      std::string id, split;
      ls >> id >> split;
      FSSD_CHECK(!id.empty() && !split.empty(), "manifest.txt:", lineno, ": bad image line");
      entries.emplace_back(id, split_from_name(split));
    } else {
      FSSD_FAIL("manifest.txt:", lineno, ": unknown key '", key, "'");
    }
  }
  FSSD_CHECK(entries.size() == num_images, "manifest.txt lists ", entries.size(),
             " images but declares ", num_images);
  std::set<std::string> seen;
  for (auto& [id, split] : entries) {
    FSSD_CHECK(seen.insert(id).second, "duplicate image id '", id, "'");
  }

  std::ifstream ann(fs::path(dir) / "annotations.txt");
  FSSD_CHECK(ann.good(), "missing annotations.txt in ", dir);
  lineno = 0;
  for (auto& [id, split] : entries) {
    FSSD_CHECK(std::getline(ann, line), "annotations.txt: unexpected end before image '", id,
               "'");
    ++lineno;
    std::istringstream hs(line);
    std::string word, got_id;
    std::size_t nfaces = 0;
    hs >> word >> got_id >> nfaces;
    FSSD_CHECK(word == "image" && got_id == id, "annotations.txt:", lineno,
               ": expected header for image '", id, "'");
    AnnotatedImage ai;
    ai.id = id;
    for (std::size_t f = 0; f < nfaces; ++f) {
      FSSD_CHECK(std::getline(ann, line), "annotations.txt: unexpected end in image '", id,
                 "'");
      ++lineno;
      std::istringstream fs_line(line);
      std::vector<std::string> tok;
      std::string t;
      while (fs_line >> t) tok.push_back(t);
      FSSD_CHECK(tok.size() == 8, "annotations.txt:", lineno, ": expected 8 fields, got ",
                 tok.size());
      GtFace face;
      face.box.cx = parse_num(tok[0], "cx");
      face.box.cy = parse_num(tok[1], "cy");
      face.box.w = parse_num(tok[2], "w");
      face.box.h = parse_num(tok[3], "h");
      double smile = parse_num(tok[4], "smile");
      FSSD_CHECK(smile == 0 || smile == 1, "annotations.txt:", lineno, ": smile must be 0/1");
      face.smile = static_cast<int>(smile);
      face.attributes = parse_u64(tok[5], "attributes");
      if (ds.num_attributes < 64) {
        FSSD_CHECK(face.attributes < (std::uint64_t(1) << ds.num_attributes),
                   "annotations.txt:", lineno, ": attribute bits exceed ", ds.num_attributes,
                   " attributes");
      }
      face.valence = parse_num(tok[6], "valence");
      face.arousal = parse_num(tok[7], "arousal");
      FSSD_CHECK(face.valence >= -1 && face.valence <= 1 && face.arousal >= -1 &&
                     face.arousal <= 1,
                 "annotations.txt:", lineno, ": valence/arousal out of [-1,1]");
      ai.faces.push_back(face);
    }
    ai.image = load_ppm((fs::path(dir) / "images" / (id + ".ppm")).string());
    ds.images.push_back(std::move(ai));
    ds.splits.push_back(split);
  }
  FSSD_CHECK(!std::getline(ann, line), "annotations.txt: trailing content");
  return ds;
}

bool is_marker_pixel(float r, float g, float b) {
  return r >= 0.85f && g <= 0.35f && b >= 0.5f;
}

std::optional<Box> marker_bounding_box(const Image& image) {
  int min_x = image.width, max_x = -1, min_y = image.height, max_y = -1;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      if (is_marker_pixel(image.at(0, y, x), image.at(1, y, x), image.at(2, y, x))) {
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
      }
    }
  }
  if (max_x < 0) return std::nullopt;
  Box b;
  b.cx = (min_x + max_x + 1) / 2.0 / image.width;
  b.cy = (min_y + max_y + 1) / 2.0 / image.height;
  b.w = static_cast<double>(max_x - min_x + 1) / image.width;
  b.h = static_cast<double>(max_y - min_y + 1) / image.height;
  return b;
}

template <typename T>
Tensor<T> image_to_tensor(const Image& image) {
  FSSD_CHECK(image.width > 0 && image.height > 0, "empty image");
  auto t = Tensor<T>::zeros({3, image.height, image.width});
  auto v = t.values();
  for (size_t i = 0; i < image.pixels.size(); ++i) v[i] = static_cast<T>(image.pixels[i]);
  return t;
}

template <typename T>
Image tensor_to_image(const Tensor<T>& t) {
  FSSD_CHECK(t.rank() == 3 && t.dim(0) == 3, "expected [3,H,W], got ", shape_str(t.shape()));
  auto img = make_image(t.dim(1), t.dim(2));
  auto v = t.values();
  for (size_t i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = static_cast<float>(std::clamp(static_cast<double>(v[i]), 0.0, 1.0));
  }
  return img;
}

template Tensor<float> image_to_tensor<float>(const Image&);
template Tensor<double> image_to_tensor<double>(const Image&);
template Image tensor_to_image<float>(const Tensor<float>&);
template Image tensor_to_image<double>(const Tensor<double>&);

}  // namespace fssd
