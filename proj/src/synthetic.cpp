// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#include "imfa/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "imfa/errors.hpp"
#include "imfa/parameters.hpp"
#include "json.hpp"

namespace imfa {

namespace {

using Json = nlohmann::json;

struct PixelBox {
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open
};

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit_double(rng); }

// Band bounds of the drawn box area fraction; rasterization can move a shape
// across a bound, so the tight box is re-checked after drawing.
std::array<double, 2> band_range(ScaleBand band) {
  switch (band) {
    case ScaleBand::kSmall:
      return {0.003, 0.01};
    case ScaleBand::kMedium:
      return {0.01, 0.09};
    case ScaleBand::kLarge:
      break;
  }
  return {0.09, 0.3};
}

ScaleBand draw_band(std::mt19937_64& rng, const ScaleMix& mix) {
  const double total = mix.small + mix.medium + mix.large;
  const double u = unit_double(rng) * total;
  if (u < mix.small) return ScaleBand::kSmall;
  if (u < mix.small + mix.medium) return ScaleBand::kMedium;
  return ScaleBand::kLarge;
}

// Whether the pixel centre (px + ½, py + ½) lies in the shape inscribed in box
// [x0, x1) × [y0, y1) (continuous pixel coordinates).
bool covers(std::size_t cls, double x0, double y0, double x1, double y1, double px, double py) {
  const double x = px + 0.5, y = py + 0.5;
  if (x < x0 || x >= x1 || y < y0 || y >= y1) return false;
  switch (cls) {
    case 0:
      return true;
    case 1: {
      const double u = (x - 0.5 * (x0 + x1)) / (0.5 * (x1 - x0)), v = (y - 0.5 * (y0 + y1)) / (0.5 * (y1 - y0));
      return u * u + v * v <= 1.0;
    }
    default: {
      // Apex at the top centre, base along the bottom edge.
      const double t = (y - y0) / (y1 - y0);
      const double half = 0.5 * (x1 - x0) * t, cx = 0.5 * (x0 + x1);
      return x >= cx - half && x <= cx + half;
    }
  }
}

bool overlaps(const PixelBox& a, const PixelBox& b) {
  // One pixel of clearance so shapes never touch.
  return a.x0 <= b.x1 && b.x0 <= a.x1 && a.y0 <= b.y1 && b.y0 <= a.y1;
}

void paint_background(Image& img, std::mt19937_64& rng) {
  // Value noise on a coarse 9×9 lattice, bilinearly interpolated, plus pixel noise.
  constexpr std::size_t kGrid = 9;
  std::array<std::array<double, kGrid * kGrid>, 3> lattice;
  for (auto& ch : lattice) {
    for (auto& v : ch) v = uniform(rng, 0.1, 0.4);
  }
  const double cell = static_cast<double>(img.width) / (kGrid - 1);
  for (std::size_t y = 0; y < img.height; ++y) {
    const double gy = y / cell;
    const std::size_t iy = std::min<std::size_t>(static_cast<std::size_t>(gy), kGrid - 2);
    const double fy = gy - iy;
    for (std::size_t x = 0; x < img.width; ++x) {
      const double gx = x / cell;
      const std::size_t ix = std::min<std::size_t>(static_cast<std::size_t>(gx), kGrid - 2);
      const double fx = gx - ix;
      for (std::size_t c = 0; c < 3; ++c) {
        const auto& l = lattice[c];
        const double v = (1 - fy) * ((1 - fx) * l[iy * kGrid + ix] + fx * l[iy * kGrid + ix + 1]) +
                         fy * ((1 - fx) * l[(iy + 1) * kGrid + ix] + fx * l[(iy + 1) * kGrid + ix + 1]);
        img.at(y, x, c) = static_cast<float>(v + uniform(rng, -0.08, 0.08));
      }
    }
  }
}

std::array<float, 3> draw_color(std::mt19937_64& rng) {
  // One bright channel keeps objects visible against the darker background.
  std::array<float, 3> c{};
  for (auto& v : c) v = static_cast<float>(uniform(rng, 0.0, 0.7));
  c[static_cast<std::size_t>(rng() % 3)] = static_cast<float>(uniform(rng, 0.75, 1.0));
  return c;
}

std::string blob_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu.blob", i);
  return buf;
}

[[noreturn]] void bad_line(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  throw DataError(path.string() + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

ScaleBand scale_band(double area_fraction) {
  if (area_fraction < 0.01) return ScaleBand::kSmall;
  if (area_fraction <= 0.09) return ScaleBand::kMedium;
  return ScaleBand::kLarge;
}

const char* to_string(ScaleBand band) {
  switch (band) {
    case ScaleBand::kSmall:
      return "small";
    case ScaleBand::kMedium:
      return "medium";
    case ScaleBand::kLarge:
      break;
  }
  return "large";
}

void SceneOptions::validate() const {
  if (size == 0 || size % 32 != 0) throw ConfigError("scene size must be a positive multiple of 32");
  if (max_objects > kMaxObjects) throw ConfigError("max_objects must be at most " + std::to_string(kMaxObjects));
  const auto& m = scale_mix;
  if (m.small < 0 || m.medium < 0 || m.large < 0 || !(m.small + m.medium + m.large > 0)) {
    throw ConfigError("scale_mix weights must be non-negative with a positive sum");
  }
}

Target SceneAnnotation::target() const {
  Target t;
  for (const auto& b : boxes) t.boxes.push_back(from_cxcywh(b[0], b[1], b[2], b[3]));
  t.labels = classes;
  return t;
}

Scene generate_scene(std::uint64_t seed, const SceneOptions& options) {
  options.validate();
  std::mt19937_64 rng(seed);
  const std::size_t n = options.size;
  const double side = static_cast<double>(n);
  Scene scene;
  scene.image = make_image(n, n);
  paint_background(scene.image, rng);

  const std::size_t count = options.max_objects == 0 ? 0 : 1 + rng() % options.max_objects;
  std::vector<PixelBox> placed;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t cls = rng() % kShapeClasses;
    const ScaleBand band = draw_band(rng, options.scale_mix);
    const auto range = band_range(band);
    const auto color = draw_color(rng);
    for (int attempt = 0; attempt < 50; ++attempt) {
      const double area = uniform(rng, range[0], range[1]) * side * side;
      const double aspect = std::exp(uniform(rng, std::log(0.6), std::log(1.0 / 0.6)));
      const double w = std::min(side - 1, std::sqrt(area * aspect));
      const double h = std::min(side - 1, std::sqrt(area / aspect));
      const double x0 = uniform(rng, 0, side - w), y0 = uniform(rng, 0, side - h);
      const double x1 = x0 + w, y1 = y0 + h;

      PixelBox tight{n, n, 0, 0};
      const std::size_t px0 = static_cast<std::size_t>(x0), py0 = static_cast<std::size_t>(y0);
      const std::size_t px1 = std::min(n, static_cast<std::size_t>(std::ceil(x1))),
                        py1 = std::min(n, static_cast<std::size_t>(std::ceil(y1)));
      for (std::size_t py = py0; py < py1; ++py) {
        for (std::size_t px = px0; px < px1; ++px) {
          if (!covers(cls, x0, y0, x1, y1, px, py)) continue;
          tight.x0 = std::min(tight.x0, px);
          tight.y0 = std::min(tight.y0, py);
          tight.x1 = std::max(tight.x1, px + 1);
          tight.y1 = std::max(tight.y1, py + 1);
        }
      }
      if (tight.x1 < tight.x0 + 2 || tight.y1 < tight.y0 + 2) continue;
      const double frac = static_cast<double>((tight.x1 - tight.x0) * (tight.y1 - tight.y0)) / (side * side);
      if (scale_band(frac) != band) continue;
      if (std::any_of(placed.begin(), placed.end(), [&](const PixelBox& b) { return overlaps(b, tight); })) continue;

      for (std::size_t py = py0; py < py1; ++py) {
        for (std::size_t px = px0; px < px1; ++px) {
          if (!covers(cls, x0, y0, x1, y1, px, py)) continue;
          for (std::size_t c = 0; c < 3; ++c) scene.image.at(py, px, c) = color[c];
        }
      }
      placed.push_back(tight);
      const double bw = (tight.x1 - tight.x0) / side, bh = (tight.y1 - tight.y0) / side;
      scene.annotation.boxes.push_back({tight.x0 / side + 0.5 * bw, tight.y0 / side + 0.5 * bh, bw, bh});
      scene.annotation.classes.push_back(cls);
      scene.colors.push_back(color);
      break;
    }
  }
  return scene;
}

Dataset generate_dataset(std::size_t n, std::uint64_t seed, const SceneOptions& options) {
  Dataset out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto scene = generate_scene(derive_seed(seed, i), options);
    out.push_back({std::move(scene.image), std::move(scene.annotation)});
  }
  return out;
}

void write_dataset(const std::filesystem::path& annotations, Dataset& dataset) {
  const auto dir = annotations.parent_path();
  const std::string image_dir = annotations.stem().string() + "_images";
  std::filesystem::create_directories(dir / image_dir);
  std::string text;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    auto& s = dataset[i];
    s.annotation.image = image_dir + "/" + blob_name(i);
    write_blob(dir / s.annotation.image, s.image);
    Json line{{"image", s.annotation.image}, {"boxes", s.annotation.boxes}, {"classes", s.annotation.classes}};
    text += line.dump() + "\n";
  }
  write_file_atomic(annotations, text);
}

Dataset read_dataset(const std::filesystem::path& annotations) {
  std::ifstream in(annotations);
  if (!in) throw IoError(annotations.string() + ": cannot open for reading");
  Dataset out;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(text);
    } catch (const Json::parse_error& e) {
      bad_line(annotations, line_no, std::string("malformed JSON: ") + e.what());
    }
    Sample s;
    try {
      s.annotation.image = j.at("image").get<std::string>();
      s.annotation.boxes = j.at("boxes").get<std::vector<std::array<double, 4>>>();
      s.annotation.classes = j.at("classes").get<std::vector<std::size_t>>();
    } catch (const Json::exception& e) {
      bad_line(annotations, line_no, std::string("bad annotation fields: ") + e.what());
    }
    const auto& a = s.annotation;
    if (a.boxes.size() != a.classes.size()) bad_line(annotations, line_no, "boxes and classes differ in length");
    if (a.size() > kMaxObjects) bad_line(annotations, line_no, "more than 12 objects");
    for (std::size_t k = 0; k < a.size(); ++k) {
      const auto& b = a.boxes[k];
      const double eps = 1e-9;
      if (!(b[2] > 0 && b[3] > 0 && b[0] - 0.5 * b[2] >= -eps && b[0] + 0.5 * b[2] <= 1 + eps &&
            b[1] - 0.5 * b[3] >= -eps && b[1] + 0.5 * b[3] <= 1 + eps)) {
        bad_line(annotations, line_no, "box " + std::to_string(k) + " is empty or leaves the image");
      }
      if (a.classes[k] >= kShapeClasses) bad_line(annotations, line_no, "class id out of range");
    }
    s.image = read_blob(annotations.parent_path() / a.image);
    out.push_back(std::move(s));
  }
  if (in.bad()) throw IoError(annotations.string() + ": read failed");
  return out;
}

Sample flip_horizontal(const Sample& sample) {
  Sample out = sample;
  const auto& src = sample.image;
  for (std::size_t y = 0; y < src.height; ++y) {
    for (std::size_t x = 0; x < src.width; ++x) {
      for (std::size_t c = 0; c < src.channels; ++c) out.image.at(y, x, c) = src.at(y, src.width - 1 - x, c);
    }
  }
  for (auto& b : out.annotation.boxes) b[0] = 1.0 - b[0];
  return out;
}

}  // namespace imfa
