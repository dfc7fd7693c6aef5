// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic detection scenes: flat-coloured rectangles, ellipses and triangles
// over a textured noise background, with boxes taken from the rendered masks.
//
// Dataset layout on disk: a JSON Lines annotation file, one scene per line,
//   {"image": "<file relative to the annotation file>", "boxes": [[cx,cy,w,h],...], "classes": [...]}
// and one raw image blob per scene.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "imfa/image.hpp"
#include "imfa/matching.hpp"

namespace imfa {

inline constexpr std::size_t kShapeClasses = 3;  // 0 rectangle, 1 ellipse, 2 triangle
inline constexpr std::size_t kMaxObjects = 12;

enum class ScaleBand { kSmall, kMedium, kLarge };

/// Band of a box by its area as a fraction of the image: < 1 %, 1–9 %, > 9 %.
ScaleBand scale_band(double area_fraction);
const char* to_string(ScaleBand band);

/// Relative frequencies of the three bands when drawing object sizes.
struct ScaleMix {
  double small = 1.0;
  double medium = 1.0;
  double large = 1.0;
};

struct SceneOptions {
  std::size_t size = 128;
  ScaleMix scale_mix;
  std::size_t max_objects = 8;  // at most kMaxObjects
  void validate() const;
};

struct SceneAnnotation {
  std::vector<std::array<double, 4>> boxes;  // normalized (cx, cy, w, h)
  std::vector<std::size_t> classes;
  std::string image;  // blob file, relative to the annotation file

  std::size_t size() const { return boxes.size(); }
  Target target() const;
  bool operator==(const SceneAnnotation&) const = default;
};

struct Scene {
  Image image;
  SceneAnnotation annotation;
  /// Fill colour of each object, for pixel-level checks. Not persisted.
  std::vector<std::array<float, 3>> colors;
};

/// Same seed and options give a bit-identical scene. Objects do not overlap, so
/// every box is the tight box of the object's visible pixels.
Scene generate_scene(std::uint64_t seed, const SceneOptions& options = {});

struct Sample {
  Image image;
  SceneAnnotation annotation;
  bool operator==(const Sample&) const = default;
};

using Dataset = std::vector<Sample>;

/// Scene i uses seed derive_seed(seed, i).
Dataset generate_dataset(std::size_t n, std::uint64_t seed, const SceneOptions& options = {});

/// Writes blobs under `<stem>_images/` next to `annotations` and then the
/// annotation file, each atomically.
void write_dataset(const std::filesystem::path& annotations, Dataset& dataset);

/// IoError naming the file for missing or corrupt files; DataError with the line
/// number for malformed lines. An empty annotation file is an empty dataset.
Dataset read_dataset(const std::filesystem::path& annotations);

/// Mirror image and boxes left to right.
Sample flip_horizontal(const Sample& sample);

}  // namespace imfa
