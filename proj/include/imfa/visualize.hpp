// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imfa/checkpoint.hpp"
#include "imfa/image.hpp"

namespace imfa {

/// 8-bit RGB PNG (zlib-compressed, no filtering).
std::vector<std::uint8_t> encode_png(const Image& img);

std::string base64(const std::vector<std::uint8_t>& bytes);

struct VisualizeOptions {
  double score_threshold = 0.3;
  /// Pixels per image pixel in the SVG.
  double zoom = 4.0;
};

/// SVG with the image embedded as a PNG, the final predicted boxes scoring at
/// least the threshold, and the last sampling stage's promising regions with
/// their keypoints coloured by the dominant scale and a bar glyph of α per
/// keypoint. Elements carry classes "pred", "region", "keypoint" and "alpha"
/// plus a data-region index. Byte-identical for identical inputs.
std::string render_svg(const Image& img, const PipelineResult<float>& result, const StageConfig& config,
                       const VisualizeOptions& options = {});

std::string visualize(const Checkpoint& checkpoint, const Image& img, const VisualizeOptions& options = {});

}  // namespace imfa
