// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#include "imfa/visualize.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "imfa/errors.hpp"
#include "imfa/evaluation.hpp"

namespace imfa {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  put_u32(out, static_cast<std::uint32_t>(crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start))));
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

// Colours of the dominant scale, finest level first.
constexpr const char* kScaleColors[] = {"#e41a1c", "#ff7f00", "#4daf4a", "#377eb8", "#984ea3", "#a65628"};
constexpr const char* kClassColors[] = {"#ffff33", "#00ffff", "#ff00ff", "#ffffff"};

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& img) {
  if (img.channels != 3 || img.height == 0 || img.width == 0) throw DimensionError("encode_png needs a non-empty RGB image");
  std::vector<std::uint8_t> raw;
  raw.reserve(img.height * (img.width * 3 + 1));
  for (std::size_t y = 0; y < img.height; ++y) {
    raw.push_back(0);
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        raw.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(img.at(y, x, c), 0.0f, 1.0f) * 255.0f)));
      }
    }
  }
  uLongf len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> z(len);
  if (compress2(z.data(), &len, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK) {
    throw IoError("encode_png: zlib compression failed");
  }
  z.resize(len);

  std::vector<std::uint8_t> out{0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(img.width));
  put_u32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit truecolour, no interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", z);
  put_chunk(out, "IEND", {});
  return out;
}

std::string base64(const std::vector<std::uint8_t>& bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    const std::uint32_t n = (bytes[i] << 16) | ((i + 1 < bytes.size() ? bytes[i + 1] : 0) << 8) |
                            (i + 2 < bytes.size() ? bytes[i + 2] : 0);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(n >> 6) & 63] : '=';
    out += i + 2 < bytes.size() ? kAlphabet[n & 63] : '=';
  }
  return out;
}

std::string render_svg(const Image& img, const PipelineResult<float>& result, const StageConfig& config,
                       const VisualizeOptions& options) {
  const double z = options.zoom;
  const double w = img.width * z, h = img.height * z;
  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" xmlns:xlink=\"http://www.w3.org/1999/xlink\" width=\"" + fmt(w) +
         "\" height=\"" + fmt(h) + "\" viewBox=\"0 0 " + fmt(w) + " " + fmt(h) + "\">\n";
  svg += "<image x=\"0\" y=\"0\" width=\"" + fmt(w) + "\" height=\"" + fmt(h) +
         "\" style=\"image-rendering:pixelated\" xlink:href=\"data:image/png;base64," + base64(encode_png(img)) +
         "\"/>\n";

  svg += "<g fill=\"none\" stroke-width=\"2\">\n";
  for (const auto& d : detections_from(result.final_predictions())) {
    if (d.score < options.score_threshold) continue;
    svg += "<rect class=\"pred\" data-label=\"" + std::to_string(d.label) + "\" data-score=\"" + fmt(d.score) +
           "\" x=\"" + fmt(d.box.x0 * w) + "\" y=\"" + fmt(d.box.y0 * h) + "\" width=\"" + fmt(d.box.width() * w) +
           "\" height=\"" + fmt(d.box.height() * h) + "\" stroke=\"" + kClassColors[std::min<std::size_t>(d.label, 3)] +
           "\"/>\n";
  }
  svg += "</g>\n";

  // The last stage that sampled, if any.
  const SampledTokenSet<float>* sampled = nullptr;
  for (const auto& st : result.stages) {
    if (st.sampled) sampled = &*st.sampled;
  }
  if (sampled != nullptr) {
    const std::size_t m = config.keypoints, s = sampled->scale_weights.dim(1);
    svg += "<g class=\"sampling\">\n";
    for (std::size_t r = 0; r < sampled->regions.size(); ++r) {
      // Keypoints live in the owner box clamped to the image, so draw that box.
      const Box b = box_row(sampled->region_boxes, r);
      const double x0 = std::clamp(b.x0, 0.0, 1.0), y0 = std::clamp(b.y0, 0.0, 1.0);
      const double x1 = std::clamp(b.x1, 0.0, 1.0), y1 = std::clamp(b.y1, 0.0, 1.0);
      svg += "<rect class=\"region\" data-region=\"" + std::to_string(r) + "\" x=\"" + fmt(x0 * w) + "\" y=\"" +
             fmt(y0 * h) + "\" width=\"" + fmt((x1 - x0) * w) + "\" height=\"" + fmt((y1 - y0) * h) +
             "\" fill=\"none\" stroke=\"#ffffff\" stroke-dasharray=\"4 2\"/>\n";
      for (std::size_t j = 0; j < m; ++j) {
        const std::size_t row = r * m + j;
        const double px = sampled->keypoints[row * 2] * w, py = sampled->keypoints[row * 2 + 1] * h;
        std::size_t top = 0;
        for (std::size_t k = 1; k < s; ++k) {
          if (sampled->scale_weights[row * s + k] > sampled->scale_weights[row * s + top]) top = k;
        }
        svg += "<circle class=\"keypoint\" data-region=\"" + std::to_string(r) + "\" data-scale=\"" +
               std::to_string(top) + "\" cx=\"" + fmt(px) + "\" cy=\"" + fmt(py) + "\" r=\"3\" fill=\"" +
               kScaleColors[std::min<std::size_t>(top, 5)] + "\"/>\n";
        svg += "<g class=\"alpha\" data-region=\"" + std::to_string(r) + "\">";
        for (std::size_t k = 0; k < s; ++k) {
          const double bar = 12.0 * sampled->scale_weights[row * s + k];
          svg += "<rect x=\"" + fmt(px + 4 + 3.0 * k) + "\" y=\"" + fmt(py - bar) + "\" width=\"2.5\" height=\"" +
                 fmt(bar) + "\" fill=\"" + kScaleColors[std::min<std::size_t>(k, 5)] + "\"/>";
        }
        svg += "</g>\n";
      }
    }
    svg += "</g>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::string visualize(const Checkpoint& checkpoint, const Image& img, const VisualizeOptions& options) {
  ParamBinding<float> p(checkpoint.params, nullptr);
  const auto result = run_pipeline(img, p, checkpoint.model);
  return render_svg(img, result, checkpoint.model.config, options);
}

}  // namespace imfa
