// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0
//
// RGB images in [0, 1] and their two on-disk encodings:
//  * binary PPM (P6, maxval 255)
//  * raw blob: "IMFA", u32 height, u32 width, u32 channels (little endian),
//    then height·width·channels float32 values in row-major HWC order.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace imfa {

struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 3;
  std::vector<float> data;

  float at(std::size_t y, std::size_t x, std::size_t c) const { return data[(y * width + x) * channels + c]; }
  float& at(std::size_t y, std::size_t x, std::size_t c) { return data[(y * width + x) * channels + c]; }
  bool operator==(const Image&) const = default;
};

Image make_image(std::size_t height, std::size_t width, float fill = 0.0f);

/// Throws DimensionError unless both extents are positive multiples of 32 and channels == 3.
void require_pipeline_image(const Image& img);

std::vector<std::uint8_t> encode_blob(const Image& img);
/// `source` names the origin in error messages.
Image decode_blob(const std::vector<std::uint8_t>& bytes, const std::string& source);
void write_blob(const std::filesystem::path& path, const Image& img);
Image read_blob(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_ppm(const Image& img);
Image decode_ppm(const std::vector<std::uint8_t>& bytes, const std::string& source);
void write_ppm(const std::filesystem::path& path, const Image& img);
Image read_ppm(const std::filesystem::path& path);

/// Dispatches on the leading magic bytes ("P6" or "IMFA").
Image read_image(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace imfa
