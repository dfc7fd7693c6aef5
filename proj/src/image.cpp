// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#include "imfa/image.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "imfa/errors.hpp"

namespace imfa {
namespace {

constexpr char kBlobMagic[4] = {'I', 'M', 'F', 'A'};
constexpr std::size_t kBlobHeader = 16;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

}  // namespace

Image make_image(std::size_t height, std::size_t width, float fill) {
  Image img;
  img.height = height;
  img.width = width;
  img.data.assign(height * width * 3, fill);
  return img;
}

void require_pipeline_image(const Image& img) {
  if (img.height == 0 || img.width == 0 || img.height % 32 || img.width % 32) {
    throw DimensionError("image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                         " is not a positive multiple of 32 in both extents");
  }
  if (img.channels != 3) throw DimensionError("image must have 3 channels, got " + std::to_string(img.channels));
  if (img.data.size() != img.height * img.width * img.channels) throw DimensionError("image data length mismatch");
}

std::vector<std::uint8_t> encode_blob(const Image& img) {
  std::vector<std::uint8_t> out(kBlobMagic, kBlobMagic + 4);
  put_u32(out, static_cast<std::uint32_t>(img.height));
  put_u32(out, static_cast<std::uint32_t>(img.width));
  put_u32(out, static_cast<std::uint32_t>(img.channels));
  out.reserve(kBlobHeader + img.data.size() * 4);
  for (float v : img.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Image decode_blob(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  if (bytes.size() < kBlobHeader || std::memcmp(bytes.data(), kBlobMagic, 4) != 0) {
    throw IoError(source + ": not an IMFA image blob (missing or short header)");
  }
  Image img;
  img.height = get_u32(bytes.data() + 4);
  img.width = get_u32(bytes.data() + 8);
  img.channels = get_u32(bytes.data() + 12);
  const std::size_t n = img.height * img.width * img.channels;
  if (bytes.size() != kBlobHeader + n * 4) {
    throw IoError(source + ": truncated or oversized blob, expected " + std::to_string(kBlobHeader + n * 4) +
                  " bytes, found " + std::to_string(bytes.size()));
  }
  img.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) img.data[i] = std::bit_cast<float>(get_u32(bytes.data() + kBlobHeader + 4 * i));
  return img;
}

std::vector<std::uint8_t> encode_ppm(const Image& img) {
  if (img.channels != 3) throw DimensionError("PPM needs 3 channels");
  const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.data.size());
  for (float v : img.data) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    out.push_back(static_cast<std::uint8_t>(std::lround(c * 255.0f)));
  }
  return out;
}

Image decode_ppm(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> std::size_t {
    skip_space();
    std::size_t v = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
    if (pos == start) throw IoError(source + ": malformed PPM header");
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw IoError(source + ": not a binary PPM (P6)");
  pos = 2;
  Image img;
  img.width = read_int();
  img.height = read_int();
  const std::size_t maxval = read_int();
  if (maxval != 255) throw IoError(source + ": only maxval 255 is supported, got " + std::to_string(maxval));
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw IoError(source + ": malformed PPM header");
  ++pos;
  const std::size_t n = img.width * img.height * 3;
  if (bytes.size() - pos != n) {
    throw IoError(source + ": PPM pixel data has " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                  std::to_string(n));
  }
  img.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) img.data[i] = static_cast<float>(bytes[pos + i]) / 255.0f;
  return img;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(path.string() + ": read failed");
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(tmp.string() + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(tmp.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(path.string() + ": rename failed: " + ec.message());
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void write_blob(const std::filesystem::path& path, const Image& img) { write_file_atomic(path, encode_blob(img)); }
Image read_blob(const std::filesystem::path& path) { return decode_blob(read_file(path), path.string()); }
void write_ppm(const std::filesystem::path& path, const Image& img) { write_file_atomic(path, encode_ppm(img)); }
Image read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path), path.string()); }

Image read_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes, path.string());
  return decode_blob(bytes, path.string());
}

}  // namespace imfa
