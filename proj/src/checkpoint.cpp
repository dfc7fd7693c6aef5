// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#include "imfa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "imfa/errors.hpp"
#include "imfa/image.hpp"

namespace imfa {

using Json = nlohmann::json;

namespace {

constexpr const char* kFormat = "imfa-checkpoint-1";

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::filesystem::path blob_path(const std::filesystem::path& manifest) {
  auto p = manifest;
  return p.replace_extension(".bin");
}

}  // namespace

std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

void save_checkpoint(const std::filesystem::path& manifest, const RunConfig& config, const ParameterSet<float>& params,
                     std::size_t step) {
  static_assert(std::endian::native == std::endian::little, "checkpoint blobs are little endian");
  std::vector<std::uint8_t> blob;
  Json entries = Json::array();
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = params.entry(i);
    const auto values = e.value.values();
    const std::size_t at = blob.size();
    blob.resize(at + values.size() * sizeof(float));
    std::memcpy(blob.data() + at, values.data(), values.size() * sizeof(float));
    entries.push_back({{"name", e.name},
                       {"group", e.group == ParamGroup::kBackbone ? "backbone" : "main"},
                       {"shape", e.value.shape()},
                       {"offset", offset}});
    offset += values.size();
  }
  const auto bin = blob_path(manifest);
  if (!manifest.parent_path().empty()) std::filesystem::create_directories(manifest.parent_path());
  write_file_atomic(bin, blob);
  const Json m{{"format", kFormat},
               {"step", step},
               {"config", to_json(config)},
               {"blob", bin.filename().string()},
               {"elements", offset},
               {"fnv1a64", hex64(fnv1a64(blob))},
               {"parameters", entries}};
  write_file_atomic(manifest, m.dump(1) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& manifest) {
  const auto text = read_file(manifest);
  Json m;
  try {
    m = Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    throw IoError(manifest.string() + ": corrupt manifest: " + e.what());
  }
  Checkpoint ck;
  std::vector<std::uint8_t> blob;
  std::filesystem::path bin;
  try {
    if (m.at("format").get<std::string>() != kFormat) throw IoError(manifest.string() + ": unknown checkpoint format");
    ck.step = m.at("step").get<std::size_t>();
    ck.config = run_config_from_json(m.at("config"));
    bin = manifest.parent_path() / m.at("blob").get<std::string>();
    blob = read_file(bin);
    if (hex64(fnv1a64(blob)) != m.at("fnv1a64").get<std::string>()) {
      throw IoError(bin.string() + ": blob hash does not match the manifest");
    }
    if (blob.size() != m.at("elements").get<std::size_t>() * sizeof(float)) {
      throw IoError(bin.string() + ": blob size does not match the manifest");
    }
  } catch (const Json::exception& e) {
    throw IoError(manifest.string() + ": bad manifest: " + e.what());
  }

  Initializer init(ck.config.seed);
  ck.model = register_model(ck.params, init, ck.config.effective_stage());
  const auto& entries = m.at("parameters");
  if (entries.size() != ck.params.size()) {
    throw ConfigError(manifest.string() + ": checkpoint has " + std::to_string(entries.size()) +
                      " parameters, the configured model has " + std::to_string(ck.params.size()));
  }
  for (const auto& e : entries) {
    const auto name = e.at("name").get<std::string>();
    const auto id = ck.params.find(name);
    if (!id) throw ConfigError(manifest.string() + ": parameter '" + name + "' is not part of the configured model");
    const auto shape = e.at("shape").get<Shape>();
    if (shape != ck.params.value(*id).shape()) throw ConfigError(manifest.string() + ": shape mismatch for '" + name + "'");
    const std::size_t offset = e.at("offset").get<std::size_t>(), n = shape_numel(shape);
    if ((offset + n) * sizeof(float) > blob.size()) throw IoError(bin.string() + ": parameter '" + name + "' out of range");
    Buffer<float> values(n);
    std::memcpy(values.data(), blob.data() + offset * sizeof(float), n * sizeof(float));
    ck.params.set(*id, Tensor<float>(shape, std::move(values)));
  }
  return ck;
}

}  // namespace imfa
