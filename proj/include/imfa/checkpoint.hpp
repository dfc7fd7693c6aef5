// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint = manifest JSON + raw parameter blob. The manifest lists every
// parameter (name, group, shape, offset in float32 elements), the run config,
// the step, and an FNV-1a hash of the blob. Both files are written to a
// temporary sibling and renamed, blob first, so a crash never leaves a manifest
// pointing at a partial blob.

#pragma once

#include <cstdint>
#include <filesystem>

#include "imfa/run_config.hpp"

namespace imfa {

struct Checkpoint {
  RunConfig config;
  std::size_t step = 0;
  ParameterSet<float> params;
  ModelParams model;
};

/// Writes `<manifest stem>.bin` and `manifest`.
void save_checkpoint(const std::filesystem::path& manifest, const RunConfig& config, const ParameterSet<float>& params,
                     std::size_t step);

/// Rebuilds the model from the stored config and fills in the stored values.
/// IoError for missing or corrupt files; ConfigError when the stored parameters
/// do not match the model the config describes.
Checkpoint load_checkpoint(const std::filesystem::path& manifest);

std::uint64_t fnv1a64(const std::vector<std::uint8_t>& bytes);

}  // namespace imfa
