// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded gradient-check suites shared by the test binaries and the CLI.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imfa/gradcheck.hpp"

namespace imfa {

struct NamedCheck {
  std::string name;
  GradCheckReport report;
};

/// Every differentiable primitive and the set loss against central differences
/// at relative tolerance 1e-4, in double precision.
std::vector<NamedCheck> op_gradient_checks(std::uint64_t seed = 31);

/// A 3-stage IMFA pipeline on a 32×32 image with d = 16 under the deep
/// supervision loss, one check per parameter at relative tolerance 1e-3. The
/// detached reference boxes, region picks and matches are replayed from a base
/// pass so finite differences see the function the tape differentiates.
std::vector<NamedCheck> pipeline_gradient_checks(std::uint64_t seed = 31, std::size_t max_coords = 6);

bool all_passed(const std::vector<NamedCheck>& checks);

}  // namespace imfa
