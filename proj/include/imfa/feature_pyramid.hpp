// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0
//
// Toy backbone: a stride-4 patch embedding followed by three rounds of 2×2
// average pooling and a learned affine map with ReLU, giving levels at strides
// 4, 8, 16 and 32. Only the stride-32 level is encoded as image tokens; the
// finer levels exist for sparse sampling.

#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "imfa/image.hpp"
#include "imfa/layers.hpp"

namespace imfa {

inline constexpr std::array<std::size_t, 4> kPyramidStrides = {4, 8, 16, 32};
inline constexpr std::size_t kPatchStride = 4;

struct BackboneParams {
  std::size_t d = 0;
  LinearLayer patch;                // (4·4·3) → d
  std::vector<LinearLayer> levels;  // one per coarser level
};

template <typename Real>
BackboneParams register_backbone(ParameterSet<Real>& params, Initializer& init, std::size_t d);

template <typename Real>
struct PyramidLevel {
  std::size_t stride = 0;
  Tensor<Real> grid;  // [H_s × W_s × d]
};

template <typename Real>
struct FeaturePyramid {
  std::vector<PyramidLevel<Real>> levels;

  std::size_t size() const { return levels.size(); }
  const PyramidLevel<Real>& coarsest() const { return levels.back(); }
};

/// Non-overlapping stride×stride patches flattened in (dy, dx, channel) order: [(H/4)·(W/4) × 48].
template <typename Real>
Tensor<Real> patchify(const Image& img, std::size_t stride = kPatchStride);

/// Affine projection of each patch to d channels: [H/4 × W/4 × d].
template <typename Real>
Tensor<Real> patch_embed(const Image& img, ParamBinding<Real>& p, const BackboneParams& bb);

/// Stride-4 map in, four levels out ordered stride 4 → 32.
template <typename Real>
FeaturePyramid<Real> build_pyramid(const Tensor<Real>& base, ParamBinding<Real>& p, const BackboneParams& bb);

template <typename Real>
FeaturePyramid<Real> run_backbone(const Image& img, ParamBinding<Real>& p, const BackboneParams& bb);

/// Sine encoding of every cell centre of an h×w grid, row-major: [h·w × d].
/// Identical to sine_embed_points evaluated at the centres.
template <typename Real>
Tensor<Real> sine_positions(std::size_t h, std::size_t w, std::size_t d);

/// Sine encoding of points [P×2]; differentiable in the coordinates.
template <typename Real>
Tensor<Real> sine_positions(const Tensor<Real>& points, std::size_t d);

/// Cell centres ((j + 0.5)/w, (i + 0.5)/h) as a [h·w × 2] tensor.
template <typename Real>
Tensor<Real> cell_centres(std::size_t h, std::size_t w);

}  // namespace imfa
