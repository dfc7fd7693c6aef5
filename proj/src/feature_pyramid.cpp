// Copyright 2026 The IMFA Authors
// SPDX-License-Identifier: Apache-2.0

#include "imfa/feature_pyramid.hpp"

namespace imfa {

template <typename Real>
BackboneParams register_backbone(ParameterSet<Real>& params, Initializer& init, std::size_t d) {
  BackboneParams bb;
  bb.d = d;
  bb.patch = LinearLayer::create(params, init, "backbone.patch", kPatchStride * kPatchStride * 3, d,
                                 ParamGroup::kBackbone);
  for (std::size_t s = 1; s < kPyramidStrides.size(); ++s) {
    bb.levels.push_back(LinearLayer::create(params, init, "backbone.level" + std::to_string(s), d, d,
                                            ParamGroup::kBackbone));
  }
  return bb;
}

template <typename Real>
Tensor<Real> patchify(const Image& img, std::size_t stride) {
  if (img.height % stride || img.width % stride || img.height == 0 || img.width == 0) {
    throw DimensionError("patchify: image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                         " is not divisible by stride " + std::to_string(stride));
  }
  const std::size_t ph = img.height / stride, pw = img.width / stride, c = img.channels;
  const std::size_t width = stride * stride * c;
  Buffer<Real> out(ph * pw * width);
  for (std::size_t i = 0; i < ph; ++i) {
    for (std::size_t j = 0; j < pw; ++j) {
      Real* dst = out.data() + (i * pw + j) * width;
      for (std::size_t dy = 0; dy < stride; ++dy) {
        for (std::size_t dx = 0; dx < stride; ++dx) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            *dst++ = static_cast<Real>(img.at(i * stride + dy, j * stride + dx, ch));
          }
        }
      }
    }
  }
  return Tensor<Real>({ph * pw, width}, std::move(out));
}

template <typename Real>
Tensor<Real> patch_embed(const Image& img, ParamBinding<Real>& p, const BackboneParams& bb) {
  require_pipeline_image(img);
  const auto patches = patchify<Real>(img);
  return bb.patch(p, patches).reshaped({img.height / kPatchStride, img.width / kPatchStride, bb.d});
}

template <typename Real>
FeaturePyramid<Real> build_pyramid(const Tensor<Real>& base, ParamBinding<Real>& p, const BackboneParams& bb) {
  if (base.rank() != 3 || base.dim(0) < 8 || base.dim(1) < 8 || base.dim(0) % 8 || base.dim(1) % 8) {
    throw DimensionError("build_pyramid: base " + shape_string(base.shape()) +
                         " must be at least 8x8 with extents divisible by 8");
  }
  FeaturePyramid<Real> pyr;
  pyr.levels.push_back({kPyramidStrides[0], base});
  for (std::size_t s = 1; s < kPyramidStrides.size(); ++s) {
    const auto pooled = avg_pool2x2(pyr.levels.back().grid);
    const std::size_t h = pooled.dim(0), w = pooled.dim(1);
    const auto mapped = relu(bb.levels[s - 1](p, pooled.reshaped({h * w, bb.d})));
    pyr.levels.push_back({kPyramidStrides[s], mapped.reshaped({h, w, bb.d})});
  }
  return pyr;
}

template <typename Real>
FeaturePyramid<Real> run_backbone(const Image& img, ParamBinding<Real>& p, const BackboneParams& bb) {
  return build_pyramid(patch_embed(img, p, bb), p, bb);
}

template <typename Real>
Tensor<Real> cell_centres(std::size_t h, std::size_t w) {
  Buffer<Real> pts(h * w * 2);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      pts[(i * w + j) * 2] = static_cast<Real>((static_cast<double>(j) + 0.5) / static_cast<double>(w));
      pts[(i * w + j) * 2 + 1] = static_cast<Real>((static_cast<double>(i) + 0.5) / static_cast<double>(h));
    }
  }
  return Tensor<Real>({h * w, 2}, std::move(pts));
}

template <typename Real>
Tensor<Real> sine_positions(std::size_t h, std::size_t w, std::size_t d) {
  return sine_embed_points(cell_centres<Real>(h, w), d);
}

template <typename Real>
Tensor<Real> sine_positions(const Tensor<Real>& points, std::size_t d) {
  return sine_embed_points(points, d);
}

#define IMFA_PYRAMID_INSTANTIATE(Real)                                                                   \
  template BackboneParams register_backbone<Real>(ParameterSet<Real>&, Initializer&, std::size_t);      \
  template Tensor<Real> patchify<Real>(const Image&, std::size_t);                                      \
  template Tensor<Real> patch_embed<Real>(const Image&, ParamBinding<Real>&, const BackboneParams&);    \
  template FeaturePyramid<Real> build_pyramid<Real>(const Tensor<Real>&, ParamBinding<Real>&,            \
                                                    const BackboneParams&);                              \
  template FeaturePyramid<Real> run_backbone<Real>(const Image&, ParamBinding<Real>&, const BackboneParams&); \
  template Tensor<Real> cell_centres<Real>(std::size_t, std::size_t);                                   \
  template Tensor<Real> sine_positions<Real>(std::size_t, std::size_t, std::size_t);                    \
  template Tensor<Real> sine_positions<Real>(const Tensor<Real>&, std::size_t);

IMFA_PYRAMID_INSTANTIATE(float)
IMFA_PYRAMID_INSTANTIATE(double)

}  // namespace imfa
