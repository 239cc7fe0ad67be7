/* Copyright 2026 The xft Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstddef>
#include <filesystem>

#include "xft/autodiff.hpp"
#include "xft/encoder.hpp"
#include "xft/image.hpp"

namespace xft::correspondence {

struct SpatialShape {
  std::size_t height = 0;
  std::size_t width = 0;
  bool operator==(const SpatialShape&) const = default;
};

// Cosine similarity between every source position (rows, row-major) and
// every target position (columns).
struct CorrelationMatrix {
  Tensor data;  // (Hs Ws) x (Ht Wt)
  SpatialShape source;
  SpatialShape target;
};

// Softmax-aggregated target colors at source feature positions.
struct WarpedImage {
  Tensor data;  // H' x W' x 3
  double alpha = 100.0;
};

CorrelationMatrix correlation_matrix(const encoder::CentralizedFeatureVolume& fs,
                                     const encoder::CentralizedFeatureVolume& ft);

// `target` must already be at the matrix's target resolution.
WarpedImage warp(const ImageTensor& target, const CorrelationMatrix& m, double alpha);

// Differentiable warp used by the fine-tuning loop: returns an image of the
// source's spatial shape.
ad::Var warp(const ad::Var& target, const ad::Var& m, double alpha, SpatialShape source);

// Writes <stem>.f32 (row-major float32 matrix) and <stem>.txt (shapes, alpha).
void dump_correlation(const std::filesystem::path& stem, const CorrelationMatrix& m, double alpha);

}  // namespace xft::correspondence
