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

// Seeded per-iteration augmentation: photometric deformations for the
// source, geometric deformations for the target. Every draw is a pure
// function of (seed, iteration, stream).

#include <cstdint>
#include <string>

#include "xft/image.hpp"

namespace xft::augmentation {

struct AugmentationSpec {
  double jitter_strength = 0.2;
  double noise_sigma = 0.02;
  double scale_lo = 0.9;
  double scale_hi = 1.1;
  double affine_jitter = 0.05;
  std::uint64_t seed = 0;

  static AugmentationSpec identity() {
    return {0.0, 0.0, 1.0, 1.0, 0.0, 0};
  }
  bool operator==(const AugmentationSpec&) const = default;
};

// Throws ConfigError naming the offending field (prefixed with `path`).
void validate(const AugmentationSpec& spec, const std::string& path = "augmentation");

struct PhotometricParams {
  double gain[3] = {1, 1, 1};
  double bias[3] = {0, 0, 0};
  double noise_sigma = 0.0;
};

// Output pixel p samples the input at centre + A^-1 (p - centre - t), with
// A = scale * rotation(angle).
struct GeometricParams {
  double scale = 1.0;
  double angle = 0.0;  // radians
  double tx = 0.0;     // pixels
  double ty = 0.0;
};

ImageTensor augment_photometric(const ImageTensor& image, const AugmentationSpec& spec,
                                std::uint64_t iteration, PhotometricParams* params = nullptr);

struct GeometricResult {
  ImageTensor image;
  GeometricParams params;
};

GeometricResult augment_geometric(const ImageTensor& image, const AugmentationSpec& spec,
                                  std::uint64_t iteration);

// Resamples with bilinear interpolation and reflect padding.
ImageTensor apply_affine(const ImageTensor& image, const GeometricParams& params);

struct AugmentedPair {
  ImageTensor source;
  ImageTensor target;
  PhotometricParams photometric;
  GeometricParams geometric;
};

AugmentedPair sample_pair(const ImageTensor& source, const ImageTensor& target,
                          const AugmentationSpec& spec, std::uint64_t iteration);

}  // namespace xft::augmentation
