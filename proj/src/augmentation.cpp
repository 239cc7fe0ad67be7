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

#include "xft/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "xft/error.hpp"
#include "xft/rng.hpp"

namespace xft::augmentation {
namespace {

constexpr std::uint64_t kPhotometricStream = 1;
constexpr std::uint64_t kGeometricStream = 2;

double reflect(double v, double size) {
  // Reflect about pixel-centre edges: -1 -> 1, size -> size - 2.
  const double period = 2.0 * (size - 1.0);
  if (period <= 0) return 0.0;
  v = std::fmod(std::abs(v), period);
  return v > size - 1.0 ? period - v : v;
}

}  // namespace

void validate(const AugmentationSpec& spec, const std::string& path) {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(spec.jitter_strength) || spec.jitter_strength < 0 || spec.jitter_strength > 1)
    throw ConfigError(path + ".jitter_strength must lie in [0, 1]");
  if (!finite(spec.noise_sigma) || spec.noise_sigma < 0)
    throw ConfigError(path + ".noise_sigma must be non-negative");
  if (!finite(spec.scale_lo) || !finite(spec.scale_hi) || spec.scale_lo <= 0 ||
      spec.scale_hi <= 0)
    throw ConfigError(path + ".scale_range must be positive");
  if (spec.scale_lo > spec.scale_hi) throw ConfigError(path + ".scale_range needs lo <= hi");
  if (!finite(spec.affine_jitter) || spec.affine_jitter < 0)
    throw ConfigError(path + ".affine_jitter must be non-negative");
}

ImageTensor augment_photometric(const ImageTensor& image, const AugmentationSpec& spec,
                                std::uint64_t iteration, PhotometricParams* params) {
  image::check_rgb(image, "augment_photometric");
  Rng rng(derive_seed({spec.seed, iteration, kPhotometricStream}));
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  PhotometricParams p;
  // Positive gain keeps each channel's map strictly increasing.
  for (int c = 0; c < 3; ++c) {
    p.gain[c] = std::exp(spec.jitter_strength * sym(rng));
    p.bias[c] = 0.5 * spec.jitter_strength * sym(rng);
  }
  p.noise_sigma = spec.noise_sigma;

  ImageTensor out = image;
  std::normal_distribution<double> noise(0.0, 1.0);
  const bool add_noise = spec.noise_sigma > 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t c = i % 3;
    double v = p.gain[c] * out[i] + p.bias[c];
    if (add_noise) v += spec.noise_sigma * noise(rng);
    out[i] = std::clamp(v, 0.0, 1.0);
  }
  if (params) *params = p;
  return out;
}

ImageTensor apply_affine(const ImageTensor& image, const GeometricParams& p) {
  const std::size_t h = image.height(), w = image.width();
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  const double cs = std::cos(p.angle), sn = std::sin(p.angle);
  ImageTensor out = Tensor::hwc(h, w, 3);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t sy = 0; sy < static_cast<std::ptrdiff_t>(h); ++sy) {
    for (std::size_t x = 0; x < w; ++x) {
      const double dx = static_cast<double>(x) - cx - p.tx;
      const double dy = static_cast<double>(sy) - cy - p.ty;
      // Inverse of scale * rotation.
      double sx = (cs * dx + sn * dy) / p.scale + cx;
      double syy = (-sn * dx + cs * dy) / p.scale + cy;
      sx = reflect(sx, static_cast<double>(w));
      syy = reflect(syy, static_cast<double>(h));
      const auto x0 = static_cast<std::size_t>(std::floor(sx));
      const auto y0 = static_cast<std::size_t>(std::floor(syy));
      const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double fx = sx - static_cast<double>(x0), fy = syy - static_cast<double>(y0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = (1 - fy) * ((1 - fx) * image.at(y0, x0, c) + fx * image.at(y0, x1, c)) +
                         fy * ((1 - fx) * image.at(y1, x0, c) + fx * image.at(y1, x1, c));
        out.at(static_cast<std::size_t>(sy), x, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

GeometricResult augment_geometric(const ImageTensor& image, const AugmentationSpec& spec,
                                  std::uint64_t iteration) {
  image::check_rgb(image, "augment_geometric");
  Rng rng(derive_seed({spec.seed, iteration, kGeometricStream}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  GeometricParams p;
  p.scale = spec.scale_lo + (spec.scale_hi - spec.scale_lo) * unit(rng);
  p.angle = spec.affine_jitter * std::numbers::pi * sym(rng);
  p.tx = spec.affine_jitter * static_cast<double>(image.width()) * sym(rng);
  p.ty = spec.affine_jitter * static_cast<double>(image.height()) * sym(rng);
  if (p.scale == 1.0 && p.angle == 0.0 && p.tx == 0.0 && p.ty == 0.0) return {image, p};
  return {apply_affine(image, p), p};
}

AugmentedPair sample_pair(const ImageTensor& source, const ImageTensor& target,
                          const AugmentationSpec& spec, std::uint64_t iteration) {
  AugmentedPair pair;
  pair.source = augment_photometric(source, spec, iteration, &pair.photometric);
  auto geo = augment_geometric(target, spec, iteration);
  pair.target = std::move(geo.image);
  pair.geometric = geo.params;
  return pair;
}

}  // namespace xft::augmentation
