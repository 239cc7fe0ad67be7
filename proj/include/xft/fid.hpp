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

// Frechet distance between Gaussian fits of embedded images, with a small
// pluggable embedding and crop expansion for single-image scoring.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "xft/image.hpp"

namespace xft::fid {

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  std::size_t count = 0;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

// Sample mean and unbiased covariance (symmetrized). Needs >= 2 samples.
GaussianStats gaussian_stats(std::span<const Eigen::VectorXd> embeddings);

struct FrechetResult {
  double distance = 0.0;
  // ||S S - Sa Sb||_F / ||Sa Sb||_F for the square root actually used.
  double sqrt_residual = 0.0;
  // True when the 1e-6 I offset was needed.
  bool regularized = false;
};

inline constexpr double kSqrtResidualTolerance = 1e-5;
inline constexpr double kCovarianceOffset = 1e-6;

FrechetResult frechet(const GaussianStats& a, const GaussianStats& b);
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

enum class EmbeddingKind { kToy, kExternal };
std::string to_string(EmbeddingKind kind);
EmbeddingKind embedding_kind_from_string(const std::string& s);

struct EmbeddingSpec {
  EmbeddingKind kind = EmbeddingKind::kToy;
  std::size_t output_dim = 16;
  std::string pooling = "spatial-mean";
  std::uint64_t seed = 17;
  // Images are resized to input_size^2 before patch projection.
  std::size_t input_size = 16;
  std::size_t patch = 3;
  // Projection weights file for external embeddings.
  std::string weights;

  bool operator==(const EmbeddingSpec&) const = default;
};

// Patch projection network: every patch x patch x 3 window of the resized
// image is projected, passed through tanh and spatially mean-pooled.
class Embedding {
 public:
  Embedding(std::size_t input_size, std::size_t patch, Eigen::MatrixXd projection,
            Eigen::VectorXd bias);

  static Embedding toy(const EmbeddingSpec& spec);
  static Embedding load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  Eigen::VectorXd embed(const ImageTensor& image) const;
  std::size_t dim() const { return static_cast<std::size_t>(projection_.rows()); }

 private:
  std::size_t input_size_;
  std::size_t patch_;
  Eigen::MatrixXd projection_;  // dim x (patch * patch * 3)
  Eigen::VectorXd bias_;
};

Embedding make_embedding(const EmbeddingSpec& spec);

// Deterministic overlapping crop grid applied to every image of a set smaller
// than `expand_below`.
struct CropPolicy {
  std::size_t grid = 8;     // grid x grid crops per image
  double fraction = 0.5;    // crop side relative to the image side
  std::size_t expand_below = 64;

  bool operator==(const CropPolicy&) const = default;
};

std::vector<ImageTensor> crops(const ImageTensor& image, const CropPolicy& policy);
std::vector<ImageTensor> expand(std::span<const ImageTensor> images, const CropPolicy& policy);

std::vector<Eigen::VectorXd> embed_all(std::span<const ImageTensor> images,
                                       const Embedding& embedding, const CropPolicy& policy);

GaussianStats image_stats(std::span<const ImageTensor> images, const Embedding& embedding,
                          const CropPolicy& policy);

// FID of an image set (crop-expanded when small) against the reference.
double fid_score(std::span<const ImageTensor> images, const GaussianStats& reference,
                 const Embedding& embedding, const CropPolicy& policy);

// Binary: uint64 dim, uint64 count, dim float64 mean, dim*dim float64
// row-major covariance (little endian). Sidecar <path>.txt holds the manifest
// entries as "key: value" lines.
void save_stats(const std::filesystem::path& path, const GaussianStats& stats,
                const std::map<std::string, std::string>& manifest = {});
GaussianStats load_stats(const std::filesystem::path& path);

}  // namespace xft::fid
