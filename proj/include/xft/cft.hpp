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

// Correspondence fine-tuning: online optimisation of the source and target
// encoders on a single image pair.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xft/adam.hpp"
#include "xft/augmentation.hpp"
#include "xft/correspondence.hpp"
#include "xft/encoder.hpp"
#include "xft/error.hpp"
#include "xft/losses.hpp"

namespace xft::cft {

struct CftConfig {
  std::size_t iterations = 200;
  AdamConfig optimizer;
  double alpha = 100.0;
  losses::LossWeights weights;
  augmentation::AugmentationSpec augmentation;
  // Relative weights of the augmented and original pair losses.
  double augmented_weight = 1.0;
  double original_weight = 1.0;
  // Emit the original-pair warp every K iterations; 0 disables.
  std::size_t checkpoint_every = 0;
  std::size_t working_resolution = 256;
  std::uint64_t seed = 0;
  double divergence_limit = 1e6;

  bool operator==(const CftConfig&) const = default;
};

// Throws ConfigError naming the first invalid field under `path`.
void validate(const CftConfig& cfg, const std::string& path = "cft");

struct IterationRecord {
  losses::LossReport report;
  augmentation::PhotometricParams photometric;
  augmentation::GeometricParams geometric;
};

struct Checkpoint {
  std::size_t iteration = 0;
  correspondence::WarpedImage warped;
};

struct CftResult {
  correspondence::WarpedImage warped;  // feature resolution
  ImageTensor warped_full;             // working resolution
  std::vector<losses::LossReport> loss_trace;
  std::vector<IterationRecord> records;
  std::vector<Checkpoint> checkpoints;
  std::string final_params_digest;
  double elapsed_seconds = 0.0;
  std::vector<Tensor> source_params;
  std::vector<Tensor> target_params;
};

// Raised when the loss turns non-finite or exceeds the divergence limit.
class CftDivergence : public NumericError {
 public:
  CftDivergence(std::size_t iteration, std::optional<losses::LossReport> last_finite,
                const std::string& what)
      : NumericError(what), iteration_(iteration), last_finite_(last_finite) {}
  std::size_t iteration() const { return iteration_; }
  const std::optional<losses::LossReport>& last_finite() const { return last_finite_; }

 private:
  std::size_t iteration_;
  std::optional<losses::LossReport> last_finite_;
};

// Differentiable pieces of one pair's objective.
struct PairForward {
  ad::Var contrastive;
  ad::Var perceptual;
  ad::Var contextual;
  ad::Var total;
  ad::Var warped;       // feature resolution
  ad::Var warped_full;  // input resolution
};

// Shared state for evaluating the objective: the backbone, its frozen
// perceptual copy and the loss settings.
class CorrespondenceModel {
 public:
  CorrespondenceModel(std::shared_ptr<const encoder::Backbone> backbone,
                      losses::PerceptualEncoder perceptual, CftConfig cfg);

  static CorrespondenceModel from_spec(const encoder::BackboneSpec& spec, const CftConfig& cfg);

  // Source encoded with source_params; target and warped image with
  // target_params.
  PairForward forward(const ImageTensor& source, const ImageTensor& target,
                      std::span<const ad::Var> source_params,
                      std::span<const ad::Var> target_params,
                      std::uint64_t negative_seed) const;

  correspondence::WarpedImage warp(const ImageTensor& source, const ImageTensor& target,
                                   std::span<const Tensor> source_params,
                                   std::span<const Tensor> target_params) const;

  const encoder::Backbone& backbone() const { return *backbone_; }
  const CftConfig& config() const { return cfg_; }

 private:
  std::shared_ptr<const encoder::Backbone> backbone_;
  losses::PerceptualEncoder perceptual_;
  CftConfig cfg_;
};

using IterationCallback = std::function<void(const IterationRecord&)>;

// Inputs are resized to cfg.working_resolution before the loop.
CftResult fine_tune(const ImageTensor& source, const ImageTensor& target,
                    const encoder::BackboneSpec& backbone, const CftConfig& cfg,
                    const IterationCallback& on_iteration = {});

}  // namespace xft::cft
