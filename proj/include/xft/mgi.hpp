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

// Multiple-hypothesis GAN inversion: for each (composing layer, latent count)
// the latent codes and channel importance of a frozen generator are optimised
// so that the downsampled output matches the warped guidance; the hypothesis
// with the lowest score (FID by default) is selected.

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "xft/fid.hpp"
#include "xft/generator.hpp"
#include "xft/losses.hpp"

namespace xft::mgi {

struct HypothesisConfig {
  std::size_t composing_layer = 1;
  std::size_t num_latents = 1;

  bool operator==(const HypothesisConfig&) const = default;
  std::string id() const;  // "L<layer>-N<count>"
};

std::vector<HypothesisConfig> make_grid(const std::vector<std::size_t>& layers,
                                        const std::vector<std::size_t>& counts);

struct InversionConfig {
  std::size_t steps = 300;
  double learning_rate = 0.05;
  double l2_weight = 1.0;
  double perceptual_weight = 1.0;
  std::size_t upsampling_factor = 4;
  std::uint64_t seed = 0;
  // Upper bound on hypotheses optimised concurrently.
  std::size_t max_parallel = 1;

  bool operator==(const InversionConfig&) const = default;
};

void validate(const InversionConfig& cfg, const std::string& path = "mgi");

struct InversionHypothesis {
  HypothesisConfig config;
  std::uint64_t seed = 0;
  std::vector<Tensor> latents;     // num_latents x [latent_dim]
  std::vector<Tensor> importance;  // num_latents x [channels at composing layer]
  ImageTensor image;               // generator output (guidance size x factor)
  double initial_distance = 0.0;
  double distance = 0.0;
  double fid = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  std::string failure;
};

// down(.): mean over factor x factor blocks.
ad::Var down(const ad::Var& image, std::size_t factor);

// D(down(y), guidance) = l2_weight * MSE + perceptual_weight * MSE of the
// frozen perceptual features.
ad::Var inversion_objective(const Generator& gen, std::span<const ad::Var> latents,
                            std::span<const ad::Var> importance, std::size_t composing_layer,
                            const ImageTensor& guidance, const losses::PerceptualEncoder& enc,
                            const InversionConfig& cfg);

// Seeded standard-normal latents and uniform 1/n importance.
void initialize(InversionHypothesis& h, const Generator& gen);

InversionHypothesis invert_hypothesis(const ImageTensor& guidance, const Generator& gen,
                                      const HypothesisConfig& hyp,
                                      const losses::PerceptualEncoder& enc,
                                      const InversionConfig& cfg);

using Scorer = std::function<double(const InversionHypothesis&)>;

// FID of the hypothesis image's crop set against the reference statistics.
Scorer fid_scorer(const fid::GaussianStats& reference, const fid::Embedding& embedding,
                  const fid::CropPolicy& policy);

struct MgiResult {
  std::vector<InversionHypothesis> hypotheses;  // grid order
  std::size_t selected_index = 0;
  std::string selection_rule;
  bool tie_break_applied = false;
  std::string tie_break_note;
  std::string generator_digest_before;
  std::string generator_digest_after;

  const InversionHypothesis& selected() const { return hypotheses.at(selected_index); }
};

// Lowest score wins; exact ties go to the lower composing layer, then fewer
// latents. Failed hypotheses are excluded.
MgiResult select(std::vector<InversionHypothesis> hypotheses);

MgiResult run_mgi(const ImageTensor& guidance, const Generator& gen,
                  const std::vector<HypothesisConfig>& grid, const Scorer& scorer,
                  const losses::PerceptualEncoder& enc, const InversionConfig& cfg);

}  // namespace xft::mgi
