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

// Loss terms of the correspondence fine-tuning objective: patchwise InfoNCE
// with pseudo-positives, Gram-matrix perceptual loss, contextual loss and
// their weighted total.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "xft/autodiff.hpp"
#include "xft/encoder.hpp"
#include "xft/image.hpp"

namespace xft::losses {

struct NegativePolicy {
  enum class Mode { kAuto, kAll, kFixed };
  Mode mode = Mode::kAuto;
  // Negatives per anchor for kFixed, and for kAuto above the threshold.
  std::size_t count = 512;
  // kAuto uses every other position up to this grid side (inclusive).
  std::size_t auto_threshold_side = 48;

  bool operator==(const NegativePolicy&) const = default;
};

std::string to_string(const NegativePolicy& p);
NegativePolicy negative_policy_from_string(const std::string& s);

struct LossWeights {
  double lambda_perc = 1.0;
  double lambda_context = 1.0;
  double tau = 0.07;
  double bandwidth = 0.5;
  NegativePolicy negatives;

  bool operator==(const LossWeights&) const = default;
};

struct LossReport {
  double contrastive = 0.0;
  double perceptual = 0.0;
  double contextual = 0.0;
  double total = 0.0;
  std::size_t iteration = 0;
};

// Frozen measuring encoder for the perceptual and contextual terms.
class PerceptualEncoder {
 public:
  PerceptualEncoder(std::shared_ptr<const encoder::Backbone> backbone, std::vector<Tensor> params);

  std::vector<ad::Var> taps(const ad::Var& image) const;
  ad::Var volume(const ad::Var& image) const;
  const encoder::Backbone& backbone() const { return *backbone_; }

 private:
  std::shared_ptr<const encoder::Backbone> backbone_;
  std::vector<ad::Var> params_;
};

// Separate frozen copy of the configured backbone that accepts any input size.
PerceptualEncoder make_perceptual_encoder(const encoder::BackboneSpec& spec);

// -log(exp(a.p/tau) / (exp(a.p/tau) + sum_n exp(a.n/tau))).
double info_nce(std::span<const double> anchor, std::span<const double> positive,
                const std::vector<std::span<const double>>& negatives, double tau);

// Negative index sets for an n-position grid under the policy.
ad::NegativeSets sample_negatives(std::size_t grid_h, std::size_t grid_w,
                                  const NegativePolicy& policy, std::uint64_t seed);

// Patchwise InfoNCE: anchors f_S(u), positive f_warp(u), negatives f_warp(n).
// Position vectors are L2-normalized first.
ad::Var contrastive(const ad::Var& fs, const ad::Var& fwarp, const LossWeights& weights,
                    std::uint64_t seed);
double contrastive_loss(const encoder::FeatureVolume& fs, const encoder::FeatureVolume& fwarp,
                        const LossWeights& weights, std::uint64_t seed = 0);

Tensor gram_matrix(const Tensor& act);

// Sum over encoder taps of the squared Frobenius distance between Gram
// matrices, each Gram divided by (positions x channels).
ad::Var perceptual(const ad::Var& xt, const ad::Var& xwarp, const PerceptualEncoder& enc);
double perceptual_loss(const ImageTensor& xt, const ImageTensor& xwarp,
                       const PerceptualEncoder& enc);

ad::Var contextual(const ad::Var& xt, const ad::Var& xwarp, const PerceptualEncoder& enc,
                   double bandwidth);
double contextual_loss(const ImageTensor& xt, const ImageTensor& xwarp,
                       const PerceptualEncoder& enc, double bandwidth);

LossReport total_loss(double contrastive, double perceptual, double contextual,
                      const LossWeights& weights, std::size_t iteration = 0);

}  // namespace xft::losses
