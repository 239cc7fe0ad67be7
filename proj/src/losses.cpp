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

#include "xft/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "xft/error.hpp"
#include "xft/rng.hpp"

namespace xft::losses {

std::string to_string(const NegativePolicy& p) {
  switch (p.mode) {
    case NegativePolicy::Mode::kAuto: return "auto";
    case NegativePolicy::Mode::kAll: return "all";
    case NegativePolicy::Mode::kFixed: return std::to_string(p.count);
  }
  return "auto";
}

NegativePolicy negative_policy_from_string(const std::string& s) {
  NegativePolicy p;
  if (s == "auto") return p;
  if (s == "all") {
    p.mode = NegativePolicy::Mode::kAll;
    return p;
  }
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || v <= 0) {
    throw ConfigError("negatives must be 'auto', 'all' or a positive integer, got '" + s + "'");
  }
  p.mode = NegativePolicy::Mode::kFixed;
  p.count = static_cast<std::size_t>(v);
  return p;
}

PerceptualEncoder::PerceptualEncoder(std::shared_ptr<const encoder::Backbone> backbone,
                                     std::vector<Tensor> params)
    : backbone_(std::move(backbone)) {
  for (Tensor& p : params) params_.push_back(ad::constant(std::move(p)));
}

std::vector<ad::Var> PerceptualEncoder::taps(const ad::Var& image) const {
  return backbone_->taps(image, params_);
}

ad::Var PerceptualEncoder::volume(const ad::Var& image) const {
  return encoder::encode(*backbone_, image, params_).volume;
}

PerceptualEncoder make_perceptual_encoder(const encoder::BackboneSpec& spec) {
  encoder::BackboneSpec any_size = spec;
  any_size.input_size = 0;
  auto backbone = std::shared_ptr<const encoder::Backbone>(encoder::make_backbone(any_size));
  auto params = backbone->initial_params();
  return PerceptualEncoder(std::move(backbone), std::move(params));
}

double info_nce(std::span<const double> anchor, std::span<const double> positive,
                const std::vector<std::span<const double>>& negatives, double tau) {
  if (!(tau > 0)) throw ConfigError("info_nce: tau must be positive");
  if (negatives.empty()) throw ConfigError("info_nce: at least one negative is required");
  auto dot = [&](std::span<const double> v) {
    if (v.size() != anchor.size()) throw ConfigError("info_nce: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += anchor[i] * v[i];
    return s / tau;
  };
  const double pos = dot(positive);
  std::vector<double> logits{pos};
  for (const auto& n : negatives) logits.push_back(dot(n));
  const double mx = *std::max_element(logits.begin(), logits.end());
  if (mx == pos) {
    // log1p keeps the loss strictly positive when the positive dominates.
    double s = 0.0;
    for (std::size_t i = 1; i < logits.size(); ++i) s += std::exp(logits[i] - pos);
    return std::log1p(s);
  }
  double s = 0.0;
  for (double l : logits) s += std::exp(l - mx);
  return mx + std::log(s) - pos;
}

ad::NegativeSets sample_negatives(std::size_t grid_h, std::size_t grid_w,
                                  const NegativePolicy& policy, std::uint64_t seed) {
  const std::size_t n = grid_h * grid_w;
  bool use_all = policy.mode == NegativePolicy::Mode::kAll;
  if (policy.mode == NegativePolicy::Mode::kAuto) {
    use_all = grid_h <= policy.auto_threshold_side && grid_w <= policy.auto_threshold_side;
  }
  if (use_all || policy.count + 1 >= n) return {};

  ad::NegativeSets sets;
  sets.lists.resize(n);
  Rng rng(seed);
  const std::size_t k = policy.count;
  // Floyd's sampling of k distinct values from [0, n - 1), skipping u.
  for (std::size_t u = 0; u < n; ++u) {
    std::unordered_set<std::uint32_t> chosen;
    chosen.reserve(k * 2);
    auto& list = sets.lists[u];
    list.reserve(k);
    for (std::size_t j = n - 1 - k; j < n - 1; ++j) {
      std::uniform_int_distribution<std::size_t> pick(0, j);
      auto t = static_cast<std::uint32_t>(pick(rng));
      if (!chosen.insert(t).second) {
        t = static_cast<std::uint32_t>(j);
        chosen.insert(t);
      }
      list.push_back(t);
    }
    for (auto& idx : list)
      if (idx >= u) ++idx;
    std::sort(list.begin(), list.end());
  }
  return sets;
}

ad::Var contrastive(const ad::Var& fs, const ad::Var& fwarp, const LossWeights& weights,
                    std::uint64_t seed) {
  if (fs.shape() != fwarp.shape()) {
    throw ConfigError("contrastive loss: source features " + shape_string(fs.shape()) +
                      " vs warped features " + shape_string(fwarp.shape()));
  }
  const auto negatives =
      sample_negatives(fs.value().height(), fs.value().width(), weights.negatives, seed);
  return ad::patch_info_nce(ad::normalize_positions(fs), ad::normalize_positions(fwarp),
                            weights.tau, negatives);
}

double contrastive_loss(const encoder::FeatureVolume& fs, const encoder::FeatureVolume& fwarp,
                        const LossWeights& weights, std::uint64_t seed) {
  return contrastive(ad::constant(fs.data), ad::constant(fwarp.data), weights, seed).item();
}

Tensor gram_matrix(const Tensor& act) {
  if (act.rank() != 3) throw ConfigError("gram_matrix: expected H x W x C activations");
  return ad::gram(ad::constant(act)).value();
}

ad::Var perceptual(const ad::Var& xt, const ad::Var& xwarp, const PerceptualEncoder& enc) {
  if (xt.shape() != xwarp.shape()) {
    throw ConfigError("perceptual loss: image shapes " + shape_string(xt.shape()) + " vs " +
                      shape_string(xwarp.shape()));
  }
  const auto ta = enc.taps(xt);
  const auto tb = enc.taps(xwarp);
  ad::Var total;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    const double norm =
        1.0 / static_cast<double>(ta[i].value().positions() * ta[i].value().channels());
    ad::Var d = ad::scale(ad::sub(ad::gram(ta[i]), ad::gram(tb[i])), norm);
    ad::Var term = ad::sum_squares(d);
    total = total ? ad::add(total, term) : term;
  }
  return total;
}

double perceptual_loss(const ImageTensor& xt, const ImageTensor& xwarp,
                       const PerceptualEncoder& enc) {
  return perceptual(ad::constant(xt), ad::constant(xwarp), enc).item();
}

ad::Var contextual(const ad::Var& xt, const ad::Var& xwarp, const PerceptualEncoder& enc,
                   double bandwidth) {
  if (!(bandwidth > 0)) throw ConfigError("contextual loss: bandwidth must be positive");
  if (xt.shape() != xwarp.shape()) {
    throw ConfigError("contextual loss: image shapes " + shape_string(xt.shape()) + " vs " +
                      shape_string(xwarp.shape()));
  }
  return ad::contextual(enc.volume(xt), enc.volume(xwarp), bandwidth);
}

double contextual_loss(const ImageTensor& xt, const ImageTensor& xwarp,
                       const PerceptualEncoder& enc, double bandwidth) {
  return contextual(ad::constant(xt), ad::constant(xwarp), enc, bandwidth).item();
}

LossReport total_loss(double contrastive, double perceptual, double contextual,
                      const LossWeights& weights, std::size_t iteration) {
  LossReport r;
  r.contrastive = contrastive;
  r.perceptual = perceptual;
  r.contextual = contextual;
  r.total = contrastive + weights.lambda_perc * perceptual + weights.lambda_context * contextual;
  r.iteration = iteration;
  return r;
}

}  // namespace xft::losses
