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

#include "xft/cft.hpp"

#include <chrono>
#include <cmath>

#include "xft/rng.hpp"

namespace xft::cft {

void validate(const CftConfig& cfg, const std::string& path) {
  if (cfg.iterations < 1) throw ConfigError(path + ".iterations must be >= 1");
  if (!(cfg.optimizer.learning_rate >= 0) || !std::isfinite(cfg.optimizer.learning_rate))
    throw ConfigError(path + ".learning_rate must be finite and non-negative");
  if (!(cfg.optimizer.beta1 >= 0 && cfg.optimizer.beta1 < 1))
    throw ConfigError(path + ".beta1 must lie in [0, 1)");
  if (!(cfg.optimizer.beta2 >= 0 && cfg.optimizer.beta2 < 1))
    throw ConfigError(path + ".beta2 must lie in [0, 1)");
  if (!(cfg.optimizer.epsilon > 0)) throw ConfigError(path + ".epsilon must be positive");
  if (!(cfg.alpha > 0) || !std::isfinite(cfg.alpha)) throw ConfigError(path + ".alpha must be positive");
  const auto& w = cfg.weights;
  if (!(w.lambda_perc >= 0) || !std::isfinite(w.lambda_perc))
    throw ConfigError(path + ".lambda_perc must be finite and non-negative");
  if (!(w.lambda_context >= 0) || !std::isfinite(w.lambda_context))
    throw ConfigError(path + ".lambda_context must be finite and non-negative");
  if (!(w.tau > 0) || !std::isfinite(w.tau)) throw ConfigError(path + ".tau must be positive");
  if (!(w.bandwidth > 0) || !std::isfinite(w.bandwidth))
    throw ConfigError(path + ".bandwidth must be positive");
  if (!(cfg.augmented_weight >= 0) || !(cfg.original_weight >= 0))
    throw ConfigError(path + ".pair weights must be non-negative");
  if (cfg.working_resolution < 4) throw ConfigError(path + ".working_resolution must be >= 4");
  augmentation::validate(cfg.augmentation, path + ".augmentation");
}

CorrespondenceModel::CorrespondenceModel(std::shared_ptr<const encoder::Backbone> backbone,
                                         losses::PerceptualEncoder perceptual, CftConfig cfg)
    : backbone_(std::move(backbone)), perceptual_(std::move(perceptual)), cfg_(std::move(cfg)) {}

CorrespondenceModel CorrespondenceModel::from_spec(const encoder::BackboneSpec& spec,
                                                   const CftConfig& cfg) {
  encoder::BackboneSpec sized = spec;
  sized.input_size = cfg.working_resolution;
  auto backbone = std::shared_ptr<const encoder::Backbone>(encoder::make_backbone(sized));
  return CorrespondenceModel(backbone, losses::make_perceptual_encoder(spec), cfg);
}

PairForward CorrespondenceModel::forward(const ImageTensor& source, const ImageTensor& target,
                                         std::span<const ad::Var> source_params,
                                         std::span<const ad::Var> target_params,
                                         std::uint64_t negative_seed) const {
  const ad::Var xs = ad::constant(source);
  const ad::Var xt = ad::constant(target);
  const ad::Var fs = encoder::encode(*backbone_, xs, source_params).volume;
  const ad::Var ft = encoder::encode(*backbone_, xt, target_params).volume;
  const ad::Var m = ad::cosine_matrix(ad::centralize(fs), ad::centralize(ft));

  const std::size_t fh = ft.value().height(), fw = ft.value().width();
  const ad::Var xt_small = ad::constant(image::resize(target, fh, fw));
  PairForward out;
  out.warped = correspondence::warp(xt_small, m, cfg_.alpha,
                                    {fs.value().height(), fs.value().width()});
  out.warped_full = ad::resize_bilinear(out.warped, source.height(), source.width());

  const ad::Var fwarp = encoder::encode(*backbone_, out.warped_full, target_params).volume;
  out.contrastive = losses::contrastive(fs, fwarp, cfg_.weights, negative_seed);
  out.perceptual = losses::perceptual(xt, out.warped_full, perceptual_);
  out.contextual = losses::contextual(xt, out.warped_full, perceptual_, cfg_.weights.bandwidth);
  out.total = ad::add(out.contrastive,
                      ad::add(ad::scale(out.perceptual, cfg_.weights.lambda_perc),
                              ad::scale(out.contextual, cfg_.weights.lambda_context)));
  return out;
}

correspondence::WarpedImage CorrespondenceModel::warp(const ImageTensor& source,
                                                      const ImageTensor& target,
                                                      std::span<const Tensor> source_params,
                                                      std::span<const Tensor> target_params) const {
  std::vector<ad::Var> ps, pt;
  for (const Tensor& p : source_params) ps.push_back(ad::constant(p));
  for (const Tensor& p : target_params) pt.push_back(ad::constant(p));
  const auto fs = encoder::encode(*backbone_, ad::constant(source), ps).volume;
  const auto ft = encoder::encode(*backbone_, ad::constant(target), pt).volume;
  const auto m = ad::cosine_matrix(ad::centralize(fs), ad::centralize(ft));
  const ad::Var xt_small =
      ad::constant(image::resize(target, ft.value().height(), ft.value().width()));
  return {correspondence::warp(xt_small, m, cfg_.alpha, {fs.value().height(), fs.value().width()})
              .value(),
          cfg_.alpha};
}

namespace {

bool finite_report(const losses::LossReport& r) {
  return std::isfinite(r.contrastive) && std::isfinite(r.perceptual) &&
         std::isfinite(r.contextual) && std::isfinite(r.total);
}

std::string describe(const losses::LossReport& r) {
  return "contrastive=" + std::to_string(r.contrastive) + " perceptual=" +
         std::to_string(r.perceptual) + " contextual=" + std::to_string(r.contextual) +
         " total=" + std::to_string(r.total);
}

}  // namespace

CftResult fine_tune(const ImageTensor& source, const ImageTensor& target,
                    const encoder::BackboneSpec& backbone, const CftConfig& cfg,
                    const IterationCallback& on_iteration) {
  validate(cfg);
  image::check_rgb(source, "fine_tune source");
  image::check_rgb(target, "fine_tune target");
  const auto t0 = std::chrono::steady_clock::now();

  const std::size_t res = cfg.working_resolution;
  const ImageTensor xs = image::resize(source, res, res);
  const ImageTensor xt = image::resize(target, res, res);
  const CorrespondenceModel model = CorrespondenceModel::from_spec(backbone, cfg);

  // Two independent copies with identical initialisation.
  std::vector<Tensor> ws = model.backbone().initial_params();
  std::vector<Tensor> wt = ws;
  Adam opt_s(cfg.optimizer, ws);
  Adam opt_t(cfg.optimizer, wt);

  CftResult result;
  std::optional<losses::LossReport> last_finite;
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const auto aug = augmentation::sample_pair(xs, xt, cfg.augmentation, it);
    const auto ps = ad::parameters(ws);
    const auto pt = ad::parameters(wt);
    const PairForward fa =
        model.forward(aug.source, aug.target, ps, pt, derive_seed({cfg.seed, it, 1}));
    const PairForward fo = model.forward(xs, xt, ps, pt, derive_seed({cfg.seed, it, 2}));

    const double wa = cfg.augmented_weight, wo = cfg.original_weight;
    const ad::Var objective = ad::add(ad::scale(fa.total, wa), ad::scale(fo.total, wo));
    const losses::LossReport report = losses::total_loss(
        wa * fa.contrastive.item() + wo * fo.contrastive.item(),
        wa * fa.perceptual.item() + wo * fo.perceptual.item(),
        wa * fa.contextual.item() + wo * fo.contextual.item(), cfg.weights, it);

    if (!finite_report(report)) {
      throw CftDivergence(it, last_finite,
                          "cft: non-finite loss at iteration " + std::to_string(it) +
                              (last_finite ? "; last finite " + describe(*last_finite) : ""));
    }
    if (report.total > cfg.divergence_limit) {
      throw CftDivergence(it, last_finite,
                          "cft: loss diverged at iteration " + std::to_string(it) + " (" +
                              describe(report) + ")");
    }
    last_finite = report;

    ad::backward(objective);
    std::vector<Tensor> gs, gt;
    for (const auto& p : ps) gs.push_back(p.grad());
    for (const auto& p : pt) gt.push_back(p.grad());
    opt_s.step(ws, gs);
    opt_t.step(wt, gt);

    IterationRecord rec{report, aug.photometric, aug.geometric};
    result.loss_trace.push_back(report);
    result.records.push_back(rec);
    if (on_iteration) on_iteration(rec);
    if (cfg.checkpoint_every && (it + 1) % cfg.checkpoint_every == 0) {
      result.checkpoints.push_back({it + 1, model.warp(xs, xt, ws, wt)});
    }
  }

  result.warped = model.warp(xs, xt, ws, wt);
  result.warped_full =
      ad::resize_bilinear(ad::constant(result.warped.data), res, res).value();
  std::vector<const Tensor*> all;
  for (const Tensor& p : ws) all.push_back(&p);
  for (const Tensor& p : wt) all.push_back(&p);
  result.final_params_digest = digest_hex(content_digest(all));
  result.source_params = std::move(ws);
  result.target_params = std::move(wt);
  result.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace xft::cft
