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

#include "xft/mgi.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "xft/adam.hpp"
#include "xft/error.hpp"
#include "xft/rng.hpp"

namespace xft::mgi {

std::string HypothesisConfig::id() const {
  return "L" + std::to_string(composing_layer) + "-N" + std::to_string(num_latents);
}

std::vector<HypothesisConfig> make_grid(const std::vector<std::size_t>& layers,
                                        const std::vector<std::size_t>& counts) {
  std::vector<HypothesisConfig> grid;
  for (std::size_t l : layers)
    for (std::size_t n : counts) grid.push_back({l, n});
  return grid;
}

void validate(const InversionConfig& cfg, const std::string& path) {
  if (!(cfg.learning_rate > 0) || !std::isfinite(cfg.learning_rate))
    throw ConfigError(path + ".learning_rate must be positive");
  if (!(cfg.l2_weight >= 0) || !std::isfinite(cfg.l2_weight))
    throw ConfigError(path + ".l2_weight must be finite and non-negative");
  if (!(cfg.perceptual_weight >= 0) || !std::isfinite(cfg.perceptual_weight))
    throw ConfigError(path + ".perceptual_weight must be finite and non-negative");
  if (cfg.l2_weight == 0 && cfg.perceptual_weight == 0)
    throw ConfigError(path + ": l2_weight and perceptual_weight cannot both be 0");
  if (cfg.upsampling_factor < 1) throw ConfigError(path + ".upsampling_factor must be >= 1");
  if (cfg.max_parallel < 1) throw ConfigError(path + ".max_parallel must be >= 1");
}

ad::Var down(const ad::Var& image, std::size_t factor) {
  return factor == 1 ? image : ad::area_downsample(image, factor);
}

ad::Var inversion_objective(const Generator& gen, std::span<const ad::Var> latents,
                            std::span<const ad::Var> importance, std::size_t composing_layer,
                            const ImageTensor& guidance, const losses::PerceptualEncoder& enc,
                            const InversionConfig& cfg) {
  const ad::Var y = gen.generate(latents, importance, composing_layer);
  const Tensor& yv = y.value();
  if (yv.height() != guidance.height() * cfg.upsampling_factor ||
      yv.width() != guidance.width() * cfg.upsampling_factor) {
    throw ConfigError("mgi: generator output " + shape_string(yv.shape()) +
                      " is not the guidance " + shape_string(guidance.shape()) + " times " +
                      std::to_string(cfg.upsampling_factor));
  }
  const ad::Var small = down(y, cfg.upsampling_factor);
  const ad::Var g = ad::constant(guidance);
  ad::Var d = ad::scale(ad::mean_squared_error(small, g), cfg.l2_weight);
  if (cfg.perceptual_weight > 0) {
    const ad::Var pf = ad::mean_squared_error(enc.volume(small), enc.volume(g));
    d = ad::add(d, ad::scale(pf, cfg.perceptual_weight));
  }
  return d;
}

void initialize(InversionHypothesis& h, const Generator& gen) {
  Rng rng(h.seed);
  const std::size_t n = h.config.num_latents;
  const std::size_t c = gen.channels_at(h.config.composing_layer);
  h.latents.clear();
  h.importance.clear();
  for (std::size_t i = 0; i < n; ++i) h.latents.push_back(normal_tensor({gen.latent_dim()}, 1.0, rng));
  for (std::size_t i = 0; i < n; ++i) h.importance.emplace_back(Shape{c}, 1.0 / double(n));
}

InversionHypothesis invert_hypothesis(const ImageTensor& guidance, const Generator& gen,
                                      const HypothesisConfig& hyp,
                                      const losses::PerceptualEncoder& enc,
                                      const InversionConfig& cfg) {
  validate(cfg);
  image::check_rgb(guidance, "mgi guidance");
  gen.check_composing_layer(hyp.composing_layer);
  if (hyp.num_latents == 0) throw ConfigError("mgi: num_latents must be >= 1");

  InversionHypothesis h;
  h.config = hyp;
  h.seed = derive_seed({cfg.seed, hyp.composing_layer, hyp.num_latents});
  initialize(h, gen);
  const std::size_t n = hyp.num_latents;

  // Variables: latents then importance, one Adam over both.
  std::vector<Tensor> vars = h.latents;
  vars.insert(vars.end(), h.importance.begin(), h.importance.end());
  Adam opt(AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8}, vars);

  auto evaluate = [&](bool with_grad, std::vector<Tensor>* grads) {
    std::vector<ad::Var> vs;
    for (const Tensor& t : vars) vs.push_back(with_grad ? ad::parameter(t) : ad::constant(t));
    std::span<const ad::Var> all(vs);
    const ad::Var obj = inversion_objective(gen, all.first(n), all.subspan(n), hyp.composing_layer,
                                            guidance, enc, cfg);
    if (with_grad && std::isfinite(obj.item())) {
      ad::backward(obj);
      grads->clear();
      for (const auto& v : vs) grads->push_back(v.grad());
    }
    return obj.item();
  };

  std::vector<Tensor> grads;
  try {
    for (std::size_t step = 0; step < cfg.steps; ++step) {
      const double d = evaluate(true, &grads);
      if (step == 0) h.initial_distance = d;
      if (!std::isfinite(d)) {
        throw NumericError("non-finite objective at step " + std::to_string(step));
      }
      opt.step(vars, grads);
      // Importance weights stay non-negative.
      for (std::size_t i = n; i < vars.size(); ++i)
        for (double& v : vars[i].storage()) v = std::max(v, 0.0);
    }
    h.distance = evaluate(false, nullptr);
    if (cfg.steps == 0) h.initial_distance = h.distance;
    if (!std::isfinite(h.distance)) throw NumericError("non-finite final objective");
  } catch (const NumericError& e) {
    h.failed = true;
    h.failure = e.what();
  }
  h.latents.assign(vars.begin(), vars.begin() + static_cast<std::ptrdiff_t>(n));
  h.importance.assign(vars.begin() + static_cast<std::ptrdiff_t>(n), vars.end());
  if (!h.failed) {
    h.image = gen.generate(h.latents, h.importance, hyp.composing_layer);
    if (!h.image.all_finite()) {
      h.failed = true;
      h.failure = "non-finite generator output";
    }
  }
  return h;
}

Scorer fid_scorer(const fid::GaussianStats& reference, const fid::Embedding& embedding,
                  const fid::CropPolicy& policy) {
  return [reference, embedding, policy](const InversionHypothesis& h) {
    const std::vector<ImageTensor> one{h.image};
    return fid::fid_score(one, reference, embedding, policy);
  };
}

MgiResult select(std::vector<InversionHypothesis> hypotheses) {
  MgiResult r;
  r.selection_rule =
      "minimum fid; exact ties -> lower composing_layer, then fewer latents; failed excluded";
  r.hypotheses = std::move(hypotheses);
  std::vector<std::size_t> ok;
  for (std::size_t i = 0; i < r.hypotheses.size(); ++i) {
    const auto& h = r.hypotheses[i];
    if (!h.failed && std::isfinite(h.fid)) ok.push_back(i);
  }
  if (ok.empty()) {
    std::ostringstream msg;
    msg << "all " << r.hypotheses.size() << " hypotheses failed:";
    for (const auto& h : r.hypotheses) {
      msg << " " << h.config.id() << " (" << (h.failed ? h.failure : "non-finite score") << ");";
    }
    throw PipelineError("mgi", msg.str(), ExitCode::kNumeric);
  }
  auto better = [&](std::size_t a, std::size_t b) {
    const auto& x = r.hypotheses[a];
    const auto& y = r.hypotheses[b];
    if (x.fid != y.fid) return x.fid < y.fid;
    if (x.config.composing_layer != y.config.composing_layer)
      return x.config.composing_layer < y.config.composing_layer;
    return x.config.num_latents < y.config.num_latents;
  };
  r.selected_index = *std::min_element(ok.begin(), ok.end(), better);
  const double best = r.hypotheses[r.selected_index].fid;
  std::vector<std::string> tied;
  for (std::size_t i : ok)
    if (r.hypotheses[i].fid == best) tied.push_back(r.hypotheses[i].config.id());
  if (tied.size() > 1) {
    r.tie_break_applied = true;
    r.tie_break_note = "fid tie between";
    for (const auto& t : tied) r.tie_break_note += " " + t;
    r.tie_break_note += "; chose " + r.hypotheses[r.selected_index].config.id();
  }
  return r;
}

MgiResult run_mgi(const ImageTensor& guidance, const Generator& gen,
                  const std::vector<HypothesisConfig>& grid, const Scorer& scorer,
                  const losses::PerceptualEncoder& enc, const InversionConfig& cfg) {
  if (grid.empty()) throw ConfigError("mgi.grid must not be empty");
  validate(cfg);
  for (const auto& h : grid) {
    gen.check_composing_layer(h.composing_layer);
    if (h.num_latents == 0) throw ConfigError("mgi.grid: num_latents must be >= 1");
  }
  const std::string before = gen.digest();

  std::vector<InversionHypothesis> results(grid.size());
  const int threads = static_cast<int>(std::min(cfg.max_parallel, grid.size()));
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::ptrdiff_t si = 0; si < static_cast<std::ptrdiff_t>(grid.size()); ++si) {
    const auto i = static_cast<std::size_t>(si);
    InversionHypothesis h = invert_hypothesis(guidance, gen, grid[i], enc, cfg);
    if (!h.failed) {
      try {
        h.fid = scorer(h);
        if (!std::isfinite(h.fid)) throw NumericError("non-finite score");
      } catch (const Error& e) {
        h.failed = true;
        h.failure = std::string("scoring: ") + e.what();
      }
    }
    results[i] = std::move(h);
  }

  MgiResult r = select(std::move(results));
  r.generator_digest_before = before;
  r.generator_digest_after = gen.digest();
  if (r.generator_digest_after != before) {
    throw PipelineError("mgi", "generator weights changed during inversion", ExitCode::kNumeric);
  }
  return r;
}

}  // namespace xft::mgi
