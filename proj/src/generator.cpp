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

#include "xft/generator.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "xft/error.hpp"
#include "xft/rng.hpp"

namespace xft::mgi {

std::string to_string(GeneratorKind kind) {
  return kind == GeneratorKind::kToy ? "toy-deterministic" : "external-pretrained";
}

GeneratorKind generator_kind_from_string(const std::string& s) {
  if (s == "toy-deterministic" || s == "toy") return GeneratorKind::kToy;
  if (s == "external-pretrained" || s == "external") return GeneratorKind::kExternal;
  throw ConfigError("unknown generator kind '" + s + "'");
}

Generator::Generator(std::size_t latent_dim, std::vector<GeneratorLayer> layers,
                     std::vector<Tensor> params)
    : latent_dim_(latent_dim), layers_(std::move(layers)), params_(std::move(params)) {
  if (latent_dim_ == 0) throw ConfigError("generator: latent_dim must be positive");
  if (layers_.size() < 2) throw ConfigError("generator: layer_count must be >= 2");
  if (layers_.front().kind != GeneratorLayer::Kind::kDense) {
    throw ConfigError("generator: the first layer must be dense");
  }
  if (params_.size() != 2 * layers_.size()) {
    throw ConfigError("generator: expected " + std::to_string(2 * layers_.size()) +
                      " parameter tensors, got " + std::to_string(params_.size()));
  }
  std::size_t in_c = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const GeneratorLayer& l = layers_[i];
    Shape w, b{l.out_channels};
    if (l.kind == GeneratorLayer::Kind::kDense) {
      if (i != 0) throw ConfigError("generator: only the first layer may be dense");
      w = {l.side * l.side * l.out_channels, latent_dim_};
    } else {
      if (l.upsample == 0 || l.kernel % 2 == 0) {
        throw ConfigError("generator: layer " + std::to_string(i + 1) +
                          " needs upsample >= 1 and an odd kernel");
      }
      w = {l.out_channels, in_c, l.kernel, l.kernel};
    }
    if (l.kind == GeneratorLayer::Kind::kDense) b = {l.side * l.side * l.out_channels};
    if (params_[2 * i].shape() != w || params_[2 * i + 1].shape() != b) {
      throw ConfigError("generator: layer " + std::to_string(i + 1) + " parameter shape mismatch");
    }
    in_c = l.out_channels;
  }
  if (layers_.back().out_channels != 3) throw ConfigError("generator: last layer must emit RGB");
  for (const Tensor& p : params_) frozen_.push_back(ad::constant(p));
}

Generator Generator::toy(const GeneratorSpec& spec) {
  const std::size_t n = spec.layer_count;
  if (n < 2) throw ConfigError("generator.layer_count must be >= 2");
  if (spec.latent_dim == 0) throw ConfigError("generator.latent_dim must be positive");
  const std::size_t base = spec.output_size >> (n - 1);
  if (base == 0 || (base << (n - 1)) != spec.output_size) {
    throw ConfigError("generator.output_size must be a multiple of 2^(layer_count - 1)");
  }
  auto channels = [](std::size_t res) -> std::size_t { return res <= 64 ? 16 : 8; };

  Rng rng(derive_seed({spec.seed, 0x6E4E0ULL}));
  std::vector<GeneratorLayer> layers;
  std::vector<Tensor> params;

  GeneratorLayer dense;
  dense.kind = GeneratorLayer::Kind::kDense;
  dense.side = base;
  dense.out_channels = channels(base);
  dense.activation = ad::Activation::kLeakyRelu;
  const std::size_t m = base * base * dense.out_channels;
  params.push_back(normal_tensor({m, spec.latent_dim}, 1.0 / std::sqrt(double(spec.latent_dim)), rng));
  params.push_back(normal_tensor({m}, 0.1, rng));
  layers.push_back(dense);

  std::size_t res = base, in_c = dense.out_channels;
  for (std::size_t i = 2; i <= n; ++i) {
    res *= 2;
    GeneratorLayer l;
    l.upsample = 2;
    const bool last = i == n;
    l.out_channels = last ? 3 : channels(res);
    l.kernel = (!last && res <= 64) ? 3 : 1;
    l.activation = last ? ad::Activation::kSigmoid : ad::Activation::kLeakyRelu;
    const double fan_in = double(in_c * l.kernel * l.kernel);
    params.push_back(
        normal_tensor({l.out_channels, in_c, l.kernel, l.kernel}, std::sqrt(2.0 / fan_in), rng));
    params.push_back(normal_tensor({l.out_channels}, 0.1, rng));
    layers.push_back(l);
    in_c = l.out_channels;
  }
  return Generator(spec.latent_dim, std::move(layers), std::move(params));
}

Generator Generator::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open generator weights " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("generator weights " + path.string() + ": " + e.what());
  }
  try {
    if (j.at("format") != "xft-generator/1") {
      throw ConfigError("generator weights: unsupported format " + j.at("format").dump());
    }
    const std::size_t d = j.at("latent_dim");
    std::vector<GeneratorLayer> layers;
    std::vector<Tensor> params;
    std::size_t in_c = 0;
    for (const auto& s : j.at("layers")) {
      GeneratorLayer l;
      l.kind = s.at("kind") == "dense" ? GeneratorLayer::Kind::kDense : GeneratorLayer::Kind::kConv;
      l.out_channels = s.at("out_channels");
      l.activation = ad::activation_from_string(s.at("activation"));
      Shape w, b;
      if (l.kind == GeneratorLayer::Kind::kDense) {
        l.side = s.at("side");
        w = {l.side * l.side * l.out_channels, d};
        b = {l.side * l.side * l.out_channels};
      } else {
        l.upsample = s.at("upsample");
        l.kernel = s.at("kernel");
        w = {l.out_channels, in_c, l.kernel, l.kernel};
        b = {l.out_channels};
      }
      params.emplace_back(w, s.at("weight").get<std::vector<double>>());
      params.emplace_back(b, s.at("bias").get<std::vector<double>>());
      layers.push_back(l);
      in_c = l.out_channels;
    }
    return Generator(d, std::move(layers), std::move(params));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("generator weights " + path.string() + ": " + e.what());
  }
}

void Generator::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["format"] = "xft-generator/1";
  j["latent_dim"] = latent_dim_;
  j["layers"] = nlohmann::json::array();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const GeneratorLayer& l = layers_[i];
    nlohmann::json s{{"out_channels", l.out_channels},
                     {"activation", ad::to_string(l.activation)},
                     {"weight", params_[2 * i].storage()},
                     {"bias", params_[2 * i + 1].storage()}};
    if (l.kind == GeneratorLayer::Kind::kDense) {
      s["kind"] = "dense";
      s["side"] = l.side;
    } else {
      s["kind"] = "conv";
      s["upsample"] = l.upsample;
      s["kernel"] = l.kernel;
    }
    j["layers"].push_back(s);
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump() << '\n';
}

std::size_t Generator::channels_at(std::size_t layer) const {
  if (layer == 0 || layer > layers_.size()) {
    throw ConfigError("generator: layer " + std::to_string(layer) + " outside 1.." +
                      std::to_string(layers_.size()));
  }
  return layers_[layer - 1].out_channels;
}

std::size_t Generator::output_size() const {
  std::size_t side = layers_.front().side;
  for (std::size_t i = 1; i < layers_.size(); ++i) side *= layers_[i].upsample;
  return side;
}

std::string Generator::digest() const {
  std::vector<const Tensor*> all;
  for (const Tensor& p : params_) all.push_back(&p);
  return digest_hex(content_digest(all));
}

void Generator::check_composing_layer(std::size_t layer) const {
  if (layer == 0 || layer >= layers_.size()) {
    throw ConfigError("composing_layer " + std::to_string(layer) + " outside 1.." +
                      std::to_string(layers_.size() - 1));
  }
}

ad::Var Generator::apply(std::size_t index, const ad::Var& x) const {
  const GeneratorLayer& l = layers_[index];
  const ad::Var& w = frozen_[2 * index];
  const ad::Var& b = frozen_[2 * index + 1];
  if (l.kind == GeneratorLayer::Kind::kDense) {
    const ad::Var flat = ad::linear(x, w, b);
    return ad::activate(ad::reshape(flat, {l.side, l.side, l.out_channels}), l.activation);
  }
  ad::Var h = x;
  if (l.upsample > 1) {
    const Tensor& v = x.value();
    h = ad::resize_bilinear(x, v.height() * l.upsample, v.width() * l.upsample);
  }
  return ad::activate(ad::conv2d(h, w, b, 1, l.kernel / 2), l.activation);
}

ad::Var Generator::generate(std::span<const ad::Var> latents, std::span<const ad::Var> importance,
                            std::size_t composing_layer) const {
  check_composing_layer(composing_layer);
  if (latents.empty()) throw ConfigError("generate: at least one latent code is required");
  if (importance.size() != latents.size()) {
    throw ConfigError("generate: " + std::to_string(latents.size()) + " latents but " +
                      std::to_string(importance.size()) + " importance vectors");
  }
  const std::size_t c = channels_at(composing_layer);
  ad::Var composed;
  for (std::size_t i = 0; i < latents.size(); ++i) {
    if (latents[i].shape() != Shape{latent_dim_}) {
      throw ConfigError("generate: latent " + std::to_string(i) + " has shape " +
                        shape_string(latents[i].shape()) + ", expected [" +
                        std::to_string(latent_dim_) + "]");
    }
    if (importance[i].shape() != Shape{c}) {
      throw ConfigError("generate: importance " + std::to_string(i) + " must have " +
                        std::to_string(c) + " entries");
    }
    ad::Var h = latents[i];
    for (std::size_t k = 0; k < composing_layer; ++k) h = apply(k, h);
    ad::Var term = ad::channel_scale(h, importance[i]);
    composed = composed ? ad::add(composed, term) : term;
  }
  for (std::size_t k = composing_layer; k < layers_.size(); ++k) composed = apply(k, composed);
  return composed;
}

ImageTensor Generator::generate(std::span<const Tensor> latents, std::span<const Tensor> importance,
                                std::size_t composing_layer) const {
  std::vector<ad::Var> z, s;
  for (const Tensor& t : latents) z.push_back(ad::constant(t));
  for (const Tensor& t : importance) s.push_back(ad::constant(t));
  return generate(z, s, composing_layer).value();
}

Generator make_generator(const GeneratorSpec& spec) {
  if (spec.kind == GeneratorKind::kToy) return Generator::toy(spec);
  if (spec.weights.empty()) throw ConfigError("generator.weights is required for external generators");
  Generator g = Generator::load(spec.weights);
  if (g.latent_dim() != spec.latent_dim) {
    throw ConfigError("generator.latent_dim " + std::to_string(spec.latent_dim) +
                      " does not match the weights (" + std::to_string(g.latent_dim()) + ")");
  }
  return g;
}

}  // namespace xft::mgi
