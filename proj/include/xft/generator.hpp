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

// Frozen feed-forward generator with multi-code composition: every latent is
// propagated to the composing layer, the per-latent feature maps are merged
// by per-channel importance weights, and the merged map runs through the
// remaining layers.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xft/autodiff.hpp"
#include "xft/image.hpp"

namespace xft::mgi {

enum class GeneratorKind { kToy, kExternal };
std::string to_string(GeneratorKind kind);
GeneratorKind generator_kind_from_string(const std::string& s);

struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::kToy;
  std::size_t latent_dim = 16;
  std::size_t layer_count = 4;
  std::size_t output_size = 256;  // square output side
  std::string weights;            // external only
  std::uint64_t seed = 13;        // toy only

  bool operator==(const GeneratorSpec&) const = default;
};

struct GeneratorLayer {
  enum class Kind { kDense, kConv };
  Kind kind = Kind::kConv;
  std::size_t out_channels = 3;
  // Dense: output is side x side x out_channels.
  std::size_t side = 0;
  // Conv: bilinear upsampling factor applied before a stride-1 convolution.
  std::size_t upsample = 1;
  std::size_t kernel = 1;
  ad::Activation activation = ad::Activation::kIdentity;
};

class Generator {
 public:
  // Params per layer: dense [m][latent_dim] + [m]; conv [co][ci][k][k] + [co].
  Generator(std::size_t latent_dim, std::vector<GeneratorLayer> layers, std::vector<Tensor> params);

  static Generator toy(const GeneratorSpec& spec);
  static Generator load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t latent_dim() const { return latent_dim_; }
  std::size_t layer_count() const { return layers_.size(); }
  // Channels of the map produced by 1-based layer `layer`.
  std::size_t channels_at(std::size_t layer) const;
  std::size_t output_size() const;
  const std::vector<GeneratorLayer>& layers() const { return layers_; }
  const std::vector<Tensor>& params() const { return params_; }
  std::string digest() const;

  // Valid composing layers are 1 .. layer_count - 1.
  void check_composing_layer(std::size_t layer) const;

  // latents: n vars of [latent_dim]; importance: n vars of [channels_at(k)].
  ad::Var generate(std::span<const ad::Var> latents, std::span<const ad::Var> importance,
                   std::size_t composing_layer) const;
  ImageTensor generate(std::span<const Tensor> latents, std::span<const Tensor> importance,
                       std::size_t composing_layer) const;

 private:
  ad::Var apply(std::size_t index, const ad::Var& x) const;

  std::size_t latent_dim_;
  std::vector<GeneratorLayer> layers_;
  std::vector<Tensor> params_;
  std::vector<ad::Var> frozen_;
};

Generator make_generator(const GeneratorSpec& spec);

}  // namespace xft::mgi
