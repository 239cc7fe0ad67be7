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

// Hierarchical feature extraction: a pluggable conv backbone exposes tap
// feature maps; coarser taps are bilinearly upsampled to the finest tap and
// channel-concatenated in declared level order.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "xft/autodiff.hpp"
#include "xft/image.hpp"
#include "xft/tensor.hpp"

namespace xft::encoder {

enum class BackboneKind { kToy, kExternal };
std::string to_string(BackboneKind kind);
BackboneKind backbone_kind_from_string(const std::string& s);

struct BackboneSpec {
  BackboneKind kind = BackboneKind::kToy;
  // 1-based stage indices whose outputs are tapped.
  std::vector<std::size_t> levels{2, 3};
  std::uint64_t seed = 7;
  // Toy architecture: one stride-2 3x3 conv stage per width.
  std::vector<std::size_t> widths{8, 16, 32};
  std::string activation = "tanh";
  // Conv-stack weights file for external backbones.
  std::string weights;
  // Expected square input side; 0 accepts any size.
  std::size_t input_size = 256;

  bool operator==(const BackboneSpec&) const = default;
};

struct ConvStage {
  std::size_t in_channels = 3;
  std::size_t out_channels = 8;
  std::size_t kernel = 3;
  std::size_t stride = 2;
  std::size_t pad = 1;
  ad::Activation activation = ad::Activation::kTanh;
};

// Plugin surface: ordered tap maps for an image under a parameter set.
class Backbone {
 public:
  virtual ~Backbone() = default;
  virtual std::vector<ad::Var> taps(const ad::Var& image,
                                    std::span<const ad::Var> params) const = 0;
  virtual std::vector<Tensor> initial_params() const = 0;
  virtual const std::vector<std::size_t>& levels() const = 0;
  virtual std::size_t input_size() const = 0;
};

// Plain stack of conv stages; params are [w0, b0, w1, b1, ...].
class ConvStackBackbone : public Backbone {
 public:
  ConvStackBackbone(std::vector<ConvStage> stages, std::vector<Tensor> params,
                    std::vector<std::size_t> levels, std::size_t input_size);

  static ConvStackBackbone toy(const BackboneSpec& spec);
  static ConvStackBackbone load(const std::filesystem::path& path,
                                std::vector<std::size_t> levels, std::size_t input_size);
  void save(const std::filesystem::path& path) const;

  std::vector<ad::Var> taps(const ad::Var& image, std::span<const ad::Var> params) const override;
  std::vector<Tensor> initial_params() const override { return params_; }
  const std::vector<std::size_t>& levels() const override { return levels_; }
  std::size_t input_size() const override { return input_size_; }
  const std::vector<ConvStage>& stages() const { return stages_; }

 private:
  std::vector<ConvStage> stages_;
  std::vector<Tensor> params_;
  std::vector<std::size_t> levels_;
  std::size_t input_size_;
};

std::unique_ptr<Backbone> make_backbone(const BackboneSpec& spec);

struct LevelRange {
  std::size_t level = 0;
  std::size_t offset = 0;
  std::size_t channels = 0;
};

struct FeatureVolume {
  Tensor data;  // H' x W' x C
  std::vector<LevelRange> levels;
};

struct CentralizedFeatureVolume {
  Tensor data;
};

struct EncodedFeatures {
  ad::Var volume;
  std::vector<LevelRange> levels;
};

// Differentiable extraction used inside the optimisation loops.
EncodedFeatures encode(const Backbone& backbone, const ad::Var& image,
                       std::span<const ad::Var> params);

FeatureVolume extract_features(const ImageTensor& image, const Backbone& backbone,
                               std::span<const Tensor> params);

CentralizedFeatureVolume centralize(const FeatureVolume& f);

}  // namespace xft::encoder
