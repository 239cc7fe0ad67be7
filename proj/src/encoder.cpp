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

#include "xft/encoder.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>

#include "xft/error.hpp"
#include "xft/rng.hpp"

namespace xft::encoder {

std::string to_string(BackboneKind kind) {
  return kind == BackboneKind::kToy ? "toy-deterministic" : "external-pretrained";
}

BackboneKind backbone_kind_from_string(const std::string& s) {
  if (s == "toy-deterministic") return BackboneKind::kToy;
  if (s == "external-pretrained") return BackboneKind::kExternal;
  throw ConfigError("unknown backbone kind '" + s + "'");
}

ConvStackBackbone::ConvStackBackbone(std::vector<ConvStage> stages, std::vector<Tensor> params,
                                     std::vector<std::size_t> levels, std::size_t input_size)
    : stages_(std::move(stages)),
      params_(std::move(params)),
      levels_(std::move(levels)),
      input_size_(input_size) {
  if (stages_.empty()) throw ConfigError("backbone: no stages");
  if (levels_.empty()) throw ConfigError("backbone: levels must be non-empty");
  for (std::size_t level : levels_) {
    if (level == 0 || level > stages_.size()) {
      throw ConfigError("backbone: tap level " + std::to_string(level) + " outside 1.." +
                        std::to_string(stages_.size()));
    }
  }
  if (params_.size() != 2 * stages_.size()) {
    throw ConfigError("backbone: expected " + std::to_string(2 * stages_.size()) +
                      " parameter tensors, got " + std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const ConvStage& s = stages_[i];
    if (i > 0 && s.in_channels != stages_[i - 1].out_channels) {
      throw ConfigError("backbone: stage " + std::to_string(i + 1) + " input channels mismatch");
    }
    if (params_[2 * i].shape() != Shape{s.out_channels, s.in_channels, s.kernel, s.kernel} ||
        params_[2 * i + 1].size() != s.out_channels) {
      throw ConfigError("backbone: stage " + std::to_string(i + 1) + " parameter shape mismatch");
    }
  }
}

ConvStackBackbone ConvStackBackbone::toy(const BackboneSpec& spec) {
  if (spec.widths.empty()) throw ConfigError("backbone.widths must be non-empty");
  Rng rng(derive_seed({spec.seed, 0xBAC4B04EULL}));
  std::vector<ConvStage> stages;
  std::vector<Tensor> params;
  std::size_t in_c = 3;
  const ad::Activation act = ad::activation_from_string(spec.activation);
  for (std::size_t width : spec.widths) {
    ConvStage s{in_c, width, 3, 2, 1, act};
    const double stddev = std::sqrt(1.0 / static_cast<double>(in_c * 9));
    params.push_back(normal_tensor({width, in_c, 3, 3}, stddev, rng));
    params.push_back(normal_tensor({width}, 0.1, rng));
    stages.push_back(s);
    in_c = width;
  }
  return ConvStackBackbone(std::move(stages), std::move(params), spec.levels, spec.input_size);
}

ConvStackBackbone ConvStackBackbone::load(const std::filesystem::path& path,
                                          std::vector<std::size_t> levels,
                                          std::size_t input_size) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open backbone weights " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("backbone weights " + path.string() + ": " + e.what());
  }
  try {
    if (j.at("format") != "xft-conv-stack/1") {
      throw ConfigError("backbone weights: unsupported format " + j.at("format").dump());
    }
    std::size_t in_c = j.at("input_channels");
    std::vector<ConvStage> stages;
    std::vector<Tensor> params;
    for (const auto& s : j.at("stages")) {
      ConvStage st;
      st.in_channels = in_c;
      st.out_channels = s.at("out_channels");
      st.kernel = s.at("kernel");
      st.stride = s.at("stride");
      st.pad = s.at("pad");
      st.activation = ad::activation_from_string(s.at("activation"));
      params.emplace_back(Shape{st.out_channels, st.in_channels, st.kernel, st.kernel},
                          s.at("weight").get<std::vector<double>>());
      params.emplace_back(Shape{st.out_channels}, s.at("bias").get<std::vector<double>>());
      stages.push_back(st);
      in_c = st.out_channels;
    }
    return ConvStackBackbone(std::move(stages), std::move(params), std::move(levels), input_size);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("backbone weights " + path.string() + ": " + e.what());
  }
}

void ConvStackBackbone::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["format"] = "xft-conv-stack/1";
  j["input_channels"] = stages_.front().in_channels;
  j["stages"] = nlohmann::json::array();
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const ConvStage& s = stages_[i];
    j["stages"].push_back({{"out_channels", s.out_channels},
                           {"kernel", s.kernel},
                           {"stride", s.stride},
                           {"pad", s.pad},
                           {"activation", ad::to_string(s.activation)},
                           {"weight", params_[2 * i].storage()},
                           {"bias", params_[2 * i + 1].storage()}});
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump() << '\n';
}

std::vector<ad::Var> ConvStackBackbone::taps(const ad::Var& image,
                                             std::span<const ad::Var> params) const {
  if (params.size() != params_.size()) {
    throw ConfigError("backbone: got " + std::to_string(params.size()) +
                      " parameter tensors, expected " + std::to_string(params_.size()));
  }
  const Tensor& img = image.value();
  if (img.rank() != 3 || img.channels() != stages_.front().in_channels) {
    throw ConfigError("backbone: input " + shape_string(img.shape()) + " needs " +
                      std::to_string(stages_.front().in_channels) + " channels");
  }
  if (input_size_ != 0 && (img.height() != input_size_ || img.width() != input_size_)) {
    throw ConfigError("backbone: input " + shape_string(img.shape()) + " does not match the " +
                      std::to_string(input_size_) + "x" + std::to_string(input_size_) +
                      " input size");
  }
  std::size_t deepest = 0;
  for (std::size_t l : levels_) deepest = std::max(deepest, l);

  std::vector<ad::Var> stage_out;
  ad::Var x = image;
  for (std::size_t i = 0; i < deepest; ++i) {
    const ConvStage& s = stages_[i];
    x = ad::activate(ad::conv2d(x, params[2 * i], params[2 * i + 1], s.stride, s.pad),
                     s.activation);
    stage_out.push_back(x);
  }
  std::vector<ad::Var> out;
  for (std::size_t l : levels_) {
    const ad::Var& t = stage_out[l - 1];
    if (!t.value().all_finite()) {
      throw NumericError("backbone: non-finite activation at tap level " + std::to_string(l));
    }
    out.push_back(t);
  }
  return out;
}

std::unique_ptr<Backbone> make_backbone(const BackboneSpec& spec) {
  if (spec.kind == BackboneKind::kToy) {
    return std::make_unique<ConvStackBackbone>(ConvStackBackbone::toy(spec));
  }
  if (spec.weights.empty()) throw ConfigError("backbone.weights is required for external backbones");
  return std::make_unique<ConvStackBackbone>(
      ConvStackBackbone::load(spec.weights, spec.levels, spec.input_size));
}

EncodedFeatures encode(const Backbone& backbone, const ad::Var& image,
                       std::span<const ad::Var> params) {
  std::vector<ad::Var> taps = backbone.taps(image, params);
  std::size_t fh = 0, fw = 0;
  for (const ad::Var& t : taps) {
    if (t.value().height() > fh) {
      fh = t.value().height();
      fw = t.value().width();
    }
  }
  EncodedFeatures enc;
  std::vector<ad::Var> parts;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < taps.size(); ++i) {
    const Tensor& v = taps[i].value();
    if (fh % v.height() || fw % v.width()) {
      throw ConfigError("encoder: tap level " + std::to_string(backbone.levels()[i]) + " size " +
                        shape_string(v.shape()) + " does not divide the finest tap " +
                        std::to_string(fh) + "x" + std::to_string(fw));
    }
    parts.push_back(ad::resize_bilinear(taps[i], fh, fw));
    enc.levels.push_back({backbone.levels()[i], offset, v.channels()});
    offset += v.channels();
  }
  enc.volume = parts.size() == 1 ? parts.front() : ad::concat_channels(parts);
  return enc;
}

FeatureVolume extract_features(const ImageTensor& image, const Backbone& backbone,
                               std::span<const Tensor> params) {
  std::vector<ad::Var> vars;
  for (const Tensor& p : params) vars.push_back(ad::constant(p));
  EncodedFeatures enc = encode(backbone, ad::constant(image), vars);
  return {enc.volume.value(), std::move(enc.levels)};
}

CentralizedFeatureVolume centralize(const FeatureVolume& f) {
  if (!f.data.all_finite()) throw NumericError("centralize: non-finite feature volume");
  return {ad::centralize(ad::constant(f.data)).value()};
}

}  // namespace xft::encoder
