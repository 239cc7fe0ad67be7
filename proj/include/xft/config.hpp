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

// Run configuration: a versioned YAML document, parsed with defaults applied
// and every violation reported with its field path.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xft/cft.hpp"
#include "xft/encoder.hpp"
#include "xft/fid.hpp"
#include "xft/generator.hpp"
#include "xft/mgi.hpp"

namespace xft::config {

inline constexpr const char* kSchema = "xft/1";
// Reference statistics built from crops of the working pair.
inline constexpr const char* kPairCrops = "pair-crops";

struct MgiSettings {
  std::vector<std::size_t> composing_layers;
  std::vector<std::size_t> latent_counts;
  mgi::InversionConfig inversion;

  std::vector<mgi::HypothesisConfig> grid() const;
  bool operator==(const MgiSettings&) const = default;
};

struct FidSettings {
  std::string reference = kPairCrops;  // or a stats file path
  fid::EmbeddingSpec embedding;
  fid::CropPolicy crops;

  bool operator==(const FidSettings&) const = default;
};

struct RunConfig {
  std::string source;
  std::string target;
  std::string output_dir;
  std::size_t working_resolution = 256;
  std::size_t upsampling_factor = 4;
  std::uint64_t seed = 0;
  encoder::BackboneSpec backbone;
  mgi::GeneratorSpec generator;
  cft::CftConfig cft;
  MgiSettings mgi;
  FidSettings fid;

  // Side of the generator output and of the final image.
  std::size_t final_resolution() const { return working_resolution * upsampling_factor; }
  bool operator==(const RunConfig&) const = default;
};

struct ConfigResult {
  // Best-effort resolved config; only meaningful when ok().
  RunConfig config;
  std::vector<std::string> errors;

  bool ok() const { return errors.empty(); }
};

// "a.b.c=value" overrides are applied to the document before validation;
// values are parsed as YAML scalars or flow sequences.
ConfigResult validate_config(const std::string& text, const std::vector<std::string>& overrides = {},
                             bool require_images = true);

// Throws IoError if unreadable, ConfigError listing every violation otherwise.
RunConfig load_config(const std::filesystem::path& path,
                      const std::vector<std::string>& overrides = {}, bool require_images = true);

// Full document including every applied default.
std::string serialize(const RunConfig& cfg);

// $XFT_OUTPUT_ROOT, or "runs" when unset.
std::filesystem::path default_output_root();

}  // namespace xft::config
