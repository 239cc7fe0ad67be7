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

// End-to-end orchestration: correspondence fine-tuning, GAN inversion with
// FID self-selection, artifacts and reports in one output directory.

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "xft/config.hpp"
#include "xft/fid.hpp"
#include "xft/image.hpp"

namespace xft::pipeline {

using Logger = std::function<void(const std::string&)>;

// File names inside a run directory.
namespace files {
inline constexpr const char* kSource = "source.png";
inline constexpr const char* kTarget = "target.png";
inline constexpr const char* kWarped = "warped.png";
inline constexpr const char* kWarpedDump = "warped.f64";
inline constexpr const char* kFinal = "final.png";
inline constexpr const char* kFinalDump = "final.f64";
inline constexpr const char* kGrid = "grid.png";
inline constexpr const char* kGridLayout = "grid.json";
inline constexpr const char* kMetrics = "metrics.jsonl";
inline constexpr const char* kManifest = "manifest.yaml";
inline constexpr const char* kReport = "report.json";
inline constexpr const char* kSelection = "selection.json";
inline constexpr const char* kReference = "reference.stats";
inline constexpr const char* kHypotheses = "hypotheses";
}  // namespace files

struct RankEntry {
  std::string id;
  std::size_t composing_layer = 0;
  std::size_t num_latents = 0;
  double fid = 0.0;
  double distance = 0.0;
  bool failed = false;
};

struct RunReport {
  std::filesystem::path output_dir;
  // Relative artifact paths by role ("warped", "final", ...).
  std::map<std::string, std::string> artifacts;
  std::string selected_id;
  double selected_fid = 0.0;
  std::vector<RankEntry> ranking;  // ascending fid, failed last
  double cft_seconds = 0.0;
  double mgi_seconds = 0.0;
  double total_seconds = 0.0;
};

// Both stages; throws PipelineError tagged with the failing stage after
// recording the partial state in report.json.
RunReport run(const config::RunConfig& cfg, const Logger& log = {});

// Stage 1 only: writes source, target and warped images.
RunReport run_cft(const config::RunConfig& cfg, const Logger& log = {});

// Stage 2 only, from a warped image (PNG or float dump) at working resolution.
RunReport run_mgi(const config::RunConfig& cfg, const std::filesystem::path& warped,
                  const Logger& log = {});

struct ReferenceBuild {
  fid::GaussianStats stats;
  std::vector<std::string> used;
  std::vector<std::string> skipped;
  std::vector<std::string> warnings;
};

// Stats over every readable PNG in `dir` (sorted by name), written to `out`.
ReferenceBuild build_fid_reference(const std::filesystem::path& dir, const std::filesystem::path& out,
                                   const fid::EmbeddingSpec& embedding,
                                   const fid::CropPolicy& crops, const Logger& log = {});

struct Panel {
  std::string label;
  std::string file;
  std::size_t width = 0;   // native resolution of the file
  std::size_t height = 0;
  std::size_t x = 0;       // placement inside the grid image
  std::size_t y = 0;
  std::size_t cell = 0;    // displayed side
};

struct GridLayout {
  std::vector<Panel> panels;
  std::size_t width = 0;
  std::size_t height = 0;
};

// Re-renders grid.png and grid.json from the four stage images of a run.
GridLayout render_report(const std::filesystem::path& run_dir);

// 5x7 bitmap text; unknown characters render as blanks.
void draw_text(ImageTensor& canvas, std::size_t x, std::size_t y, const std::string& text,
               std::size_t scale, double value = 0.0);

// Writes the bundled synthetic pair and reference set below `dir`.
void write_synthetic_data(const std::filesystem::path& dir, std::size_t size = 256);

}  // namespace xft::pipeline
