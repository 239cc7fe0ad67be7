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

#include "xft/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>

#include "xft/cft.hpp"
#include "xft/error.hpp"
#include "xft/generator.hpp"
#include "xft/losses.hpp"
#include "xft/mgi.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace xft::pipeline {

namespace {

constexpr const char* kFidConvention =
    "hypothesis score = FID between the 8x8 grid of half-size crops of the hypothesis image and "
    "the reference statistics (pair crops at final resolution unless a stats file is given)";

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

// Metrics are appended as one JSON object per line; no timings, so reruns
// with the same config are byte-identical.
class MetricsLog {
 public:
  explicit MetricsLog(const fs::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot write " + path.string());
  }
  void write(const json& record) {
    out_ << record.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

struct Inputs {
  ImageTensor source;  // working resolution
  ImageTensor target;
  ImageTensor source_final;  // final resolution, for the pair reference
  ImageTensor target_final;
};

Inputs read_inputs(const config::RunConfig& cfg) {
  Inputs in;
  for (auto [path, what] : {std::pair{&cfg.source, "source"}, std::pair{&cfg.target, "target"}}) {
    if (path->empty()) throw ConfigError(std::string(what) + ": no image path configured");
    if (!fs::exists(*path)) throw IoError(std::string(what) + " image not found: " + *path);
  }
  const ImageTensor s = image::read_png(cfg.source);
  const ImageTensor t = image::read_png(cfg.target);
  const std::size_t w = cfg.working_resolution, f = cfg.final_resolution();
  in.source = image::resize(s, w, w);
  in.target = image::resize(t, w, w);
  in.source_final = image::resize(s, f, f);
  in.target_final = image::resize(t, f, f);
  return in;
}

std::string tensor_digest(const Tensor& t) {
  const Tensor* p[] = {&t};
  return digest_hex(content_digest(p));
}

std::string params_digest(const std::vector<Tensor>& ts) {
  std::vector<const Tensor*> p;
  for (const auto& t : ts) p.push_back(&t);
  return digest_hex(content_digest(p));
}

// Shared state of one invocation.
class Run {
 public:
  Run(const config::RunConfig& cfg, const Logger& log) : cfg_(cfg), log_(log), dir_(cfg.output_dir) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
    report_.output_dir = dir_;
    provenance_["schema"] = config::kSchema;
    write_manifest();
    metrics_.emplace(dir_ / files::kMetrics);
    artifact("metrics", files::kMetrics);
    artifact("manifest", files::kManifest);
  }

  template <class F>
  void stage(const std::string& name, F&& body) {
    try {
      body();
    } catch (const PipelineError&) {
      fail(name);
      throw;
    } catch (const Error& e) {
      failure_ = e.what();
      fail(name);
      throw PipelineError(name, e.what(), e.exit_code());
    } catch (const std::exception& e) {
      failure_ = e.what();
      fail(name);
      throw PipelineError(name, e.what(), ExitCode::kIo);
    }
  }

  void inputs() {
    in_ = read_inputs(cfg_);
    save_image(files::kSource, in_.source, "source");
    save_image(files::kTarget, in_.target, "target");
    provenance_["source_digest"] = tensor_digest(in_.source);
    provenance_["target_digest"] = tensor_digest(in_.target);
  }

  void cft() {
    say(log_, "cft: " + std::to_string(cfg_.cft.iterations) + " iterations at " +
                  std::to_string(cfg_.working_resolution) + "px");
    const auto t0 = Clock::now();
    auto on_iter = [&](const cft::IterationRecord& r) {
      metrics_->write({{"stage", "cft"},
                       {"iteration", r.report.iteration},
                       {"contrastive", r.report.contrastive},
                       {"perceptual", r.report.perceptual},
                       {"contextual", r.report.contextual},
                       {"total", r.report.total}});
      const std::size_t done = r.report.iteration + 1;
      if (done % 50 == 0 || done == cfg_.cft.iterations) {
        say(log_, "cft: iteration " + std::to_string(done) + " total " + std::to_string(r.report.total));
      }
    };
    const cft::CftResult res = cft::fine_tune(in_.source, in_.target, cfg_.backbone, cfg_.cft, on_iter);
    report_.cft_seconds = seconds_since(t0);
    warped_ = res.warped_full;
    save_image(files::kWarped, warped_, "warped");
    save_dump(files::kWarpedDump, warped_, "warped_dump");
    if (!res.checkpoints.empty()) {
      fs::create_directories(dir_ / "checkpoints");
      for (const auto& c : res.checkpoints) {
        char name[64];
        std::snprintf(name, sizeof name, "checkpoints/warp_%06zu.f64", c.iteration);
        image::write_float_dump(dir_ / name, c.warped.data);
      }
    }
    provenance_["backbone_init_digest"] = params_digest(encoder::make_backbone(cfg_.backbone)->initial_params());
    provenance_["cft_params_digest"] = res.final_params_digest;
    const auto& last = res.loss_trace.back();
    cft_summary_ = {{"iterations", res.loss_trace.size()},
                    {"final", {{"contrastive", last.contrastive},
                               {"perceptual", last.perceptual},
                               {"contextual", last.contextual},
                               {"total", last.total}}},
                    {"initial_total", res.loss_trace.front().total},
                    {"elapsed_seconds", report_.cft_seconds}};
  }

  void load_warped(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("warped image not found: " + path.string());
    ImageTensor w = path.extension() == ".png" ? image::read_png(path) : image::read_float_dump(path);
    image::check_rgb(w, "warped image");
    const std::size_t res = cfg_.working_resolution;
    if (w.height() != res || w.width() != res) {
      say(log_, "mgi: resizing warped image " + shape_string(w.shape()) + " to working resolution");
      w = image::resize(w, res, res);
    }
    warped_ = w;
    save_image(files::kWarped, warped_, "warped");
    save_dump(files::kWarpedDump, warped_, "warped_dump");
  }

  void mgi() {
    const auto t0 = Clock::now();
    const mgi::Generator gen = mgi::make_generator(cfg_.generator);
    if (gen.output_size() != cfg_.final_resolution()) {
      throw ConfigError("generator output " + std::to_string(gen.output_size()) +
                        " does not match the final resolution " +
                        std::to_string(cfg_.final_resolution()));
    }
    provenance_["generator_digest"] = gen.digest();
    const fid::Embedding emb = fid::make_embedding(cfg_.fid.embedding);
    fid::GaussianStats reference;
    if (cfg_.fid.reference == config::kPairCrops) {
      const std::vector<ImageTensor> pair{in_.source_final, in_.target_final};
      reference = fid::image_stats(pair, emb, cfg_.fid.crops);
      fid::save_stats(dir_ / files::kReference, reference,
                      {{"source", "pair-crops"}, {"images", "source,target"},
                       {"resolution", std::to_string(cfg_.final_resolution())}});
      artifact("reference", files::kReference);
    } else {
      reference = fid::load_stats(cfg_.fid.reference);
    }
    if (reference.dim() != emb.dim()) {
      throw ConfigError("fid.reference has dimension " + std::to_string(reference.dim()) +
                        " but the embedding produces " + std::to_string(emb.dim()));
    }

    const auto grid = cfg_.mgi.grid();
    say(log_, "mgi: " + std::to_string(grid.size()) + " hypotheses x " +
                  std::to_string(cfg_.mgi.inversion.steps) + " steps");
    const auto enc = losses::make_perceptual_encoder(cfg_.backbone);
    const mgi::MgiResult res = mgi::run_mgi(warped_, gen, grid, mgi::fid_scorer(reference, emb, cfg_.fid.crops),
                                            enc, cfg_.mgi.inversion);
    report_.mgi_seconds = seconds_since(t0);

    fs::create_directories(dir_ / files::kHypotheses);
    for (const auto& h : res.hypotheses) {
      const std::string id = h.config.id();
      json rec{{"stage", "mgi"},
               {"hypothesis", id},
               {"composing_layer", h.config.composing_layer},
               {"num_latents", h.config.num_latents},
               {"seed", h.seed},
               {"initial_distance", h.initial_distance},
               {"distance", h.distance},
               {"failed", h.failed}};
      if (h.failed) {
        rec["failure"] = h.failure;
      } else {
        rec["fid"] = h.fid;
        const std::string png = std::string(files::kHypotheses) + "/" + id + ".png";
        image::write_png(dir_ / png, h.image);
        artifact("hypothesis " + id, png);
      }
      metrics_->write(rec);
      const std::string js = std::string(files::kHypotheses) + "/" + id + ".json";
      write_text(dir_ / js, rec.dump(2) + "\n");
      artifact("hypothesis " + id + " record", js);
      report_.ranking.push_back({id, h.config.composing_layer, h.config.num_latents,
                                 h.failed ? 0.0 : h.fid, h.distance, h.failed});
    }
    std::stable_sort(report_.ranking.begin(), report_.ranking.end(),
                     [](const RankEntry& a, const RankEntry& b) {
                       if (a.failed != b.failed) return !a.failed;
                       if (a.fid != b.fid) return a.fid < b.fid;
                       if (a.composing_layer != b.composing_layer) return a.composing_layer < b.composing_layer;
                       return a.num_latents < b.num_latents;
                     });

    const auto& sel = res.selected();
    report_.selected_id = sel.config.id();
    report_.selected_fid = sel.fid;
    metrics_->write({{"stage", "select"},
                     {"selected", report_.selected_id},
                     {"fid", sel.fid},
                     {"tie_break_applied", res.tie_break_applied}});
    save_image(files::kFinal, sel.image, "final");
    save_dump(files::kFinalDump, sel.image, "final_dump");

    json table = json::array();
    for (const auto& r : report_.ranking) {
      json row{{"hypothesis", r.id}, {"composing_layer", r.composing_layer},
               {"num_latents", r.num_latents}, {"distance", r.distance}, {"failed", r.failed}};
      if (!r.failed) row["fid"] = r.fid;
      table.push_back(row);
    }
    mgi_summary_ = {{"selected", report_.selected_id},
                    {"selected_fid", sel.fid},
                    {"selection_rule", res.selection_rule},
                    {"tie_break_applied", res.tie_break_applied},
                    {"tie_break_note", res.tie_break_note},
                    {"fid_convention", kFidConvention},
                    {"generator_digest_before", res.generator_digest_before},
                    {"generator_digest_after", res.generator_digest_after},
                    {"ranking", table},
                    {"elapsed_seconds", report_.mgi_seconds}};
    write_text(dir_ / files::kSelection, mgi_summary_.dump(2) + "\n");
    artifact("selection", files::kSelection);
  }

  void grid() {
    render_report(dir_);
    artifact("grid", files::kGrid);
    artifact("grid_layout", files::kGridLayout);
  }

  RunReport finish(Clock::time_point t0) {
    report_.total_seconds = seconds_since(t0);
    write_manifest();
    write_report("complete");
    artifact("report", files::kReport);
    for (const auto& [role, rel] : report_.artifacts) {
      const fs::path p = dir_ / rel;
      if (!fs::exists(p) || fs::file_size(p) == 0) {
        throw IoError("artifact '" + role + "' missing or empty: " + p.string());
      }
    }
    return report_;
  }

 private:
  void artifact(const std::string& role, const std::string& rel) { report_.artifacts[role] = rel; }

  void save_image(const char* name, const ImageTensor& img, const std::string& role) {
    image::write_png(dir_ / name, img);
    artifact(role, name);
  }

  void save_dump(const char* name, const Tensor& t, const std::string& role) {
    image::write_float_dump(dir_ / name, t);
    artifact(role, name);
  }

  void write_manifest() {
    std::string text = config::serialize(cfg_);
    text += "provenance:\n";
    for (const auto& [k, v] : provenance_) text += "  " + k + ": \"" + v + "\"\n";
    write_text(dir_ / files::kManifest, text);
  }

  void fail(const std::string& stage) {
    try {
      report_.total_seconds = 0;
      write_manifest();
      write_report("failed", stage);
    } catch (const std::exception&) {
      // The original error matters more than a missing report.
    }
  }

  void write_report(const std::string& status, const std::string& stage = "") {
    json j{{"status", status},
           {"output_dir", dir_.string()},
           {"manifest", files::kManifest},
           {"artifacts", report_.artifacts},
           {"fid_convention", kFidConvention},
           {"timing_seconds",
            {{"cft", report_.cft_seconds}, {"mgi", report_.mgi_seconds}, {"total", report_.total_seconds}}}};
    if (!cft_summary_.is_null()) j["cft"] = cft_summary_;
    if (!mgi_summary_.is_null()) {
      j["mgi"] = mgi_summary_;
      j["selected_image"] = files::kFinal;
    }
    if (!stage.empty()) {
      j["failed_stage"] = stage;
      j["error"] = failure_;
    }
    write_text(dir_ / files::kReport, j.dump(2) + "\n");
  }

  const config::RunConfig& cfg_;
  Logger log_;
  fs::path dir_;
  RunReport report_;
  std::map<std::string, std::string> provenance_;
  std::optional<MetricsLog> metrics_;
  Inputs in_;
  ImageTensor warped_;
  json cft_summary_;
  json mgi_summary_;
  std::string failure_;
};

}  // namespace

RunReport run(const config::RunConfig& cfg, const Logger& log) {
  const auto t0 = Clock::now();
  Run r(cfg, log);
  r.stage("input", [&] { r.inputs(); });
  r.stage("cft", [&] { r.cft(); });
  r.stage("mgi", [&] { r.mgi(); });
  r.stage("report", [&] { r.grid(); });
  return r.finish(t0);
}

RunReport run_cft(const config::RunConfig& cfg, const Logger& log) {
  const auto t0 = Clock::now();
  Run r(cfg, log);
  r.stage("input", [&] { r.inputs(); });
  r.stage("cft", [&] { r.cft(); });
  return r.finish(t0);
}

RunReport run_mgi(const config::RunConfig& cfg, const fs::path& warped, const Logger& log) {
  const auto t0 = Clock::now();
  Run r(cfg, log);
  r.stage("input", [&] {
    r.inputs();
    r.load_warped(warped);
  });
  r.stage("mgi", [&] { r.mgi(); });
  r.stage("report", [&] { r.grid(); });
  return r.finish(t0);
}

ReferenceBuild build_fid_reference(const fs::path& dir, const fs::path& out,
                                   const fid::EmbeddingSpec& embedding, const fid::CropPolicy& crops,
                                   const Logger& log) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) entries.push_back(e.path());
  std::sort(entries.begin(), entries.end());

  ReferenceBuild b;
  std::vector<ImageTensor> images;
  std::map<std::uint64_t, std::string> seen;
  auto warn = [&](const std::string& w) {
    b.warnings.push_back(w);
    say(log, "warning: " + w);
  };
  for (const auto& p : entries) {
    const std::string name = p.filename().string();
    if (p.extension() != ".png") {
      b.skipped.push_back(name);
      warn("skipping " + name + ": not a PNG file");
      continue;
    }
    try {
      ImageTensor img = image::read_png(p);
      const Tensor* t[] = {&img};
      const std::uint64_t d = content_digest(t);
      if (auto it = seen.find(d); it != seen.end()) warn(name + " duplicates " + it->second);
      seen.emplace(d, name);
      images.push_back(std::move(img));
      b.used.push_back(name);
    } catch (const Error& e) {
      b.skipped.push_back(name);
      warn("skipping " + name + ": " + e.what());
    }
  }
  if (images.size() < 2) {
    throw ConfigError("fid reference needs at least 2 readable images in " + dir.string() + ", found " +
                      std::to_string(images.size()));
  }
  const fid::Embedding emb = fid::make_embedding(embedding);
  b.stats = fid::image_stats(images, emb, crops);
  const double trace = b.stats.covariance.trace();
  if (trace < 1e-8 * static_cast<double>(b.stats.dim())) {
    warn("near-zero covariance (trace " + std::to_string(trace) +
         "); the reference barely varies, use more or more diverse images");
  }
  std::string used;
  for (const auto& u : b.used) used += (used.empty() ? "" : ",") + u;
  fid::save_stats(out, b.stats,
                  {{"source_dir", dir.string()},
                   {"images", used},
                   {"skipped", std::to_string(b.skipped.size())},
                   {"embedding", fid::to_string(embedding.kind)},
                   {"embedding_dim", std::to_string(emb.dim())},
                   {"crop_grid", std::to_string(crops.grid)},
                   {"crop_fraction", std::to_string(crops.fraction)},
                   {"expand_below", std::to_string(crops.expand_below)}});
  say(log, "fid-ref: " + std::to_string(b.used.size()) + " images, " + std::to_string(b.stats.count) +
               " embeddings -> " + out.string());
  return b;
}

void write_synthetic_data(const fs::path& dir, std::size_t size) {
  fs::create_directories(dir / "pair");
  fs::create_directories(dir / "reference");
  image::write_png(dir / "pair" / "source.png", synthetic::shapes(synthetic::kPairSourceSeed, size));
  image::write_png(dir / "pair" / "target.png", synthetic::shapes(synthetic::kPairTargetSeed, size));
  for (std::size_t i = 0; i < synthetic::kSetSize; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "shapes_%02zu.png", i);
    image::write_png(dir / "reference" / name, synthetic::shapes(synthetic::kSetFirstSeed + i, size));
  }
}

}  // namespace xft::pipeline
