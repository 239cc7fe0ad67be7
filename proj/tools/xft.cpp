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

// xft command line: run | cft | mgi | fid-ref | report | validate | synth.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "xft/config.hpp"
#include "xft/error.hpp"
#include "xft/pipeline.hpp"

namespace fs = std::filesystem;
using namespace xft;

namespace {

struct ConfigFlags {
  std::string config;
  std::string source, target, out;
  std::string seed;
  std::vector<std::string> set;
  bool quiet = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", config, "YAML run configuration (schema xft/1)");
    cmd->add_option("--source", source, "source image (PNG)");
    cmd->add_option("--target", target, "target / exemplar image (PNG)");
    cmd->add_option("-o,--out", out, "output directory");
    cmd->add_option("--seed", seed, "global seed");
    cmd->add_option("--set", set, "override a config field, e.g. --set cft.alpha=50")
        ->type_name("KEY=VALUE");
    cmd->add_flag("-q,--quiet", quiet, "only print errors");
  }

  // Flags win over --set, which wins over the file.
  std::vector<std::string> overrides() const {
    std::vector<std::string> o = set;
    if (!source.empty()) o.push_back("source=" + source);
    if (!target.empty()) o.push_back("target=" + target);
    if (!out.empty()) o.push_back("output_dir=" + out);
    if (!seed.empty()) o.push_back("seed=" + seed);
    return o;
  }

  config::ConfigResult resolve(bool require_images) const {
    std::string text;
    if (!config.empty()) {
      std::ifstream in(config);
      if (!in) throw IoError("cannot read config " + config);
      std::stringstream ss;
      ss << in.rdbuf();
      text = ss.str();
    }
    return config::validate_config(text, overrides(), require_images);
  }

  config::RunConfig load(bool require_images = true) const {
    auto r = resolve(require_images);
    if (!r.ok()) {
      std::string msg = "invalid configuration:";
      for (const auto& e : r.errors) msg += "\n  " + e;
      throw ConfigError(msg);
    }
    return r.config;
  }

  pipeline::Logger logger() const {
    if (quiet) return {};
    return [](const std::string& m) { std::cerr << "[xft] " << m << '\n'; };
  }
};

void print_summary(const pipeline::RunReport& r) {
  std::cout << "output: " << r.output_dir.string() << '\n';
  if (!r.selected_id.empty()) {
    std::cout << "selected: " << r.selected_id << " (fid " << r.selected_fid << ")\n";
    for (const auto& e : r.ranking) {
      std::cout << "  " << e.id << "  "
                << (e.failed ? std::string("failed") : "fid " + std::to_string(e.fid))
                << "  distance " << e.distance << '\n';
    }
  }
  std::cout << "report: " << (r.output_dir / pipeline::files::kReport).string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"xft: exemplar-based image translation by correspondence fine-tuning and GAN inversion"};
  app.require_subcommand(1);

  ConfigFlags run_flags, cft_flags, mgi_flags, validate_flags, ref_flags;
  auto* run = app.add_subcommand("run", "fine-tune correspondence, invert, select and report");
  run_flags.attach(run);
  auto* cft = app.add_subcommand("cft", "stage 1 only: write the warped image");
  cft_flags.attach(cft);
  auto* mgi = app.add_subcommand("mgi", "stage 2 only: invert from a warped image");
  mgi_flags.attach(mgi);
  std::string warped;
  mgi->add_option("--warped", warped, "warped image (PNG or .f64 dump)")->required();

  auto* ref = app.add_subcommand("fid-ref", "build FID reference statistics from a PNG directory");
  std::string ref_dir, ref_out;
  ref->add_option("dir", ref_dir, "image directory")->required();
  ref->add_option("-o,--out", ref_out, "output stats file")->required();
  ref->add_option("-c,--config", ref_flags.config, "config supplying fid.embedding / fid.crops");
  ref->add_option("--set", ref_flags.set, "override a config field")->type_name("KEY=VALUE");
  ref->add_flag("-q,--quiet", ref_flags.quiet, "only print errors");

  auto* report = app.add_subcommand("report", "re-render the comparison grid of a run directory");
  std::string run_dir;
  report->add_option("run_dir", run_dir, "run output directory")->required();

  auto* validate = app.add_subcommand("validate", "check a config and print it fully resolved");
  validate_flags.attach(validate);

  auto* synth = app.add_subcommand("synth", "write the bundled synthetic pair and reference set");
  std::string synth_dir;
  std::size_t synth_size = 256;
  synth->add_option("dir", synth_dir, "output directory")->required();
  synth->add_option("--size", synth_size, "image side");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    if (*run) {
      print_summary(pipeline::run(run_flags.load(), run_flags.logger()));
    } else if (*cft) {
      print_summary(pipeline::run_cft(cft_flags.load(), cft_flags.logger()));
    } else if (*mgi) {
      print_summary(pipeline::run_mgi(mgi_flags.load(), warped, mgi_flags.logger()));
    } else if (*ref) {
      const auto cfg = ref_flags.load(false);
      const auto b = pipeline::build_fid_reference(ref_dir, ref_out, cfg.fid.embedding,
                                                   cfg.fid.crops, ref_flags.logger());
      std::cout << "wrote " << ref_out << " (dim " << b.stats.dim() << ", " << b.stats.count
                << " embeddings from " << b.used.size() << " images)\n";
    } else if (*report) {
      const auto layout = pipeline::render_report(run_dir);
      std::cout << "wrote " << (fs::path(run_dir) / pipeline::files::kGrid).string() << " ("
                << layout.width << "x" << layout.height << ")\n";
    } else if (*validate) {
      const auto r = validate_flags.resolve(true);
      if (!r.ok()) {
        for (const auto& e : r.errors) std::cerr << "error: " << e << '\n';
        return static_cast<int>(ExitCode::kConfig);
      }
      std::cout << config::serialize(r.config);
    } else if (*synth) {
      pipeline::write_synthetic_data(synth_dir, synth_size);
      std::cout << "wrote " << synth_dir << "/pair and " << synth_dir << "/reference\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kIo);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kNumeric);
  }
  return 0;
}
