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

#include <doctest.h>

#include <algorithm>
#include <cstdlib>

#include "xft/config.hpp"
#include "xft/error.hpp"

using namespace xft;

namespace {

bool mentions(const std::vector<std::string>& errors, const std::string& what) {
  return std::any_of(errors.begin(), errors.end(),
                     [&](const std::string& e) { return e.find(what) != std::string::npos; });
}

const char* kMinimal = R"(
schema: xft/1
source: a.png
target: b.png
output_dir: out
working_resolution: 64
)";

}  // namespace

TEST_CASE("empty document is fully defaulted apart from the image paths") {
  const auto r = config::validate_config("");
  REQUIRE(r.errors.size() == 2);
  CHECK(mentions(r.errors, "source"));
  CHECK(mentions(r.errors, "target"));
  const auto& c = r.config;
  CHECK(c.working_resolution == 256);
  CHECK(c.upsampling_factor == 4);
  CHECK(c.generator.output_size == 1024);
  CHECK(c.cft.iterations == 200);
  CHECK(c.cft.alpha == 100.0);
  CHECK(c.mgi.composing_layers == std::vector<std::size_t>{1, 2});
  CHECK(c.mgi.latent_counts == std::vector<std::size_t>{1, 2, 4});
  CHECK(c.mgi.inversion.steps == 300);
  CHECK(c.fid.reference == config::kPairCrops);
  CHECK(c.backbone.input_size == 256);
  CHECK(c.cft.working_resolution == 256);
  CHECK(!c.output_dir.empty());

  // Without the image requirement the defaults validate cleanly.
  CHECK(config::validate_config("", {}, false).ok());
}

TEST_CASE("external generators default to the full hypothesis grid") {
  const auto r = config::validate_config(
      std::string(kMinimal) + "generator: {kind: external-pretrained, weights: g.json, layer_count: 10}\n");
  REQUIRE(r.ok());
  CHECK(r.config.mgi.composing_layers == std::vector<std::size_t>{4, 5, 6, 7, 8});
  CHECK(r.config.mgi.latent_counts == std::vector<std::size_t>{10, 20, 30, 40});
}

TEST_CASE("violations are collected with field paths") {
  const auto r = config::validate_config(std::string(kMinimal) + R"(
cft:
  alpha: -1
  iterations: 0
  tau: abc
  negatives: some
  augmentation: {scale_lo: 2, scale_hi: 1}
mgi:
  composing_layers: [0, 9]
  steps: -3
fid:
  crops: {fraction: 0}
extra: 1
)");
  CHECK(!r.ok());
  CHECK(mentions(r.errors, "cft.alpha"));
  CHECK(mentions(r.errors, "cft.iterations"));
  CHECK(mentions(r.errors, "cft.tau"));
  CHECK(mentions(r.errors, "cft.negatives"));
  CHECK(mentions(r.errors, "cft.augmentation.scale_hi"));
  CHECK(mentions(r.errors, "mgi.composing_layers"));
  CHECK(mentions(r.errors, "mgi.steps"));
  CHECK(mentions(r.errors, "fid.crops.fraction"));
  CHECK(mentions(r.errors, "extra: unknown key"));
  CHECK(r.errors.size() >= 9);
}

TEST_CASE("schema, syntax and consistency errors") {
  CHECK(mentions(config::validate_config("schema: xft/2\n", {}, false).errors, "schema"));
  CHECK(mentions(config::validate_config("a: [1, 2\n", {}, false).errors, "syntax"));
  CHECK(mentions(config::validate_config("cft: 3\n", {}, false).errors, "cft: expected a mapping"));
  // Generator output must be exactly working x upsampling.
  CHECK(mentions(config::validate_config("generator: {output_size: 512}\n", {}, false).errors,
                 "generator.output_size"));
}

TEST_CASE("overrides apply before validation") {
  const auto r = config::validate_config(kMinimal, {"cft.alpha=50", "mgi.latent_counts=[3, 5]",
                                                    "seed=9", "fid.crops.grid=4"});
  REQUIRE(r.ok());
  CHECK(r.config.cft.alpha == 50.0);
  CHECK(r.config.mgi.latent_counts == std::vector<std::size_t>{3, 5});
  CHECK(r.config.seed == 9);
  CHECK(r.config.cft.seed == 9);
  CHECK(r.config.mgi.inversion.seed == 9);
  CHECK(r.config.fid.crops.grid == 4);
  CHECK(mentions(config::validate_config(kMinimal, {"cft.alpha"}).errors, "--set"));
  CHECK(mentions(config::validate_config(kMinimal, {"cft.alpha=-2"}).errors, "cft.alpha"));
}

TEST_CASE("serialize and parse reach a fixed point") {
  auto r = config::validate_config(std::string(kMinimal) + R"(
cft: {alpha: 37.5, tau: 0.1, negatives: "64", learning_rate: 0.0003}
mgi: {steps: 12, perceptual_weight: 0.25}
fid: {reference: stats.bin}
)");
  REQUIRE(r.ok());
  const std::string once = config::serialize(r.config);
  const auto again = config::validate_config(once);
  REQUIRE(again.ok());
  CHECK(again.config == r.config);
  CHECK(config::serialize(again.config) == once);

  // Defaults-only config round-trips too.
  auto d = config::validate_config("source: s.png\ntarget: t.png\n");
  REQUIRE(d.ok());
  CHECK(config::validate_config(config::serialize(d.config)).config == d.config);
}

TEST_CASE("output root comes from the environment") {
  ::setenv("XFT_OUTPUT_ROOT", "/tmp/xft-root", 1);
  CHECK(config::default_output_root() == "/tmp/xft-root");
  CHECK(config::validate_config("", {}, false).config.output_dir == "/tmp/xft-root/xft-run");
  ::unsetenv("XFT_OUTPUT_ROOT");
  CHECK(config::default_output_root() == "runs");
}

TEST_CASE("load_config reports unreadable files and every violation") {
  CHECK_THROWS_AS(config::load_config("/nonexistent/cfg.yaml"), IoError);
}
