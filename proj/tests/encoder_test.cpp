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

#include <filesystem>

#include "oracles.hpp"
#include "test_util.hpp"
#include "xft/encoder.hpp"
#include "xft/error.hpp"

using namespace xft;
using xft::testing::check_gradients;
using xft::testing::random_tensor;

namespace {

encoder::BackboneSpec toy_spec(std::size_t input) {
  encoder::BackboneSpec s;
  s.input_size = input;
  return s;
}

}  // namespace

TEST_CASE("constant image gives spatially constant interior features") {
  const auto bb = encoder::ConvStackBackbone::toy(toy_spec(256));
  const Tensor gray({256, 256, 3}, 0.5);
  const auto taps = bb.taps(ad::constant(gray), ad::parameters(bb.initial_params()));
  REQUIRE(taps.size() == 2);
  for (const auto& t : taps) {
    const Tensor& v = t.value();
    // Each stride-2 stage contaminates one more border row; 4 is ample.
    const std::size_t m = 4;
    for (std::size_t c = 0; c < v.channels(); ++c) {
      const double ref = v.at(m, m, c);
      for (std::size_t y = m; y + m < v.height(); ++y)
        for (std::size_t x = m; x + m < v.width(); ++x) CHECK(v.at(y, x, c) == doctest::Approx(ref).epsilon(1e-12));
    }
  }
}

TEST_CASE("feature volume concatenates upsampled taps in level order") {
  const auto bb = encoder::ConvStackBackbone::toy(toy_spec(256));
  const auto f = encoder::extract_features(random_tensor({256, 256, 3}, 1, 0, 1), bb,
                                           bb.initial_params());
  CHECK(f.data.shape() == Shape{64, 64, 48});
  REQUIRE(f.levels.size() == 2);
  CHECK(f.levels[0].offset == 0);
  CHECK(f.levels[0].channels == 16);
  CHECK(f.levels[1].offset == 16);
  CHECK(f.levels[1].channels == 32);

  encoder::BackboneSpec s = toy_spec(128);
  s.levels = {1, 2};
  s.widths = {8, 16};
  const auto bb2 = encoder::ConvStackBackbone::toy(s);
  const auto f2 = encoder::extract_features(random_tensor({128, 128, 3}, 2, 0, 1), bb2,
                                            bb2.initial_params());
  CHECK(f2.data.shape() == Shape{64, 64, 24});
}

TEST_CASE("hand-set one-layer backbone equals a sliding-window convolution") {
  encoder::ConvStage st{1, 2, 3, 1, 1, ad::Activation::kIdentity};
  const Tensor w = random_tensor({2, 1, 3, 3}, 3);
  const Tensor b = random_tensor({2}, 4);
  encoder::ConvStackBackbone bb({st}, {w, b}, {1}, 4);
  const Tensor x = random_tensor({4, 4, 1}, 5);
  const auto f = encoder::extract_features(x, bb, bb.initial_params());
  CHECK(max_abs_diff(f.data, oracle::conv2d(x, w, b, 1, 1)) < 1e-6);
}

TEST_CASE("input size and channel mismatches are configuration errors") {
  const auto bb = encoder::ConvStackBackbone::toy(toy_spec(64));
  CHECK_THROWS_AS(encoder::extract_features(Tensor({32, 32, 3}), bb, bb.initial_params()),
                  ConfigError);
  CHECK_THROWS_AS(encoder::extract_features(Tensor({64, 64, 1}), bb, bb.initial_params()),
                  ConfigError);
  auto params = bb.initial_params();
  params.pop_back();
  CHECK_THROWS_AS(encoder::extract_features(Tensor({64, 64, 3}), bb, params), ConfigError);
}

TEST_CASE("non-finite activations name the tap level") {
  const auto bb = encoder::ConvStackBackbone::toy(toy_spec(64));
  Tensor img({64, 64, 3}, 0.5);
  img.at(10, 10, 0) = std::nan("");
  try {
    encoder::extract_features(img, bb, bb.initial_params());
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("level") != std::string::npos);
  }
}

TEST_CASE("centralize") {
  encoder::FeatureVolume constant{Tensor({3, 3, 2}, 4.0), {}};
  CHECK(encoder::centralize(constant).data.max() == 0.0);
  CHECK(encoder::centralize(constant).data.min() == 0.0);

  encoder::FeatureVolume two{Tensor({1, 2, 1}, std::vector<double>{1, 3}), {}};
  const auto c2 = encoder::centralize(two).data;
  CHECK(c2[0] == doctest::Approx(-1));
  CHECK(c2[1] == doctest::Approx(1));

  encoder::FeatureVolume r{random_tensor({8, 8, 4}, 6, -3, 5), {}};
  const auto cr = encoder::centralize(r);
  for (std::size_t k = 0; k < 4; ++k) {
    double s = 0;
    for (std::size_t p = 0; p < 64; ++p) s += cr.data[p * 4 + k];
    CHECK(std::abs(s) < 1e-5);
  }
  CHECK(max_abs_diff(cr.data, oracle::centralize(r.data)) < 1e-12);
  const auto twice = encoder::centralize(encoder::FeatureVolume{cr.data, {}});
  CHECK(max_abs_diff(twice.data, cr.data) < 1e-6);
}

TEST_CASE("toy features are bit-stable for a fixed seed") {
  const auto a = encoder::ConvStackBackbone::toy(toy_spec(64));
  const auto b = encoder::ConvStackBackbone::toy(toy_spec(64));
  const Tensor x = random_tensor({64, 64, 3}, 7, 0, 1);
  CHECK(encoder::extract_features(x, a, a.initial_params()).data ==
        encoder::extract_features(x, b, b.initial_params()).data);
}

TEST_CASE("gradient of sum(features) matches finite differences") {
  const auto bb = encoder::ConvStackBackbone::toy(toy_spec(16));
  const Tensor x = random_tensor({16, 16, 3}, 8, 0, 1);
  const auto r = check_gradients(
      [&](const std::vector<ad::Var>& p) {
        return ad::sum(encoder::encode(bb, ad::constant(x), p).volume);
      },
      bb.initial_params(), 5, 9);
  CHECK(r.checked == 5);
  CHECK(r.worst_relative_error < 1e-3);
}

TEST_CASE("conv-stack weights round-trip through the JSON format") {
  const auto bb = encoder::ConvStackBackbone::toy(toy_spec(32));
  const auto path = std::filesystem::temp_directory_path() / "xft_backbone_roundtrip.json";
  bb.save(path);
  const auto loaded = encoder::ConvStackBackbone::load(path, {2, 3}, 32);
  const auto pa = bb.initial_params(), pb = loaded.initial_params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == pb[i]);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(encoder::ConvStackBackbone::load(path, {2, 3}, 32), IoError);
}
