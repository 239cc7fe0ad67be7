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
#include <fstream>

#include "oracles.hpp"
#include "test_util.hpp"
#include "xft/correspondence.hpp"
#include "xft/error.hpp"
#include "xft/kernels.hpp"

using namespace xft;
using xft::testing::random_tensor;

namespace {

encoder::CentralizedFeatureVolume cv(const Tensor& t) { return {t}; }

}  // namespace

TEST_CASE("correlation matches the pairwise cosine oracle") {
  for (std::size_t side : {3u, 4u}) {
    const Tensor a = random_tensor({side, side, 4}, side);
    const Tensor b = random_tensor({side, side, 4}, side + 10);
    const auto m = correspondence::correlation_matrix(cv(a), cv(b));
    CHECK(m.source == correspondence::SpatialShape{side, side});
    CHECK(max_abs_diff(m.data, oracle::correlation(a, b)) < 1e-6);
  }
}

TEST_CASE("self-correlation has unit diagonal and orthogonal vectors give zero") {
  const Tensor a = random_tensor({3, 3, 5}, 1);
  const auto m = correspondence::correlation_matrix(cv(a), cv(a));
  for (std::size_t i = 0; i < 9; ++i) CHECK(m.data.at(i, i) == doctest::Approx(1.0).epsilon(1e-6));

  Tensor e1({1, 1, 2}, std::vector<double>{1, 0});
  Tensor e2({1, 1, 2}, std::vector<double>{0, 3});
  CHECK(correspondence::correlation_matrix(cv(e1), cv(e2)).data[0] == 0.0);
}

TEST_CASE("zero-norm vectors correlate to zero") {
  Tensor a = random_tensor({2, 2, 3}, 2);
  for (std::size_t k = 0; k < 3; ++k) a.at(1, 1, k) = 0;
  const auto m = correspondence::correlation_matrix(cv(a), cv(a));
  CHECK(m.data.all_finite());
  for (std::size_t v = 0; v < 4; ++v) CHECK(m.data.at(3, v) == 0.0);
}

TEST_CASE("correlation invariants") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Tensor a = random_tensor({3, 4, 6}, 100 + s);
    const Tensor b = random_tensor({4, 3, 6}, 200 + s);
    const auto ab = correspondence::correlation_matrix(cv(a), cv(b));
    const auto ba = correspondence::correlation_matrix(cv(b), cv(a));
    double worst = 0;
    for (std::size_t u = 0; u < 12; ++u)
      for (std::size_t v = 0; v < 12; ++v) {
        worst = std::max(worst, std::abs(ab.data.at(u, v) - ba.data.at(v, u)));
        CHECK(ab.data.at(u, v) <= 1.0 + 1e-6);
        CHECK(ab.data.at(u, v) >= -1.0 - 1e-6);
      }
    CHECK(worst < 1e-6);
    Tensor b3 = b;
    for (double& v : b3.storage()) v *= 3.7;
    CHECK(max_abs_diff(correspondence::correlation_matrix(cv(a), cv(b3)).data, ab.data) < 1e-6);
  }
}

TEST_CASE("channel mismatch is a configuration error") {
  CHECK_THROWS_AS(correspondence::correlation_matrix(cv(Tensor({2, 2, 3})), cv(Tensor({2, 2, 4}))),
                  ConfigError);
}

TEST_CASE("warp matches the explicit softmax oracle") {
  const Tensor target = random_tensor({2, 2, 3}, 3, 0, 1);
  correspondence::CorrelationMatrix m{random_tensor({4, 4}, 4), {2, 2}, {2, 2}};
  const auto w = correspondence::warp(target, m, 10.0);
  CHECK(max_abs_diff(w.data, oracle::warp(target, m.data, 10.0, 2, 2)) < 1e-6);
  CHECK(w.alpha == 10.0);
}

TEST_CASE("warp edge cases") {
  const Tensor target = random_tensor({3, 3, 3}, 5, 0, 1);
  Tensor md = random_tensor({9, 9}, 6);
  for (std::size_t v = 0; v < 9; ++v) md.at(0, v) = 0.25;  // all-equal row
  md.at(1, 4) = 1.0;                                      // unique max
  for (std::size_t v = 0; v < 9; ++v)
    if (v != 4) md.at(1, v) = std::min(md.at(1, v), 0.8);
  correspondence::CorrelationMatrix m{md, {3, 3}, {3, 3}};
  const auto w = correspondence::warp(target, m, 100.0);
  for (std::size_t k = 0; k < 3; ++k) {
    double mean = 0;
    for (std::size_t v = 0; v < 9; ++v) mean += target[v * 3 + k] / 9.0;
    CHECK(w.data[k] == doctest::Approx(mean).epsilon(1e-9));
    CHECK(std::abs(w.data[3 + k] - target[4 * 3 + k]) < 1e-4);
  }
  CHECK_THROWS_AS(correspondence::warp(target, m, 0.0), ConfigError);
  CHECK_THROWS_AS(correspondence::warp(target, m, -1.0), ConfigError);
  CHECK_THROWS_AS(correspondence::warp(Tensor({2, 2, 3}), m, 1.0), ConfigError);
}

TEST_CASE("warp output is convex and sharpens with alpha") {
  const Tensor target = random_tensor({4, 4, 3}, 7, 0, 1);
  correspondence::CorrelationMatrix m{random_tensor({16, 16}, 8), {4, 4}, {4, 4}};
  const auto w = correspondence::warp(target, m, 30.0);
  for (std::size_t k = 0; k < 3; ++k) {
    double lo = 1e9, hi = -1e9;
    for (std::size_t v = 0; v < 16; ++v) {
      lo = std::min(lo, target[v * 3 + k]);
      hi = std::max(hi, target[v * 3 + k]);
    }
    for (std::size_t u = 0; u < 16; ++u) {
      CHECK(w.data[u * 3 + k] >= lo - 1e-12);
      CHECK(w.data[u * 3 + k] <= hi + 1e-12);
    }
  }
  std::vector<double> prev(16, 0.0);
  for (double alpha : {1.0, 10.0, 100.0}) {
    Tensor weights;
    kernels::parallel::softmax_aggregate(m.data, alpha, target.reshaped({16, 3}), &weights);
    for (std::size_t u = 0; u < 16; ++u) {
      double mx = 0, row = 0;
      for (std::size_t v = 0; v < 16; ++v) {
        mx = std::max(mx, weights.at(u, v));
        row += weights.at(u, v);
      }
      CHECK(row == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(mx >= prev[u] - 1e-15);
      prev[u] = mx;
    }
  }
}

TEST_CASE("differentiable warp agrees with the value warp") {
  const Tensor target = random_tensor({2, 3, 3}, 9, 0, 1);
  const Tensor md = random_tensor({4, 6}, 10);
  const auto v = correspondence::warp(ad::constant(target), ad::constant(md), 5.0, {2, 2});
  const auto ref =
      correspondence::warp(target, correspondence::CorrelationMatrix{md, {2, 2}, {2, 3}}, 5.0);
  CHECK(max_abs_diff(v.value(), ref.data) < 1e-12);
}

TEST_CASE("correlation dump writes float32 data and a header") {
  const Tensor a = random_tensor({2, 2, 3}, 11);
  const auto m = correspondence::correlation_matrix(cv(a), cv(a));
  const auto stem = std::filesystem::temp_directory_path() / "xft_corr_dump";
  correspondence::dump_correlation(stem, m, 100.0);
  auto f32 = stem;
  f32 += ".f32";
  auto txt = stem;
  txt += ".txt";
  CHECK(std::filesystem::file_size(f32) == 16 * sizeof(float));
  std::ifstream in(f32, std::ios::binary);
  float first = 0;
  in.read(reinterpret_cast<char*>(&first), sizeof first);
  CHECK(first == doctest::Approx(m.data[0]).epsilon(1e-6));
  CHECK(std::filesystem::file_size(txt) > 0);
  std::filesystem::remove(f32);
  std::filesystem::remove(txt);
}
