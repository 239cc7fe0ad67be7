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
#include <random>

#include "test_util.hpp"
#include "xft/error.hpp"
#include "xft/fid.hpp"

using namespace xft;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

fid::GaussianStats make_stats(VectorXd mean, MatrixXd cov) {
  return {std::move(mean), std::move(cov), 100};
}

MatrixXd random_spd(std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  MatrixXd a(d, d);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n(rng);
  return a * a.transpose() / static_cast<double>(d) + 0.1 * MatrixXd::Identity(d, d);
}

VectorXd random_vec(std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  VectorXd v(d);
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = n(rng);
  return v;
}

std::vector<ImageTensor> bundled_set(std::size_t size) {
  std::vector<ImageTensor> set;
  for (std::size_t i = 0; i < synthetic::kSetSize; ++i)
    set.push_back(synthetic::shapes(synthetic::kSetFirstSeed + i, size));
  return set;
}

}  // namespace

TEST_CASE("gaussian stats closed forms") {
  std::vector<VectorXd> two{VectorXd::Zero(2), VectorXd::Constant(2, 2.0)};
  const auto s = fid::gaussian_stats(two);
  CHECK(s.count == 2);
  CHECK(s.mean(0) == doctest::Approx(1.0));
  CHECK(s.mean(1) == doctest::Approx(1.0));
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(s.covariance.data()[i] == doctest::Approx(2.0));

  std::vector<VectorXd> copies(5, random_vec(3, 1));
  CHECK(fid::gaussian_stats(copies).covariance.norm() < 1e-15);

  std::vector<VectorXd> one{VectorXd::Zero(2)};
  CHECK_THROWS_AS(fid::gaussian_stats(one), ConfigError);
}

TEST_CASE("gaussian stats recover a known diagonal Gaussian") {
  const std::size_t n = 100;
  const double sd[3] = {0.5, 1.0, 2.0};
  const double mu[3] = {1.0, -2.0, 0.25};
  std::mt19937_64 rng(42);
  std::normal_distribution<double> z;
  std::vector<VectorXd> draws;
  for (std::size_t i = 0; i < n; ++i) {
    VectorXd v(3);
    for (int k = 0; k < 3; ++k) v(k) = mu[k] + sd[k] * z(rng);
    draws.push_back(v);
  }
  const auto s = fid::gaussian_stats(draws);
  for (int k = 0; k < 3; ++k) {
    CHECK(std::abs(s.mean(k) - mu[k]) < 3 * sd[k] / std::sqrt(double(n)));
    const double var = sd[k] * sd[k];
    CHECK(std::abs(s.covariance(k, k) - var) < 3 * var * std::sqrt(2.0 / double(n - 1)));
  }
  CHECK((s.covariance - s.covariance.transpose()).norm() < 1e-12);
}

TEST_CASE("frechet distance closed forms") {
  const MatrixXd c = random_spd(6, 2);
  const VectorXd m = random_vec(6, 3);
  const auto a = make_stats(m, c);
  CHECK(fid::frechet_distance(a, a) <= 1e-6);

  const VectorXd d = random_vec(6, 4);
  const auto shifted = make_stats(m + d, c);
  CHECK(std::abs(fid::frechet_distance(a, shifted) - d.squaredNorm()) < 1e-6);

  MatrixXd d14 = MatrixXd::Zero(2, 2), d41 = MatrixXd::Zero(2, 2);
  d14.diagonal() << 1, 4;
  d41.diagonal() << 4, 1;
  // Commuting diagonal covariances: sum_i (sqrt(a_i) - sqrt(b_i))^2 = 1 + 1.
  CHECK(std::abs(fid::frechet_distance(make_stats(VectorXd::Zero(2), d14),
                                       make_stats(VectorXd::Zero(2), d41)) -
                 2.0) < 1e-6);

  CHECK_THROWS_AS(fid::frechet_distance(a, make_stats(VectorXd::Zero(2), d14)), ConfigError);
}

TEST_CASE("frechet distance is symmetric with a small square-root residual") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto a = make_stats(random_vec(8, 10 + s), random_spd(8, 20 + s));
    const auto b = make_stats(random_vec(8, 30 + s), random_spd(8, 40 + s));
    const auto ab = fid::frechet(a, b);
    const auto ba = fid::frechet(b, a);
    CHECK(std::abs(ab.distance - ba.distance) < 1e-6);
    CHECK(ab.sqrt_residual <= 1e-5);
    CHECK(!ab.regularized);
    CHECK(ab.distance >= 0);
  }
}

TEST_CASE("larger mean shifts give larger distances") {
  const MatrixXd ca = random_spd(5, 50), cb = random_spd(5, 51);
  const VectorXd dir = random_vec(5, 52);
  double prev = -1;
  for (double t : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    const double f = fid::frechet_distance(make_stats(VectorXd::Zero(5), ca),
                                           make_stats(t * dir, cb));
    CHECK(f > prev);
    prev = f;
  }
}

TEST_CASE("singular covariances fall back to the regularised root") {
  const auto zero = make_stats(VectorXd::Zero(4), MatrixXd::Zero(4, 4));
  const auto r = fid::frechet(zero, zero);
  CHECK(r.regularized);
  CHECK(r.distance <= 1e-6);
  CHECK(r.sqrt_residual <= 1e-5);
}

TEST_CASE("crop expansion grid") {
  const ImageTensor img = synthetic::shapes(1, 64);
  const auto cs = fid::crops(img, {});
  REQUIRE(cs.size() == 64);
  CHECK(cs.front().shape() == Shape{32, 32, 3});
  CHECK(cs.front().at(0, 0, 0) == img.at(0, 0, 0));
  CHECK(cs.back().at(31, 31, 2) == img.at(63, 63, 2));
  std::vector<ImageTensor> big(64, img);
  CHECK(fid::expand(big, {}).size() == 64);
  std::vector<ImageTensor> small(2, img);
  CHECK(fid::expand(small, {}).size() == 128);
}

TEST_CASE("fid ordering checks on the bundled set") {
  const auto set = bundled_set(64);
  const auto emb = fid::make_embedding({});
  const fid::CropPolicy policy;
  const auto ref = fid::image_stats(set, emb, policy);

  // Self path: identical images and expansion give the reference itself.
  CHECK(fid::fid_score(set, ref, emb, policy) <= 1e-3);

  std::vector<ImageTensor> noisy = set;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 0.5);
  for (auto& img : noisy) {
    for (double& v : img.storage()) v += n(rng);
    image::clamp01(img);
  }
  CHECK(fid::fid_score(set, ref, emb, policy) < fid::fid_score(noisy, ref, emb, policy));

  // Embedding-space mean shift by d and 2d.
  const auto e = fid::embed_all(set, emb, policy);
  const VectorXd d = VectorXd::Constant(static_cast<Eigen::Index>(emb.dim()), 0.05);
  auto shift = [&](double k) {
    std::vector<VectorXd> out = e;
    for (auto& v : out) v += k * d;
    return fid::frechet_distance(fid::gaussian_stats(out), ref);
  };
  CHECK(shift(1) < shift(2));
}

TEST_CASE("degenerate crop sets are numeric errors") {
  const std::vector<ImageTensor> flat{Tensor({32, 32, 3}, 0.4)};
  const auto emb = fid::make_embedding({});
  const auto ref = fid::image_stats(bundled_set(32), emb, {});
  CHECK_THROWS_AS(fid::fid_score(flat, ref, emb, {}), NumericError);
}

TEST_CASE("stats files round-trip exactly") {
  const auto emb = fid::make_embedding({});
  const auto stats = fid::image_stats(bundled_set(64), emb, {});
  const auto path = std::filesystem::temp_directory_path() / "xft_stats_roundtrip.stats";
  fid::save_stats(path, stats, {{"source", "bundled"}});
  const auto back = fid::load_stats(path);
  CHECK(back.count == stats.count);
  CHECK((back.mean - stats.mean).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((back.covariance - stats.covariance).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(std::filesystem::file_size(path) ==
        16 + 8 * (stats.dim() + stats.dim() * stats.dim()));
  auto side = path;
  side += ".txt";
  CHECK(std::filesystem::exists(side));
  std::filesystem::remove(path);
  std::filesystem::remove(side);
  CHECK_THROWS_AS(fid::load_stats(path), IoError);
}

TEST_CASE("embedding weights round-trip") {
  const auto emb = fid::make_embedding({});
  const auto path = std::filesystem::temp_directory_path() / "xft_embedding.json";
  emb.save(path);
  fid::EmbeddingSpec spec;
  spec.kind = fid::EmbeddingKind::kExternal;
  spec.weights = path.string();
  const auto loaded = fid::make_embedding(spec);
  const ImageTensor img = synthetic::shapes(4, 32);
  CHECK((loaded.embed(img) - emb.embed(img)).cwiseAbs().maxCoeff() < 1e-12);
  std::filesystem::remove(path);
}
