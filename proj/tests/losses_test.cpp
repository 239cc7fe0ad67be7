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
#include <cmath>
#include <numeric>
#include <set>

#include "oracles.hpp"
#include "test_util.hpp"
#include "xft/error.hpp"
#include "xft/losses.hpp"

using namespace xft;
using xft::testing::random_tensor;

namespace {

std::vector<double> vec(const Tensor& t) { return t.storage(); }

// Single identity-activated 3x3 conv as a fixed perceptual encoder.
losses::PerceptualEncoder one_layer_encoder(std::size_t out_c, std::uint64_t seed,
                                            Tensor* w_out = nullptr, Tensor* b_out = nullptr) {
  encoder::ConvStage st{3, out_c, 3, 1, 1, ad::Activation::kIdentity};
  Tensor w = random_tensor({out_c, 3, 3, 3}, seed);
  Tensor b = random_tensor({out_c}, seed + 1);
  if (w_out) *w_out = w;
  if (b_out) *b_out = b;
  auto bb = std::make_shared<encoder::ConvStackBackbone>(std::vector<encoder::ConvStage>{st},
                                                         std::vector<Tensor>{w, b},
                                                         std::vector<std::size_t>{1}, 0);
  return losses::PerceptualEncoder(bb, {w, b});
}

losses::LossWeights all_negatives(double tau) {
  losses::LossWeights w;
  w.tau = tau;
  w.negatives.mode = losses::NegativePolicy::Mode::kAll;
  return w;
}

}  // namespace

TEST_CASE("info_nce closed forms") {
  const std::vector<double> a{1, 0}, p{0.5, 0.5}, n{0.5, -0.5};
  std::vector<std::span<const double>> negs{n};
  CHECK(std::abs(losses::info_nce(a, p, negs, 0.07) - std::log(2.0)) < 1e-6);

  const double tau = 0.07;
  const std::vector<double> strong{50 * tau + 1, 0}, weak{1, 0};
  const std::vector<double> anchor{1, 0};
  std::vector<std::span<const double>> wn{weak, weak};
  const double sat = losses::info_nce(anchor, strong, wn, tau);
  CHECK(sat < 1e-6);
  CHECK(sat > 0);

  CHECK_THROWS_AS(losses::info_nce(a, p, {}, 0.07), ConfigError);
}

TEST_CASE("info_nce matches direct evaluation and is permutation invariant") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto a = vec(random_tensor({4}, s));
    const auto p = vec(random_tensor({4}, s + 100));
    std::vector<std::vector<double>> ns{vec(random_tensor({4}, s + 200)),
                                        vec(random_tensor({4}, s + 300)),
                                        vec(random_tensor({4}, s + 400))};
    std::vector<std::span<const double>> spans(ns.begin(), ns.end());
    const double got = losses::info_nce(a, p, spans, 0.07);
    CHECK(std::abs(got - oracle::info_nce(a, p, ns, 0.07)) < 1e-9);
    std::reverse(spans.begin(), spans.end());
    CHECK(std::abs(losses::info_nce(a, p, spans, 0.07) - got) < 1e-9);

    // Raising the positive logit strictly lowers the loss.
    auto p2 = p;
    for (std::size_t i = 0; i < 4; ++i) p2[i] += 0.1 * a[i];
    CHECK(losses::info_nce(a, p2, spans, 0.07) < got);
  }
}

TEST_CASE("contrastive loss with orthonormal features has the closed form") {
  // 2x2 grid, one-hot channel per position.
  Tensor f({2, 2, 4});
  for (std::size_t p = 0; p < 4; ++p) f[p * 4 + p] = 1.0;
  const encoder::FeatureVolume fv{f, {}};
  const double per = -std::log(std::exp(1.0) / (std::exp(1.0) + 3.0));
  CHECK(losses::contrastive_loss(fv, fv, all_negatives(1.0)) == doctest::Approx(4 * per).epsilon(1e-6));
}

TEST_CASE("contrastive loss matches a four-anchor summation oracle") {
  const Tensor fs = random_tensor({2, 2, 3}, 1);
  const Tensor fw = random_tensor({2, 2, 3}, 2);
  const double got = losses::contrastive_loss({fs, {}}, {fw, {}}, all_negatives(0.2));
  const double want =
      oracle::patch_info_nce(oracle::normalize_positions(fs), oracle::normalize_positions(fw), 0.2);
  CHECK(std::abs(got - want) < 1e-8);
}

TEST_CASE("contrastive loss rejects degenerate and mismatched volumes") {
  const encoder::FeatureVolume one{Tensor({1, 1, 3}, 1.0), {}};
  CHECK_THROWS_AS(losses::contrastive_loss(one, one, all_negatives(0.07)), ConfigError);
  CHECK_THROWS_AS(losses::contrastive_loss({Tensor({2, 2, 3}), {}}, {Tensor({2, 3, 3}), {}},
                                           all_negatives(0.07)),
                  ConfigError);
}

TEST_CASE("negative sampling policy") {
  losses::NegativePolicy autop;
  CHECK(losses::sample_negatives(48, 48, autop, 1).all());
  const auto sets = losses::sample_negatives(64, 64, autop, 1);
  REQUIRE(sets.lists.size() == 4096);
  for (std::size_t u : {0u, 17u, 4095u}) {
    const auto& l = sets.lists[u];
    CHECK(l.size() == 512);
    std::set<std::uint32_t> uniq(l.begin(), l.end());
    CHECK(uniq.size() == 512);
    CHECK(!uniq.contains(static_cast<std::uint32_t>(u)));
    CHECK(*uniq.rbegin() < 4096);
  }
  CHECK(losses::sample_negatives(64, 64, autop, 1).lists == sets.lists);
  CHECK(losses::sample_negatives(64, 64, autop, 2).lists != sets.lists);

  CHECK(losses::to_string(losses::negative_policy_from_string("all")) == "all");
  CHECK(losses::negative_policy_from_string("64").count == 64);
  CHECK_THROWS_AS(losses::negative_policy_from_string("0"), ConfigError);
  CHECK_THROWS_AS(losses::negative_policy_from_string("some"), ConfigError);
}

TEST_CASE("gram matrix") {
  Tensor one_hot({2, 2, 3});
  one_hot.at(0, 1, 1) = 2.0;
  one_hot.at(1, 1, 1) = 1.0;
  const Tensor g = losses::gram_matrix(one_hot);
  std::size_t nonzero = 0;
  for (double v : g.storage()) nonzero += v != 0.0;
  CHECK(nonzero == 1);
  CHECK(g.at(1, 1) == doctest::Approx(5.0));

  Tensor dup = random_tensor({3, 3, 3}, 3);
  for (std::size_t p = 0; p < 9; ++p) dup[p * 3 + 2] = dup[p * 3 + 0];
  const Tensor gd = losses::gram_matrix(dup);
  CHECK(gd.at(0, 0) == doctest::Approx(gd.at(2, 2)));
  CHECK(gd.at(0, 2) == doctest::Approx(gd.at(0, 0)));
  CHECK(gd.at(2, 0) == doctest::Approx(gd.at(0, 0)));

  const Tensor r = random_tensor({3, 3, 2}, 4);
  CHECK(max_abs_diff(losses::gram_matrix(r), oracle::gram(r)) < 1e-8);
}

TEST_CASE("perceptual loss") {
  Tensor w, b;
  const auto enc = one_layer_encoder(4, 5, &w, &b);
  const Tensor x = random_tensor({2, 2, 3}, 6, 0, 1);
  const Tensor y = random_tensor({2, 2, 3}, 7, 0, 1);
  CHECK(losses::perceptual_loss(x, x, enc) == 0.0);
  const double want = oracle::gram_distance(oracle::conv2d(x, w, b, 1, 1), oracle::conv2d(y, w, b, 1, 1));
  CHECK(std::abs(losses::perceptual_loss(x, y, enc) - want) < 1e-6);

  // Default toy perceptual encoder is non-negative and zero on identical input.
  const auto toy = losses::make_perceptual_encoder(encoder::BackboneSpec{});
  const Tensor a = random_tensor({16, 16, 3}, 8, 0, 1);
  const Tensor c = random_tensor({16, 16, 3}, 9, 0, 1);
  CHECK(losses::perceptual_loss(a, a, toy) == 0.0);
  CHECK(losses::perceptual_loss(a, c, toy) > 0.0);
}

TEST_CASE("gram distance is invariant to a shared spatial permutation of activations") {
  const Tensor a = random_tensor({3, 3, 4}, 10);
  const Tensor b = random_tensor({3, 3, 4}, 11);
  std::vector<std::size_t> perm(9);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::swap(perm[1], perm[5]);
  Tensor pa(a.shape()), pb(b.shape());
  for (std::size_t p = 0; p < 9; ++p)
    for (std::size_t k = 0; k < 4; ++k) {
      pa[perm[p] * 4 + k] = a[p * 4 + k];
      pb[perm[p] * 4 + k] = b[p * 4 + k];
    }
  auto dist = [](const Tensor& u, const Tensor& v) {
    return ad::sum_squares(ad::sub(ad::gram(ad::constant(u)), ad::gram(ad::constant(v)))).item();
  };
  CHECK(dist(pa, pb) == doctest::Approx(dist(a, b)).epsilon(1e-12));
}

TEST_CASE("contextual loss") {
  // Single position: the only similarity is 1.
  CHECK(ad::contextual(ad::constant(random_tensor({1, 1, 3}, 12)),
                       ad::constant(random_tensor({1, 1, 3}, 13)), 0.5)
            .item() == doctest::Approx(0.0).epsilon(1e-12));

  const Tensor t = random_tensor({2, 2, 5}, 14);
  const Tensor c = random_tensor({2, 2, 5}, 15);
  CHECK(std::abs(ad::contextual(ad::constant(t), ad::constant(c), 0.5).item() -
                 oracle::contextual(t, c, 0.5)) < 1e-6);

  const auto enc = one_layer_encoder(6, 16);
  const Tensor x = random_tensor({4, 4, 3}, 17, 0, 1);
  const Tensor y = random_tensor({4, 4, 3}, 18, 0, 1);
  const double got = losses::contextual_loss(x, y, enc, 0.5);
  const double want = oracle::contextual(enc.volume(ad::constant(x)).value(),
                                         enc.volume(ad::constant(y)).value(), 0.5);
  CHECK(std::abs(got - want) < 1e-6);
  CHECK_THROWS_AS(losses::contextual_loss(x, y, enc, 0.0), ConfigError);
}

TEST_CASE("contextual loss prefers the identical image over shuffled copies") {
  const auto enc = losses::make_perceptual_encoder(encoder::BackboneSpec{});
  const Tensor x = synthetic::shapes(3, 32);
  const double self = losses::contextual_loss(x, x, enc, 0.5);
  for (std::uint64_t s = 0; s < 3; ++s) {
    // Shuffle 8x8 blocks so features stay distinct but move.
    Tensor sh(x.shape());
    std::vector<std::size_t> order(16);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(s);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t blk = 0; blk < 16; ++blk) {
      const std::size_t sy = (blk / 4) * 8, sx = (blk % 4) * 8;
      const std::size_t dy = (order[blk] / 4) * 8, dx = (order[blk] % 4) * 8;
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t xx = 0; xx < 8; ++xx)
          for (std::size_t k = 0; k < 3; ++k) sh.at(dy + y, dx + xx, k) = x.at(sy + y, sx + xx, k);
    }
    CHECK(self <= losses::contextual_loss(x, sh, enc, 0.5));
  }
}

TEST_CASE("total loss arithmetic") {
  losses::LossWeights w;
  w.lambda_perc = 0;
  w.lambda_context = 0;
  CHECK(losses::total_loss(1.5, 7, 9, w).total == 1.5);
  w.lambda_perc = 0.5;
  w.lambda_context = 2;
  CHECK(losses::total_loss(1, 1, 1, w).total == doctest::Approx(3.5).epsilon(1e-15));
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> d(0, 10);
  for (int i = 0; i < 50; ++i) {
    w.lambda_perc = d(rng);
    w.lambda_context = d(rng);
    const double c = d(rng), p = d(rng), x = d(rng);
    const auto r = losses::total_loss(c, p, x, w, 4);
    CHECK(std::abs(r.total - (c + w.lambda_perc * p + w.lambda_context * x)) < 1e-12);
    CHECK(r.iteration == 4);
  }
}
