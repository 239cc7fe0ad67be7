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

#include "test_util.hpp"
#include "xft/error.hpp"
#include "xft/kernels.hpp"

using namespace xft;
using xft::testing::random_tensor;

TEST_CASE("parallel conv2d matches the serial reference") {
  for (std::size_t stride : {1u, 2u}) {
    kernels::ConvGeometry g{9, 7, 3, 5, 3, stride, 1};
    const Tensor x = random_tensor({9, 7, 3}, 1);
    const Tensor w = random_tensor({5, 3, 3, 3}, 2);
    const Tensor b = random_tensor({5}, 3);
    const Tensor ys = kernels::serial::conv2d_forward(x, w, b, g);
    const Tensor yp = kernels::parallel::conv2d_forward(x, w, b, g);
    CHECK(ys.shape() == Shape{g.out_h(), g.out_w(), 5});
    CHECK(max_abs_diff(ys, yp) < 1e-12);

    const Tensor go = random_tensor(ys.shape(), 4);
    const auto gs = kernels::serial::conv2d_backward(x, w, go, g);
    const auto gp = kernels::parallel::conv2d_backward(x, w, go, g);
    CHECK(max_abs_diff(gs.input, gp.input) < 1e-12);
    CHECK(max_abs_diff(gs.weight, gp.weight) < 1e-12);
    CHECK(max_abs_diff(gs.bias, gp.bias) < 1e-12);
  }
}

TEST_CASE("conv2d rejects mismatched weights") {
  kernels::ConvGeometry g{4, 4, 3, 2, 3, 1, 1};
  CHECK_THROWS_AS(kernels::parallel::conv2d_forward(Tensor({4, 4, 3}), Tensor({2, 2, 3, 3}),
                                                    Tensor({2}), g),
                  ConfigError);
}

TEST_CASE("parallel cosine matrix matches the serial reference") {
  const Tensor a = random_tensor({17, 6}, 5);
  Tensor b = random_tensor({11, 6}, 6);
  for (std::size_t k = 0; k < 6; ++k) b.at(3, k) = 0.0;  // zero-norm row
  const Tensor s = kernels::serial::cosine_matrix(a, b);
  const Tensor p = kernels::parallel::cosine_matrix(a, b);
  CHECK(max_abs_diff(s, p) < 1e-12);
  for (std::size_t i = 0; i < 17; ++i) CHECK(p.at(i, 3) == 0.0);
}

TEST_CASE("parallel softmax aggregation matches the serial reference") {
  const Tensor m = random_tensor({13, 9}, 7);
  const Tensor v = random_tensor({9, 3}, 8);
  Tensor ws, wp;
  const Tensor s = kernels::serial::softmax_aggregate(m, 10.0, v, &ws);
  const Tensor p = kernels::parallel::softmax_aggregate(m, 10.0, v, &wp);
  CHECK(max_abs_diff(s, p) < 1e-12);
  CHECK(max_abs_diff(ws, wp) < 1e-12);
  for (std::size_t i = 0; i < 13; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < 9; ++j) row += wp.at(i, j);
    CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("parallel gram matches the serial reference") {
  const Tensor a = random_tensor({40, 7}, 9);
  CHECK(max_abs_diff(kernels::serial::gram(a), kernels::parallel::gram(a)) < 1e-12);
}

TEST_CASE("bilinear resize kernels agree and the backward is the adjoint") {
  const Tensor x = random_tensor({5, 7, 2}, 10);
  for (auto [oh, ow] : {std::pair<std::size_t, std::size_t>{10, 14}, {3, 4}, {5, 7}}) {
    const Tensor ys = kernels::serial::resize_bilinear(x, oh, ow);
    const Tensor yp = kernels::parallel::resize_bilinear(x, oh, ow);
    CHECK(max_abs_diff(ys, yp) < 1e-12);
    const Tensor g = random_tensor(ys.shape(), 11);
    const Tensor bs = kernels::serial::resize_bilinear_backward(g, 5, 7);
    const Tensor bp = kernels::parallel::resize_bilinear_backward(g, 5, 7);
    CHECK(max_abs_diff(bs, bp) < 1e-12);
    // <R x, g> == <x, R^T g>
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < ys.size(); ++i) lhs += ys[i] * g[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * bp[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("upsampling a constant map keeps it constant") {
  const Tensor x({2, 3, 1}, 0.75);
  const Tensor y = kernels::parallel::resize_bilinear(x, 8, 12);
  CHECK(y.min() == doctest::Approx(0.75));
  CHECK(y.max() == doctest::Approx(0.75));
}
