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

// Data-parallel numeric kernels. Every kernel exists twice: a plain serial
// reference under `serial::` that is kept for testing, and an OpenMP/BLAS
// version under `parallel::` used by the library. Both must agree to
// round-off; tests/kernels_test.cpp and bench/kernels_bench.cpp compare them.

#include <cstddef>

#include "xft/tensor.hpp"

namespace xft::kernels {

struct ConvGeometry {
  std::size_t in_h = 0, in_w = 0, in_c = 0;
  std::size_t out_c = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 1;

  std::size_t out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
};

struct ConvGrads {
  Tensor input;   // in_h x in_w x in_c
  Tensor weight;  // out_c x in_c x k x k
  Tensor bias;    // out_c
};

// Rows of the correlation output whose source/target vector norm is below
// this are defined as zero similarity.
inline constexpr double kZeroNorm = 1e-12;

namespace serial {

// Zero-padded 2-D convolution, HWC input, weight [out_c][in_c][k][k].
Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias,
                      const ConvGeometry& g);
ConvGrads conv2d_backward(const Tensor& input, const Tensor& weight,
                          const Tensor& grad_out, const ConvGeometry& g);

// Cosine similarity between every row of a (Na x C) and every row of b (Nb x C).
Tensor cosine_matrix(const Tensor& a, const Tensor& b);

// Row-wise softmax of alpha * m, then rows of the result times values (Nb x K).
// Returns the Na x K aggregate; the softmax weights go to `weights` if given.
Tensor softmax_aggregate(const Tensor& m, double alpha, const Tensor& values,
                         Tensor* weights = nullptr);

// C x C Gram matrix of an (N x C) activation matrix.
Tensor gram(const Tensor& act);

// Half-pixel-centre bilinear resize of an HWC tensor.
Tensor resize_bilinear(const Tensor& input, std::size_t out_h, std::size_t out_w);
Tensor resize_bilinear_backward(const Tensor& grad_out, std::size_t in_h, std::size_t in_w);

}  // namespace serial

namespace parallel {

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias,
                      const ConvGeometry& g);
ConvGrads conv2d_backward(const Tensor& input, const Tensor& weight,
                          const Tensor& grad_out, const ConvGeometry& g);
Tensor cosine_matrix(const Tensor& a, const Tensor& b);
Tensor softmax_aggregate(const Tensor& m, double alpha, const Tensor& values,
                         Tensor* weights = nullptr);
Tensor gram(const Tensor& act);
Tensor resize_bilinear(const Tensor& input, std::size_t out_h, std::size_t out_w);
Tensor resize_bilinear_backward(const Tensor& grad_out, std::size_t in_h, std::size_t in_w);

}  // namespace parallel

}  // namespace xft::kernels
