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

// Minimal reverse-mode automatic differentiation over Tensor values.
//
// Every op builds a node holding its forward value and a closure that
// propagates the node's gradient into its inputs. Graphs are built fresh per
// forward pass; parameters are leaves created with `parameter()` whose
// gradients are read back after `backward()`.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "xft/tensor.hpp"

namespace xft::ad {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backprop;

  // Adds g into grad, allocating on first use.
  void accumulate(const Tensor& g);
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  // Zero-filled tensor of the value's shape if no gradient reached this node.
  Tensor grad() const;
  // Scalar value of a one-element var.
  double item() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Tensor value);
Var parameter(Tensor value);
std::vector<Var> parameters(std::span<const Tensor> values);

// Reverse sweep from a one-element root.
void backward(const Var& root);

// --- elementwise / structural -------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var sum(const Var& a);
Var sum_squares(const Var& a);
Var mean_squared_error(const Var& a, const Var& b);
Var reshape(const Var& a, Shape shape);

enum class Activation { kIdentity, kTanh, kLeakyRelu, kSigmoid };
Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);
Var activate(const Var& a, Activation act);

// --- spatial ---------------------------------------------------------------

// Zero-padded convolution; weight [out_c][in_c][k][k], bias [out_c].
Var conv2d(const Var& x, const Var& weight, const Var& bias, std::size_t stride,
           std::size_t pad);
Var resize_bilinear(const Var& x, std::size_t out_h, std::size_t out_w);
// Mean over non-overlapping factor x factor blocks.
Var area_downsample(const Var& x, std::size_t factor);
Var concat_channels(std::span<const Var> parts);
// Subtracts the per-channel spatial mean.
Var centralize(const Var& x);
// Scales every spatial position's channel vector to unit L2 norm (zero stays zero).
Var normalize_positions(const Var& x);
// x(h,w,c) * s(c).
Var channel_scale(const Var& x, const Var& s);
// weight [m][d] times z [d] plus bias [m] -> [m].
Var linear(const Var& z, const Var& weight, const Var& bias);

// --- correspondence / losses ---------------------------------------------

// Cosine similarity between every position of a and every position of b.
// a: Ha x Wa x C, b: Hb x Wb x C -> (HaWa) x (HbWb).
Var cosine_matrix(const Var& a, const Var& b);
// Row-wise softmax(alpha * m) aggregation of values (Hb x Wb x K) reshaped to
// out_h x out_w x K.
Var softmax_aggregate(const Var& m, double alpha, const Var& values, std::size_t out_h,
                      std::size_t out_w);
// C x C Gram matrix over spatial positions of an H x W x C map.
Var gram(const Var& x);

// Negative index sets for the patchwise InfoNCE sum. Empty `lists` means every
// other position is a negative.
struct NegativeSets {
  std::vector<std::vector<std::uint32_t>> lists;
  bool all() const { return lists.empty(); }
};

// Sum over anchors u of -log softmax over {u} + negatives(u) of a(u).b(.)/tau,
// with positive b(u). a and b are H x W x C with identical shapes.
Var patch_info_nce(const Var& anchors, const Var& others, double tau,
                   const NegativeSets& negatives);

// -log(sum_u max_l CX(u, l)) with CX the row-normalized contextual similarity
// between target positions u and candidate positions l.
Var contextual(const Var& target, const Var& candidate, double bandwidth);

}  // namespace xft::ad
