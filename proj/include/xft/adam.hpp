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

#include <span>
#include <vector>

#include "xft/tensor.hpp"

namespace xft {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

// Adaptive-moment gradient descent over a fixed list of parameter tensors.
class Adam {
 public:
  Adam(AdamConfig config, std::span<const Tensor> params);

  // One update of params with grads (same order and shapes as construction).
  void step(std::span<Tensor> params, std::span<const Tensor> grads);
  std::size_t steps() const { return t_; }

 private:
  AdamConfig config_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace xft
