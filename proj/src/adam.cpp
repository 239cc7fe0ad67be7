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

#include "xft/adam.hpp"

#include <cmath>

#include "xft/error.hpp"

namespace xft {

Adam::Adam(AdamConfig config, std::span<const Tensor> params) : config_(config) {
  for (const Tensor& p : params) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

void Adam::step(std::span<Tensor> params, std::span<const Tensor> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw ConfigError("adam: parameter list changed size");
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    const Tensor& g = grads[i];
    if (g.size() != p.size()) throw ConfigError("adam: gradient shape mismatch");
    for (std::size_t k = 0; k < p.size(); ++k) {
      m_[i][k] = b1 * m_[i][k] + (1 - b1) * g[k];
      v_[i][k] = b2 * v_[i][k] + (1 - b2) * g[k] * g[k];
      const double mh = m_[i][k] / c1;
      const double vh = v_[i][k] / c2;
      p[k] -= config_.learning_rate * mh / (std::sqrt(vh) + config_.epsilon);
    }
  }
}

}  // namespace xft
