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

#include "xft/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "xft/error.hpp"
#include "xft/kernels.hpp"

namespace xft::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

ConstMap as_rows(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMap(t.raw(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
Map as_rows(Tensor& t, std::size_t rows, std::size_t cols) {
  return Map(t.raw(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

// Creates an op node. Inputs and the backward closure are only retained when
// some input needs a gradient.
Var make(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backprop) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const Var& in : inputs) node->requires_grad = node->requires_grad || in.requires_grad();
  if (node->requires_grad) {
    for (const Var& in : inputs) node->inputs.push_back(in.node());
    node->backprop = std::move(backprop);
  }
  return Var(std::move(node));
}

void require_rank3(const Var& x, const char* op) {
  if (x.value().rank() != 3) {
    throw ConfigError(std::string(op) + ": expected an H x W x C tensor, got " +
                      shape_string(x.shape()));
  }
}

std::size_t rows_of(const Tensor& t) { return t.height() * t.width(); }

// Gradient of v/|v| per row; zero rows (norm below threshold) pass zero.
Tensor normalize_rows_backward(const Tensor& unit, const std::vector<double>& norms,
                               const Tensor& grad_unit, std::size_t n, std::size_t c) {
  Tensor g(unit.shape());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t si = 0; si < static_cast<std::ptrdiff_t>(n); ++si) {
    const auto i = static_cast<std::size_t>(si);
    if (norms[i] < kernels::kZeroNorm) continue;
    const double* u = unit.raw() + i * c;
    const double* gu = grad_unit.raw() + i * c;
    double dot = 0.0;
    for (std::size_t k = 0; k < c; ++k) dot += u[k] * gu[k];
    double* dst = g.raw() + i * c;
    const double inv = 1.0 / norms[i];
    for (std::size_t k = 0; k < c; ++k) dst[k] = (gu[k] - u[k] * dot) * inv;
  }
  return g;
}

Tensor normalize_rows(const Tensor& x, std::size_t n, std::size_t c, std::vector<double>& norms) {
  Tensor out(x.shape());
  norms.assign(n, 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t si = 0; si < static_cast<std::ptrdiff_t>(n); ++si) {
    const auto i = static_cast<std::size_t>(si);
    const double* src = x.raw() + i * c;
    double ss = 0.0;
    for (std::size_t k = 0; k < c; ++k) ss += src[k] * src[k];
    norms[i] = std::sqrt(ss);
    const double inv = norms[i] < kernels::kZeroNorm ? 0.0 : 1.0 / norms[i];
    double* dst = out.raw() + i * c;
    for (std::size_t k = 0; k < c; ++k) dst[k] = src[k] * inv;
  }
  return out;
}

double logsumexp(const double* v, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, v[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(v[i] - mx);
  return mx + std::log(s);
}

}  // namespace

void Node::accumulate(const Tensor& g) {
  if (grad.empty()) {
    grad = g;
    return;
  }
  double* dst = grad.raw();
  const double* src = g.raw();
  for (std::size_t i = 0; i < grad.size(); ++i) dst[i] += src[i];
}

Tensor& Node::grad_buffer() {
  if (grad.empty()) grad = Tensor(value.shape());
  return grad;
}

Tensor Var::grad() const {
  if (node_->grad.empty()) return Tensor(node_->value.shape());
  return node_->grad;
}

double Var::item() const {
  if (node_->value.size() != 1) {
    throw ConfigError("item() on a tensor of shape " + shape_string(node_->value.shape()));
  }
  return node_->value[0];
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

std::vector<Var> parameters(std::span<const Tensor> values) {
  std::vector<Var> out;
  out.reserve(values.size());
  for (const Tensor& t : values) out.push_back(parameter(t));
  return out;
}

void backward(const Var& root) {
  if (root.value().size() != 1) {
    throw ConfigError("backward() needs a scalar root, got " + shape_string(root.shape()));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Tensor(root.shape(), 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backprop && !node->grad.empty()) node->backprop(*node);
  }
}

// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ConfigError("add: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make(std::move(out), {a, b}, [](Node& self) {
    for (auto& in : self.inputs)
      if (in->requires_grad) in->accumulate(self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ConfigError("sub: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make(std::move(out), {a, b}, [](Node& self) {
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(self.grad);
    if (self.inputs[1]->requires_grad) {
      Tensor g = self.grad;
      for (double& v : g.storage()) v = -v;
      self.inputs[1]->accumulate(g);
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.storage()) v *= s;
  return make(std::move(out), {a}, [s](Node& self) {
    Tensor g = self.grad;
    for (double& v : g.storage()) v *= s;
    self.inputs[0]->accumulate(g);
  });
}

Var sum(const Var& a) {
  Tensor out({1}, a.value().sum());
  return make(std::move(out), {a}, [](Node& self) {
    self.inputs[0]->accumulate(Tensor(self.inputs[0]->value.shape(), self.grad[0]));
  });
}

Var sum_squares(const Var& a) {
  double s = 0.0;
  for (double v : a.value().storage()) s += v * v;
  return make(Tensor({1}, s), {a}, [](Node& self) {
    const Tensor& x = self.inputs[0]->value;
    Tensor g(x.shape());
    const double go = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = 2.0 * x[i] * go;
    self.inputs[0]->accumulate(g);
  });
}

Var mean_squared_error(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ConfigError("mean_squared_error: " + shape_string(a.shape()) + " vs " +
                      shape_string(b.shape()));
  }
  const auto n = static_cast<double>(a.value().size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.value().size(); ++i) {
    const double d = a.value()[i] - b.value()[i];
    s += d * d;
  }
  return make(Tensor({1}, s / n), {a, b}, [n](Node& self) {
    const Tensor& x = self.inputs[0]->value;
    const Tensor& y = self.inputs[1]->value;
    Tensor g(x.shape());
    const double go = self.grad[0] * 2.0 / n;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = (x[i] - y[i]) * go;
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(g);
    if (self.inputs[1]->requires_grad) {
      for (double& v : g.storage()) v = -v;
      self.inputs[1]->accumulate(g);
    }
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return make(std::move(out), {a}, [](Node& self) {
    self.inputs[0]->accumulate(self.grad.reshaped(self.inputs[0]->value.shape()));
  });
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "tanh") return Activation::kTanh;
  if (name == "leaky_relu") return Activation::kLeakyRelu;
  if (name == "sigmoid") return Activation::kSigmoid;
  throw ConfigError("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kTanh: return "tanh";
    case Activation::kLeakyRelu: return "leaky_relu";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "identity";
}

Var activate(const Var& a, Activation act) {
  constexpr double kSlope = 0.2;
  if (act == Activation::kIdentity) return a;
  Tensor out = a.value();
  for (double& v : out.storage()) {
    switch (act) {
      case Activation::kTanh: v = std::tanh(v); break;
      case Activation::kLeakyRelu: v = v > 0 ? v : kSlope * v; break;
      case Activation::kSigmoid: v = 1.0 / (1.0 + std::exp(-v)); break;
      case Activation::kIdentity: break;
    }
  }
  return make(std::move(out), {a}, [act](Node& self) {
    const Tensor& x = self.inputs[0]->value;
    const Tensor& y = self.value;
    Tensor g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      switch (act) {
        case Activation::kTanh: g[i] *= 1.0 - y[i] * y[i]; break;
        case Activation::kLeakyRelu: g[i] *= x[i] > 0 ? 1.0 : kSlope; break;
        case Activation::kSigmoid: g[i] *= y[i] * (1.0 - y[i]); break;
        case Activation::kIdentity: break;
      }
    }
    self.inputs[0]->accumulate(g);
  });
}

// ---------------------------------------------------------------------------

Var conv2d(const Var& x, const Var& weight, const Var& bias, std::size_t stride,
           std::size_t pad) {
  require_rank3(x, "conv2d");
  if (weight.value().rank() != 4) throw ConfigError("conv2d: weight must be rank 4");
  kernels::ConvGeometry g;
  g.in_h = x.value().height();
  g.in_w = x.value().width();
  g.in_c = x.value().channels();
  g.out_c = weight.value().dim(0);
  g.kernel = weight.value().dim(2);
  g.stride = stride;
  g.pad = pad;
  Tensor out = kernels::parallel::conv2d_forward(x.value(), weight.value(), bias.value(), g);
  return make(std::move(out), {x, weight, bias}, [g](Node& self) {
    auto grads = kernels::parallel::conv2d_backward(self.inputs[0]->value,
                                                    self.inputs[1]->value, self.grad, g);
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(grads.input);
    if (self.inputs[1]->requires_grad) self.inputs[1]->accumulate(grads.weight);
    if (self.inputs[2]->requires_grad) self.inputs[2]->accumulate(grads.bias);
  });
}

Var resize_bilinear(const Var& x, std::size_t out_h, std::size_t out_w) {
  require_rank3(x, "resize_bilinear");
  if (x.value().height() == out_h && x.value().width() == out_w) return x;
  Tensor out = kernels::parallel::resize_bilinear(x.value(), out_h, out_w);
  return make(std::move(out), {x}, [](Node& self) {
    const Tensor& in = self.inputs[0]->value;
    self.inputs[0]->accumulate(
        kernels::parallel::resize_bilinear_backward(self.grad, in.height(), in.width()));
  });
}

Var area_downsample(const Var& x, std::size_t factor) {
  require_rank3(x, "area_downsample");
  const Tensor& in = x.value();
  if (factor == 0 || in.height() % factor || in.width() % factor) {
    throw ConfigError("area_downsample: " + shape_string(in.shape()) +
                      " is not divisible by factor " + std::to_string(factor));
  }
  if (factor == 1) return x;
  const std::size_t oh = in.height() / factor, ow = in.width() / factor, c = in.channels();
  const double inv = 1.0 / static_cast<double>(factor * factor);
  Tensor out = Tensor::hwc(oh, ow, c);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t sy = 0; sy < static_cast<std::ptrdiff_t>(oh); ++sy) {
    const auto y = static_cast<std::size_t>(sy);
    for (std::size_t xx = 0; xx < ow; ++xx) {
      double* dst = &out.at(y, xx, 0);
      for (std::size_t dy = 0; dy < factor; ++dy)
        for (std::size_t dx = 0; dx < factor; ++dx) {
          const double* src = &in.at(y * factor + dy, xx * factor + dx, 0);
          for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
        }
      for (std::size_t ch = 0; ch < c; ++ch) dst[ch] *= inv;
    }
  }
  return make(std::move(out), {x}, [factor, inv](Node& self) {
    const Tensor& src = self.inputs[0]->value;
    Tensor g(src.shape());
    const std::size_t c = src.channels();
    for (std::size_t y = 0; y < src.height(); ++y)
      for (std::size_t xx = 0; xx < src.width(); ++xx)
        for (std::size_t ch = 0; ch < c; ++ch)
          g.at(y, xx, ch) = self.grad.at(y / factor, xx / factor, ch) * inv;
    self.inputs[0]->accumulate(g);
  });
}

Var concat_channels(std::span<const Var> parts) {
  if (parts.empty()) throw ConfigError("concat_channels: no inputs");
  const std::size_t h = parts[0].value().height(), w = parts[0].value().width();
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require_rank3(p, "concat_channels");
    if (p.value().height() != h || p.value().width() != w) {
      throw ConfigError("concat_channels: spatial mismatch " + shape_string(p.shape()));
    }
    offsets.push_back(total);
    total += p.value().channels();
  }
  Tensor out = Tensor::hwc(h, w, total);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& src = parts[i].value();
    const std::size_t c = src.channels();
    for (std::size_t pos = 0; pos < h * w; ++pos)
      std::copy_n(src.raw() + pos * c, c, out.raw() + pos * total + offsets[i]);
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make(std::move(out), std::move(inputs), [offsets, total](Node& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      Node& in = *self.inputs[i];
      if (!in.requires_grad) continue;
      const std::size_t c = in.value.channels();
      Tensor g(in.value.shape());
      for (std::size_t pos = 0; pos < in.value.positions(); ++pos)
        std::copy_n(self.grad.raw() + pos * total + offsets[i], c, g.raw() + pos * c);
      in.accumulate(g);
    }
  });
}

Var centralize(const Var& x) {
  require_rank3(x, "centralize");
  const Tensor& in = x.value();
  const std::size_t n = in.positions(), c = in.channels();
  std::vector<double> mean(c, 0.0);
  for (std::size_t pos = 0; pos < n; ++pos)
    for (std::size_t ch = 0; ch < c; ++ch) mean[ch] += in[pos * c + ch];
  for (double& m : mean) m /= static_cast<double>(n);
  Tensor out = in;
  for (std::size_t pos = 0; pos < n; ++pos)
    for (std::size_t ch = 0; ch < c; ++ch) out[pos * c + ch] -= mean[ch];
  return make(std::move(out), {x}, [n, c](Node& self) {
    std::vector<double> gm(c, 0.0);
    for (std::size_t pos = 0; pos < n; ++pos)
      for (std::size_t ch = 0; ch < c; ++ch) gm[ch] += self.grad[pos * c + ch];
    Tensor g = self.grad;
    for (std::size_t pos = 0; pos < n; ++pos)
      for (std::size_t ch = 0; ch < c; ++ch) g[pos * c + ch] -= gm[ch] / static_cast<double>(n);
    self.inputs[0]->accumulate(g);
  });
}

Var normalize_positions(const Var& x) {
  require_rank3(x, "normalize_positions");
  const std::size_t n = x.value().positions(), c = x.value().channels();
  auto norms = std::make_shared<std::vector<double>>();
  Tensor out = normalize_rows(x.value(), n, c, *norms);
  return make(std::move(out), {x}, [norms, n, c](Node& self) {
    self.inputs[0]->accumulate(normalize_rows_backward(self.value, *norms, self.grad, n, c));
  });
}

Var channel_scale(const Var& x, const Var& s) {
  require_rank3(x, "channel_scale");
  const std::size_t c = x.value().channels();
  if (s.value().size() != c) {
    throw ConfigError("channel_scale: " + std::to_string(s.value().size()) +
                      " weights for " + std::to_string(c) + " channels");
  }
  Tensor out = x.value();
  for (std::size_t pos = 0; pos < out.positions(); ++pos)
    for (std::size_t ch = 0; ch < c; ++ch) out[pos * c + ch] *= s.value()[ch];
  return make(std::move(out), {x, s}, [c](Node& self) {
    const Tensor& xv = self.inputs[0]->value;
    const Tensor& sv = self.inputs[1]->value;
    if (self.inputs[0]->requires_grad) {
      Tensor g = self.grad;
      for (std::size_t pos = 0; pos < g.positions(); ++pos)
        for (std::size_t ch = 0; ch < c; ++ch) g[pos * c + ch] *= sv[ch];
      self.inputs[0]->accumulate(g);
    }
    if (self.inputs[1]->requires_grad) {
      Tensor g(sv.shape());
      for (std::size_t pos = 0; pos < xv.positions(); ++pos)
        for (std::size_t ch = 0; ch < c; ++ch) g[ch] += self.grad[pos * c + ch] * xv[pos * c + ch];
      self.inputs[1]->accumulate(g);
    }
  });
}

Var linear(const Var& z, const Var& weight, const Var& bias) {
  const Tensor& w = weight.value();
  if (w.rank() != 2 || w.dim(1) != z.value().size() || bias.value().size() != w.dim(0)) {
    throw ConfigError("linear: weight " + shape_string(w.shape()) + " vs input " +
                      shape_string(z.shape()) + " and bias " + shape_string(bias.shape()));
  }
  const std::size_t m = w.dim(0), d = w.dim(1);
  Tensor out = bias.value().reshaped({m});
  Eigen::Map<Eigen::VectorXd>(out.raw(), static_cast<Eigen::Index>(m)).noalias() +=
      as_rows(w, m, d) * Eigen::Map<const Eigen::VectorXd>(z.value().raw(),
                                                          static_cast<Eigen::Index>(d));
  return make(std::move(out), {z, weight, bias}, [m, d](Node& self) {
    const Eigen::Map<const Eigen::VectorXd> go(self.grad.raw(), static_cast<Eigen::Index>(m));
    if (self.inputs[0]->requires_grad) {
      Tensor g(self.inputs[0]->value.shape());
      Eigen::Map<Eigen::VectorXd>(g.raw(), static_cast<Eigen::Index>(d)).noalias() =
          as_rows(self.inputs[1]->value, m, d).transpose() * go;
      self.inputs[0]->accumulate(g);
    }
    if (self.inputs[1]->requires_grad) {
      Tensor g(self.inputs[1]->value.shape());
      as_rows(g, m, d).noalias() =
          go * Eigen::Map<const Eigen::VectorXd>(self.inputs[0]->value.raw(),
                                                 static_cast<Eigen::Index>(d))
                   .transpose();
      self.inputs[1]->accumulate(g);
    }
    if (self.inputs[2]->requires_grad) {
      self.inputs[2]->accumulate(self.grad.reshaped(self.inputs[2]->value.shape()));
    }
  });
}

// ---------------------------------------------------------------------------

Var cosine_matrix(const Var& a, const Var& b) {
  require_rank3(a, "cosine_matrix");
  require_rank3(b, "cosine_matrix");
  const std::size_t c = a.value().channels();
  if (b.value().channels() != c) {
    throw ConfigError("cosine_matrix: channel mismatch " + std::to_string(c) + " vs " +
                      std::to_string(b.value().channels()));
  }
  const std::size_t na = rows_of(a.value()), nb = rows_of(b.value());
  auto na_norms = std::make_shared<std::vector<double>>();
  auto nb_norms = std::make_shared<std::vector<double>>();
  auto au = std::make_shared<Tensor>(normalize_rows(a.value(), na, c, *na_norms));
  auto bu = std::make_shared<Tensor>(normalize_rows(b.value(), nb, c, *nb_norms));
  Tensor out({na, nb});
  as_rows(out, na, nb).noalias() = as_rows(*au, na, c) * as_rows(*bu, nb, c).transpose();
  for (double& v : out.storage()) v = std::clamp(v, -1.0, 1.0);
  return make(std::move(out), {a, b}, [=](Node& self) {
    const auto g = as_rows(self.grad, na, nb);
    if (self.inputs[0]->requires_grad) {
      Tensor gu({na, c});
      as_rows(gu, na, c).noalias() = g * as_rows(*bu, nb, c);
      Tensor ga = normalize_rows_backward(*au, *na_norms, gu, na, c);
      self.inputs[0]->accumulate(ga.reshaped(self.inputs[0]->value.shape()));
    }
    if (self.inputs[1]->requires_grad) {
      Tensor gu({nb, c});
      as_rows(gu, nb, c).noalias() = g.transpose() * as_rows(*au, na, c);
      Tensor gb = normalize_rows_backward(*bu, *nb_norms, gu, nb, c);
      self.inputs[1]->accumulate(gb.reshaped(self.inputs[1]->value.shape()));
    }
  });
}

Var softmax_aggregate(const Var& m, double alpha, const Var& values, std::size_t out_h,
                      std::size_t out_w) {
  require_rank3(values, "softmax_aggregate");
  const Tensor& mv = m.value();
  const std::size_t nb = rows_of(values.value()), k = values.value().channels();
  if (mv.rank() != 2 || mv.dim(1) != nb || mv.dim(0) != out_h * out_w) {
    throw ConfigError("softmax_aggregate: matrix " + shape_string(mv.shape()) +
                      " incompatible with values " + shape_string(values.shape()) +
                      " and output " + std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  const std::size_t na = mv.dim(0);
  auto p = std::make_shared<Tensor>();
  Tensor out = kernels::parallel::softmax_aggregate(mv, alpha, values.value().reshaped({nb, k}),
                                                    p.get());
  return make(out.reshaped({out_h, out_w, k}), {m, values}, [=](Node& self) {
    const auto go = as_rows(self.grad, na, k);
    const auto pm = as_rows(*p, na, nb);
    if (self.inputs[1]->requires_grad) {
      Tensor gv(self.inputs[1]->value.shape());
      as_rows(gv, nb, k).noalias() = pm.transpose() * go;
      self.inputs[1]->accumulate(gv);
    }
    if (self.inputs[0]->requires_grad) {
      Tensor gp({na, nb});
      as_rows(gp, na, nb).noalias() = go * as_rows(self.inputs[1]->value, nb, k).transpose();
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t si = 0; si < static_cast<std::ptrdiff_t>(na); ++si) {
        const auto i = static_cast<std::size_t>(si);
        double* row = gp.raw() + i * nb;
        const double* pr = p->raw() + i * nb;
        double dot = 0.0;
        for (std::size_t j = 0; j < nb; ++j) dot += row[j] * pr[j];
        for (std::size_t j = 0; j < nb; ++j) row[j] = alpha * pr[j] * (row[j] - dot);
      }
      self.inputs[0]->accumulate(gp);
    }
  });
}

Var gram(const Var& x) {
  require_rank3(x, "gram");
  const std::size_t n = x.value().positions(), c = x.value().channels();
  Tensor out = kernels::parallel::gram(x.value().reshaped({n, c}));
  return make(std::move(out), {x}, [n, c](Node& self) {
    Tensor sym({c, c});
    as_rows(sym, c, c) = as_rows(self.grad, c, c) + as_rows(self.grad, c, c).transpose();
    Tensor g(self.inputs[0]->value.shape());
    as_rows(g, n, c).noalias() = as_rows(self.inputs[0]->value, n, c) * as_rows(sym, c, c);
    self.inputs[0]->accumulate(g);
  });
}

Var patch_info_nce(const Var& anchors, const Var& others, double tau,
                   const NegativeSets& negatives) {
  require_rank3(anchors, "patch_info_nce");
  if (anchors.shape() != others.shape()) {
    throw ConfigError("contrastive loss: shape " + shape_string(anchors.shape()) + " vs " +
                      shape_string(others.shape()));
  }
  if (!(tau > 0)) throw ConfigError("contrastive loss: tau must be positive");
  const std::size_t n = anchors.value().positions(), c = anchors.value().channels();
  if (n < 2) throw ConfigError("contrastive loss: a single position has no negatives");
  if (!negatives.all()) {
    if (negatives.lists.size() != n) {
      throw ConfigError("contrastive loss: negative lists do not cover every anchor");
    }
    for (std::size_t u = 0; u < n; ++u) {
      if (negatives.lists[u].empty()) throw ConfigError("contrastive loss: empty negative set");
      for (std::uint32_t j : negatives.lists[u])
        if (j >= n || j == u) throw ConfigError("contrastive loss: invalid negative index");
    }
  }
  const auto a = as_rows(anchors.value(), n, c);
  const auto b = as_rows(others.value(), n, c);

  if (negatives.all()) {
    // Dense path: logits over every position; softmax weights are kept for
    // the backward pass with the positive's indicator already subtracted.
    auto dlogits = std::make_shared<Tensor>(Shape{n, n});
    as_rows(*dlogits, n, n).noalias() = (a * b.transpose()) / tau;
    std::vector<double> per_anchor(n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t su = 0; su < static_cast<std::ptrdiff_t>(n); ++su) {
      const auto u = static_cast<std::size_t>(su);
      double* row = dlogits->raw() + u * n;
      const double lse = logsumexp(row, n);
      per_anchor[u] = lse - row[u];
      for (std::size_t j = 0; j < n; ++j) row[j] = std::exp(row[j] - lse);
      row[u] -= 1.0;
    }
    double total = 0.0;
    for (double v : per_anchor) total += v;
    return make(Tensor({1}, total), {anchors, others}, [=](Node& self) {
      const double go = self.grad[0] / tau;
      const auto d = as_rows(*dlogits, n, n);
      if (self.inputs[0]->requires_grad) {
        Tensor g(self.inputs[0]->value.shape());
        as_rows(g, n, c).noalias() = go * (d * as_rows(self.inputs[1]->value, n, c));
        self.inputs[0]->accumulate(g);
      }
      if (self.inputs[1]->requires_grad) {
        Tensor g(self.inputs[1]->value.shape());
        as_rows(g, n, c).noalias() = go * (d.transpose() * as_rows(self.inputs[0]->value, n, c));
        self.inputs[1]->accumulate(g);
      }
    });
  }

  // Sparse path: each anchor only sees its positive and its own negatives.
  auto weights = std::make_shared<std::vector<std::vector<double>>>(n);
  std::vector<double> per_anchor(n);
  const auto lists = std::make_shared<std::vector<std::vector<std::uint32_t>>>(negatives.lists);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t su = 0; su < static_cast<std::ptrdiff_t>(n); ++su) {
    const auto u = static_cast<std::size_t>(su);
    const auto& neg = (*lists)[u];
    std::vector<double> logits(neg.size() + 1);
    logits[0] = a.row(static_cast<Eigen::Index>(u)).dot(b.row(static_cast<Eigen::Index>(u))) / tau;
    for (std::size_t k = 0; k < neg.size(); ++k)
      logits[k + 1] = a.row(static_cast<Eigen::Index>(u)).dot(b.row(neg[k])) / tau;
    const double lse = logsumexp(logits.data(), logits.size());
    per_anchor[u] = lse - logits[0];
    for (double& l : logits) l = std::exp(l - lse);
    logits[0] -= 1.0;
    (*weights)[u] = std::move(logits);
  }
  double total = 0.0;
  for (double v : per_anchor) total += v;
  return make(Tensor({1}, total), {anchors, others}, [=](Node& self) {
    const double go = self.grad[0] / tau;
    const auto av = as_rows(self.inputs[0]->value, n, c);
    const auto bv = as_rows(self.inputs[1]->value, n, c);
    Tensor ga(self.inputs[0]->value.shape());
    Tensor gb(self.inputs[1]->value.shape());
    auto gam = as_rows(ga, n, c);
    auto gbm = as_rows(gb, n, c);
    for (std::size_t u = 0; u < n; ++u) {
      const auto& w = (*weights)[u];
      const auto& neg = (*lists)[u];
      const auto ui = static_cast<Eigen::Index>(u);
      gam.row(ui) += go * w[0] * bv.row(ui);
      gbm.row(ui) += go * w[0] * av.row(ui);
      for (std::size_t k = 0; k < neg.size(); ++k) {
        gam.row(ui) += go * w[k + 1] * bv.row(neg[k]);
        gbm.row(neg[k]) += go * w[k + 1] * av.row(ui);
      }
    }
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(ga);
    if (self.inputs[1]->requires_grad) self.inputs[1]->accumulate(gb);
  });
}

Var contextual(const Var& target, const Var& candidate, double bandwidth) {
  require_rank3(target, "contextual");
  require_rank3(candidate, "contextual");
  if (!(bandwidth > 0)) throw ConfigError("contextual loss: bandwidth must be positive");
  const std::size_t c = target.value().channels();
  if (candidate.value().channels() != c) {
    throw ConfigError("contextual loss: channel mismatch");
  }
  constexpr double kEps = 1e-5;
  const std::size_t n = rows_of(target.value()), m = rows_of(candidate.value());
  const double h = bandwidth;

  // Both sets are centred on the target mean.
  std::vector<double> mu(c, 0.0);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t k = 0; k < c; ++k) mu[k] += target.value()[u * c + k];
  for (double& v : mu) v /= static_cast<double>(n);
  Tensor tc = target.value().reshaped({n, c});
  Tensor wc = candidate.value().reshaped({m, c});
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t k = 0; k < c; ++k) tc[u * c + k] -= mu[k];
  for (std::size_t l = 0; l < m; ++l)
    for (std::size_t k = 0; k < c; ++k) wc[l * c + k] -= mu[k];

  auto tn = std::make_shared<std::vector<double>>();
  auto wn = std::make_shared<std::vector<double>>();
  auto tu = std::make_shared<Tensor>(normalize_rows(tc, n, c, *tn));
  auto wu = std::make_shared<Tensor>(normalize_rows(wc, m, c, *wn));
  auto dist = std::make_shared<Tensor>(Shape{n, m});
  as_rows(*dist, n, m).noalias() = as_rows(*tu, n, c) * as_rows(*wu, m, c).transpose();
  for (double& v : dist->storage()) v = 1.0 - v;

  auto argmin = std::make_shared<std::vector<std::size_t>>(n);
  auto rowsum = std::make_shared<std::vector<double>>(n);
  auto best = std::make_shared<std::vector<double>>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t su = 0; su < static_cast<std::ptrdiff_t>(n); ++su) {
    const auto u = static_cast<std::size_t>(su);
    const double* d = dist->raw() + u * m;
    std::size_t lm = 0;
    for (std::size_t l = 1; l < m; ++l)
      if (d[l] < d[lm]) lm = l;
    const double denom = d[lm] + kEps;
    double s = 0.0;
    for (std::size_t l = 0; l < m; ++l) s += std::exp((1.0 - d[l] / denom) / h);
    (*argmin)[u] = lm;
    (*rowsum)[u] = s;
    (*best)[u] = std::exp((1.0 - d[lm] / denom) / h) / s;
  }
  double cx = 0.0;
  for (double v : *best) cx += v;

  return make(Tensor({1}, -std::log(cx)), {target, candidate}, [=](Node& self) {
    const double gcx = -self.grad[0] / cx;
    Tensor gcos({n, m});
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t su = 0; su < static_cast<std::ptrdiff_t>(n); ++su) {
      const auto u = static_cast<std::size_t>(su);
      const double* d = dist->raw() + u * m;
      const std::size_t lm = (*argmin)[u];
      const double denom = d[lm] + kEps;
      const double s = (*rowsum)[u];
      const double top = (*best)[u];
      double gdenom = 0.0;
      double* gc = gcos.raw() + u * m;
      for (std::size_t l = 0; l < m; ++l) {
        const double w = std::exp((1.0 - d[l] / denom) / h);
        const double gw = gcx * ((l == lm ? 1.0 : 0.0) - top) / s;
        const double gq = gw * w * (-1.0 / h);
        gc[l] = gq / denom;
        gdenom -= gq * d[l] / (denom * denom);
      }
      gc[lm] += gdenom;
      for (std::size_t l = 0; l < m; ++l) gc[l] = -gc[l];
    }
    Tensor gtu({n, c});
    Tensor gwu({m, c});
    as_rows(gtu, n, c).noalias() = as_rows(gcos, n, m) * as_rows(*wu, m, c);
    as_rows(gwu, m, c).noalias() = as_rows(gcos, n, m).transpose() * as_rows(*tu, n, c);
    Tensor gtc = normalize_rows_backward(*tu, *tn, gtu, n, c);
    Tensor gwc = normalize_rows_backward(*wu, *wn, gwu, m, c);
    if (self.inputs[1]->requires_grad) {
      self.inputs[1]->accumulate(gwc.reshaped(self.inputs[1]->value.shape()));
    }
    if (self.inputs[0]->requires_grad) {
      std::vector<double> gmu(c, 0.0);
      for (std::size_t u = 0; u < n; ++u)
        for (std::size_t k = 0; k < c; ++k) gmu[k] -= gtc[u * c + k];
      for (std::size_t l = 0; l < m; ++l)
        for (std::size_t k = 0; k < c; ++k) gmu[k] -= gwc[l * c + k];
      for (std::size_t u = 0; u < n; ++u)
        for (std::size_t k = 0; k < c; ++k) gtc[u * c + k] += gmu[k] / static_cast<double>(n);
      self.inputs[0]->accumulate(gtc.reshaped(self.inputs[0]->value.shape()));
    }
  });
}

}  // namespace xft::ad
