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

#include "xft/kernels.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "xft/error.hpp"

namespace xft::kernels {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

void check_conv(const Tensor& input, const Tensor& weight, const Tensor& bias,
                const ConvGeometry& g) {
  if (input.rank() != 3 || input.height() != g.in_h || input.width() != g.in_w ||
      input.channels() != g.in_c) {
    throw ConfigError("conv2d: input " + shape_string(input.shape()) +
                      " does not match geometry");
  }
  if (weight.shape() != Shape{g.out_c, g.in_c, g.kernel, g.kernel}) {
    throw ConfigError("conv2d: weight " + shape_string(weight.shape()) +
                      " does not match geometry");
  }
  if (bias.size() != g.out_c) throw ConfigError("conv2d: bias size mismatch");
  if (g.in_h + 2 * g.pad < g.kernel || g.in_w + 2 * g.pad < g.kernel || g.stride == 0) {
    throw ConfigError("conv2d: kernel larger than padded input");
  }
}

void check_rows(const Tensor& a, const Tensor& b, const char* what) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw ConfigError(std::string(what) + ": operands " + shape_string(a.shape()) + " and " +
                      shape_string(b.shape()) + " must be matrices sharing a column count");
  }
}

struct Tap {
  std::size_t i0, i1;
  double w1;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

Tensor normalized_rows(const Tensor& a) {
  const std::size_t n = a.dim(0), c = a.dim(1);
  Tensor out(a.shape());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const double* row = a.raw() + i * c;
    double ss = 0.0;
    for (std::size_t k = 0; k < c; ++k) ss += row[k] * row[k];
    const double norm = std::sqrt(ss);
    double* dst = out.raw() + i * c;
    const double inv = norm < kZeroNorm ? 0.0 : 1.0 / norm;
    for (std::size_t k = 0; k < c; ++k) dst[k] = row[k] * inv;
  }
  return out;
}

}  // namespace

// --------------------------------------------------------------------------
// serial reference kernels

namespace serial {

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias,
                      const ConvGeometry& g) {
  check_conv(input, weight, bias, g);
  const std::size_t oh = g.out_h(), ow = g.out_w(), k = g.kernel;
  Tensor out = Tensor::hwc(oh, ow, g.out_c);
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      for (std::size_t co = 0; co < g.out_c; ++co) {
        double acc = bias[co];
        for (std::size_t ci = 0; ci < g.in_c; ++ci) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                            static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                              static_cast<std::ptrdiff_t>(g.pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
              acc += weight[((co * g.in_c + ci) * k + ky) * k + kx] *
                     input.at(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), ci);
            }
          }
        }
        out.at(oy, ox, co) = acc;
      }
    }
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out,
                          const ConvGeometry& g) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), k = g.kernel;
  ConvGrads grads{Tensor(input.shape()), Tensor(weight.shape()), Tensor({g.out_c})};
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      for (std::size_t co = 0; co < g.out_c; ++co) {
        const double go = grad_out.at(oy, ox, co);
        grads.bias[co] += go;
        for (std::size_t ci = 0; ci < g.in_c; ++ci) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                            static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                              static_cast<std::ptrdiff_t>(g.pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
              const std::size_t wi = ((co * g.in_c + ci) * k + ky) * k + kx;
              const auto uy = static_cast<std::size_t>(iy), ux = static_cast<std::size_t>(ix);
              grads.weight[wi] += go * input.at(uy, ux, ci);
              grads.input.at(uy, ux, ci) += go * weight[wi];
            }
          }
        }
      }
    }
  }
  return grads;
}

Tensor cosine_matrix(const Tensor& a, const Tensor& b) {
  check_rows(a, b, "cosine_matrix");
  const std::size_t na = a.dim(0), nb = b.dim(0), c = a.dim(1);
  Tensor out({na, nb});
  for (std::size_t i = 0; i < na; ++i) {
    for (std::size_t j = 0; j < nb; ++j) {
      double dot = 0.0, sa = 0.0, sb = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        dot += a.at(i, k) * b.at(j, k);
        sa += a.at(i, k) * a.at(i, k);
        sb += b.at(j, k) * b.at(j, k);
      }
      const double na_ = std::sqrt(sa), nb_ = std::sqrt(sb);
      out.at(i, j) = (na_ < kZeroNorm || nb_ < kZeroNorm) ? 0.0 : dot / (na_ * nb_);
    }
  }
  return out;
}

Tensor softmax_aggregate(const Tensor& m, double alpha, const Tensor& values, Tensor* weights) {
  if (m.rank() != 2 || values.rank() != 2 || m.dim(1) != values.dim(0)) {
    throw ConfigError("softmax_aggregate: " + shape_string(m.shape()) + " against values " +
                      shape_string(values.shape()));
  }
  const std::size_t rows = m.dim(0), cols = m.dim(1), kk = values.dim(1);
  Tensor out({rows, kk});
  Tensor p({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, alpha * m.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      p.at(i, j) = std::exp(alpha * m.at(i, j) - mx);
      z += p.at(i, j);
    }
    for (std::size_t j = 0; j < cols; ++j) p.at(i, j) /= z;
    for (std::size_t j = 0; j < cols; ++j) {
      for (std::size_t q = 0; q < kk; ++q) out.at(i, q) += p.at(i, j) * values.at(j, q);
    }
  }
  if (weights) *weights = std::move(p);
  return out;
}

Tensor gram(const Tensor& act) {
  if (act.rank() != 2) throw ConfigError("gram: expects an N x C matrix");
  const std::size_t n = act.dim(0), c = act.dim(1);
  Tensor g({c, c});
  for (std::size_t a = 0; a < c; ++a) {
    for (std::size_t b = 0; b < c; ++b) {
      double s = 0.0;
      for (std::size_t u = 0; u < n; ++u) s += act.at(u, a) * act.at(u, b);
      g.at(a, b) = s;
    }
  }
  return g;
}

Tensor resize_bilinear(const Tensor& input, std::size_t out_h, std::size_t out_w) {
  const auto ty = bilinear_taps(input.height(), out_h);
  const auto tx = bilinear_taps(input.width(), out_w);
  const std::size_t c = input.channels();
  Tensor out = Tensor::hwc(out_h, out_w, c);
  for (std::size_t y = 0; y < out_h; ++y) {
    for (std::size_t x = 0; x < out_w; ++x) {
      const Tap& a = ty[y];
      const Tap& b = tx[x];
      for (std::size_t ch = 0; ch < c; ++ch) {
        out.at(y, x, ch) = (1 - a.w1) * (1 - b.w1) * input.at(a.i0, b.i0, ch) +
                           (1 - a.w1) * b.w1 * input.at(a.i0, b.i1, ch) +
                           a.w1 * (1 - b.w1) * input.at(a.i1, b.i0, ch) +
                           a.w1 * b.w1 * input.at(a.i1, b.i1, ch);
      }
    }
  }
  return out;
}

Tensor resize_bilinear_backward(const Tensor& grad_out, std::size_t in_h, std::size_t in_w) {
  const auto ty = bilinear_taps(in_h, grad_out.height());
  const auto tx = bilinear_taps(in_w, grad_out.width());
  const std::size_t c = grad_out.channels();
  Tensor gin = Tensor::hwc(in_h, in_w, c);
  for (std::size_t y = 0; y < grad_out.height(); ++y) {
    for (std::size_t x = 0; x < grad_out.width(); ++x) {
      const Tap& a = ty[y];
      const Tap& b = tx[x];
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double go = grad_out.at(y, x, ch);
        gin.at(a.i0, b.i0, ch) += (1 - a.w1) * (1 - b.w1) * go;
        gin.at(a.i0, b.i1, ch) += (1 - a.w1) * b.w1 * go;
        gin.at(a.i1, b.i0, ch) += a.w1 * (1 - b.w1) * go;
        gin.at(a.i1, b.i1, ch) += a.w1 * b.w1 * go;
      }
    }
  }
  return gin;
}

}  // namespace serial

// --------------------------------------------------------------------------
// OpenMP / BLAS-backed kernels

namespace parallel {

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias,
                      const ConvGeometry& g) {
  check_conv(input, weight, bias, g);
  const std::size_t oh = g.out_h(), ow = g.out_w(), k = g.kernel;
  const std::size_t ic = g.in_c, oc = g.out_c;
  // Repack weights as [ky][kx][ci][co] so the innermost loop runs over
  // contiguous output channels.
  std::vector<double> wp(k * k * ic * oc);
  for (std::size_t co = 0; co < oc; ++co)
    for (std::size_t ci = 0; ci < ic; ++ci)
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx)
          wp[((ky * k + kx) * ic + ci) * oc + co] = weight[((co * ic + ci) * k + ky) * k + kx];

  Tensor out = Tensor::hwc(oh, ow, oc);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t soy = 0; soy < static_cast<std::ptrdiff_t>(oh); ++soy) {
    const auto oy = static_cast<std::size_t>(soy);
    for (std::size_t ox = 0; ox < ow; ++ox) {
      double* dst = &out.at(oy, ox, 0);
      for (std::size_t co = 0; co < oc; ++co) dst[co] = bias[co];
      for (std::size_t ky = 0; ky < k; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                        static_cast<std::ptrdiff_t>(g.pad);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                          static_cast<std::ptrdiff_t>(g.pad);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
          const double* src =
              &input.at(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), 0);
          const double* wk = &wp[(ky * k + kx) * ic * oc];
          for (std::size_t ci = 0; ci < ic; ++ci) {
            const double v = src[ci];
            const double* wr = wk + ci * oc;
            for (std::size_t co = 0; co < oc; ++co) dst[co] += v * wr[co];
          }
        }
      }
    }
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out,
                          const ConvGeometry& g) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), k = g.kernel;
  const std::size_t ic = g.in_c, oc = g.out_c;
  ConvGrads grads{Tensor(input.shape()), Tensor(weight.shape()), Tensor({oc})};

  // Weight and bias gradients: one output channel per task.
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t sco = 0; sco < static_cast<std::ptrdiff_t>(oc); ++sco) {
    const auto co = static_cast<std::size_t>(sco);
    double bsum = 0.0;
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) bsum += grad_out.at(oy, ox, co);
    grads.bias[co] = bsum;
    for (std::size_t ci = 0; ci < ic; ++ci) {
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          double acc = 0.0;
          for (std::size_t oy = 0; oy < oh; ++oy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                            static_cast<std::ptrdiff_t>(g.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
            for (std::size_t ox = 0; ox < ow; ++ox) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                              static_cast<std::ptrdiff_t>(g.pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
              acc += grad_out.at(oy, ox, co) *
                     input.at(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), ci);
            }
          }
          grads.weight[((co * ic + ci) * k + ky) * k + kx] = acc;
        }
      }
    }
  }

  // Input gradient as a gather over the output positions that read each pixel.
  const auto stride = static_cast<std::ptrdiff_t>(g.stride);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t iy = 0; iy < static_cast<std::ptrdiff_t>(g.in_h); ++iy) {
    for (std::size_t ix = 0; ix < g.in_w; ++ix) {
      double* dst = &grads.input.at(static_cast<std::size_t>(iy), ix, 0);
      for (std::size_t ky = 0; ky < k; ++ky) {
        const std::ptrdiff_t ny = iy + static_cast<std::ptrdiff_t>(g.pad) -
                                  static_cast<std::ptrdiff_t>(ky);
        if (ny < 0 || ny % stride) continue;
        const std::ptrdiff_t oy = ny / stride;
        if (oy >= static_cast<std::ptrdiff_t>(oh)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::ptrdiff_t nx = static_cast<std::ptrdiff_t>(ix + g.pad) -
                                    static_cast<std::ptrdiff_t>(kx);
          if (nx < 0 || nx % stride) continue;
          const std::ptrdiff_t ox = nx / stride;
          if (ox >= static_cast<std::ptrdiff_t>(ow)) continue;
          const double* go =
              &grad_out.at(static_cast<std::size_t>(oy), static_cast<std::size_t>(ox), 0);
          for (std::size_t co = 0; co < oc; ++co) {
            const double gv = go[co];
            for (std::size_t ci = 0; ci < ic; ++ci)
              dst[ci] += gv * weight[((co * ic + ci) * k + ky) * k + kx];
          }
        }
      }
    }
  }
  return grads;
}

Tensor cosine_matrix(const Tensor& a, const Tensor& b) {
  check_rows(a, b, "cosine_matrix");
  const Tensor an = normalized_rows(a);
  const Tensor bn = normalized_rows(b);
  Tensor out({a.dim(0), b.dim(0)});
  Map(out.raw(), a.dim(0), b.dim(0)).noalias() =
      ConstMap(an.raw(), a.dim(0), a.dim(1)) * ConstMap(bn.raw(), b.dim(0), b.dim(1)).transpose();
  // Round-off can push self-similarity a hair past 1.
  for (double& v : out.storage()) v = std::clamp(v, -1.0, 1.0);
  return out;
}

Tensor softmax_aggregate(const Tensor& m, double alpha, const Tensor& values, Tensor* weights) {
  if (m.rank() != 2 || values.rank() != 2 || m.dim(1) != values.dim(0)) {
    throw ConfigError("softmax_aggregate: " + shape_string(m.shape()) + " against values " +
                      shape_string(values.shape()));
  }
  const std::size_t rows = m.dim(0), cols = m.dim(1);
  Tensor p({rows, cols});
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t si = 0; si < static_cast<std::ptrdiff_t>(rows); ++si) {
    const double* src = m.raw() + si * cols;
    double* dst = p.raw() + si * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, alpha * src[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      dst[j] = std::exp(alpha * src[j] - mx);
      z += dst[j];
    }
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < cols; ++j) dst[j] *= inv;
  }
  Tensor out({rows, values.dim(1)});
  Map(out.raw(), rows, values.dim(1)).noalias() =
      ConstMap(p.raw(), rows, cols) * ConstMap(values.raw(), cols, values.dim(1));
  if (weights) *weights = std::move(p);
  return out;
}

Tensor gram(const Tensor& act) {
  if (act.rank() != 2) throw ConfigError("gram: expects an N x C matrix");
  const std::size_t n = act.dim(0), c = act.dim(1);
  Tensor g({c, c});
  const ConstMap x(act.raw(), n, c);
  Map(g.raw(), c, c).noalias() = x.transpose() * x;
  return g;
}

Tensor resize_bilinear(const Tensor& input, std::size_t out_h, std::size_t out_w) {
  const auto ty = bilinear_taps(input.height(), out_h);
  const auto tx = bilinear_taps(input.width(), out_w);
  const std::size_t c = input.channels();
  Tensor out = Tensor::hwc(out_h, out_w, c);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t sy = 0; sy < static_cast<std::ptrdiff_t>(out_h); ++sy) {
    const Tap& a = ty[static_cast<std::size_t>(sy)];
    for (std::size_t x = 0; x < out_w; ++x) {
      const Tap& b = tx[x];
      const double w00 = (1 - a.w1) * (1 - b.w1), w01 = (1 - a.w1) * b.w1;
      const double w10 = a.w1 * (1 - b.w1), w11 = a.w1 * b.w1;
      const double* p00 = &input.at(a.i0, b.i0, 0);
      const double* p01 = &input.at(a.i0, b.i1, 0);
      const double* p10 = &input.at(a.i1, b.i0, 0);
      const double* p11 = &input.at(a.i1, b.i1, 0);
      double* dst = &out.at(static_cast<std::size_t>(sy), x, 0);
      for (std::size_t ch = 0; ch < c; ++ch)
        dst[ch] = w00 * p00[ch] + w01 * p01[ch] + w10 * p10[ch] + w11 * p11[ch];
    }
  }
  return out;
}

Tensor resize_bilinear_backward(const Tensor& grad_out, std::size_t in_h, std::size_t in_w) {
  const auto ty = bilinear_taps(in_h, grad_out.height());
  const auto tx = bilinear_taps(in_w, grad_out.width());
  const std::size_t c = grad_out.channels(), out_w = grad_out.width();
  // Horizontal pass: out rows -> rows of width in_w, parallel over rows.
  Tensor rows = Tensor::hwc(grad_out.height(), in_w, c);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t sy = 0; sy < static_cast<std::ptrdiff_t>(grad_out.height()); ++sy) {
    const auto y = static_cast<std::size_t>(sy);
    for (std::size_t x = 0; x < out_w; ++x) {
      const Tap& b = tx[x];
      const double* go = &grad_out.at(y, x, 0);
      double* d0 = &rows.at(y, b.i0, 0);
      double* d1 = &rows.at(y, b.i1, 0);
      for (std::size_t ch = 0; ch < c; ++ch) {
        d0[ch] += (1 - b.w1) * go[ch];
        d1[ch] += b.w1 * go[ch];
      }
    }
  }
  // Vertical pass, serial over output rows (cheap: one axpy per row).
  Tensor gin = Tensor::hwc(in_h, in_w, c);
  const std::size_t row_len = in_w * c;
  for (std::size_t y = 0; y < grad_out.height(); ++y) {
    const Tap& a = ty[y];
    const double* src = &rows.at(y, 0, 0);
    double* d0 = &gin.at(a.i0, 0, 0);
    double* d1 = &gin.at(a.i1, 0, 0);
    for (std::size_t i = 0; i < row_len; ++i) {
      d0[i] += (1 - a.w1) * src[i];
      d1[i] += a.w1 * src[i];
    }
  }
  return gin;
}

}  // namespace parallel

}  // namespace xft::kernels
