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

// Independent brute-force reference implementations. Everything here works
// on plain loops (and long double where cheap) so that it shares no code
// with the library kernels it checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "xft/tensor.hpp"

namespace xft::oracle {

using Vec = std::vector<double>;

inline Vec position(const Tensor& t, std::size_t p) {
  const std::size_t c = t.channels();
  return Vec(t.raw() + p * c, t.raw() + (p + 1) * c);
}

inline long double dot(const Vec& a, const Vec& b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long double>(a[i]) * b[i];
  return s;
}

inline double cosine(const Vec& a, const Vec& b) {
  const long double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
  if (na < 1e-12L || nb < 1e-12L) return 0.0;
  return static_cast<double>(dot(a, b) / (na * nb));
}

inline Tensor centralize(const Tensor& f) {
  Tensor out = f;
  const std::size_t n = f.positions(), c = f.channels();
  for (std::size_t k = 0; k < c; ++k) {
    long double mean = 0;
    for (std::size_t p = 0; p < n; ++p) mean += f[p * c + k];
    mean /= n;
    for (std::size_t p = 0; p < n; ++p) out[p * c + k] = static_cast<double>(f[p * c + k] - mean);
  }
  return out;
}

// Pairwise cosine between every position of a and every position of b.
inline Tensor correlation(const Tensor& a, const Tensor& b) {
  Tensor m({a.positions(), b.positions()});
  for (std::size_t u = 0; u < a.positions(); ++u)
    for (std::size_t v = 0; v < b.positions(); ++v)
      m.at(u, v) = cosine(position(a, u), position(b, v));
  return m;
}

// Per-pixel explicit softmax-weighted sum over all target pixels.
inline Tensor warp(const Tensor& target, const Tensor& m, double alpha, std::size_t out_h,
                   std::size_t out_w) {
  const std::size_t c = target.channels(), nv = target.positions();
  Tensor out({out_h, out_w, c});
  for (std::size_t u = 0; u < out_h * out_w; ++u) {
    long double z = 0;
    std::vector<long double> e(nv);
    for (std::size_t v = 0; v < nv; ++v) {
      e[v] = std::exp(static_cast<long double>(alpha) * m.at(u, v));
      z += e[v];
    }
    for (std::size_t k = 0; k < c; ++k) {
      long double s = 0;
      for (std::size_t v = 0; v < nv; ++v) s += e[v] / z * target[v * c + k];
      out[u * c + k] = static_cast<double>(s);
    }
  }
  return out;
}

inline double info_nce(const Vec& anchor, const Vec& positive, const std::vector<Vec>& negatives,
                       double tau) {
  const long double pos = std::exp(dot(anchor, positive) / tau);
  long double denom = pos;
  for (const Vec& n : negatives) denom += std::exp(dot(anchor, n) / tau);
  return static_cast<double>(-std::log(pos / denom));
}

// Sum over anchors of InfoNCE with every other position as a negative. The
// vectors are used as given (callers normalise if the library does).
inline double patch_info_nce(const Tensor& anchors, const Tensor& others, double tau) {
  double total = 0;
  const std::size_t n = anchors.positions();
  for (std::size_t u = 0; u < n; ++u) {
    std::vector<Vec> negs;
    for (std::size_t j = 0; j < n; ++j)
      if (j != u) negs.push_back(position(others, j));
    total += info_nce(position(anchors, u), position(others, u), negs, tau);
  }
  return total;
}

inline Tensor normalize_positions(const Tensor& f) {
  Tensor out = f;
  const std::size_t c = f.channels();
  for (std::size_t p = 0; p < f.positions(); ++p) {
    const Vec v = position(f, p);
    const long double n = std::sqrt(dot(v, v));
    if (n < 1e-12L) continue;
    for (std::size_t k = 0; k < c; ++k) out[p * c + k] = static_cast<double>(v[k] / n);
  }
  return out;
}

inline Tensor gram(const Tensor& act) {
  const std::size_t c = act.channels();
  Tensor g({c, c});
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      long double s = 0;
      for (std::size_t y = 0; y < act.height(); ++y)
        for (std::size_t x = 0; x < act.width(); ++x)
          s += static_cast<long double>(act.at(y, x, i)) * act.at(y, x, j);
      g.at(i, j) = static_cast<double>(s);
    }
  return g;
}

// Normalised Gram distance for one activation pair, matching the library's
// per-tap term: || G_a/(N C) - G_b/(N C) ||_F^2.
inline double gram_distance(const Tensor& a, const Tensor& b) {
  const Tensor ga = gram(a), gb = gram(b);
  const double norm = static_cast<double>(a.positions() * a.channels());
  long double s = 0;
  for (std::size_t i = 0; i < ga.size(); ++i) {
    const long double d = (ga[i] - gb[i]) / norm;
    s += d * d;
  }
  return static_cast<double>(s);
}

// Contextual loss computed step by step after Mechrez et al.:
//   centre both sets on the target mean, cosine distance d(u,l),
//   relative distance d / (min_l d + eps), similarity exp((1 - rel)/h),
//   row normalisation, max over l, sum over u, negative log.
inline double contextual(const Tensor& target, const Tensor& candidate, double h) {
  const double eps = 1e-5;
  const std::size_t n = target.positions(), m = candidate.positions(), c = target.channels();
  Vec mu(c, 0.0);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t k = 0; k < c; ++k) mu[k] += target[u * c + k] / static_cast<double>(n);
  auto centred = [&](const Tensor& t, std::size_t p) {
    Vec v = position(t, p);
    for (std::size_t k = 0; k < c; ++k) v[k] -= mu[k];
    return v;
  };
  long double total = 0;
  for (std::size_t u = 0; u < n; ++u) {
    const Vec a = centred(target, u);
    Vec d(m);
    for (std::size_t l = 0; l < m; ++l) d[l] = 1.0 - cosine(a, centred(candidate, l));
    const double dmin = *std::min_element(d.begin(), d.end());
    Vec w(m);
    long double z = 0;
    for (std::size_t l = 0; l < m; ++l) {
      w[l] = std::exp((1.0 - d[l] / (dmin + eps)) / h);
      z += w[l];
    }
    long double best = 0;
    for (std::size_t l = 0; l < m; ++l) best = std::max<long double>(best, w[l] / z);
    total += best;
  }
  return static_cast<double>(-std::log(total));
}

// Sliding-window zero-padded convolution, weight [co][ci][k][k].
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
                     std::size_t pad) {
  const std::size_t co = w.dim(0), ci = w.dim(1), k = w.dim(2);
  const std::size_t oh = (x.height() + 2 * pad - k) / stride + 1;
  const std::size_t ow = (x.width() + 2 * pad - k) / stride + 1;
  Tensor y({oh, ow, co});
  for (std::size_t oy = 0; oy < oh; ++oy)
    for (std::size_t ox = 0; ox < ow; ++ox)
      for (std::size_t o = 0; o < co; ++o) {
        long double s = b[o];
        for (std::size_t i = 0; i < ci; ++i)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long long iy = static_cast<long long>(oy * stride + ky) - static_cast<long long>(pad);
              const long long ix = static_cast<long long>(ox * stride + kx) - static_cast<long long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long long>(x.height()) ||
                  ix >= static_cast<long long>(x.width()))
                continue;
              s += static_cast<long double>(w[((o * ci + i) * k + ky) * k + kx]) *
                   x.at(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), i);
            }
        y.at(oy, ox, o) = static_cast<double>(s);
      }
  return y;
}

}  // namespace xft::oracle
