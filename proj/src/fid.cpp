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

#include "xft/fid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "xft/error.hpp"
#include "xft/rng.hpp"

namespace xft::fid {

GaussianStats gaussian_stats(std::span<const Eigen::VectorXd> embeddings) {
  if (embeddings.size() < 2) {
    throw ConfigError("gaussian_stats: at least 2 samples are required, got " +
                      std::to_string(embeddings.size()));
  }
  const Eigen::Index d = embeddings.front().size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(embeddings.size()), d);
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].size() != d) throw ConfigError("gaussian_stats: embedding dimension mismatch");
    x.row(static_cast<Eigen::Index>(i)) = embeddings[i].transpose();
  }
  GaussianStats s;
  s.count = embeddings.size();
  s.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centred = x.rowwise() - s.mean.transpose();
  s.covariance = centred.transpose() * centred / static_cast<double>(s.count - 1);
  s.covariance = 0.5 * (s.covariance + s.covariance.transpose()).eval();
  return s;
}

namespace {

struct SymmetricRoot {
  Eigen::MatrixXd root;
  Eigen::VectorXd eigenvalues;  // of the root, clamped at 0
};

SymmetricRoot symmetric_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return {es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose(), ev};
}

struct TraceRoot {
  double trace = 0.0;
  double residual = 0.0;
  bool ok = false;
};

// Tr((Sa Sb)^(1/2)) through the similar symmetric matrix Sa^(1/2) Sb Sa^(1/2);
// the root of the product is S = Sa^(1/2) M^(1/2) Sa^(-1/2), whose residual
// is checked explicitly.
TraceRoot trace_sqrt_product(const Eigen::MatrixXd& sa, const Eigen::MatrixXd& sb) {
  TraceRoot out;
  const SymmetricRoot ra = symmetric_sqrt(sa);
  const Eigen::MatrixXd m = ra.root * sb * ra.root;
  const SymmetricRoot rm = symmetric_sqrt(m);
  out.trace = rm.eigenvalues.sum();

  const Eigen::MatrixXd product = sa * sb;
  const double scale = product.norm();
  if (ra.eigenvalues.minCoeff() <= 0.0) {
    out.residual = std::numeric_limits<double>::infinity();
    return out;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (sa + sa.transpose()));
  const Eigen::MatrixXd inv_root =
      es.eigenvectors() * ra.eigenvalues.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  const Eigen::MatrixXd s = ra.root * rm.root * inv_root;
  const double err = (s * s - product).norm();
  out.residual = scale > 0 ? err / scale : err;
  out.ok = std::isfinite(out.trace) && std::isfinite(out.residual) &&
           out.residual <= kSqrtResidualTolerance;
  return out;
}

}  // namespace

FrechetResult frechet(const GaussianStats& a, const GaussianStats& b) {
  if (a.dim() != b.dim() || a.covariance.rows() != b.covariance.rows()) {
    throw ConfigError("frechet_distance: dimension mismatch " + std::to_string(a.dim()) + " vs " +
                      std::to_string(b.dim()));
  }
  const double mean_term = (a.mean - b.mean).squaredNorm();
  double traces = a.covariance.trace() + b.covariance.trace();

  FrechetResult r;
  TraceRoot t = trace_sqrt_product(a.covariance, b.covariance);
  if (!t.ok) {
    // Offset both covariances and keep the trace terms consistent with them.
    const Eigen::MatrixXd offset =
        kCovarianceOffset * Eigen::MatrixXd::Identity(a.covariance.rows(), a.covariance.cols());
    t = trace_sqrt_product(a.covariance + offset, b.covariance + offset);
    traces += 2.0 * offset.trace();
    r.regularized = true;
    if (!t.ok) {
      throw NumericError("frechet_distance: matrix square root residual " +
                         std::to_string(t.residual) + " exceeds " +
                         std::to_string(kSqrtResidualTolerance));
    }
  }
  r.sqrt_residual = t.residual;
  const double d = mean_term + traces - 2.0 * t.trace;
  if (!std::isfinite(d)) throw NumericError("frechet_distance: non-finite result");
  r.distance = std::max(d, 0.0);
  return r;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  return frechet(a, b).distance;
}

std::string to_string(EmbeddingKind kind) {
  return kind == EmbeddingKind::kToy ? "toy-deterministic" : "external-pretrained";
}

EmbeddingKind embedding_kind_from_string(const std::string& s) {
  if (s == "toy-deterministic" || s == "toy") return EmbeddingKind::kToy;
  if (s == "external-pretrained" || s == "external") return EmbeddingKind::kExternal;
  throw ConfigError("unknown embedding kind '" + s + "'");
}

Embedding::Embedding(std::size_t input_size, std::size_t patch, Eigen::MatrixXd projection,
                     Eigen::VectorXd bias)
    : input_size_(input_size), patch_(patch), projection_(std::move(projection)),
      bias_(std::move(bias)) {
  if (patch_ == 0 || patch_ > input_size_) throw ConfigError("embedding: patch must fit the input");
  if (projection_.rows() < 2) throw ConfigError("embedding: output_dim must be >= 2");
  if (projection_.cols() != static_cast<Eigen::Index>(patch_ * patch_ * 3) ||
      bias_.size() != projection_.rows()) {
    throw ConfigError("embedding: projection shape does not match patch size");
  }
}

Embedding Embedding::toy(const EmbeddingSpec& spec) {
  if (spec.output_dim < 2) throw ConfigError("embed.output_dim must be >= 2");
  if (spec.pooling != "spatial-mean") throw ConfigError("embed.pooling must be spatial-mean");
  const std::size_t in = spec.patch * spec.patch * 3;
  Rng rng(derive_seed({spec.seed, 0xE4BEDULL}));
  std::normal_distribution<double> n(0.0, 1.0);
  const double wscale = 2.0 / std::sqrt(static_cast<double>(in));
  Eigen::MatrixXd w(static_cast<Eigen::Index>(spec.output_dim), static_cast<Eigen::Index>(in));
  for (Eigen::Index r = 0; r < w.rows(); ++r)
    for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = wscale * n(rng);
  Eigen::VectorXd b(static_cast<Eigen::Index>(spec.output_dim));
  for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = 0.1 * n(rng);
  return Embedding(spec.input_size, spec.patch, std::move(w), std::move(b));
}

Embedding Embedding::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embedding weights " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("embedding weights " + path.string() + ": " + e.what());
  }
  try {
    if (j.at("format") != "xft-embedding/1") {
      throw ConfigError("embedding weights: unsupported format " + j.at("format").dump());
    }
    const std::size_t input = j.at("input_size");
    const std::size_t patch = j.at("patch");
    const auto rows = j.at("projection").get<std::vector<std::vector<double>>>();
    const auto bias = j.at("bias").get<std::vector<double>>();
    if (rows.empty()) throw ConfigError("embedding weights: empty projection");
    Eigen::MatrixXd w(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != rows.front().size())
        throw ConfigError("embedding weights: ragged projection");
      for (std::size_t c = 0; c < rows[r].size(); ++c)
        w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
    Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(bias.data(),
                                                          static_cast<Eigen::Index>(bias.size()));
    return Embedding(input, patch, std::move(w), std::move(b));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("embedding weights " + path.string() + ": " + e.what());
  }
}

void Embedding::save(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["format"] = "xft-embedding/1";
  j["input_size"] = input_size_;
  j["patch"] = patch_;
  j["projection"] = nlohmann::json::array();
  for (Eigen::Index r = 0; r < projection_.rows(); ++r) {
    std::vector<double> row(projection_.cols());
    for (Eigen::Index c = 0; c < projection_.cols(); ++c) row[static_cast<std::size_t>(c)] = projection_(r, c);
    j["projection"].push_back(row);
  }
  j["bias"] = std::vector<double>(bias_.data(), bias_.data() + bias_.size());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump() << '\n';
}

Eigen::VectorXd Embedding::embed(const ImageTensor& image) const {
  image::check_rgb(image, "embed");
  const ImageTensor small = image::resize(image, input_size_, input_size_);
  const std::size_t n = input_size_ - patch_ + 1;
  const auto cols = static_cast<Eigen::Index>(patch_ * patch_ * 3);
  Eigen::MatrixXd patches(cols, static_cast<Eigen::Index>(n * n));
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      Eigen::Index k = 0;
      const auto col = static_cast<Eigen::Index>(y * n + x);
      for (std::size_t dy = 0; dy < patch_; ++dy)
        for (std::size_t dx = 0; dx < patch_; ++dx)
          for (std::size_t c = 0; c < 3; ++c) patches(k++, col) = small.at(y + dy, x + dx, c) - 0.5;
    }
  Eigen::MatrixXd act = (projection_ * patches).colwise() + bias_;
  act = act.array().tanh();
  return act.rowwise().mean();
}

Embedding make_embedding(const EmbeddingSpec& spec) {
  if (spec.kind == EmbeddingKind::kToy) return Embedding::toy(spec);
  if (spec.weights.empty()) throw ConfigError("embed.weights is required for external embeddings");
  Embedding e = Embedding::load(spec.weights);
  if (e.dim() != spec.output_dim) {
    throw ConfigError("embed.output_dim " + std::to_string(spec.output_dim) +
                      " does not match the weights (" + std::to_string(e.dim()) + ")");
  }
  return e;
}

std::vector<ImageTensor> crops(const ImageTensor& image, const CropPolicy& policy) {
  image::check_rgb(image, "crops");
  if (policy.grid == 0 || !(policy.fraction > 0 && policy.fraction <= 1)) {
    throw ConfigError("crop policy: grid must be >= 1 and fraction in (0, 1]");
  }
  const std::size_t h = image.height(), w = image.width();
  const auto ch = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(policy.fraction * static_cast<double>(h))));
  const auto cw = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(policy.fraction * static_cast<double>(w))));
  std::vector<ImageTensor> out;
  out.reserve(policy.grid * policy.grid);
  for (std::size_t gy = 0; gy < policy.grid; ++gy)
    for (std::size_t gx = 0; gx < policy.grid; ++gx) {
      // Offsets spread evenly from the top-left to the bottom-right corner.
      const std::size_t oy = policy.grid == 1 ? (h - ch) / 2 : gy * (h - ch) / (policy.grid - 1);
      const std::size_t ox = policy.grid == 1 ? (w - cw) / 2 : gx * (w - cw) / (policy.grid - 1);
      ImageTensor c = Tensor::hwc(ch, cw, 3);
      for (std::size_t y = 0; y < ch; ++y)
        std::memcpy(&c.at(y, 0, 0), &image.at(oy + y, ox, 0), cw * 3 * sizeof(double));
      out.push_back(std::move(c));
    }
  return out;
}

std::vector<ImageTensor> expand(std::span<const ImageTensor> images, const CropPolicy& policy) {
  if (images.size() >= policy.expand_below) return {images.begin(), images.end()};
  std::vector<ImageTensor> out;
  for (const ImageTensor& img : images) {
    auto cs = crops(img, policy);
    std::move(cs.begin(), cs.end(), std::back_inserter(out));
  }
  return out;
}

std::vector<Eigen::VectorXd> embed_all(std::span<const ImageTensor> images,
                                       const Embedding& embedding, const CropPolicy& policy) {
  const auto set = expand(images, policy);
  std::vector<Eigen::VectorXd> out(set.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(set.size()); ++i) {
    out[static_cast<std::size_t>(i)] = embedding.embed(set[static_cast<std::size_t>(i)]);
  }
  return out;
}

GaussianStats image_stats(std::span<const ImageTensor> images, const Embedding& embedding,
                          const CropPolicy& policy) {
  const auto e = embed_all(images, embedding, policy);
  return gaussian_stats(e);
}

double fid_score(std::span<const ImageTensor> images, const GaussianStats& reference,
                 const Embedding& embedding, const CropPolicy& policy) {
  if (images.empty()) throw ConfigError("fid_score: no images");
  const auto e = embed_all(images, embedding, policy);
  if (e.size() < 2) {
    throw NumericError("fid_score: a single embedding has no covariance; enable crop expansion "
                       "or add more patches");
  }
  const GaussianStats s = gaussian_stats(e);
  if (s.covariance.trace() < 1e-12) {
    throw NumericError("fid_score: degenerate covariance after expansion; use more or larger "
                       "patches (crop grid/fraction)");
  }
  return frechet_distance(s, reference);
}

namespace {

static_assert(std::endian::native == std::endian::little, "stats files are little endian");

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw IoError("truncated stats file " + path.string());
  }
  return v;
}

}  // namespace

void save_stats(const std::filesystem::path& path, const GaussianStats& stats,
                const std::map<std::string, std::string>& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const auto d = static_cast<std::uint64_t>(stats.dim());
  put(out, d);
  put(out, static_cast<std::uint64_t>(stats.count));
  for (Eigen::Index i = 0; i < stats.mean.size(); ++i) put(out, stats.mean(i));
  for (Eigen::Index r = 0; r < stats.covariance.rows(); ++r)
    for (Eigen::Index c = 0; c < stats.covariance.cols(); ++c) put(out, stats.covariance(r, c));
  if (!out) throw IoError("failed writing " + path.string());

  std::filesystem::path side = path;
  side += ".txt";
  std::ofstream meta(side);
  if (!meta) throw IoError("cannot write " + side.string());
  meta << "format: xft-gaussian-stats/1 (uint64 dim, uint64 count, float64 mean, float64 "
          "row-major covariance)\n"
       << "dim: " << d << "\n"
       << "count: " << stats.count << "\n";
  for (const auto& [k, v] : manifest) meta << k << ": " << v << "\n";
}

GaussianStats load_stats(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open stats file " + path.string());
  const auto d = get<std::uint64_t>(in, path);
  const auto n = get<std::uint64_t>(in, path);
  if (d == 0 || d > 1u << 16) throw IoError("stats file " + path.string() + ": bad dimension");
  GaussianStats s;
  s.count = n;
  s.mean.resize(static_cast<Eigen::Index>(d));
  s.covariance.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < s.mean.size(); ++i) s.mean(i) = get<double>(in, path);
  for (Eigen::Index r = 0; r < s.covariance.rows(); ++r)
    for (Eigen::Index c = 0; c < s.covariance.cols(); ++c) s.covariance(r, c) = get<double>(in, path);
  if (n < 2) throw ConfigError("stats file " + path.string() + ": sample count below 2");
  return s;
}

}  // namespace xft::fid
