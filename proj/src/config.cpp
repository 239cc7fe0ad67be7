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

#include "xft/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "xft/error.hpp"

namespace xft::config {

std::vector<mgi::HypothesisConfig> MgiSettings::grid() const {
  return mgi::make_grid(composing_layers, latent_counts);
}

std::filesystem::path default_output_root() {
  const char* env = std::getenv("XFT_OUTPUT_ROOT");
  return (env && *env) ? std::filesystem::path(env) : std::filesystem::path("runs");
}

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

// Walks one mapping, recording type errors and unknown keys.
class Reader {
 public:
  Reader(const YAML::Node& node, std::string path, std::vector<std::string>& errors)
      : node_(node), path_(std::move(path)), errors_(errors) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) {
      errors_.push_back((path_.empty() ? "config" : path_) + ": expected a mapping");
      valid_ = false;
    }
  }

  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  // Reports keys that were never asked for.
  ~Reader() {
    if (!valid_ || !node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const std::string key = kv.first.as<std::string>();
      if (!seen_.count(key)) errors_.push_back(join(path_, key) + ": unknown key");
    }
  }

  Reader child(const std::string& key) {
    seen_.insert(key);
    return Reader(lookup(key), join(path_, key), errors_);
  }

  void ignore(const std::string& key) { seen_.insert(key); }

  bool has(const std::string& key) {
    const YAML::Node n = lookup(key);
    return n && !n.IsNull();
  }

  void read(const std::string& key, std::string& out) {
    const YAML::Node n = take(key);
    if (!n) return;
    if (!n.IsScalar()) return fail(key, "expected a string");
    out = n.Scalar();
  }

  void read(const std::string& key, double& out) {
    const YAML::Node n = take(key);
    if (!n) return;
    try {
      out = n.as<double>();
    } catch (const YAML::Exception&) {
      fail(key, "expected a number, got " + render(n));
    }
  }

  template <class U>
    requires std::is_unsigned_v<U>
  void read(const std::string& key, U& out) {
    const YAML::Node n = take(key);
    if (!n) return;
    std::uint64_t v = 0;
    if (!parse_uint(n, v)) return fail(key, "expected a non-negative integer, got " + render(n));
    out = static_cast<U>(v);
  }

  void read(const std::string& key, std::vector<std::size_t>& out) {
    const YAML::Node n = take(key);
    if (!n) return;
    if (!n.IsSequence()) return fail(key, "expected a list of non-negative integers");
    std::vector<std::size_t> v;
    for (const auto& item : n) {
      std::uint64_t x = 0;
      if (!parse_uint(item, x)) return fail(key, "expected a list of non-negative integers");
      v.push_back(static_cast<std::size_t>(x));
    }
    out = std::move(v);
  }

  void fail(const std::string& key, const std::string& what) {
    errors_.push_back(join(path_, key) + ": " + what);
  }

 private:
  YAML::Node lookup(const std::string& key) const {
    if (!valid_ || !node_ || !node_.IsMap()) return YAML::Node();
    return node_[key];
  }

  YAML::Node take(const std::string& key) {
    seen_.insert(key);
    YAML::Node n = lookup(key);
    if (!n || n.IsNull()) return YAML::Node(YAML::NodeType::Undefined);
    return n;
  }

  static std::string render(const YAML::Node& n) {
    if (n.IsScalar()) return "'" + n.Scalar() + "'";
    return n.IsSequence() ? "a list" : "a mapping";
  }

  static bool parse_uint(const YAML::Node& n, std::uint64_t& v) {
    if (!n.IsScalar()) return false;
    const std::string& s = n.Scalar();
    const char* end = s.data() + s.size();
    const auto r = std::from_chars(s.data(), end, v);
    return r.ec == std::errc() && r.ptr == end;
  }

  YAML::Node node_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
  bool valid_ = true;
};

// Enum-like fields parsed through the module helpers.
template <class F>
void parse_enum(Reader& r, const std::string& key, const std::string& value, F&& apply) {
  try {
    apply(value);
  } catch (const ConfigError& e) {
    r.fail(key, e.what());
  }
}

void read_backbone(Reader r, encoder::BackboneSpec& b) {
  std::string kind = encoder::to_string(b.kind);
  r.read("kind", kind);
  parse_enum(r, "kind", kind, [&](const std::string& s) { b.kind = encoder::backbone_kind_from_string(s); });
  r.read("levels", b.levels);
  r.read("seed", b.seed);
  r.read("widths", b.widths);
  r.read("activation", b.activation);
  r.read("weights", b.weights);
}

void read_generator(Reader r, mgi::GeneratorSpec& g, bool& output_size_set) {
  std::string kind = mgi::to_string(g.kind);
  r.read("kind", kind);
  parse_enum(r, "kind", kind, [&](const std::string& s) { g.kind = mgi::generator_kind_from_string(s); });
  r.read("latent_dim", g.latent_dim);
  r.read("layer_count", g.layer_count);
  output_size_set = r.has("output_size");
  r.read("output_size", g.output_size);
  r.read("weights", g.weights);
  r.read("seed", g.seed);
}

void read_cft(Reader r, cft::CftConfig& c) {
  r.read("iterations", c.iterations);
  r.read("learning_rate", c.optimizer.learning_rate);
  r.read("beta1", c.optimizer.beta1);
  r.read("beta2", c.optimizer.beta2);
  r.read("epsilon", c.optimizer.epsilon);
  r.read("alpha", c.alpha);
  r.read("lambda_perc", c.weights.lambda_perc);
  r.read("lambda_context", c.weights.lambda_context);
  r.read("tau", c.weights.tau);
  r.read("bandwidth", c.weights.bandwidth);
  std::string negatives = losses::to_string(c.weights.negatives);
  r.read("negatives", negatives);
  parse_enum(r, "negatives", negatives,
             [&](const std::string& s) { c.weights.negatives = losses::negative_policy_from_string(s); });
  r.read("augmented_weight", c.augmented_weight);
  r.read("original_weight", c.original_weight);
  r.read("checkpoint_every", c.checkpoint_every);
  r.read("divergence_limit", c.divergence_limit);
  Reader a = r.child("augmentation");
  a.read("jitter_strength", c.augmentation.jitter_strength);
  a.read("noise_sigma", c.augmentation.noise_sigma);
  a.read("scale_lo", c.augmentation.scale_lo);
  a.read("scale_hi", c.augmentation.scale_hi);
  a.read("affine_jitter", c.augmentation.affine_jitter);
}

void read_mgi(Reader r, MgiSettings& m) {
  r.read("composing_layers", m.composing_layers);
  r.read("latent_counts", m.latent_counts);
  r.read("steps", m.inversion.steps);
  r.read("learning_rate", m.inversion.learning_rate);
  r.read("l2_weight", m.inversion.l2_weight);
  r.read("perceptual_weight", m.inversion.perceptual_weight);
  r.read("max_parallel", m.inversion.max_parallel);
}

void read_fid(Reader r, FidSettings& f) {
  r.read("reference", f.reference);
  Reader e = r.child("embedding");
  std::string kind = fid::to_string(f.embedding.kind);
  e.read("kind", kind);
  parse_enum(e, "kind", kind, [&](const std::string& s) { f.embedding.kind = fid::embedding_kind_from_string(s); });
  e.read("output_dim", f.embedding.output_dim);
  e.read("pooling", f.embedding.pooling);
  e.read("seed", f.embedding.seed);
  e.read("input_size", f.embedding.input_size);
  e.read("patch", f.embedding.patch);
  e.read("weights", f.embedding.weights);
  Reader c = r.child("crops");
  c.read("grid", f.crops.grid);
  c.read("fraction", f.crops.fraction);
  c.read("expand_below", f.crops.expand_below);
}

// Fields copied from the top level into the stage configs.
void propagate(RunConfig& c) {
  c.backbone.input_size = c.working_resolution;
  c.cft.working_resolution = c.working_resolution;
  c.cft.seed = c.seed;
  c.cft.augmentation.seed = c.seed;
  c.mgi.inversion.seed = c.seed;
  c.mgi.inversion.upsampling_factor = c.upsampling_factor;
}

struct Checker {
  std::vector<std::string>& errors;

  void require(bool ok, const std::string& path, const std::string& what) {
    if (!ok) errors.push_back(path + ": " + what);
  }
  void positive(double v, const std::string& path) {
    require(std::isfinite(v) && v > 0, path, "must be a finite positive number");
  }
  void non_negative(double v, const std::string& path) {
    require(std::isfinite(v) && v >= 0, path, "must be a finite non-negative number");
  }
};

void check(const RunConfig& c, bool require_images, std::vector<std::string>& errors) {
  Checker k{errors};
  if (require_images) {
    k.require(!c.source.empty(), "source", "required (path to the source image)");
    k.require(!c.target.empty(), "target", "required (path to the target image)");
  }
  k.require(c.working_resolution >= 8, "working_resolution", "must be >= 8");
  k.require(c.upsampling_factor >= 1, "upsampling_factor", "must be >= 1");

  const auto& b = c.backbone;
  k.require(!b.widths.empty(), "backbone.widths", "must list at least one stage width");
  for (std::size_t w : b.widths) k.require(w > 0, "backbone.widths", "widths must be positive");
  k.require(!b.levels.empty(), "backbone.levels", "must list at least one tap level");
  for (std::size_t i = 0; i < b.levels.size(); ++i) {
    k.require(b.levels[i] >= 1 && b.levels[i] <= b.widths.size(), "backbone.levels",
              "level " + std::to_string(b.levels[i]) + " outside 1.." + std::to_string(b.widths.size()));
    if (i > 0) k.require(b.levels[i] > b.levels[i - 1], "backbone.levels", "must be strictly increasing");
  }
  try {
    (void)ad::activation_from_string(b.activation);
  } catch (const ConfigError& e) {
    k.require(false, "backbone.activation", e.what());
  }
  if (b.kind == encoder::BackboneKind::kExternal)
    k.require(!b.weights.empty(), "backbone.weights", "required for external backbones");

  const auto& g = c.generator;
  k.require(g.latent_dim >= 1, "generator.latent_dim", "must be >= 1");
  k.require(g.layer_count >= 2, "generator.layer_count", "must be >= 2");
  k.require(g.output_size == c.final_resolution(), "generator.output_size",
            "must equal working_resolution x upsampling_factor (" +
                std::to_string(c.final_resolution()) + ")");
  if (g.kind == mgi::GeneratorKind::kExternal)
    k.require(!g.weights.empty(), "generator.weights", "required for external generators");

  const auto& f = c.cft;
  k.require(f.iterations >= 1, "cft.iterations", "must be >= 1");
  k.positive(f.optimizer.learning_rate, "cft.learning_rate");
  k.require(f.optimizer.beta1 >= 0 && f.optimizer.beta1 < 1, "cft.beta1", "must be in [0, 1)");
  k.require(f.optimizer.beta2 >= 0 && f.optimizer.beta2 < 1, "cft.beta2", "must be in [0, 1)");
  k.positive(f.optimizer.epsilon, "cft.epsilon");
  k.positive(f.alpha, "cft.alpha");
  k.non_negative(f.weights.lambda_perc, "cft.lambda_perc");
  k.non_negative(f.weights.lambda_context, "cft.lambda_context");
  k.positive(f.weights.tau, "cft.tau");
  k.positive(f.weights.bandwidth, "cft.bandwidth");
  k.non_negative(f.augmented_weight, "cft.augmented_weight");
  k.non_negative(f.original_weight, "cft.original_weight");
  k.require(f.augmented_weight + f.original_weight > 0, "cft.original_weight",
            "augmented_weight and original_weight cannot both be 0");
  k.positive(f.divergence_limit, "cft.divergence_limit");
  const auto& a = f.augmentation;
  k.non_negative(a.jitter_strength, "cft.augmentation.jitter_strength");
  k.non_negative(a.noise_sigma, "cft.augmentation.noise_sigma");
  k.positive(a.scale_lo, "cft.augmentation.scale_lo");
  k.require(a.scale_hi >= a.scale_lo, "cft.augmentation.scale_hi", "must be >= scale_lo");
  k.non_negative(a.affine_jitter, "cft.augmentation.affine_jitter");

  const auto& m = c.mgi;
  k.require(!m.composing_layers.empty(), "mgi.composing_layers", "must not be empty");
  for (std::size_t l : m.composing_layers) {
    k.require(l >= 1 && l + 1 <= g.layer_count, "mgi.composing_layers",
              "layer " + std::to_string(l) + " outside 1.." + std::to_string(g.layer_count - 1));
  }
  k.require(!m.latent_counts.empty(), "mgi.latent_counts", "must not be empty");
  for (std::size_t n : m.latent_counts) k.require(n >= 1, "mgi.latent_counts", "counts must be >= 1");
  k.positive(m.inversion.learning_rate, "mgi.learning_rate");
  k.non_negative(m.inversion.l2_weight, "mgi.l2_weight");
  k.non_negative(m.inversion.perceptual_weight, "mgi.perceptual_weight");
  k.require(m.inversion.l2_weight + m.inversion.perceptual_weight > 0, "mgi.l2_weight",
            "l2_weight and perceptual_weight cannot both be 0");
  k.require(m.inversion.max_parallel >= 1, "mgi.max_parallel", "must be >= 1");

  const auto& e = c.fid.embedding;
  k.require(!c.fid.reference.empty(), "fid.reference", "must be 'pair-crops' or a stats file path");
  k.require(e.output_dim >= 2, "fid.embedding.output_dim", "must be >= 2");
  k.require(e.pooling == "spatial-mean", "fid.embedding.pooling", "only 'spatial-mean' is supported");
  k.require(e.patch >= 1 && e.patch <= e.input_size, "fid.embedding.patch",
            "must be between 1 and input_size");
  if (e.kind == fid::EmbeddingKind::kExternal)
    k.require(!e.weights.empty(), "fid.embedding.weights", "required for external embeddings");
  k.require(c.fid.crops.grid >= 1, "fid.crops.grid", "must be >= 1");
  k.require(c.fid.crops.fraction > 0 && c.fid.crops.fraction <= 1, "fid.crops.fraction",
            "must be in (0, 1]");

  // Module validators catch anything the field checks above do not cover.
  if (errors.empty()) {
    try {
      cft::validate(c.cft);
      mgi::validate(c.mgi.inversion);
    } catch (const ConfigError& err) {
      errors.push_back(err.what());
    }
  }
}

void set_path(YAML::Node node, const std::vector<std::string>& parts, std::size_t i,
              const YAML::Node& value) {
  if (i + 1 == parts.size()) {
    node[parts[i]] = value;
    return;
  }
  if (!node[parts[i]] || !node[parts[i]].IsMap()) node[parts[i]] = YAML::Node(YAML::NodeType::Map);
  set_path(node[parts[i]], parts, i + 1, value);
}

void apply_override(YAML::Node& root, const std::string& spec, std::vector<std::string>& errors) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    errors.push_back("--set " + spec + ": expected key.path=value");
    return;
  }
  std::vector<std::string> parts;
  std::stringstream ss(spec.substr(0, eq));
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  if (std::any_of(parts.begin(), parts.end(), [](const auto& p) { return p.empty(); })) {
    errors.push_back("--set " + spec + ": empty path component");
    return;
  }
  try {
    const std::string text = spec.substr(eq + 1);
    YAML::Node value = YAML::Load(text);
    if (!value || value.IsNull()) value = YAML::Node(text);
    if (!root.IsMap()) root = YAML::Node(YAML::NodeType::Map);
    set_path(root, parts, 0, value);
  } catch (const YAML::Exception& e) {
    errors.push_back("--set " + spec + ": " + e.what());
  }
}

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, r.ptr);
  // Keep floats recognisable as floats.
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

YAML::Node seq(const std::vector<std::size_t>& v) {
  YAML::Node n(YAML::NodeType::Sequence);
  for (std::size_t x : v) n.push_back(x);
  n.SetStyle(YAML::EmitterStyle::Flow);
  return n;
}

}  // namespace

ConfigResult validate_config(const std::string& text, const std::vector<std::string>& overrides,
                             bool require_images) {
  ConfigResult result;
  auto& errors = result.errors;
  RunConfig& c = result.config;

  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    errors.push_back("config: YAML syntax error at line " + std::to_string(e.mark.line + 1) + ": " +
                     e.msg);
    return result;
  }
  for (const auto& o : overrides) apply_override(root, o, errors);

  bool output_size_set = false;
  {
    Reader r(root, "", errors);
    std::string schema = kSchema;
    r.read("schema", schema);
    if (schema != kSchema) r.fail("schema", "unsupported schema '" + schema + "', expected " + kSchema);
    r.ignore("provenance");
    r.read("source", c.source);
    r.read("target", c.target);
    r.read("output_dir", c.output_dir);
    r.read("working_resolution", c.working_resolution);
    r.read("upsampling_factor", c.upsampling_factor);
    r.read("seed", c.seed);
    read_backbone(r.child("backbone"), c.backbone);
    read_generator(r.child("generator"), c.generator, output_size_set);
    read_cft(r.child("cft"), c.cft);
    read_mgi(r.child("mgi"), c.mgi);
    read_fid(r.child("fid"), c.fid);
  }

  // Defaults that depend on other fields.
  if (!output_size_set) c.generator.output_size = c.final_resolution();
  if (c.output_dir.empty()) c.output_dir = (default_output_root() / "xft-run").string();
  const bool toy = c.generator.kind == mgi::GeneratorKind::kToy;
  if (c.mgi.composing_layers.empty())
    c.mgi.composing_layers = toy ? std::vector<std::size_t>{1, 2} : std::vector<std::size_t>{4, 5, 6, 7, 8};
  if (c.mgi.latent_counts.empty())
    c.mgi.latent_counts = toy ? std::vector<std::size_t>{1, 2, 4} : std::vector<std::size_t>{10, 20, 30, 40};
  propagate(c);
  check(c, require_images, errors);
  return result;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides,
                      bool require_images) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ConfigResult r = validate_config(ss.str(), overrides, require_images);
  if (!r.ok()) {
    std::string msg = "invalid config " + path.string() + ":";
    for (const auto& e : r.errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return r.config;
}

std::string serialize(const RunConfig& c) {
  YAML::Node root;
  root["schema"] = kSchema;
  root["source"] = c.source;
  root["target"] = c.target;
  root["output_dir"] = c.output_dir;
  root["working_resolution"] = c.working_resolution;
  root["upsampling_factor"] = c.upsampling_factor;
  root["seed"] = c.seed;

  YAML::Node b;
  b["kind"] = encoder::to_string(c.backbone.kind);
  b["levels"] = seq(c.backbone.levels);
  b["seed"] = c.backbone.seed;
  b["widths"] = seq(c.backbone.widths);
  b["activation"] = c.backbone.activation;
  b["weights"] = c.backbone.weights;
  root["backbone"] = b;

  YAML::Node g;
  g["kind"] = mgi::to_string(c.generator.kind);
  g["latent_dim"] = c.generator.latent_dim;
  g["layer_count"] = c.generator.layer_count;
  g["output_size"] = c.generator.output_size;
  g["weights"] = c.generator.weights;
  g["seed"] = c.generator.seed;
  root["generator"] = g;

  const auto& f = c.cft;
  YAML::Node cf;
  cf["iterations"] = f.iterations;
  cf["learning_rate"] = num(f.optimizer.learning_rate);
  cf["beta1"] = num(f.optimizer.beta1);
  cf["beta2"] = num(f.optimizer.beta2);
  cf["epsilon"] = num(f.optimizer.epsilon);
  cf["alpha"] = num(f.alpha);
  cf["lambda_perc"] = num(f.weights.lambda_perc);
  cf["lambda_context"] = num(f.weights.lambda_context);
  cf["tau"] = num(f.weights.tau);
  cf["bandwidth"] = num(f.weights.bandwidth);
  cf["negatives"] = losses::to_string(f.weights.negatives);
  cf["augmented_weight"] = num(f.augmented_weight);
  cf["original_weight"] = num(f.original_weight);
  cf["checkpoint_every"] = f.checkpoint_every;
  cf["divergence_limit"] = num(f.divergence_limit);
  YAML::Node aug;
  aug["jitter_strength"] = num(f.augmentation.jitter_strength);
  aug["noise_sigma"] = num(f.augmentation.noise_sigma);
  aug["scale_lo"] = num(f.augmentation.scale_lo);
  aug["scale_hi"] = num(f.augmentation.scale_hi);
  aug["affine_jitter"] = num(f.augmentation.affine_jitter);
  cf["augmentation"] = aug;
  root["cft"] = cf;

  const auto& m = c.mgi;
  YAML::Node mg;
  mg["composing_layers"] = seq(m.composing_layers);
  mg["latent_counts"] = seq(m.latent_counts);
  mg["steps"] = m.inversion.steps;
  mg["learning_rate"] = num(m.inversion.learning_rate);
  mg["l2_weight"] = num(m.inversion.l2_weight);
  mg["perceptual_weight"] = num(m.inversion.perceptual_weight);
  mg["max_parallel"] = m.inversion.max_parallel;
  root["mgi"] = mg;

  YAML::Node fd;
  fd["reference"] = c.fid.reference;
  YAML::Node e;
  e["kind"] = fid::to_string(c.fid.embedding.kind);
  e["output_dim"] = c.fid.embedding.output_dim;
  e["pooling"] = c.fid.embedding.pooling;
  e["seed"] = c.fid.embedding.seed;
  e["input_size"] = c.fid.embedding.input_size;
  e["patch"] = c.fid.embedding.patch;
  e["weights"] = c.fid.embedding.weights;
  fd["embedding"] = e;
  YAML::Node cr;
  cr["grid"] = c.fid.crops.grid;
  cr["fraction"] = num(c.fid.crops.fraction);
  cr["expand_below"] = c.fid.crops.expand_below;
  fd["crops"] = cr;
  root["fid"] = fd;

  YAML::Emitter out;
  out << root;
  return std::string(out.c_str()) + "\n";
}

}  // namespace xft::config
