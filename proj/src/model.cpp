#include "csanet/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "binary_io.hpp"
#include "csanet/errors.hpp"

namespace csanet {

namespace {

void check_shape(const std::string& name, const Matrix& m, std::size_t rows,
                 std::size_t cols) {
  if (m.rows() != rows || m.cols() != cols) {
    throw InputError(name + " has shape " + std::to_string(m.rows()) + "x" +
                     std::to_string(m.cols()) + ", expected " + std::to_string(rows) +
                     "x" + std::to_string(cols));
  }
}

void check_size(const std::string& name, const Vector& v, std::size_t n) {
  if (v.size() != n) {
    throw InputError(name + " has length " + std::to_string(v.size()) + ", expected " +
                     std::to_string(n));
  }
}

void check_category(CategoryId c, std::size_t num_categories) {
  if (c.value >= num_categories) {
    throw InputError("category index " + std::to_string(c.value) + " out of range [0, " +
                     std::to_string(num_categories) + ")");
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (feature_dim < 1) throw InputError("feature_dim must be >= 1");
  if (num_subspaces < 1) throw InputError("num_subspaces must be >= 1");
  if (num_categories < 2) throw InputError("num_categories must be >= 2");
  if (attention_hidden < 1) throw InputError("attention_hidden must be >= 1");
  if (raw_dim < 1) throw InputError("raw_dim must be >= 1");
  if (projector == ProjectorMode::Identity && raw_dim != feature_dim) {
    throw InputError("identity projector requires raw_dim == feature_dim");
  }
  if (!(projector_init_scale >= 0.0) || !std::isfinite(projector_init_scale)) {
    throw InputError("projector_init_scale must be finite and >= 0");
  }
}

void ModelParams::validate() const {
  config.validate();
  const auto& c = config;
  check_shape("masks", masks, c.num_subspaces, c.feature_dim);
  check_shape("attn_w1", attn_w1, 2 * c.num_categories, c.attention_hidden);
  check_size("attn_b1", attn_b1, c.attention_hidden);
  check_shape("attn_w2", attn_w2, c.attention_hidden, c.num_subspaces);
  check_size("attn_b2", attn_b2, c.num_subspaces);
  if (c.projector == ProjectorMode::Learnable) {
    check_shape("backbone_proj", backbone_proj, c.raw_dim, c.feature_dim);
  } else if (!backbone_proj.empty()) {
    throw InputError("backbone_proj must be empty for the identity projector");
  }
  for (const auto& t : tensors(*this)) {
    for (double v : t.values) {
      if (!std::isfinite(v)) throw InputError(t.name + " contains a non-finite entry");
    }
  }
}

std::vector<TensorView> tensors(ModelParams& p) {
  std::vector<TensorView> out = {
      {"masks", p.masks.data()},     {"attn_w1", p.attn_w1.data()},
      {"attn_b1", p.attn_b1},        {"attn_w2", p.attn_w2.data()},
      {"attn_b2", p.attn_b2},
  };
  if (p.config.projector == ProjectorMode::Learnable) {
    out.push_back({"backbone_proj", p.backbone_proj.data()});
  }
  return out;
}

std::vector<ConstTensorView> tensors(const ModelParams& p) {
  std::vector<ConstTensorView> out;
  for (auto& t : tensors(const_cast<ModelParams&>(p))) out.push_back({t.name, t.values});
  return out;
}

ModelParams init_params(const ModelConfig& config) {
  config.validate();
  ModelParams p;
  p.config = config;
  const std::size_t d = config.feature_dim, k = config.num_subspaces;
  const std::size_t C = config.num_categories, h = config.attention_hidden;

  std::mt19937_64 rng(config.rng_seed);
  auto fill_uniform = [&rng](std::span<double> xs, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    for (double& x : xs) x = u(rng);
  };

  p.masks = Matrix(k, d);
  fill_uniform(p.masks.data(), 0.9, 1.1);

  // Only two rows of attn_w1 are active per pair, so fan-in is effectively 2.
  p.attn_w1 = Matrix(2 * C, h);
  const double b1 = 1.0 / std::sqrt(2.0);
  fill_uniform(p.attn_w1.data(), -b1, b1);
  p.attn_b1.assign(h, 0.0);

  p.attn_w2 = Matrix(h, k);
  const double b2 = 1.0 / std::sqrt(static_cast<double>(h));
  fill_uniform(p.attn_w2.data(), -b2, b2);
  p.attn_b2.assign(k, 0.0);

  if (config.projector == ProjectorMode::Learnable) {
    p.backbone_proj = Matrix(config.raw_dim, d);
    const double bp = config.projector_init_scale / std::sqrt(static_cast<double>(config.raw_dim));
    fill_uniform(p.backbone_proj.data(), -bp, bp);
  }
  return p;
}

Vector one_hot(CategoryId c, std::size_t num_categories) {
  check_category(c, num_categories);
  Vector v(num_categories, 0.0);
  v[c.value] = 1.0;
  return v;
}

AttentionTrace attention_forward(const ModelParams& params, CategoryId source,
                                 CategoryId target) {
  const auto& cfg = params.config;
  check_category(source, cfg.num_categories);
  check_category(target, cfg.num_categories);
  const std::size_t h = cfg.attention_hidden, k = cfg.num_subspaces;

  // concat(onehot(source), onehot(target)) selects two rows of attn_w1.
  const auto src_row = params.attn_w1.row(source.value);
  const auto tgt_row = params.attn_w1.row(cfg.num_categories + target.value);

  AttentionTrace t;
  t.hidden_pre.resize(h);
  t.hidden.resize(h);
  for (std::size_t j = 0; j < h; ++j) {
    t.hidden_pre[j] = src_row[j] + tgt_row[j] + params.attn_b1[j];
    t.hidden[j] = t.hidden_pre[j] > 0.0 ? t.hidden_pre[j] : 0.0;
  }
  t.logits = params.attn_b2;
  for (std::size_t j = 0; j < h; ++j) {
    const double a = t.hidden[j];
    if (a == 0.0) continue;
    const auto w = params.attn_w2.row(j);
    for (std::size_t i = 0; i < k; ++i) t.logits[i] += a * w[i];
  }
  const double mx = *std::max_element(t.logits.begin(), t.logits.end());
  t.weights.resize(k);
  double z = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    t.weights[i] = std::exp(t.logits[i] - mx);
    z += t.weights[i];
  }
  for (double& w : t.weights) w /= z;
  return t;
}

Vector attention_weights(const ModelParams& params, CategoryId source, CategoryId target) {
  return attention_forward(params, source, target).weights;
}

Vector project(const ModelParams& params, std::span<const double> raw) {
  const auto& cfg = params.config;
  if (raw.size() != cfg.raw_dim) {
    throw InputError("raw feature has dimension " + std::to_string(raw.size()) +
                     ", expected " + std::to_string(cfg.raw_dim));
  }
  if (cfg.projector == ProjectorMode::Identity) return Vector(raw.begin(), raw.end());
  Vector x(cfg.feature_dim, 0.0);
  for (std::size_t a = 0; a < cfg.raw_dim; ++a) {
    const double r = raw[a];
    const auto prow = params.backbone_proj.row(a);
    for (std::size_t j = 0; j < cfg.feature_dim; ++j) x[j] += r * prow[j];
  }
  return x;
}

Matrix subspace_projections(const ModelParams& params, std::span<const double> feature) {
  const std::size_t d = params.config.feature_dim, k = params.config.num_subspaces;
  if (feature.size() != d) {
    throw InputError("feature has dimension " + std::to_string(feature.size()) +
                     ", expected " + std::to_string(d));
  }
  Matrix sub(k, d);
  for (std::size_t i = 0; i < k; ++i) {
    const auto m = params.masks.row(i);
    auto out = sub.row(i);
    for (std::size_t j = 0; j < d; ++j) out[j] = feature[j] * m[j];
  }
  return sub;
}

Vector combine_subspaces(const Matrix& subspaces, std::span<const double> weights,
                         bool normalize) {
  const std::size_t k = subspaces.rows(), d = subspaces.cols();
  Vector f(d, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    const auto s = subspaces.row(i);
    for (std::size_t j = 0; j < d; ++j) f[j] += s[j] * weights[i];
  }
  if (normalize) {
    double sq = 0.0;
    for (double v : f) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm > 0.0) {
      for (double& v : f) v /= norm;
    }
  }
  return f;
}

Vector embed(const ModelParams& params, std::span<const double> feature, CategoryId source,
             CategoryId target) {
  const Matrix sub = subspace_projections(params, feature);
  const Vector w = attention_weights(params, source, target);
  return combine_subspaces(sub, w, params.config.normalize);
}

Vector embed_item(const ModelParams& params, const Item& item, CategoryId target) {
  return embed(params, project(params, item.raw_feature), item.category, target);
}

Vector embed_candidate(const ModelParams& params, const Item& item,
                       CategoryId query_category) {
  return embed(params, project(params, item.raw_feature), query_category, item.category);
}

std::uint32_t params_checksum(const ModelParams& params) {
  detail::BinaryWriter w;
  for (const auto& t : tensors(params)) {
    w.magic(t.name);
    w.f64s(t.values);
  }
  return detail::crc32(w.buffer());
}

}  // namespace csanet
