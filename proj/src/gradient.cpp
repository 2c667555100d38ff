#include "csanet/gradient.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "csanet/errors.hpp"

namespace csanet {

GradientSet GradientSet::zeros_like(const ModelParams& p) {
  GradientSet g;
  g.masks = Matrix(p.masks.rows(), p.masks.cols());
  g.attn_w1 = Matrix(p.attn_w1.rows(), p.attn_w1.cols());
  g.attn_b1.assign(p.attn_b1.size(), 0.0);
  g.attn_w2 = Matrix(p.attn_w2.rows(), p.attn_w2.cols());
  g.attn_b2.assign(p.attn_b2.size(), 0.0);
  g.backbone_proj = Matrix(p.backbone_proj.rows(), p.backbone_proj.cols());
  return g;
}

std::vector<TensorView> GradientSet::tensors(ProjectorMode projector) {
  std::vector<TensorView> out = {
      {"masks", masks.data()},     {"attn_w1", attn_w1.data()}, {"attn_b1", attn_b1},
      {"attn_w2", attn_w2.data()}, {"attn_b2", attn_b2},
  };
  if (projector == ProjectorMode::Learnable) {
    out.push_back({"backbone_proj", backbone_proj.data()});
  }
  return out;
}

bool GradientSet::all_finite() const {
  auto finite = [](std::span<const double> xs) {
    return std::all_of(xs.begin(), xs.end(), [](double v) { return std::isfinite(v); });
  };
  return finite(masks.data()) && finite(attn_w1.data()) && finite(attn_b1) &&
         finite(attn_w2.data()) && finite(attn_b2) && finite(backbone_proj.data());
}

BatchEngine::BatchEngine(const ModelParams& params, ForwardMode mode)
    : params_(params), mode_(mode) {}

std::size_t BatchEngine::item_slot(const Item& item) {
  if (auto it = item_index_.find(item.id); it != item_index_.end()) {
    const Item& seen = items_[it->second].item;
    if (seen.category != item.category || seen.raw_feature != item.raw_feature) {
      throw InputError("item id " + std::to_string(item.id) +
                       " appears twice in a batch with different contents");
    }
    return it->second;
  }
  ItemSlot slot;
  slot.item = item;
  if (mode_ == ForwardMode::Cached) {
    slot.x = project(params_, item.raw_feature);
    slot.sub = subspace_projections(params_, slot.x);
  } else {
    // Validates dimensions up front, as the cached path does.
    (void)project(params_, item.raw_feature);
  }
  slot.dsub = Matrix(params_.config.num_subspaces, params_.config.feature_dim);
  items_.push_back(std::move(slot));
  item_index_.emplace(item.id, items_.size() - 1);
  return items_.size() - 1;
}

std::size_t BatchEngine::pair_slot(CategoryId source, CategoryId target) {
  const std::size_t key = source.value * params_.config.num_categories + target.value;
  if (auto it = pair_index_.find(key); it != pair_index_.end()) return it->second;
  PairSlot slot;
  slot.source = source;
  slot.target = target;
  AttentionTrace trace = attention_forward(params_, source, target);
  if (mode_ == ForwardMode::Cached) slot.trace = std::move(trace);
  slot.dweights.assign(params_.config.num_subspaces, 0.0);
  pairs_.push_back(std::move(slot));
  pair_index_.emplace(key, pairs_.size() - 1);
  return pairs_.size() - 1;
}

Matrix BatchEngine::subspaces_of(std::size_t slot) const {
  const ItemSlot& s = items_[slot];
  if (mode_ == ForwardMode::Cached) return s.sub;
  return subspace_projections(params_, project(params_, s.item.raw_feature));
}

AttentionTrace BatchEngine::trace_of(std::size_t slot) const {
  const PairSlot& p = pairs_[slot];
  if (mode_ == ForwardMode::Cached) return p.trace;
  return attention_forward(params_, p.source, p.target);
}

Vector BatchEngine::embed_slots(std::size_t item, std::size_t pair) const {
  if (mode_ == ForwardMode::Cached) {
    return combine_subspaces(items_[item].sub, pairs_[pair].trace.weights,
                             params_.config.normalize);
  }
  // Naive path: the public single-embedding entry point, recomputed from scratch.
  const PairSlot& p = pairs_[pair];
  return embed(params_, project(params_, items_[item].item.raw_feature), p.source, p.target);
}

Vector BatchEngine::embedding(const Item& item, CategoryId source, CategoryId target) {
  const std::size_t is = item_slot(item);
  const std::size_t ps = pair_slot(source, target);
  return embed_slots(is, ps);
}

double BatchEngine::outfit_distance(std::span<const Item> outfit, const Item& candidate,
                                    const LossConfig& cfg, bool flip) {
  if (outfit.empty()) throw InputError("outfit_distance: empty outfit");
  std::vector<double> per_item;
  per_item.reserve(outfit.size());
  for (const Item& o : outfit) {
    const CategoryId s = flip ? candidate.category : o.category;
    const CategoryId t = flip ? o.category : candidate.category;
    const Vector fo = embedding(o, s, t);
    const Vector fc = embedding(candidate, s, t);
    per_item.push_back(pair_distance(fo, fc, cfg.distance));
  }
  return mean_distance(per_item);
}

void BatchEngine::backprop_embedding(std::size_t item, std::size_t pair,
                                     std::span<const double> dout) {
  const Matrix sub = subspaces_of(item);
  const AttentionTrace trace = trace_of(pair);
  const std::size_t k = sub.rows(), d = sub.cols();

  Vector df(dout.begin(), dout.end());
  if (params_.config.normalize) {
    const Vector f = combine_subspaces(sub, trace.weights, false);
    double sq = 0.0;
    for (double v : f) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm > 0.0) {
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += (f[j] / norm) * dout[j];
      for (std::size_t j = 0; j < d; ++j) df[j] = (dout[j] - (f[j] / norm) * dot) / norm;
    }
  }

  Matrix& dsub = items_[item].dsub;
  Vector& dw = pairs_[pair].dweights;
  for (std::size_t i = 0; i < k; ++i) {
    const double wi = trace.weights[i];
    const auto s = sub.row(i);
    auto ds = dsub.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      ds[j] += wi * df[j];
      acc += s[j] * df[j];
    }
    dw[i] += acc;
  }
}

double BatchEngine::accumulate(const TrainingTriple& triple, const LossConfig& cfg,
                               double scale, bool flip) {
  triple.validate();
  const std::size_t n = triple.outfit.size();
  const std::size_t m = triple.negatives.size();

  std::vector<const Item*> candidates;
  candidates.reserve(m + 1);
  candidates.push_back(&triple.positive);
  for (const Item& neg : triple.negatives) candidates.push_back(&neg);

  std::vector<std::size_t> outfit_items(n);
  for (std::size_t i = 0; i < n; ++i) outfit_items[i] = item_slot(triple.outfit[i]);

  // Forward. Each candidate s gets one embedding per outfit item, as does
  // each outfit item per candidate category (all candidates share one here).
  struct PairEval {
    std::size_t outfit_item, outfit_pair, cand_item, cand_pair;
    Vector fo, fc;
    double dist;
  };
  std::vector<std::vector<PairEval>> evals(candidates.size());
  std::vector<double> outfit_dist(candidates.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const Item& cand = *candidates[c];
    const std::size_t cand_item = item_slot(cand);
    std::vector<double> per_item(n);
    evals[c].reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Item& o = triple.outfit[i];
      const CategoryId s = flip ? cand.category : o.category;
      const CategoryId t = flip ? o.category : cand.category;
      const std::size_t ps = pair_slot(s, t);
      PairEval e{outfit_items[i], ps, cand_item, ps, {}, {}, 0.0};
      e.fo = embed_slots(e.outfit_item, e.outfit_pair);
      e.fc = embed_slots(e.cand_item, e.cand_pair);
      e.dist = pair_distance(e.fo, e.fc, cfg.distance);
      per_item[i] = e.dist;
      evals[c].push_back(std::move(e));
    }
    outfit_dist[c] = mean_distance(per_item);
  }

  const std::span<const double> neg_dist(outfit_dist.data() + 1, m);
  const double d_agg = aggregate_negatives(neg_dist, cfg);
  const double loss = std::max(0.0, outfit_dist[0] - d_agg + cfg.margin);
  if (!std::isfinite(loss)) {
    throw NumericalError("non-finite loss for triple with positive item " +
                         std::to_string(triple.positive.id));
  }
  if (!(outfit_dist[0] - d_agg + cfg.margin > 0.0)) return loss;

  // dloss/dD_s for each candidate.
  std::vector<double> coeff(candidates.size(), 0.0);
  coeff[0] = 1.0;
  if (cfg.aggregation == Aggregation::Min) {
    const auto arg = std::min_element(neg_dist.begin(), neg_dist.end()) - neg_dist.begin();
    coeff[1 + static_cast<std::size_t>(arg)] = -1.0;
  } else {
    for (std::size_t j = 0; j < m; ++j) coeff[1 + j] = -1.0 / static_cast<double>(m);
  }

  const std::size_t d = params_.config.feature_dim;
  Vector grad(d), neg_grad(d);
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    if (coeff[c] == 0.0) continue;
    const double g = scale * coeff[c] / static_cast<double>(n);
    for (const PairEval& e : evals[c]) {
      // d dist / d fo; the candidate side gets the negation.
      if (cfg.distance == DistanceKind::Euclidean) {
        const double inv = e.dist > 0.0 ? 1.0 / e.dist : 0.0;
        for (std::size_t j = 0; j < d; ++j) grad[j] = g * (e.fo[j] - e.fc[j]) * inv;
      } else {
        for (std::size_t j = 0; j < d; ++j) grad[j] = g * 2.0 * (e.fo[j] - e.fc[j]);
      }
      for (std::size_t j = 0; j < d; ++j) neg_grad[j] = -grad[j];
      backprop_embedding(e.outfit_item, e.outfit_pair, grad);
      backprop_embedding(e.cand_item, e.cand_pair, neg_grad);
    }
  }
  return loss;
}

GradientSet BatchEngine::gradient() const {
  const auto& cfg = params_.config;
  const std::size_t C = cfg.num_categories, h = cfg.attention_hidden, k = cfg.num_subspaces;
  const std::size_t d = cfg.feature_dim;
  GradientSet g = GradientSet::zeros_like(params_);

  for (std::size_t p = 0; p < pairs_.size(); ++p) {
    const PairSlot& slot = pairs_[p];
    const AttentionTrace trace = trace_of(p);
    // Softmax backward.
    double wdot = 0.0;
    for (std::size_t i = 0; i < k; ++i) wdot += trace.weights[i] * slot.dweights[i];
    Vector dlogit(k);
    for (std::size_t i = 0; i < k; ++i) {
      dlogit[i] = trace.weights[i] * (slot.dweights[i] - wdot);
      g.attn_b2[i] += dlogit[i];
    }
    Vector dpre(h, 0.0);
    for (std::size_t j = 0; j < h; ++j) {
      const auto w2 = params_.attn_w2.row(j);
      auto gw2 = g.attn_w2.row(j);
      double da = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        gw2[i] += trace.hidden[j] * dlogit[i];
        da += w2[i] * dlogit[i];
      }
      dpre[j] = trace.hidden_pre[j] > 0.0 ? da : 0.0;
    }
    auto gsrc = g.attn_w1.row(slot.source.value);
    auto gtgt = g.attn_w1.row(C + slot.target.value);
    for (std::size_t j = 0; j < h; ++j) {
      g.attn_b1[j] += dpre[j];
      gsrc[j] += dpre[j];
      gtgt[j] += dpre[j];
    }
  }

  const bool learnable = cfg.projector == ProjectorMode::Learnable;
  Vector dx(d);
  for (const ItemSlot& slot : items_) {
    const Vector x = mode_ == ForwardMode::Cached ? slot.x
                                                   : project(params_, slot.item.raw_feature);
    std::fill(dx.begin(), dx.end(), 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      const auto ds = slot.dsub.row(i);
      const auto m = params_.masks.row(i);
      auto gm = g.masks.row(i);
      for (std::size_t j = 0; j < d; ++j) {
        gm[j] += ds[j] * x[j];
        dx[j] += ds[j] * m[j];
      }
    }
    if (learnable) {
      const auto& raw = slot.item.raw_feature;
      for (std::size_t a = 0; a < cfg.raw_dim; ++a) {
        const double r = raw[a];
        if (r == 0.0) continue;
        auto gp = g.backbone_proj.row(a);
        for (std::size_t j = 0; j < d; ++j) gp[j] += r * dx[j];
      }
    }
  }
  return g;
}

LossGradient loss_gradient(const ModelParams& params, std::span<const TrainingTriple> batch,
                           const LossConfig& cfg, const GradientOptions& options) {
  if (batch.empty()) throw InputError("loss_gradient: empty batch");
  if (!options.flips.empty() && options.flips.size() != batch.size()) {
    throw InputError("loss_gradient: flips must be empty or one per triple");
  }
  cfg.validate();
  BatchEngine engine(params, options.mode);
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const bool flip = !options.flips.empty() && options.flips[b];
    total += engine.accumulate(batch[b], cfg, scale, flip);
  }
  LossGradient out;
  out.loss = total / static_cast<double>(batch.size());
  out.gradient = engine.gradient();
  if (!std::isfinite(out.loss) || !out.gradient.all_finite()) {
    throw NumericalError("loss_gradient: non-finite loss or gradient (loss = " +
                         std::to_string(out.loss) + ")");
  }
  return out;
}

}  // namespace csanet
