#include "csanet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "csanet/errors.hpp"

namespace csanet {

namespace {

Item random_item(ItemId id, std::size_t category, std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Item it;
  it.id = id;
  it.category = CategoryId(category);
  it.raw_feature.resize(dim);
  for (double& v : it.raw_feature) v = n(rng);
  return it;
}

double batch_loss(const ModelParams& p, const std::vector<TrainingTriple>& batch,
                  const LossConfig& cfg) {
  double s = 0.0;
  for (const auto& t : batch) s += outfit_ranking_loss(p, t, cfg);
  return s / static_cast<double>(batch.size());
}

// Discrete state of the loss surface: ReLU pattern of every category pair in
// use, hinge activity and argmin negative of every triple.
std::vector<int> kink_signature(const ModelParams& p, const std::vector<TrainingTriple>& batch,
                                const LossConfig& cfg) {
  std::vector<int> sig;
  for (const auto& t : batch) {
    const double dp = outfit_distance(p, t.outfit, t.positive, cfg);
    std::vector<double> dn;
    for (const auto& n : t.negatives) dn.push_back(outfit_distance(p, t.outfit, n, cfg));
    const double agg = aggregate_negatives(dn, cfg);
    sig.push_back(dp - agg + cfg.margin > 0.0 ? 1 : 0);
    if (cfg.aggregation == Aggregation::Min) {
      sig.push_back(static_cast<int>(std::min_element(dn.begin(), dn.end()) - dn.begin()));
    }
    for (const auto& o : t.outfit) {
      const auto tr = attention_forward(p, o.category, t.positive.category);
      for (double h : tr.hidden_pre) sig.push_back(h > 0.0 ? 1 : 0);
    }
  }
  return sig;
}

}  // namespace

GradCheckProblem make_gradcheck_problem(const GradCheckSpec& spec) {
  if (spec.num_categories < 2) throw InputError("gradcheck needs at least 2 categories");
  if (spec.outfit_size < 1 || spec.m_neg < 1 || spec.batch_size < 1) {
    throw InputError("gradcheck needs outfit_size, m_neg and batch_size >= 1");
  }
  ModelConfig mc;
  mc.feature_dim = spec.feature_dim;
  mc.num_subspaces = spec.num_subspaces;
  mc.num_categories = spec.num_categories;
  mc.attention_hidden = spec.attention_hidden;
  mc.raw_dim = spec.projector == ProjectorMode::Identity ? spec.feature_dim : spec.raw_dim;
  mc.projector = spec.projector;
  mc.normalize = spec.normalize;
  mc.projector_init_scale = 1.0;
  mc.rng_seed = spec.seed;

  GradCheckProblem prob;
  prob.params = init_params(mc);
  std::mt19937_64 rng(spec.seed ^ 0xa5a5a5a5ULL);
  std::normal_distribution<double> jitter(0.0, 0.3);
  for (auto& t : tensors(prob.params)) {
    if (t.name == "backbone_proj") continue;
    for (double& v : t.values) v += jitter(rng);
  }

  std::uniform_int_distribution<std::size_t> cat(0, spec.num_categories - 1);
  ItemId next = 1;
  for (std::size_t b = 0; b < spec.batch_size; ++b) {
    TrainingTriple t;
    for (std::size_t i = 0; i < spec.outfit_size; ++i) {
      t.outfit.push_back(random_item(next++, cat(rng), mc.raw_dim, rng));
    }
    const std::size_t pc = cat(rng);
    t.positive = random_item(next++, pc, mc.raw_dim, rng);
    for (std::size_t j = 0; j < spec.m_neg; ++j) {
      t.negatives.push_back(random_item(next++, pc, mc.raw_dim, rng));
    }
    prob.batch.push_back(std::move(t));
  }

  prob.loss.aggregation = spec.aggregation;
  prob.loss.distance = spec.distance;
  if (spec.margin) {
    prob.loss.margin = *spec.margin;
  } else {
    LossConfig probe = prob.loss;
    probe.margin = 0.0;
    double gap = 0.0;
    for (const auto& t : prob.batch) {
      const double dp = outfit_distance(prob.params, t.outfit, t.positive, probe);
      std::vector<double> dn;
      for (const auto& n : t.negatives) dn.push_back(outfit_distance(prob.params, t.outfit, n, probe));
      gap = std::max(gap, aggregate_negatives(dn, probe) - dp);
    }
    prob.loss.margin = gap + 1.0;
  }
  return prob;
}

GradCheckReport check_gradients(const ModelParams& params,
                                const std::vector<TrainingTriple>& batch, const LossConfig& cfg,
                                const GradCheckOptions& options) {
  if (batch.empty()) throw InputError("check_gradients: empty batch");
  return check_gradients(params, batch, cfg, loss_gradient(params, batch, cfg).gradient, options);
}

GradCheckReport check_gradients(const ModelParams& params,
                                const std::vector<TrainingTriple>& batch, const LossConfig& cfg,
                                GradientSet analytic, const GradCheckOptions& options) {
  if (batch.empty()) throw InputError("check_gradients: empty batch");
  auto grads = analytic.tensors(params.config.projector);

  ModelParams work = params;
  auto views = tensors(work);
  const std::vector<int> base_sig =
      options.skip_kinks ? kink_signature(work, batch, cfg) : std::vector<int>{};

  GradCheckReport rep;
  for (std::size_t ti = 0; ti < views.size(); ++ti) {
    auto values = views[ti].values;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + options.step;
      const double lp = batch_loss(work, batch, cfg);
      bool kink = options.skip_kinks && kink_signature(work, batch, cfg) != base_sig;
      values[i] = orig - options.step;
      const double lm = batch_loss(work, batch, cfg);
      kink = kink || (options.skip_kinks && kink_signature(work, batch, cfg) != base_sig);
      values[i] = orig;
      if (kink) {
        ++rep.skipped;
        continue;
      }
      ++rep.checked;
      const double numeric = (lp - lm) / (2.0 * options.step);
      const double a = grads[ti].values[i];
      const double diff = std::abs(a - numeric);
      rep.analytic_norm += a * a;
      rep.max_abs_error = std::max(rep.max_abs_error, diff);
      if (diff <= options.abs_floor) continue;
      const double rel = diff / std::max(std::abs(a), std::abs(numeric));
      if (rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst = views[ti].name + "[" + std::to_string(i) + "]";
      }
      if (rel > options.rel_tol) ++rep.failures;
    }
  }
  rep.analytic_norm = std::sqrt(rep.analytic_norm);
  return rep;
}

}  // namespace csanet
