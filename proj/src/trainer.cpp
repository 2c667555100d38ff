#include "csanet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "csanet/eval.hpp"

namespace csanet {

void TrainConfig::validate() const {
  if (batch_size < 1) throw InputError("batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InputError("learning_rate must be finite and >= 0");
  }
  if (epochs < 1) throw InputError("epochs must be >= 1");
  if (m_neg < 1) throw InputError("m_neg must be >= 1");
  if (pool_size < 1) throw InputError("pool_size must be >= 1");
  if (validation_candidates < 2) throw InputError("validation_candidates must be >= 2");
}

std::vector<std::size_t> semi_hard_indices(std::span<const double> d, double d_pos,
                                           double margin, std::size_t m_neg, Rng& rng) {
  if (d.empty()) throw InputError("semi-hard selection: empty candidate pool");
  std::vector<std::size_t> band, beyond, rest;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] > d_pos && d[i] < d_pos + margin) {
      band.push_back(i);
    } else if (d[i] > d_pos) {
      beyond.push_back(i);
    } else {
      rest.push_back(i);
    }
  }
  std::vector<std::size_t> chosen;
  if (band.size() > m_neg) {
    std::shuffle(band.begin(), band.end(), rng);
    band.resize(m_neg);
    std::sort(band.begin(), band.end());
  }
  chosen = band;
  std::stable_sort(beyond.begin(), beyond.end(),
                   [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
  for (std::size_t i : beyond) {
    if (chosen.size() >= m_neg) break;
    chosen.push_back(i);
  }
  if (chosen.size() < m_neg) {
    std::shuffle(rest.begin(), rest.end(), rng);
    for (std::size_t i : rest) {
      if (chosen.size() >= m_neg) break;
      chosen.push_back(i);
    }
  }
  return chosen;
}

std::vector<Item> select_semi_hard(const ModelParams& params, std::span<const Item> outfit,
                                   const Item& positive, std::span<const Item> pool,
                                   const LossConfig& cfg, std::size_t m_neg, Rng& rng) {
  if (pool.empty()) throw InputError("select_semi_hard: empty candidate pool");
  for (const Item& c : pool) {
    if (c.category != positive.category) {
      throw InputError("select_semi_hard: pool item " + std::to_string(c.id) +
                       " does not share the positive's category");
    }
  }
  BatchEngine engine(params, ForwardMode::Cached);
  const double d_pos = engine.outfit_distance(outfit, positive, cfg);
  std::vector<double> d(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) d[i] = engine.outfit_distance(outfit, pool[i], cfg);
  std::vector<Item> out;
  for (std::size_t i : semi_hard_indices(d, d_pos, cfg.margin, m_neg, rng)) {
    out.push_back(pool[i]);
  }
  return out;
}

double learning_rate_at(const TrainConfig& cfg, std::size_t step, std::size_t total_steps) {
  if (cfg.schedule == Schedule::Constant || total_steps == 0) return cfg.learning_rate;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return cfg.learning_rate * std::max(0.0, 1.0 - frac);
}

// ---------------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(const ModelParams& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& t : tensors(params)) {
    m_.emplace_back(t.values.size(), 0.0);
    v_.emplace_back(t.values.size(), 0.0);
  }
}

void AdamOptimizer::step(ModelParams& params, GradientSet& grad, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto ps = tensors(params);
  auto gs = grad.tensors(params.config.projector);
  for (std::size_t ti = 0; ti < ps.size(); ++ti) {
    auto p = ps[ti].values;
    auto g = gs[ti].values;
    auto& m = m_[ti];
    auto& v = v_[ti];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void SgdOptimizer::step(ModelParams& params, GradientSet& grad, double lr) {
  auto ps = tensors(params);
  auto gs = grad.tensors(params.config.projector);
  for (std::size_t ti = 0; ti < ps.size(); ++ti) {
    for (std::size_t i = 0; i < ps[ti].values.size(); ++i) {
      ps[ti].values[i] -= lr * gs[ti].values[i];
    }
  }
}

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, const ModelParams& params) {
  if (kind == OptimizerKind::Adam) return std::make_unique<AdamOptimizer>(params);
  return std::make_unique<SgdOptimizer>();
}

std::string to_json_line(const EpochMetrics& m) {
  char buf[256];
  if (std::isnan(m.valid_fitb)) {
    std::snprintf(buf, sizeof(buf),
                  "{\"epoch\":%zu,\"mean_loss\":%.17g,\"valid_fitb\":null,\"steps\":%zu}",
                  m.epoch, m.mean_loss, m.steps);
  } else {
    std::snprintf(buf, sizeof(buf),
                  "{\"epoch\":%zu,\"mean_loss\":%.17g,\"valid_fitb\":%.17g,\"steps\":%zu}",
                  m.epoch, m.mean_loss, m.valid_fitb, m.steps);
  }
  return buf;
}

// ---------------------------------------------------------------------------

namespace {

bool params_finite(const ModelParams& p) {
  for (const auto& t : tensors(p)) {
    for (double v : t.values) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

}  // namespace

TrainResult train(const Dataset& dataset, ModelParams initial, const LossConfig& loss_cfg,
                  const TrainConfig& cfg, const TrainCallbacks& callbacks) {
  cfg.validate();
  loss_cfg.validate();
  initial.validate();
  if (dataset.raw_dim() != initial.config.raw_dim) {
    throw InputError("dataset feature dimension does not match the model's raw_dim");
  }
  if (dataset.num_categories() > initial.config.num_categories) {
    throw InputError("dataset has more categories than the model");
  }

  Rng rng(cfg.rng_seed);
  Rng valid_rng(cfg.rng_seed ^ 0x9e3779b97f4a7c15ULL);
  const auto questions =
      build_fitb_questions(dataset, Split::Valid, cfg.validation_candidates, valid_rng);

  std::size_t triples_per_epoch = 0;
  for (const Outfit* o : dataset.outfits_in(Split::Train)) {
    if (o->items.size() >= 2) ++triples_per_epoch;
  }
  if (triples_per_epoch == 0) throw InputError("train: no usable training outfits");
  const std::size_t steps_per_epoch = (triples_per_epoch + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;

  const bool triplet = loss_cfg.objective == LossObjective::Triplet;
  const std::size_t m_neg = triplet ? 1 : cfg.m_neg;
  const ForwardMode mode = cfg.use_cache ? ForwardMode::Cached : ForwardMode::Naive;

  TrainResult result;
  result.params = std::move(initial);
  ModelParams& params = result.params;
  auto optimizer = make_optimizer(cfg.optimizer, params);
  std::size_t step = 0;
  bool stop = false;

  for (std::size_t epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    const auto sampled = sample_triples(dataset, Split::Train, epoch, cfg.pool_size, rng);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    std::size_t epoch_steps = 0;

    for (std::size_t begin = 0; begin < sampled.size() && !stop; begin += cfg.batch_size) {
      const std::size_t end = std::min(sampled.size(), begin + cfg.batch_size);
      BatchEngine engine(params, mode);
      std::vector<TrainingTriple> batch;
      std::vector<bool> flips;
      for (std::size_t s = begin; s < end; ++s) {
        const SampledTriple& st = sampled[s];
        if (st.pool.empty()) continue;
        const bool flip = cfg.order_flip && std::uniform_int_distribution<int>(0, 1)(rng) == 1;
        TrainingTriple t;
        t.positive = st.positive;
        if (triplet) {
          std::uniform_int_distribution<std::size_t> pick(0, st.outfit.size() - 1);
          t.outfit = {st.outfit[pick(rng)]};
        } else {
          t.outfit = st.outfit;
        }
        std::vector<std::size_t> chosen;
        if (cfg.mining == Mining::SemiHard) {
          const double d_pos = engine.outfit_distance(t.outfit, t.positive, loss_cfg, flip);
          std::vector<double> d(st.pool.size());
          for (std::size_t i = 0; i < st.pool.size(); ++i) {
            d[i] = engine.outfit_distance(t.outfit, st.pool[i], loss_cfg, flip);
          }
          chosen = semi_hard_indices(d, d_pos, loss_cfg.margin, m_neg, rng);
        } else {
          chosen.resize(st.pool.size());
          std::iota(chosen.begin(), chosen.end(), std::size_t{0});
          std::shuffle(chosen.begin(), chosen.end(), rng);
          chosen.resize(std::min(m_neg, chosen.size()));
        }
        for (std::size_t i : chosen) t.negatives.push_back(st.pool[i]);
        batch.push_back(std::move(t));
        flips.push_back(flip);
      }
      if (batch.empty()) continue;

      const double lr = learning_rate_at(cfg, step, total_steps);
      const double scale = 1.0 / static_cast<double>(batch.size());
      double total = 0.0;
      GradientSet grad;
      try {
        for (std::size_t b = 0; b < batch.size(); ++b) {
          total += engine.accumulate(batch[b], loss_cfg, scale, flips[b]);
        }
        grad = engine.gradient();
      } catch (const NumericalError& e) {
        throw TrainingAborted(std::string("training aborted at step ") + std::to_string(step) +
                                  ": " + e.what(),
                              params);
      }
      const double batch_loss = total / static_cast<double>(batch.size());
      if (!std::isfinite(batch_loss) || !grad.all_finite()) {
        throw TrainingAborted("training aborted at step " + std::to_string(step) +
                                  ": non-finite loss or gradient",
                              params);
      }
      ModelParams before = params;
      optimizer->step(params, grad, lr);
      if (!params_finite(params)) {
        throw TrainingAborted("training aborted at step " + std::to_string(step) +
                                  ": parameters became non-finite",
                              std::move(before));
      }
      result.batch_losses.push_back(batch_loss);
      loss_sum += total;
      loss_count += batch.size();
      ++step;
      ++epoch_steps;
      if (callbacks.max_steps && step >= callbacks.max_steps) stop = true;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.steps = epoch_steps;
    m.mean_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    m.valid_fitb = questions.empty()
                       ? std::numeric_limits<double>::quiet_NaN()
                       : fitb_accuracy(params, questions, loss_cfg, cfg.threads).accuracy;
    result.log.push_back(m);
    if (callbacks.on_epoch) callbacks.on_epoch(m);
  }
  return result;
}

TrainResult train(const Dataset& dataset, const ModelConfig& model_cfg,
                  const LossConfig& loss_cfg, const TrainConfig& train_cfg,
                  const TrainCallbacks& callbacks) {
  return train(dataset, init_params(model_cfg), loss_cfg, train_cfg, callbacks);
}

}  // namespace csanet
