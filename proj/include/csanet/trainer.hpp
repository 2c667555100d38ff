#ifndef CSANET_TRAINER_HPP_
#define CSANET_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "csanet/data.hpp"
#include "csanet/errors.hpp"
#include "csanet/gradient.hpp"
#include "csanet/loss.hpp"
#include "csanet/model.hpp"

namespace csanet {

enum class Schedule { Constant, LinearDecay };
enum class OptimizerKind { Adam, Sgd };
enum class Mining { Random, SemiHard };

struct TrainConfig {
  std::size_t batch_size = 96;
  double learning_rate = 5e-5;
  Schedule schedule = Schedule::LinearDecay;  // no warmup
  OptimizerKind optimizer = OptimizerKind::Adam;
  std::size_t epochs = 30;
  std::size_t m_neg = 10;      // negatives per triple after mining
  std::size_t pool_size = 50;  // candidate pool per triple before mining
  Mining mining = Mining::SemiHard;
  bool order_flip = false;
  std::uint64_t rng_seed = 0;
  bool use_cache = true;
  std::size_t validation_candidates = 4;
  std::size_t threads = 1;  // validation only; training steps are single-threaded

  void validate() const;
};

/**
 * Indices of the chosen pool members: first the semi-hard band
 * D_p < D < D_p + margin (a seeded random subset if it holds more than
 * m_neg), then the closest of those at or beyond D_p + margin, then a seeded
 * random fill from the rest.
 */
std::vector<std::size_t> semi_hard_indices(std::span<const double> pool_distances,
                                           double positive_distance, double margin,
                                           std::size_t m_neg, Rng& rng);

std::vector<Item> select_semi_hard(const ModelParams& params, std::span<const Item> outfit,
                                   const Item& positive, std::span<const Item> pool,
                                   const LossConfig& cfg, std::size_t m_neg, Rng& rng);

double learning_rate_at(const TrainConfig& cfg, std::size_t step, std::size_t total_steps);

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(ModelParams& params, GradientSet& grad, double lr) = 0;
};

/// Adam with β1 = 0.9, β2 = 0.999, ε = 1e-8 and bias correction.
class AdamOptimizer : public Optimizer {
 public:
  explicit AdamOptimizer(const ModelParams& params, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8);
  void step(ModelParams& params, GradientSet& grad, double lr) override;

 private:
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Vector> m_, v_;
};

class SgdOptimizer : public Optimizer {
 public:
  void step(ModelParams& params, GradientSet& grad, double lr) override;
};

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, const ModelParams& params);

struct EpochMetrics {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double valid_fitb = 0.0;  // NaN when the validation split is empty
  std::size_t steps = 0;

  bool operator==(const EpochMetrics&) const = default;
};

/// One JSON object per line: {"epoch":..,"mean_loss":..,"valid_fitb":..,"steps":..}
std::string to_json_line(const EpochMetrics& m);

struct TrainResult {
  ModelParams params;
  std::vector<EpochMetrics> log;
  std::vector<double> batch_losses;
};

/// Raised when a step produces a non-finite loss or parameters; carries the
/// last parameters that were finite.
class TrainingAborted : public NumericalError {
 public:
  TrainingAborted(const std::string& what, ModelParams last_good)
      : NumericalError(what), last_good_(std::move(last_good)) {}
  const ModelParams& last_good() const noexcept { return last_good_; }

 private:
  ModelParams last_good_;
};

struct TrainCallbacks {
  std::function<void(const EpochMetrics&)> on_epoch;
  /// Stop after this many optimizer steps (0 = run all epochs). Used by tests.
  std::size_t max_steps = 0;
};

/**
 * Online-mining training loop over the train split. Per batch, each item's
 * subspace projections are computed once and attention once per category
 * pair (unless use_cache is off); negatives are mined from the per-triple
 * pool with the current parameters; the learning rate decays linearly to
 * zero over all steps. Validation FITB is measured after every epoch.
 */
TrainResult train(const Dataset& dataset, ModelParams initial, const LossConfig& loss_cfg,
                  const TrainConfig& train_cfg, const TrainCallbacks& callbacks = {});

TrainResult train(const Dataset& dataset, const ModelConfig& model_cfg,
                  const LossConfig& loss_cfg, const TrainConfig& train_cfg,
                  const TrainCallbacks& callbacks = {});

}  // namespace csanet

#endif  // CSANET_TRAINER_HPP_
