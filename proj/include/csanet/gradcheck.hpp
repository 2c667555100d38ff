#ifndef CSANET_GRADCHECK_HPP_
#define CSANET_GRADCHECK_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "csanet/gradient.hpp"
#include "csanet/loss.hpp"
#include "csanet/model.hpp"

namespace csanet {

/// Shape of a random toy problem for gradient checking.
struct GradCheckSpec {
  std::size_t feature_dim = 8;
  std::size_t num_subspaces = 2;
  std::size_t num_categories = 4;
  std::size_t attention_hidden = 6;
  std::size_t raw_dim = 8;
  ProjectorMode projector = ProjectorMode::Learnable;
  bool normalize = false;
  std::size_t outfit_size = 3;  // n
  std::size_t m_neg = 5;
  std::size_t batch_size = 2;
  Aggregation aggregation = Aggregation::Min;
  DistanceKind distance = DistanceKind::Euclidean;
  /// Unset: chosen so every triple's hinge is active by at least 1.
  std::optional<double> margin;
  std::uint64_t seed = 0;
};

struct GradCheckProblem {
  ModelParams params;
  std::vector<TrainingTriple> batch;
  LossConfig loss;
};

/// Random parameters (perturbed away from their symmetric init) and a batch of
/// triples with random features and categories.
GradCheckProblem make_gradcheck_problem(const GradCheckSpec& spec);

struct GradCheckOptions {
  double step = 1e-4;
  double rel_tol = 1e-4;
  double abs_floor = 1e-6;
  /// Skip coordinates whose ±step perturbation crosses a kink (ReLU, hinge or
  /// argmin switch).
  bool skip_kinks = true;
};

struct GradCheckReport {
  std::size_t checked = 0;
  std::size_t skipped = 0;
  std::size_t failures = 0;
  double max_rel_error = 0.0;  // over coordinates above the absolute floor
  double max_abs_error = 0.0;
  double analytic_norm = 0.0;  // L2 norm of the analytic gradient
  std::string worst;           // "tensor[index]" of max_rel_error

  bool passed() const { return failures == 0; }
};

/**
 * Compares loss_gradient against central differences of the batch-mean
 * outfit_ranking_loss, one parameter coordinate at a time. A coordinate
 * passes if |analytic - numeric| <= abs_floor or the relative error
 * |a - n| / max(|a|, |n|) <= rel_tol.
 */
GradCheckReport check_gradients(const ModelParams& params,
                                 const std::vector<TrainingTriple>& batch, const LossConfig& cfg,
                                 const GradCheckOptions& options = {});

/// Same comparison against a caller-supplied analytic gradient.
GradCheckReport check_gradients(const ModelParams& params,
                                 const std::vector<TrainingTriple>& batch, const LossConfig& cfg,
                                 GradientSet analytic, const GradCheckOptions& options = {});

}  // namespace csanet

#endif  // CSANET_GRADCHECK_HPP_
