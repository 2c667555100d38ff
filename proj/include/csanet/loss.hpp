#ifndef CSANET_LOSS_HPP_
#define CSANET_LOSS_HPP_

#include <span>
#include <vector>

#include "csanet/model.hpp"
#include "csanet/types.hpp"

namespace csanet {

/// How per-negative outfit distances are reduced to one negative distance.
enum class Aggregation { Min, Average };
enum class DistanceKind { Euclidean, SquaredEuclidean };
/// Training objective. Triplet is the single-anchor baseline.
enum class LossObjective { OutfitRanking, Triplet };

struct LossConfig {
  double margin = 0.3;
  Aggregation aggregation = Aggregation::Min;
  DistanceKind distance = DistanceKind::Euclidean;
  LossObjective objective = LossObjective::OutfitRanking;

  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

/// An outfit O, a positive item p compatible with it, and negatives N that
/// share p's category.
struct TrainingTriple {
  std::vector<Item> outfit;
  Item positive;
  std::vector<Item> negatives;

  void validate() const;
};

double pair_distance(std::span<const double> a, std::span<const double> b, DistanceKind kind);
inline double pair_distance(std::span<const double> a, std::span<const double> b,
                            const LossConfig& cfg) {
  return pair_distance(a, b, cfg.distance);
}

/// Arithmetic mean summed in ascending order, so the result does not depend
/// on the order of the inputs. Both the loss and retrieval fusion use it.
double mean_distance(std::span<const double> distances);

/// Mean over outfit items of d(ψ(o_i, c(o_i), c(s)), ψ(s, c(o_i), c(s))).
double outfit_distance(const ModelParams& params, std::span<const Item> outfit,
                       const Item& candidate, const LossConfig& cfg);

double aggregate_negatives(std::span<const double> distances, const LossConfig& cfg);

/// max(0, D_p - D_N + margin).
double outfit_ranking_loss(const ModelParams& params, const TrainingTriple& triple,
                           const LossConfig& cfg);

/// Single-anchor baseline, all embeddings conditioned on (c(anchor), c(positive)).
double triplet_loss(const ModelParams& params, const Item& anchor, const Item& positive,
                    const Item& negative, const LossConfig& cfg);

}  // namespace csanet

#endif  // CSANET_LOSS_HPP_
