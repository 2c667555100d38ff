#include "csanet/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "csanet/errors.hpp"

namespace csanet {

void LossConfig::validate() const {
  if (!(margin >= 0.0) || !std::isfinite(margin)) {
    throw InputError("margin must be a finite nonnegative number");
  }
}

void TrainingTriple::validate() const {
  if (outfit.empty()) throw InputError("training triple has an empty outfit");
  if (negatives.empty()) throw InputError("training triple has no negatives");
  for (const auto& n : negatives) {
    if (n.category != positive.category) {
      throw InputError("negative item " + std::to_string(n.id) +
                       " does not share the positive's category");
    }
  }
}

double pair_distance(std::span<const double> a, std::span<const double> b,
                     DistanceKind kind) {
  if (a.size() != b.size()) {
    throw InputError("pair_distance: dimension mismatch (" + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + ")");
  }
  double sq = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = a[j] - b[j];
    sq += diff * diff;
  }
  return kind == DistanceKind::Euclidean ? std::sqrt(sq) : sq;
}

double mean_distance(std::span<const double> distances) {
  if (distances.empty()) throw InputError("mean of an empty distance list");
  std::vector<double> sorted(distances.begin(), distances.end());
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (double v : sorted) sum += v;
  return sum / static_cast<double>(sorted.size());
}

double outfit_distance(const ModelParams& params, std::span<const Item> outfit,
                       const Item& candidate, const LossConfig& cfg) {
  if (outfit.empty()) throw InputError("outfit_distance: empty outfit");
  const Vector x = project(params, candidate.raw_feature);
  std::vector<double> per_item;
  per_item.reserve(outfit.size());
  for (const Item& o : outfit) {
    const Vector fo = embed_item(params, o, candidate.category);
    const Vector fs = embed(params, x, o.category, candidate.category);
    per_item.push_back(pair_distance(fo, fs, cfg.distance));
  }
  return mean_distance(per_item);
}

double aggregate_negatives(std::span<const double> distances, const LossConfig& cfg) {
  if (distances.empty()) throw InputError("aggregate_negatives: empty distance list");
  if (cfg.aggregation == Aggregation::Min) {
    return *std::min_element(distances.begin(), distances.end());
  }
  double sum = 0.0;
  for (double v : distances) sum += v;
  return sum / static_cast<double>(distances.size());
}

double outfit_ranking_loss(const ModelParams& params, const TrainingTriple& triple,
                           const LossConfig& cfg) {
  triple.validate();
  const double d_pos = outfit_distance(params, triple.outfit, triple.positive, cfg);
  std::vector<double> d_neg;
  d_neg.reserve(triple.negatives.size());
  for (const Item& n : triple.negatives) {
    d_neg.push_back(outfit_distance(params, triple.outfit, n, cfg));
  }
  const double d_agg = aggregate_negatives(d_neg, cfg);
  return std::max(0.0, d_pos - d_agg + cfg.margin);
}

double triplet_loss(const ModelParams& params, const Item& anchor, const Item& positive,
                    const Item& negative, const LossConfig& cfg) {
  if (positive.category != negative.category) {
    throw InputError("triplet_loss: positive and negative categories differ");
  }
  const std::span<const Item> outfit(&anchor, 1);
  const double d_pos = outfit_distance(params, outfit, positive, cfg);
  const double d_neg = outfit_distance(params, outfit, negative, cfg);
  return std::max(0.0, d_pos - d_neg + cfg.margin);
}

}  // namespace csanet
