#ifndef CSANET_RETRIEVAL_HPP_
#define CSANET_RETRIEVAL_HPP_

#include <span>
#include <vector>

#include "csanet/index.hpp"
#include "csanet/loss.hpp"
#include "csanet/model.hpp"

namespace csanet {

/// A partial outfit and the category of the item to complete it with.
struct Query {
  std::vector<Item> outfit;
  CategoryId target_category;
  std::size_t k_results = 10;
};

struct RankedEntry {
  ItemId id = 0;
  double fused_distance = 0.0;

  bool operator==(const RankedEntry&) const = default;
};

/// Sorted by (fused_distance, id), unique ids.
using RankedResult = std::vector<RankedEntry>;

struct RetrieveOptions {
  SearchMode mode = SearchMode::Exact;
  /// APPROX: per-query-item shortlist depth is shortlist_factor * k_results.
  std::size_t shortlist_factor = 10;
  std::size_t ef = 0;  // 0 = the index's ef_search
  /// When non-empty, only these candidate ids are ranked.
  std::span<const ItemId> restrict_to = {};
};

/**
 * Each outfit item is embedded toward the target category and compared with
 * the bucket (target, c(item)); per-candidate distances are fused by their
 * mean. In EXACT mode every candidate is scored and the fused distance equals
 * the loss module's outfit distance. In APPROX mode only the union of the
 * per-item graph shortlists is rescored.
 */
RankedResult retrieve(const ModelParams& params, const CategoryIndex& index,
                      const Query& query, const RetrieveOptions& options = {});

/// Index of the candidate with the smallest outfit distance, first on ties.
std::size_t fitb_answer(const ModelParams& params, std::span<const Item> outfit,
                        std::span<const Item> candidates, const LossConfig& cfg);

/// Negative mean over unordered pairs (i, j) of d(ψ(I_i, c_i, c_j), ψ(I_j, c_j, c_i)).
/// Higher is more compatible; 0 is the maximum.
double compatibility_score(const ModelParams& params, std::span<const Item> outfit,
                           const LossConfig& cfg);

}  // namespace csanet

#endif  // CSANET_RETRIEVAL_HPP_
