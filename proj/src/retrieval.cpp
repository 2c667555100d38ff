#include "csanet/retrieval.hpp"

#include <algorithm>
#include <set>

#include "csanet/errors.hpp"

namespace csanet {

RankedResult retrieve(const ModelParams& params, const CategoryIndex& index,
                      const Query& query, const RetrieveOptions& options) {
  if (query.outfit.empty()) throw InputError("retrieve: empty query outfit");
  if (query.k_results == 0) throw InputError("retrieve: k_results must be >= 1");
  if (index.model_checksum() != params_checksum(params)) {
    throw InputError("retrieve: index was built with different model parameters");
  }
  const CategoryId target = query.target_category;
  const std::size_t n = query.outfit.size();

  std::vector<const IndexBucket*> buckets(n);
  std::vector<Vector> q(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Item& o = query.outfit[i];
    buckets[i] = &index.bucket(target, o.category);
    if (buckets[i]->size() == 0) {
      throw InputError("retrieve: no indexed items of category " +
                       std::to_string(target.value));
    }
    q[i] = embed_item(params, o, target);
  }
  const IndexBucket& first = *buckets[0];

  // Candidate ids to score, in the first bucket's row order.
  std::vector<ItemId> candidates;
  if (options.mode == SearchMode::Exact) {
    if (options.restrict_to.empty()) {
      candidates = first.ids;
    } else {
      for (ItemId id : options.restrict_to) {
        if (!first.row_of(id)) {
          throw InputError("retrieve: candidate " + std::to_string(id) +
                           " is not indexed under category " + std::to_string(target.value));
        }
      }
      candidates.assign(options.restrict_to.begin(), options.restrict_to.end());
    }
  } else {
    const std::size_t depth = options.shortlist_factor * query.k_results;
    const std::size_t ef = options.ef ? options.ef : index.hnsw_params().ef_search;
    std::set<ItemId> allowed(options.restrict_to.begin(), options.restrict_to.end());
    std::set<ItemId> pool;
    for (std::size_t i = 0; i < n; ++i) {
      for (const Neighbor& nb :
           knn(*buckets[i], q[i], depth, SearchMode::Approx, index.distance(), ef)) {
        if (allowed.empty() || allowed.count(nb.id)) pool.insert(nb.id);
      }
    }
    candidates.assign(pool.begin(), pool.end());
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  RankedResult ranked;
  ranked.reserve(candidates.size());
  std::vector<double> per_item(n);
  for (ItemId id : candidates) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = buckets[i]->row_of(id);
      per_item[i] = pair_distance(q[i], buckets[i]->embeddings.row(*row), index.distance());
    }
    ranked.push_back({id, mean_distance(per_item)});
  }
  const std::size_t take = std::min(query.k_results, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take),
                    ranked.end(), [](const RankedEntry& a, const RankedEntry& b) {
                      return a.fused_distance != b.fused_distance
                                 ? a.fused_distance < b.fused_distance
                                 : a.id < b.id;
                    });
  ranked.resize(take);
  return ranked;
}

std::size_t fitb_answer(const ModelParams& params, std::span<const Item> outfit,
                        std::span<const Item> candidates, const LossConfig& cfg) {
  if (outfit.empty()) throw InputError("fitb_answer: empty outfit");
  if (candidates.empty()) throw InputError("fitb_answer: no candidates");
  for (const Item& c : candidates) {
    if (c.category != candidates[0].category) {
      throw InputError("fitb_answer: candidates do not share a category");
    }
  }
  std::size_t best = 0;
  double best_dist = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double d = outfit_distance(params, outfit, candidates[i], cfg);
    if (i == 0 || d < best_dist) {
      best = i;
      best_dist = d;
    }
  }
  return best;
}

double compatibility_score(const ModelParams& params, std::span<const Item> outfit,
                           const LossConfig& cfg) {
  if (outfit.size() < 2) throw InputError("compatibility_score: outfit needs >= 2 items");
  std::vector<Vector> x;
  x.reserve(outfit.size());
  for (const Item& it : outfit) x.push_back(project(params, it.raw_feature));
  std::vector<double> dists;
  for (std::size_t i = 0; i < outfit.size(); ++i) {
    for (std::size_t j = i + 1; j < outfit.size(); ++j) {
      const CategoryId ci = outfit[i].category, cj = outfit[j].category;
      const Vector fi = embed(params, x[i], ci, cj);
      const Vector fj = embed(params, x[j], cj, ci);
      dists.push_back(pair_distance(fi, fj, cfg.distance));
    }
  }
  return -mean_distance(dists);
}

}  // namespace csanet
