#ifndef CSANET_EVAL_HPP_
#define CSANET_EVAL_HPP_

#include <span>
#include <string>
#include <vector>

#include "csanet/data.hpp"
#include "csanet/index.hpp"
#include "csanet/loss.hpp"
#include "csanet/model.hpp"

namespace csanet {

/// Probability that a random positive outscores a random negative, ties
/// counted as one half (Mann-Whitney U / (n_pos * n_neg)).
double auc(std::span<const double> scores_pos, std::span<const double> scores_neg);

// ---------------------------------------------------------------------------
// Fill in the blank

struct FitbQuestion {
  std::string name;
  std::vector<Item> outfit;
  std::vector<Item> candidates;
  std::size_t answer = 0;  // index of the positive in `candidates`
};

/**
 * One question per outfit of `split` with at least two items: a random item
 * is held out as the answer and num_candidates - 1 distractors of the same
 * category are drawn from other outfits (of the same split when possible).
 * The answer's position among the candidates is random.
 */
std::vector<FitbQuestion> build_fitb_questions(const Dataset& dataset, Split split,
                                               std::size_t num_candidates, Rng& rng);

struct FitbResult {
  double accuracy = 0.0;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;  // questions with an empty outfit or no candidates
};

/// Empty questions are skipped and counted; malformed ones (fewer than two
/// candidates, answer out of range) raise InputError naming the question.
FitbResult fitb_accuracy(const ModelParams& params, std::span<const FitbQuestion> questions,
                         const LossConfig& cfg, std::size_t threads = 1);

// ---------------------------------------------------------------------------
// Compatibility

struct CompatibilityResult {
  double auc = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

/// Real outfits of `split` are positives; each negative replaces every item of
/// a real outfit with a random item of the same category.
CompatibilityResult compatibility_auc(const ModelParams& params, const Dataset& dataset,
                                      Split split, const LossConfig& cfg, Rng& rng,
                                      std::size_t threads = 1);

// ---------------------------------------------------------------------------
// Retrieval benchmark

struct RetrievalQuery {
  std::vector<Item> outfit;
  ItemId positive = 0;
  CategoryId category;
  std::vector<ItemId> pool;  // contains positive; all of `category`
};

struct RetrievalBenchmark {
  std::size_t pool_size = 0;
  std::vector<RetrievalQuery> queries;
  std::vector<CategoryId> skipped_categories;  // fewer than pool_size items

  void validate() const;
};

/**
 * Test outfits become queries with a held-out positive; each pool is the
 * positive plus pool_size - 1 same-category distractors drawn first from
 * test items, then from train and valid items.
 */
RetrievalBenchmark build_retrieval_benchmark(const Dataset& dataset, std::size_t pool_size,
                                             Rng& rng);

void save_benchmark(const RetrievalBenchmark& bench, const std::string& path);
RetrievalBenchmark load_benchmark(const std::string& path, const Dataset& dataset);

struct RecallTable {
  std::vector<std::size_t> ks;
  std::vector<CategoryId> categories;
  std::vector<std::vector<double>> per_category;  // [category][k]
  std::vector<std::size_t> queries_per_category;
  std::vector<double> mean;                       // mean over categories, per k
};

/// 1-based rank of each query's positive within its pool (EXACT retrieval).
std::vector<std::size_t> positive_ranks(const RetrievalBenchmark& bench,
                                        const ModelParams& params, const CategoryIndex& index,
                                        std::size_t threads = 1);

RecallTable recall_at_k(const RetrievalBenchmark& bench, const ModelParams& params,
                        const CategoryIndex& index, std::span<const std::size_t> ks,
                        std::size_t threads = 1);

}  // namespace csanet

#endif  // CSANET_EVAL_HPP_
