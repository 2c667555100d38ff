#ifndef CSANET_HNSW_HPP_
#define CSANET_HNSW_HPP_

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "csanet/tensor.hpp"

namespace csanet {

struct HnswParams {
  std::size_t m = 16;                // max links per node above layer 0 (2m on layer 0)
  std::size_t ef_construction = 100;
  std::size_t ef_search = 64;
  std::uint64_t seed = 42;

  bool operator==(const HnswParams&) const = default;
};

/**
 * Hierarchical navigable small-world graph over the rows of a matrix.
 *
 * The graph stores only adjacency; the vectors are passed to every call so
 * the owner can keep them in one place. Distances are squared Euclidean.
 * Construction is deterministic for a given seed and insertion order.
 */
class HnswGraph {
 public:
  HnswGraph() = default;
  static HnswGraph build(const Matrix& data, const HnswParams& params);

  /// Up to k (squared distance, row) pairs, ascending, ties by row.
  std::vector<std::pair<double, std::uint32_t>> search(const Matrix& data,
                                                       std::span<const double> query,
                                                       std::size_t k, std::size_t ef) const;

  std::size_t size() const noexcept { return levels_.size(); }
  int max_level() const noexcept { return max_level_; }

 private:
  using Candidate = std::pair<double, std::uint32_t>;

  std::vector<Candidate> search_layer(const Matrix& data, std::span<const double> query,
                                      std::uint32_t entry, std::size_t ef, int level) const;
  std::vector<std::uint32_t> select_neighbors(const Matrix& data,
                                              std::vector<Candidate> candidates,
                                              std::size_t max_links) const;
  void insert(const Matrix& data, std::uint32_t node, int level);

  HnswParams params_;
  std::vector<int> levels_;
  std::vector<std::vector<std::vector<std::uint32_t>>> links_;  // node -> level -> neighbors
  std::uint32_t entry_ = 0;
  int max_level_ = -1;
};

}  // namespace csanet

#endif  // CSANET_HNSW_HPP_
