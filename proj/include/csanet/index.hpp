#ifndef CSANET_INDEX_HPP_
#define CSANET_INDEX_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "csanet/hnsw.hpp"
#include "csanet/loss.hpp"
#include "csanet/model.hpp"

namespace csanet {

enum class SearchMode { Exact, Approx };

struct IndexEntry {
  ItemId id = 0;
  CategoryId target_category;  // the query-side category this embedding was computed for
  Vector embedding;

  bool operator==(const IndexEntry&) const = default;
};

struct Neighbor {
  ItemId id = 0;
  double distance = 0.0;

  bool operator==(const Neighbor&) const = default;
};

/**
 * All items of `item_category`, embedded for queries coming from items of
 * `query_category`: row r is ψ(item_r, query_category, item_category).
 */
struct IndexBucket {
  CategoryId item_category;
  CategoryId query_category;
  std::vector<ItemId> ids;
  Matrix embeddings;  // ids.size() x d
  std::optional<HnswGraph> graph;

  std::size_t size() const noexcept { return ids.size(); }
  /// Row of `id`, or nullopt if absent.
  std::optional<std::size_t> row_of(ItemId id) const;

  void rebuild_lookup();

 private:
  std::unordered_map<ItemId, std::size_t> rows_;
};

struct IndexOptions {
  DistanceKind distance = DistanceKind::Euclidean;
  bool build_graph = true;
  HnswParams hnsw;
  std::size_t threads = 1;
};

/// Category-enumerated index: C x C buckets keyed by
/// (item_category, query_category), C entries per item.
class CategoryIndex {
 public:
  CategoryIndex() = default;
  CategoryIndex(std::size_t dim, std::size_t num_categories, std::uint32_t model_checksum,
                DistanceKind distance, HnswParams hnsw);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t num_categories() const noexcept { return num_categories_; }
  std::uint32_t model_checksum() const noexcept { return model_checksum_; }
  DistanceKind distance() const noexcept { return distance_; }
  const HnswParams& hnsw_params() const noexcept { return hnsw_; }
  bool has_graphs() const noexcept { return has_graphs_; }

  /// Throws InputError for out-of-range categories.
  const IndexBucket& bucket(CategoryId item_category, CategoryId query_category) const;
  IndexBucket& bucket(CategoryId item_category, CategoryId query_category);
  const std::vector<IndexBucket>& buckets() const noexcept { return buckets_; }

  std::size_t num_entries() const;
  std::size_t num_items() const;
  /// Every entry, bucket by bucket in key order.
  std::vector<IndexEntry> entries() const;

  void build_graphs(std::size_t threads = 1);

 private:
  std::size_t dim_ = 0;
  std::size_t num_categories_ = 0;
  std::uint32_t model_checksum_ = 0;
  DistanceKind distance_ = DistanceKind::Euclidean;
  HnswParams hnsw_;
  bool has_graphs_ = false;
  std::vector<IndexBucket> buckets_;
};

CategoryIndex build_index(const ModelParams& params, std::span<const Item> items,
                          const IndexOptions& options = {});

/**
 * k nearest rows of a bucket. EXACT scans linearly; APPROX searches the
 * graph (ef = max(ef, k)) and rescores its hits exactly. Results are sorted
 * by (distance, id). Throws InputError for an empty bucket or k == 0.
 */
std::vector<Neighbor> knn(const IndexBucket& bucket, std::span<const double> query,
                          std::size_t k, SearchMode mode, DistanceKind distance,
                          std::size_t ef = 64);

inline constexpr std::uint32_t kIndexVersion = 1;

void save_index(const CategoryIndex& index, const std::string& path);

/**
 * Loads and verifies an index file (IntegrityError on corruption). If
 * `params` is given and its checksum differs from the stored one, a
 * message is written to `warning` (when non-null) and loading proceeds.
 */
CategoryIndex load_index(const std::string& path, const ModelParams* params = nullptr,
                         std::string* warning = nullptr, std::size_t threads = 1);

}  // namespace csanet

#endif  // CSANET_INDEX_HPP_
