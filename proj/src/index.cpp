#include "csanet/index.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "binary_io.hpp"
#include "csanet/errors.hpp"
#include "csanet/parallel.hpp"

namespace csanet {

std::optional<std::size_t> IndexBucket::row_of(ItemId id) const {
  auto it = rows_.find(id);
  if (it == rows_.end()) return std::nullopt;
  return it->second;
}

void IndexBucket::rebuild_lookup() {
  rows_.clear();
  rows_.reserve(ids.size());
  for (std::size_t r = 0; r < ids.size(); ++r) rows_.emplace(ids[r], r);
}

CategoryIndex::CategoryIndex(std::size_t dim, std::size_t num_categories,
                             std::uint32_t model_checksum, DistanceKind distance,
                             HnswParams hnsw)
    : dim_(dim),
      num_categories_(num_categories),
      model_checksum_(model_checksum),
      distance_(distance),
      hnsw_(hnsw) {
  buckets_.resize(num_categories * num_categories);
  for (std::size_t ic = 0; ic < num_categories; ++ic) {
    for (std::size_t qc = 0; qc < num_categories; ++qc) {
      auto& b = buckets_[ic * num_categories + qc];
      b.item_category = CategoryId(ic);
      b.query_category = CategoryId(qc);
      b.embeddings = Matrix(0, dim);
    }
  }
}

const IndexBucket& CategoryIndex::bucket(CategoryId item_category,
                                         CategoryId query_category) const {
  if (item_category.value >= num_categories_ || query_category.value >= num_categories_) {
    throw InputError("index has no bucket (" + std::to_string(item_category.value) + ", " +
                     std::to_string(query_category.value) + ")");
  }
  return buckets_[item_category.value * num_categories_ + query_category.value];
}

IndexBucket& CategoryIndex::bucket(CategoryId item_category, CategoryId query_category) {
  return const_cast<IndexBucket&>(std::as_const(*this).bucket(item_category, query_category));
}

std::size_t CategoryIndex::num_entries() const {
  std::size_t n = 0;
  for (const auto& b : buckets_) n += b.size();
  return n;
}

std::size_t CategoryIndex::num_items() const {
  // Every item appears once in each of the C buckets of its own category.
  return num_categories_ == 0 ? 0 : num_entries() / num_categories_;
}

std::vector<IndexEntry> CategoryIndex::entries() const {
  std::vector<IndexEntry> out;
  out.reserve(num_entries());
  for (const auto& b : buckets_) {
    for (std::size_t r = 0; r < b.size(); ++r) {
      const auto row = b.embeddings.row(r);
      out.push_back({b.ids[r], b.query_category, Vector(row.begin(), row.end())});
    }
  }
  return out;
}

void CategoryIndex::build_graphs(std::size_t threads) {
  parallel_for(buckets_.size(), threads, [&](std::size_t i) {
    auto& b = buckets_[i];
    b.graph = b.size() ? std::optional(HnswGraph::build(b.embeddings, hnsw_)) : std::nullopt;
  });
  has_graphs_ = true;
}

CategoryIndex build_index(const ModelParams& params, std::span<const Item> items,
                          const IndexOptions& options) {
  params.validate();
  if (items.empty()) throw InputError("build_index: no items");
  const std::size_t C = params.config.num_categories, d = params.config.feature_dim;
  std::unordered_set<ItemId> seen;
  for (const Item& it : items) {
    if (!seen.insert(it.id).second) {
      throw InputError("build_index: duplicate item id " + std::to_string(it.id));
    }
    if (it.category.value >= C) {
      throw InputError("build_index: item " + std::to_string(it.id) +
                       " has category outside the model's range");
    }
    if (it.raw_feature.size() != params.config.raw_dim) {
      throw InputError("build_index: item " + std::to_string(it.id) +
                       " has the wrong feature dimension");
    }
  }
  CategoryIndex index(d, C, params_checksum(params), options.distance, options.hnsw);

  // Group items by category, preserving input order, so every bucket of a
  // category lists the same ids in the same row order.
  std::vector<std::vector<const Item*>> by_cat(C);
  for (const Item& it : items) by_cat[it.category.value].push_back(&it);

  std::vector<Vector> projected(items.size());
  parallel_for(items.size(), options.threads,
               [&](std::size_t i) { projected[i] = project(params, items[i].raw_feature); });
  std::unordered_map<const Item*, std::size_t> pos;
  for (std::size_t i = 0; i < items.size(); ++i) pos.emplace(&items[i], i);

  parallel_for(C * C, options.threads, [&](std::size_t key) {
    const std::size_t ic = key / C, qc = key % C;
    IndexBucket& b = index.bucket(CategoryId(ic), CategoryId(qc));
    const auto& members = by_cat[ic];
    b.ids.resize(members.size());
    b.embeddings = Matrix(members.size(), d);
    for (std::size_t r = 0; r < members.size(); ++r) {
      const Item& it = *members[r];
      b.ids[r] = it.id;
      const Vector f = embed(params, projected[pos.at(&it)], CategoryId(qc), it.category);
      std::copy(f.begin(), f.end(), b.embeddings.row(r).begin());
    }
    b.rebuild_lookup();
  });
  if (options.build_graph) index.build_graphs(options.threads);
  return index;
}

std::vector<Neighbor> knn(const IndexBucket& bucket, std::span<const double> query,
                          std::size_t k, SearchMode mode, DistanceKind distance,
                          std::size_t ef) {
  if (bucket.size() == 0) throw InputError("knn: empty bucket");
  if (k == 0) throw InputError("knn: k must be >= 1");
  if (query.size() != bucket.embeddings.cols()) {
    throw InputError("knn: query dimension does not match the index");
  }
  std::vector<Neighbor> out;
  if (mode == SearchMode::Exact) {
    out.reserve(bucket.size());
    for (std::size_t r = 0; r < bucket.size(); ++r) {
      out.push_back({bucket.ids[r], pair_distance(query, bucket.embeddings.row(r), distance)});
    }
  } else {
    if (!bucket.graph) throw InputError("knn: APPROX search requested but no graph was built");
    for (const auto& [sq, row] : bucket.graph->search(bucket.embeddings, query, k, ef)) {
      out.push_back({bucket.ids[row], pair_distance(query, bucket.embeddings.row(row), distance)});
    }
  }
  auto by_distance_then_id = [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
  };
  const std::size_t take = std::min(k, out.size());
  std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(take), out.end(),
                    by_distance_then_id);
  out.resize(take);
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {
constexpr char kIndexMagic[8] = {'C', 'S', 'A', 'I', 'D', 'X', '\0', '\0'};
}

void save_index(const CategoryIndex& index, const std::string& path) {
  detail::BinaryWriter w;
  w.bytes(kIndexMagic, sizeof(kIndexMagic));
  w.put<std::uint32_t>(kIndexVersion);
  w.put<std::uint64_t>(index.dim());
  w.put<std::uint64_t>(index.num_categories());
  w.put<std::uint64_t>(index.num_items());
  w.put<std::uint32_t>(index.model_checksum());
  w.put<std::uint8_t>(static_cast<std::uint8_t>(index.distance()));
  w.put<std::uint8_t>(index.has_graphs() ? 1 : 0);
  w.put<std::uint64_t>(index.hnsw_params().m);
  w.put<std::uint64_t>(index.hnsw_params().ef_construction);
  w.put<std::uint64_t>(index.hnsw_params().ef_search);
  w.put<std::uint64_t>(index.hnsw_params().seed);
  w.put<std::uint64_t>(index.buckets().size());
  for (const auto& b : index.buckets()) {
    w.put<std::uint64_t>(b.item_category.value);
    w.put<std::uint64_t>(b.query_category.value);
    w.put<std::uint64_t>(b.size());
    for (ItemId id : b.ids) w.put<std::uint64_t>(id);
    w.f64s(b.embeddings.data());
  }
  w.seal();
  w.write_file(path);
}

CategoryIndex load_index(const std::string& path, const ModelParams* params,
                         std::string* warning, std::size_t threads) {
  const auto bytes = detail::BinaryReader::read_file(path);
  detail::BinaryReader r(bytes, "index " + path);
  r.verify_seal();
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (!std::equal(magic, magic + 8, kIndexMagic)) {
    throw IntegrityError("index " + path + ": bad magic bytes");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kIndexVersion) {
    throw IntegrityError("index " + path + ": unsupported version " + std::to_string(version));
  }
  const auto dim = r.get<std::uint64_t>();
  const auto C = r.get<std::uint64_t>();
  const auto num_items = r.get<std::uint64_t>();
  const auto checksum = r.get<std::uint32_t>();
  const auto distance = r.get<std::uint8_t>();
  const bool has_graphs = r.get<std::uint8_t>() != 0;
  HnswParams hnsw;
  hnsw.m = r.get<std::uint64_t>();
  hnsw.ef_construction = r.get<std::uint64_t>();
  hnsw.ef_search = r.get<std::uint64_t>();
  hnsw.seed = r.get<std::uint64_t>();
  const auto nbuckets = r.get<std::uint64_t>();
  if (distance > 1 || nbuckets != C * C || dim == 0) {
    throw IntegrityError("index " + path + ": inconsistent header");
  }
  CategoryIndex index(dim, C, checksum, static_cast<DistanceKind>(distance), hnsw);
  for (std::uint64_t i = 0; i < nbuckets; ++i) {
    const auto ic = r.get<std::uint64_t>();
    const auto qc = r.get<std::uint64_t>();
    const auto count = r.get<std::uint64_t>();
    if (ic * C + qc != i) throw IntegrityError("index " + path + ": buckets out of order");
    if (count > r.remaining() / sizeof(std::uint64_t)) {
      throw IntegrityError("index " + path + ": bucket size exceeds file size");
    }
    IndexBucket& b = index.bucket(CategoryId(ic), CategoryId(qc));
    b.ids.resize(count);
    for (auto& id : b.ids) id = r.get<std::uint64_t>();
    b.embeddings = Matrix(count, dim);
    r.f64s(b.embeddings.data());
    b.rebuild_lookup();
  }
  if (r.remaining() != 0) throw IntegrityError("index " + path + ": trailing bytes");
  if (index.num_entries() != num_items * C) {
    throw IntegrityError("index " + path + ": entry count does not equal C x items");
  }
  if (params && params_checksum(*params) != checksum && warning) {
    *warning = "index " + path + " was built with different model parameters";
  }
  if (has_graphs) index.build_graphs(threads);
  return index;
}

}  // namespace csanet
