#ifndef CSANET_DATA_HPP_
#define CSANET_DATA_HPP_

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "csanet/types.hpp"

namespace csanet {

using Rng = std::mt19937_64;

enum class Split { Train, Valid, Test };

const char* to_string(Split s);
Split split_from_string(const std::string& s);

struct Outfit {
  std::uint64_t id = 0;
  std::vector<ItemId> items;  // ordered
  Split split = Split::Train;

  bool operator==(const Outfit&) const = default;
};

struct CategoryInfo {
  std::size_t id = 0;
  std::string name;

  bool operator==(const CategoryInfo&) const = default;
};

/**
 * Immutable in-memory dataset with constant-time item lookup.
 *
 * Construction validates: category ids are 0..C-1, every item has raw_dim
 * finite features and a known category, item and outfit ids are unique,
 * every outfit reference resolves, and (in disjoint mode) no item is shared
 * between train outfits and valid/test outfits.
 */
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<CategoryInfo> categories, std::size_t raw_dim, std::vector<Item> items,
          std::vector<Outfit> outfits, bool disjoint);

  std::size_t num_categories() const noexcept { return categories_.size(); }
  std::size_t raw_dim() const noexcept { return raw_dim_; }
  bool disjoint() const noexcept { return disjoint_; }
  const std::vector<CategoryInfo>& categories() const noexcept { return categories_; }
  const std::vector<Item>& items() const noexcept { return items_; }
  const std::vector<Outfit>& outfits() const noexcept { return outfits_; }

  bool contains(ItemId id) const { return index_.count(id) != 0; }
  /// Throws DataError (dangling reference) for unknown ids.
  const Item& item(ItemId id) const;
  std::vector<Item> outfit_items(const Outfit& outfit) const;

  std::vector<const Outfit*> outfits_in(Split split) const;
  /// Ids of all items of `category` that appear in outfits of `split`, sorted.
  std::vector<ItemId> items_in(Split split, CategoryId category) const;
  /// Ids of all items of `category`, sorted.
  std::vector<ItemId> items_of(CategoryId category) const;

  bool operator==(const Dataset& o) const {
    return categories_ == o.categories_ && raw_dim_ == o.raw_dim_ && items_ == o.items_ &&
           outfits_ == o.outfits_ && disjoint_ == o.disjoint_;
  }

 private:
  std::vector<CategoryInfo> categories_;
  std::size_t raw_dim_ = 0;
  std::vector<Item> items_;
  std::vector<Outfit> outfits_;
  bool disjoint_ = false;
  std::unordered_map<ItemId, std::size_t> index_;
};

inline constexpr int kManifestVersion = 1;
inline constexpr std::uint32_t kFeatureFileVersion = 1;

/// Manifest is JSON, features a flat float32 file; see docs/formats.md.
Dataset load_dataset(const std::string& manifest_path, const std::string& features_path);
void save_dataset(const Dataset& dataset, const std::string& manifest_path,
                  const std::string& features_path);

struct SyntheticSpec {
  std::size_t num_outfits = 2000;
  std::size_t items_per_outfit = 4;
  std::size_t num_categories = 6;
  std::size_t latent_dim = 4;
  std::size_t raw_dim = 64;
  double noise_sigma = 0.1;
  std::uint64_t rng_seed = 0;
  double train_fraction = 0.8;
  double valid_fraction = 0.1;

  void validate() const;
};

/**
 * Planted-style generator. Each outfit draws a latent style s ~ N(0, I_z)
 * and distinct categories for its slots; slot features are A_c s + σ ε with
 * a fixed random d_raw x z matrix A_c per category. Features are rounded to
 * float32 so a save/load round trip is exact. Outfits are split in order:
 * the first train_fraction are train, then valid, then test.
 */
Dataset generate_synthetic(const SyntheticSpec& spec);

/// The per-category style matrices the generator used (for oracle tests).
std::vector<Matrix> synthetic_style_matrices(const SyntheticSpec& spec);

/// An outfit split into context O and held-out positive p, plus a pool of
/// same-category candidates from other outfits of the split.
struct SampledTriple {
  std::vector<Item> outfit;
  Item positive;
  std::vector<Item> pool;
};

struct SampleStats {
  std::size_t emitted = 0;
  std::size_t skipped_small_outfits = 0;
};

/**
 * One pass over the outfits of `split`. The positive rotates with `epoch`
 * ((epoch + outfit position) mod n), the pool holds up to `pool_size`
 * items of c(p) drawn without replacement from other outfits in the split,
 * and the output order is shuffled with `rng`. Outfits with fewer than two
 * items are skipped and counted.
 */
std::vector<SampledTriple> sample_triples(const Dataset& dataset, Split split,
                                          std::size_t epoch, std::size_t pool_size, Rng& rng,
                                          SampleStats* stats = nullptr);

}  // namespace csanet

#endif  // CSANET_DATA_HPP_
