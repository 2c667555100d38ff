#include "csanet/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_set>

#include "binary_io.hpp"
#include "csanet/errors.hpp"

namespace csanet {

using json = nlohmann::json;

const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "valid") return Split::Valid;
  if (s == "test") return Split::Test;
  throw DataError(DataError::Code::Parse, "unknown split label '" + s + "'");
}

Dataset::Dataset(std::vector<CategoryInfo> categories, std::size_t raw_dim,
                 std::vector<Item> items, std::vector<Outfit> outfits, bool disjoint)
    : categories_(std::move(categories)),
      raw_dim_(raw_dim),
      items_(std::move(items)),
      outfits_(std::move(outfits)),
      disjoint_(disjoint) {
  using Code = DataError::Code;
  for (std::size_t c = 0; c < categories_.size(); ++c) {
    if (categories_[c].id != c) {
      throw DataError(Code::Validation, "category ids must be 0..C-1 in order; got id " +
                                            std::to_string(categories_[c].id) +
                                            " at position " + std::to_string(c));
    }
  }
  index_.reserve(items_.size());
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const Item& it = items_[i];
    if (it.category.value >= categories_.size()) {
      throw DataError(Code::Validation, "item " + std::to_string(it.id) +
                                            " has unknown category " +
                                            std::to_string(it.category.value));
    }
    if (it.raw_feature.size() != raw_dim_) {
      throw DataError(Code::DimensionMismatch,
                      "item " + std::to_string(it.id) + " has feature dimension " +
                          std::to_string(it.raw_feature.size()) + ", expected " +
                          std::to_string(raw_dim_));
    }
    for (double v : it.raw_feature) {
      if (!std::isfinite(v)) {
        throw DataError(Code::Validation,
                        "item " + std::to_string(it.id) + " has a non-finite feature");
      }
    }
    if (!index_.emplace(it.id, i).second) {
      throw DataError(Code::Validation, "duplicate item id " + std::to_string(it.id));
    }
  }
  std::unordered_set<std::uint64_t> outfit_ids;
  std::unordered_set<ItemId> train_items, held_out_items;
  for (const Outfit& o : outfits_) {
    if (!outfit_ids.insert(o.id).second) {
      throw DataError(Code::Validation, "duplicate outfit id " + std::to_string(o.id));
    }
    for (ItemId id : o.items) {
      if (!contains(id)) {
        throw DataError(Code::DanglingReference, "outfit " + std::to_string(o.id) +
                                                     " references missing item id " +
                                                     std::to_string(id));
      }
      (o.split == Split::Train ? train_items : held_out_items).insert(id);
    }
  }
  if (disjoint_) {
    for (ItemId id : held_out_items) {
      if (train_items.count(id)) {
        throw DataError(Code::Validation, "disjoint dataset shares item id " +
                                              std::to_string(id) +
                                              " between train and held-out outfits");
      }
    }
  }
}

const Item& Dataset::item(ItemId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) {
    throw DataError(DataError::Code::DanglingReference, "unknown item id " + std::to_string(id));
  }
  return items_[it->second];
}

std::vector<Item> Dataset::outfit_items(const Outfit& outfit) const {
  std::vector<Item> out;
  out.reserve(outfit.items.size());
  for (ItemId id : outfit.items) out.push_back(item(id));
  return out;
}

std::vector<const Outfit*> Dataset::outfits_in(Split split) const {
  std::vector<const Outfit*> out;
  for (const Outfit& o : outfits_) {
    if (o.split == split) out.push_back(&o);
  }
  return out;
}

std::vector<ItemId> Dataset::items_in(Split split, CategoryId category) const {
  std::set<ItemId> ids;
  for (const Outfit& o : outfits_) {
    if (o.split != split) continue;
    for (ItemId id : o.items) {
      if (item(id).category == category) ids.insert(id);
    }
  }
  return {ids.begin(), ids.end()};
}

std::vector<ItemId> Dataset::items_of(CategoryId category) const {
  std::vector<ItemId> ids;
  for (const Item& it : items_) {
    if (it.category == category) ids.push_back(it.id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

// ---------------------------------------------------------------------------
// Files

namespace {

constexpr char kFeatureMagic[4] = {'C', 'S', 'A', 'F'};

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Code::Io, "cannot open manifest: " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(DataError::Code::Parse, "manifest " + path + ": " + e.what());
  }
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::string& manifest_path,
                  const std::string& features_path) {
  json m;
  m["format"] = "csanet-manifest";
  m["version"] = kManifestVersion;
  m["raw_dim"] = dataset.raw_dim();
  m["disjoint"] = dataset.disjoint();
  m["categories"] = json::array();
  for (const auto& c : dataset.categories()) {
    m["categories"].push_back({{"id", c.id}, {"name", c.name}});
  }
  m["items"] = json::array();
  for (std::size_t i = 0; i < dataset.items().size(); ++i) {
    const Item& it = dataset.items()[i];
    m["items"].push_back({{"id", it.id}, {"category", it.category.value}, {"offset", i}});
  }
  m["outfits"] = json::array();
  for (const Outfit& o : dataset.outfits()) {
    m["outfits"].push_back({{"id", o.id}, {"split", to_string(o.split)}, {"items", o.items}});
  }
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw DataError(DataError::Code::Io, "cannot write manifest: " + manifest_path);
  out << m.dump(1) << '\n';

  detail::BinaryWriter payload;
  for (const Item& it : dataset.items()) {
    for (double v : it.raw_feature) payload.put<float>(static_cast<float>(v));
  }
  detail::BinaryWriter w;
  w.bytes(kFeatureMagic, sizeof(kFeatureMagic));
  w.put<std::uint32_t>(kFeatureFileVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(dataset.raw_dim()));
  w.put<std::uint64_t>(dataset.items().size());
  w.put<std::uint32_t>(detail::crc32(payload.buffer()));
  w.bytes(payload.buffer().data(), payload.buffer().size());
  w.write_file(features_path);
}

Dataset load_dataset(const std::string& manifest_path, const std::string& features_path) {
  using Code = DataError::Code;
  const json m = read_json(manifest_path);

  std::vector<CategoryInfo> categories;
  std::vector<Item> items;
  std::vector<Outfit> outfits;
  std::vector<std::size_t> offsets;
  std::size_t raw_dim = 0;
  bool disjoint = false;
  try {
    if (m.at("format").get<std::string>() != "csanet-manifest") {
      throw DataError(Code::Parse, "manifest " + manifest_path + ": unexpected format tag");
    }
    const int version = m.at("version").get<int>();
    if (version != kManifestVersion) {
      throw DataError(Code::Parse, "manifest " + manifest_path + ": unsupported version " +
                                       std::to_string(version));
    }
    raw_dim = m.at("raw_dim").get<std::size_t>();
    disjoint = m.value("disjoint", false);
    for (const auto& c : m.at("categories")) {
      categories.push_back({c.at("id").get<std::size_t>(), c.at("name").get<std::string>()});
    }
    for (const auto& it : m.at("items")) {
      Item item;
      item.id = it.at("id").get<ItemId>();
      item.category = CategoryId(it.at("category").get<std::size_t>());
      items.push_back(std::move(item));
      offsets.push_back(it.at("offset").get<std::size_t>());
    }
    for (const auto& o : m.at("outfits")) {
      Outfit outfit;
      outfit.id = o.at("id").get<std::uint64_t>();
      outfit.split = split_from_string(o.at("split").get<std::string>());
      outfit.items = o.at("items").get<std::vector<ItemId>>();
      outfits.push_back(std::move(outfit));
    }
  } catch (const json::exception& e) {
    throw DataError(Code::Parse, "manifest " + manifest_path + ": " + e.what());
  }

  const auto bytes = detail::BinaryReader::read_file(features_path);
  detail::BinaryReader r(bytes, "features " + features_path);
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kFeatureMagic)) {
    throw DataError(Code::Parse, "features " + features_path + ": bad magic bytes");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kFeatureFileVersion) {
    throw DataError(Code::Parse, "features " + features_path + ": unsupported version " +
                                     std::to_string(version));
  }
  const auto dims = r.get<std::uint32_t>();
  const auto count = r.get<std::uint64_t>();
  const auto checksum = r.get<std::uint32_t>();
  if (dims != raw_dim) {
    throw DataError(Code::DimensionMismatch,
                    "features " + features_path + " have dimension " + std::to_string(dims) +
                        " but manifest declares " + std::to_string(raw_dim));
  }
  if (r.remaining() != count * dims * sizeof(float)) {
    throw IntegrityError("features " + features_path + ": payload size does not match header");
  }
  const std::span<const std::uint8_t> payload(bytes.data() + (bytes.size() - r.remaining()),
                                              r.remaining());
  if (detail::crc32(payload) != checksum) {
    throw IntegrityError("features " + features_path + ": checksum mismatch");
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (offsets[i] >= count) {
      throw DataError(Code::DanglingReference,
                      "item " + std::to_string(items[i].id) + " references feature row " +
                          std::to_string(offsets[i]) + " beyond " + std::to_string(count));
    }
    items[i].raw_feature.resize(dims);
    const std::uint8_t* row = payload.data() + offsets[i] * dims * sizeof(float);
    for (std::size_t j = 0; j < dims; ++j) {
      float v;
      std::memcpy(&v, row + j * sizeof(float), sizeof(float));
      items[i].raw_feature[j] = v;
    }
  }
  return Dataset(std::move(categories), raw_dim, std::move(items), std::move(outfits),
                 disjoint);
}

// ---------------------------------------------------------------------------
// Synthetic generator

void SyntheticSpec::validate() const {
  if (num_outfits < 1) throw InputError("num_outfits must be >= 1");
  if (items_per_outfit < 1) throw InputError("items_per_outfit must be >= 1");
  if (num_categories < 2) throw InputError("num_categories must be >= 2");
  if (items_per_outfit > num_categories) {
    throw InputError("items_per_outfit (" + std::to_string(items_per_outfit) +
                     ") exceeds num_categories (" + std::to_string(num_categories) +
                     "): outfit categories must be distinct");
  }
  if (latent_dim < 1 || latent_dim > raw_dim) {
    throw InputError("latent_dim must be in [1, raw_dim]");
  }
  if (!(noise_sigma >= 0.0)) throw InputError("noise_sigma must be >= 0");
  if (!(train_fraction >= 0.0 && valid_fraction >= 0.0 &&
        train_fraction + valid_fraction <= 1.0)) {
    throw InputError("split fractions must be nonnegative and sum to at most 1");
  }
}

namespace {

std::vector<Matrix> draw_style_matrices(const SyntheticSpec& spec, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(double(spec.latent_dim)));
  std::vector<Matrix> styles;
  for (std::size_t c = 0; c < spec.num_categories; ++c) {
    Matrix a(spec.raw_dim, spec.latent_dim);
    for (double& v : a.data()) v = normal(rng);
    styles.push_back(std::move(a));
  }
  return styles;
}

}  // namespace

std::vector<Matrix> synthetic_style_matrices(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.rng_seed);
  return draw_style_matrices(spec, rng);
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.rng_seed);
  const auto styles = draw_style_matrices(spec, rng);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<CategoryInfo> categories;
  for (std::size_t c = 0; c < spec.num_categories; ++c) {
    categories.push_back({c, "category_" + std::to_string(c)});
  }

  const auto n_train = static_cast<std::size_t>(spec.train_fraction * double(spec.num_outfits));
  const auto n_valid = static_cast<std::size_t>(spec.valid_fraction * double(spec.num_outfits));

  std::vector<Item> items;
  std::vector<Outfit> outfits;
  items.reserve(spec.num_outfits * spec.items_per_outfit);
  std::vector<std::size_t> cats(spec.num_categories);
  Vector latent(spec.latent_dim);
  ItemId next_id = 1;
  for (std::size_t o = 0; o < spec.num_outfits; ++o) {
    Outfit outfit;
    outfit.id = o;
    outfit.split = o < n_train ? Split::Train
                   : o < n_train + n_valid ? Split::Valid
                                           : Split::Test;
    for (double& s : latent) s = normal(rng);
    std::iota(cats.begin(), cats.end(), std::size_t{0});
    std::shuffle(cats.begin(), cats.end(), rng);
    for (std::size_t slot = 0; slot < spec.items_per_outfit; ++slot) {
      const Matrix& a = styles[cats[slot]];
      Item item;
      item.id = next_id++;
      item.category = CategoryId(cats[slot]);
      item.raw_feature.resize(spec.raw_dim);
      for (std::size_t r = 0; r < spec.raw_dim; ++r) {
        double v = 0.0;
        for (std::size_t q = 0; q < spec.latent_dim; ++q) v += a(r, q) * latent[q];
        v += spec.noise_sigma * normal(rng);
        item.raw_feature[r] = static_cast<float>(v);
      }
      outfit.items.push_back(item.id);
      items.push_back(std::move(item));
    }
    outfits.push_back(std::move(outfit));
  }
  return Dataset(std::move(categories), spec.raw_dim, std::move(items), std::move(outfits),
                 true);
}

// ---------------------------------------------------------------------------
// Triple sampling

std::vector<SampledTriple> sample_triples(const Dataset& dataset, Split split,
                                          std::size_t epoch, std::size_t pool_size, Rng& rng,
                                          SampleStats* stats) {
  const auto outfits = dataset.outfits_in(split);
  if (outfits.empty()) {
    throw InputError(std::string("sample_triples: split '") + to_string(split) + "' is empty");
  }
  std::vector<std::vector<ItemId>> by_category(dataset.num_categories());
  for (std::size_t c = 0; c < by_category.size(); ++c) {
    by_category[c] = dataset.items_in(split, CategoryId(c));
  }

  SampleStats local;
  std::vector<SampledTriple> out;
  out.reserve(outfits.size());
  std::vector<ItemId> candidates;
  for (std::size_t pos = 0; pos < outfits.size(); ++pos) {
    const Outfit& o = *outfits[pos];
    const std::size_t n = o.items.size();
    if (n < 2) {
      ++local.skipped_small_outfits;
      continue;
    }
    const std::size_t p = (epoch + pos) % n;
    SampledTriple t;
    t.positive = dataset.item(o.items[p]);
    for (std::size_t i = 0; i < n; ++i) {
      if (i != p) t.outfit.push_back(dataset.item(o.items[i]));
    }
    candidates.clear();
    for (ItemId id : by_category[t.positive.category.value]) {
      if (std::find(o.items.begin(), o.items.end(), id) == o.items.end()) {
        candidates.push_back(id);
      }
    }
    const std::size_t take = std::min(pool_size, candidates.size());
    for (std::size_t i = 0; i < take; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
      std::swap(candidates[i], candidates[pick(rng)]);
      t.pool.push_back(dataset.item(candidates[i]));
    }
    out.push_back(std::move(t));
    ++local.emitted;
  }
  std::shuffle(out.begin(), out.end(), rng);
  if (stats) *stats = local;
  return out;
}

}  // namespace csanet
