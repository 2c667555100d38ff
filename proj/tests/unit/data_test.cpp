#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "csanet/data.hpp"
#include "csanet/errors.hpp"

namespace csanet {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("csanet_data_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

Dataset minimal_dataset() {
  std::vector<CategoryInfo> cats{{0, "top"}, {1, "shoe"}};
  std::vector<Item> items{{10, CategoryId(0), {0.5, -1.25, 2.0}},
                          {11, CategoryId(1), {1.0, 0.0, -3.5}}};
  std::vector<Outfit> outfits{{7, {10, 11}, Split::Train}};
  return Dataset(cats, 3, items, outfits, false);
}

DataError::Code code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const DataError& e) {
    return e.code();
  }
  ADD_FAILURE() << "no DataError thrown";
  return DataError::Code::Io;
}

TEST(Dataset, MinimalManifestRoundTrips) {
  TempDir dir;
  const Dataset ds = minimal_dataset();
  save_dataset(ds, dir.file("m.json"), dir.file("f.bin"));
  const Dataset back = load_dataset(dir.file("m.json"), dir.file("f.bin"));
  EXPECT_EQ(back, ds);
  EXPECT_EQ(back.item(11).raw_feature, (Vector{1.0, 0.0, -3.5}));
}

TEST(Dataset, LookupAndSplitQueries) {
  const Dataset ds = minimal_dataset();
  EXPECT_TRUE(ds.contains(10));
  EXPECT_FALSE(ds.contains(12));
  EXPECT_EQ(ds.item(10).category, CategoryId(0));
  EXPECT_EQ(ds.outfits_in(Split::Train).size(), 1u);
  EXPECT_TRUE(ds.outfits_in(Split::Test).empty());
  EXPECT_EQ(ds.items_in(Split::Train, CategoryId(1)), (std::vector<ItemId>{11}));
  EXPECT_EQ(ds.items_of(CategoryId(0)), (std::vector<ItemId>{10}));
  EXPECT_EQ(code_of([&] { ds.item(99); }), DataError::Code::DanglingReference);
}

TEST(Dataset, DanglingReferenceNamesTheId) {
  std::vector<CategoryInfo> cats{{0, "a"}, {1, "b"}};
  std::vector<Item> items{{1, CategoryId(0), {0.0}}};
  std::vector<Outfit> outfits{{0, {1, 4242}, Split::Train}};
  try {
    Dataset(cats, 1, items, outfits, false);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.code(), DataError::Code::DanglingReference);
    EXPECT_NE(std::string(e.what()).find("4242"), std::string::npos);
  }
}

TEST(Dataset, DisjointModeRejectsSharedItems) {
  std::vector<CategoryInfo> cats{{0, "a"}, {1, "b"}};
  std::vector<Item> items{{1, CategoryId(0), {0.0}}, {2, CategoryId(1), {1.0}},
                          {3, CategoryId(1), {2.0}}};
  std::vector<Outfit> outfits{{0, {1, 2}, Split::Train}, {1, {1, 3}, Split::Test}};
  EXPECT_NO_THROW(Dataset(cats, 1, items, outfits, false));
  EXPECT_EQ(code_of([&] { Dataset(cats, 1, items, outfits, true); }), DataError::Code::Validation);
}

TEST(Dataset, ValidationErrors) {
  std::vector<CategoryInfo> cats{{0, "a"}, {1, "b"}};
  auto make = [&](std::vector<Item> items, std::vector<Outfit> outfits = {}) {
    return [=] { Dataset(cats, 2, items, outfits, false); };
  };
  EXPECT_EQ(code_of(make({{1, CategoryId(0), {0.0}}})), DataError::Code::DimensionMismatch);
  EXPECT_EQ(code_of(make({{1, CategoryId(5), {0.0, 1.0}}})), DataError::Code::Validation);
  EXPECT_EQ(code_of(make({{1, CategoryId(0), {0.0, std::nan("")}}})), DataError::Code::Validation);
  EXPECT_EQ(code_of(make({{1, CategoryId(0), {0.0, 1.0}}, {1, CategoryId(1), {0.0, 1.0}}})),
            DataError::Code::Validation);
  EXPECT_EQ(code_of(make({{1, CategoryId(0), {0.0, 1.0}}},
                         {{0, {1}, Split::Train}, {0, {1}, Split::Valid}})),
            DataError::Code::Validation);
  std::vector<CategoryInfo> gap{{0, "a"}, {2, "c"}};
  EXPECT_EQ(code_of([&] { Dataset(gap, 1, {}, {}, false); }), DataError::Code::Validation);
}

TEST(Dataset, LoadErrors) {
  TempDir dir;
  const Dataset ds = minimal_dataset();
  save_dataset(ds, dir.file("m.json"), dir.file("f.bin"));
  EXPECT_EQ(code_of([&] { load_dataset(dir.file("missing.json"), dir.file("f.bin")); }),
            DataError::Code::Io);
  {
    std::ofstream(dir.file("bad.json")) << "{ not json";
  }
  EXPECT_EQ(code_of([&] { load_dataset(dir.file("bad.json"), dir.file("f.bin")); }),
            DataError::Code::Parse);

  nlohmann::json m;
  std::ifstream(dir.file("m.json")) >> m;
  m["outfits"][0]["items"].push_back(999);
  std::ofstream(dir.file("dangling.json")) << m.dump();
  EXPECT_EQ(code_of([&] { load_dataset(dir.file("dangling.json"), dir.file("f.bin")); }),
            DataError::Code::DanglingReference);

  m = nlohmann::json();
  std::ifstream(dir.file("m.json")) >> m;
  m["outfits"][0]["split"] = "holdout";
  std::ofstream(dir.file("split.json")) << m.dump();
  EXPECT_EQ(code_of([&] { load_dataset(dir.file("split.json"), dir.file("f.bin")); }),
            DataError::Code::Parse);
}

TEST(Dataset, CorruptFeatureFileIsAnIntegrityError) {
  TempDir dir;
  save_dataset(minimal_dataset(), dir.file("m.json"), dir.file("f.bin"));
  std::string bytes;
  {
    std::ifstream in(dir.file("f.bin"), std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  std::string flipped = bytes;
  flipped.back() ^= 0x40;
  std::ofstream(dir.file("flip.bin"), std::ios::binary) << flipped;
  EXPECT_THROW(load_dataset(dir.file("m.json"), dir.file("flip.bin")), IntegrityError);
  std::ofstream(dir.file("short.bin"), std::ios::binary) << bytes.substr(0, bytes.size() - 3);
  EXPECT_THROW(load_dataset(dir.file("m.json"), dir.file("short.bin")), IntegrityError);
}

TEST(Split, StringConversions) {
  for (Split s : {Split::Train, Split::Valid, Split::Test}) {
    EXPECT_EQ(split_from_string(to_string(s)), s);
  }
  EXPECT_THROW(split_from_string("dev"), DataError);
}

TEST(Synthetic, SameSeedGivesIdenticalDatasetsAndFiles) {
  TempDir dir;
  SyntheticSpec s;
  s.num_outfits = 50;
  const Dataset a = generate_synthetic(s);
  const Dataset b = generate_synthetic(s);
  EXPECT_EQ(a, b);
  save_dataset(a, dir.file("a.json"), dir.file("a.bin"));
  save_dataset(b, dir.file("b.json"), dir.file("b.bin"));
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  EXPECT_EQ(slurp(dir.file("a.json")), slurp(dir.file("b.json")));
  EXPECT_EQ(slurp(dir.file("a.bin")), slurp(dir.file("b.bin")));
  EXPECT_EQ(load_dataset(dir.file("a.json"), dir.file("a.bin")), a);
  s.rng_seed = 1;
  EXPECT_NE(generate_synthetic(s), a);
}

TEST(Synthetic, ShapeAndSplits) {
  SyntheticSpec s;
  s.num_outfits = 100;
  const Dataset ds = generate_synthetic(s);
  EXPECT_EQ(ds.items().size(), 400u);
  EXPECT_EQ(ds.outfits_in(Split::Train).size(), 80u);
  EXPECT_EQ(ds.outfits_in(Split::Valid).size(), 10u);
  EXPECT_EQ(ds.outfits_in(Split::Test).size(), 10u);
  EXPECT_TRUE(ds.disjoint());
  for (const Outfit& o : ds.outfits()) {
    std::set<std::size_t> cats;
    for (const Item& it : ds.outfit_items(o)) cats.insert(it.category.value);
    EXPECT_EQ(cats.size(), 4u);
  }
}

TEST(Synthetic, RejectsBadSpecs) {
  SyntheticSpec s;
  s.items_per_outfit = 7;
  EXPECT_THROW(generate_synthetic(s), InputError);
  s = SyntheticSpec{};
  s.latent_dim = 100;
  EXPECT_THROW(generate_synthetic(s), InputError);
  s = SyntheticSpec{};
  s.train_fraction = 0.95;
  EXPECT_THROW(generate_synthetic(s), InputError);
}

// Least-squares latent for x ≈ A s (A is raw_dim x z) via normal equations.
Vector recover_latent(const Matrix& a, const Vector& x) {
  const std::size_t z = a.cols();
  std::vector<std::vector<double>> m(z, std::vector<double>(z + 1, 0.0));
  for (std::size_t i = 0; i < z; ++i) {
    for (std::size_t j = 0; j < z; ++j) {
      for (std::size_t r = 0; r < a.rows(); ++r) m[i][j] += a(r, i) * a(r, j);
    }
    for (std::size_t r = 0; r < a.rows(); ++r) m[i][z] += a(r, i) * x[r];
  }
  for (std::size_t c = 0; c < z; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < z; ++r) {
      if (std::abs(m[r][c]) > std::abs(m[piv][c])) piv = r;
    }
    std::swap(m[c], m[piv]);
    for (std::size_t r = 0; r < z; ++r) {
      if (r == c) continue;
      const double f = m[r][c] / m[c][c];
      for (std::size_t k = c; k <= z; ++k) m[r][k] -= f * m[c][k];
    }
  }
  Vector s(z);
  for (std::size_t i = 0; i < z; ++i) s[i] = m[i][z] / m[i][i];
  return s;
}

double cosine(const Vector& a, const Vector& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

TEST(Synthetic, NoiselessItemsShareARecoverableLatent) {
  SyntheticSpec s;
  s.num_outfits = 30;
  s.noise_sigma = 0.0;
  const Dataset ds = generate_synthetic(s);
  const auto styles = synthetic_style_matrices(s);
  for (const Outfit& o : ds.outfits()) {
    const auto items = ds.outfit_items(o);
    const Vector ref = recover_latent(styles[items[0].category.value], items[0].raw_feature);
    for (const Item& it : items) {
      const Vector lat = recover_latent(styles[it.category.value], it.raw_feature);
      for (std::size_t q = 0; q < lat.size(); ++q) EXPECT_NEAR(lat[q], ref[q], 1e-5);
    }
  }
}

TEST(Synthetic, WithinOutfitLatentsAlignBetterThanAcross) {
  SyntheticSpec s;
  s.num_outfits = 200;
  const Dataset ds = generate_synthetic(s);
  const auto styles = synthetic_style_matrices(s);
  std::vector<std::vector<Vector>> lat;
  for (const Outfit& o : ds.outfits()) {
    std::vector<Vector> per;
    for (const Item& it : ds.outfit_items(o)) per.push_back(recover_latent(styles[it.category.value], it.raw_feature));
    lat.push_back(per);
  }
  double within = 0, across = 0;
  std::size_t nw = 0, na = 0;
  for (std::size_t o = 0; o < lat.size(); ++o) {
    for (std::size_t i = 1; i < lat[o].size(); ++i) {
      within += cosine(lat[o][0], lat[o][i]);
      ++nw;
    }
    const auto& other = lat[(o + 1) % lat.size()];
    across += cosine(lat[o][0], other[1]);
    ++na;
  }
  EXPECT_GT(within / nw, 0.9);
  EXPECT_LT(std::abs(across / na), 0.2);
}

TEST(SampleTriples, TwoItemOutfitSplitsIntoOneAndOne) {
  std::vector<CategoryInfo> cats{{0, "a"}, {1, "b"}};
  std::vector<Item> items{{1, CategoryId(0), {0.0}}, {2, CategoryId(1), {1.0}},
                          {3, CategoryId(0), {2.0}}, {4, CategoryId(1), {3.0}},
                          {5, CategoryId(0), {4.0}}};
  std::vector<Outfit> outfits{{0, {1, 2}, Split::Train}, {1, {3, 4}, Split::Train},
                              {2, {5}, Split::Train}};
  const Dataset ds(cats, 1, items, outfits, true);
  Rng rng(1);
  SampleStats stats;
  const auto t = sample_triples(ds, Split::Train, 0, 10, rng, &stats);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(stats.emitted, 2u);
  EXPECT_EQ(stats.skipped_small_outfits, 1u);
  for (const auto& st : t) {
    EXPECT_EQ(st.outfit.size(), 1u);
    EXPECT_NE(st.outfit[0].id, st.positive.id);
    for (const auto& c : st.pool) {
      EXPECT_EQ(c.category, st.positive.category);
      EXPECT_NE(c.id, st.positive.id);
    }
  }
}

TEST(SampleTriples, InvariantsAndDisjointness) {
  SyntheticSpec s;
  s.num_outfits = 300;
  const Dataset ds = generate_synthetic(s);
  std::set<ItemId> held_out;
  for (Split sp : {Split::Valid, Split::Test}) {
    for (const Outfit* o : ds.outfits_in(sp)) held_out.insert(o->items.begin(), o->items.end());
  }
  Rng rng(4);
  for (std::size_t epoch = 0; epoch < 3; ++epoch) {
    for (const auto& st : sample_triples(ds, Split::Train, epoch, 20, rng)) {
      EXPECT_EQ(st.pool.size(), 20u);
      std::set<ItemId> ids{st.positive.id};
      for (const auto& o : st.outfit) ids.insert(o.id);
      for (const auto& c : st.pool) {
        EXPECT_EQ(c.category, st.positive.category);
        EXPECT_FALSE(ids.count(c.id));
        EXPECT_FALSE(held_out.count(c.id));
      }
      EXPECT_FALSE(held_out.count(st.positive.id));
    }
  }
}

TEST(SampleTriples, PositiveRotatesUniformly) {
  SyntheticSpec s;
  s.num_outfits = 20;
  const Dataset ds = generate_synthetic(s);
  std::map<ItemId, int> hits;
  Rng rng(2);
  for (std::size_t epoch = 0; epoch < 1000; ++epoch) {
    for (const auto& st : sample_triples(ds, Split::Train, epoch, 3, rng)) ++hits[st.positive.id];
  }
  for (const Outfit* o : ds.outfits_in(Split::Train)) {
    for (ItemId id : o->items) EXPECT_NEAR(hits[id] / 1000.0, 0.25, 0.05);
  }
}

TEST(SampleTriples, SeededAndShuffled) {
  SyntheticSpec s;
  s.num_outfits = 100;
  const Dataset ds = generate_synthetic(s);
  Rng a(3), b(3);
  const auto ta = sample_triples(ds, Split::Train, 0, 5, a);
  const auto tb = sample_triples(ds, Split::Train, 0, 5, b);
  ASSERT_EQ(ta.size(), tb.size());
  bool in_order = true;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    EXPECT_EQ(ta[i].positive, tb[i].positive);
    EXPECT_EQ(ta[i].pool, tb[i].pool);
    if (i > 0 && ta[i].positive.id < ta[i - 1].positive.id) in_order = false;
  }
  EXPECT_FALSE(in_order);
  EXPECT_THROW(sample_triples(Dataset(), Split::Test, 0, 5, a), InputError);
}

}  // namespace
}  // namespace csanet
