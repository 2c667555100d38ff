#include <gtest/gtest.h>

#include <random>

#include "csanet/errors.hpp"
#include "csanet/loss.hpp"
#include "test_support.hpp"

namespace csanet {
namespace {

ModelConfig cfg_small() {
  ModelConfig c;
  c.feature_dim = 4;
  c.raw_dim = 4;
  c.num_subspaces = 2;
  c.num_categories = 3;
  c.attention_hidden = 5;
  c.projector = ProjectorMode::Learnable;
  c.projector_init_scale = 1.0;
  return c;
}

TrainingTriple random_triple(std::mt19937_64& rng, std::size_t n, std::size_t m,
                             std::size_t dim = 4, std::size_t C = 3) {
  std::uniform_int_distribution<std::size_t> cat(0, C - 1);
  TrainingTriple t;
  ItemId id = 1;
  for (std::size_t i = 0; i < n; ++i) t.outfit.push_back(testing::random_item(id++, cat(rng), dim, rng));
  const std::size_t pc = cat(rng);
  t.positive = testing::random_item(id++, pc, dim, rng);
  for (std::size_t j = 0; j < m; ++j) t.negatives.push_back(testing::random_item(id++, pc, dim, rng));
  return t;
}

TEST(PairDistance, WorkedExamples) {
  const Vector a{0.0, 0.0}, b{3.0, 4.0};
  EXPECT_EQ(pair_distance(a, b, DistanceKind::Euclidean), 5.0);
  EXPECT_EQ(pair_distance(a, b, DistanceKind::SquaredEuclidean), 25.0);
  EXPECT_EQ(pair_distance(b, b, DistanceKind::Euclidean), 0.0);
}

TEST(PairDistance, MatchesComponentwiseOracle) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    Vector a(17), b(17);
    for (std::size_t j = 0; j < 17; ++j) {
      a[j] = n(rng);
      b[j] = n(rng);
    }
    for (auto kind : {DistanceKind::Euclidean, DistanceKind::SquaredEuclidean}) {
      EXPECT_NEAR(pair_distance(a, b, kind), testing::oracle_distance(a, b, kind), 1e-12);
    }
  }
}

TEST(PairDistance, DimensionMismatchThrows) {
  EXPECT_THROW(pair_distance(Vector{1.0}, Vector{1.0, 2.0}, DistanceKind::Euclidean), InputError);
}

TEST(MeanDistance, IsOrderIndependentBitwise) {
  std::vector<double> v{0.1, 1e-17, 3.3, 7.0e5, 0.2, 1e-9};
  const double base = mean_distance(v);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(v.begin(), v.end(), rng);
    EXPECT_EQ(mean_distance(v), base);
  }
  EXPECT_THROW(mean_distance(std::vector<double>{}), InputError);
}

TEST(Aggregate, WorkedExamples) {
  const std::vector<double> d{0.4, 0.9, 0.2};
  LossConfig c;
  c.aggregation = Aggregation::Min;
  EXPECT_EQ(aggregate_negatives(d, c), 0.2);
  c.aggregation = Aggregation::Average;
  EXPECT_NEAR(aggregate_negatives(d, c), 0.5, 1e-15);
  for (auto a : {Aggregation::Min, Aggregation::Average}) {
    c.aggregation = a;
    EXPECT_EQ(aggregate_negatives(std::vector<double>{0.37}, c), 0.37);
  }
  EXPECT_THROW(aggregate_negatives(std::vector<double>{}, c), InputError);
}

TEST(OutfitDistance, SingleItemEqualsPairDistance) {
  const ModelParams p = testing::jittered_params(cfg_small(), 1);
  std::mt19937_64 rng(3);
  const Item o = testing::random_item(1, 0, 4, rng);
  const Item s = testing::random_item(2, 2, 4, rng);
  const std::vector<Item> outfit{o};
  LossConfig c;
  const double want = pair_distance(embed_item(p, o, s.category),
                                    embed_candidate(p, s, o.category), c);
  EXPECT_EQ(outfit_distance(p, outfit, s, c), want);
}

TEST(OutfitDistance, IdenticalEmbeddingsGiveZero) {
  const ModelParams p = testing::jittered_params(cfg_small(), 1);
  std::mt19937_64 rng(3);
  Item s = testing::random_item(9, 1, 4, rng);
  Item o = s;
  o.id = 10;  // same category and feature: both sides see (1, 1)
  const std::vector<Item> outfit{o, o, o};
  EXPECT_EQ(outfit_distance(p, outfit, s, LossConfig{}), 0.0);
}

TEST(OutfitDistance, MatchesComposedOracle) {
  const ModelParams p = testing::jittered_params(cfg_small(), 4);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const TrainingTriple t = random_triple(rng, 3, 1);
    for (auto kind : {DistanceKind::Euclidean, DistanceKind::SquaredEuclidean}) {
      LossConfig c;
      c.distance = kind;
      EXPECT_TRUE(testing::near_rel(outfit_distance(p, t.outfit, t.positive, c),
                                    testing::oracle_outfit_distance(p, t.outfit, t.positive, kind),
                                    1e-12));
    }
  }
}

TEST(OutfitDistance, IsInvariantToOutfitOrder) {
  const ModelParams p = testing::jittered_params(cfg_small(), 4);
  std::mt19937_64 rng(6);
  TrainingTriple t = random_triple(rng, 5, 1);
  const double base = outfit_distance(p, t.outfit, t.positive, LossConfig{});
  for (int i = 0; i < 10; ++i) {
    std::shuffle(t.outfit.begin(), t.outfit.end(), rng);
    EXPECT_EQ(outfit_distance(p, t.outfit, t.positive, LossConfig{}), base);
  }
}

TEST(RankingLoss, SatisfiedMarginIsZero) {
  const ModelParams p = testing::jittered_params(cfg_small(), 1);
  std::mt19937_64 rng(7);
  TrainingTriple t;
  Item pos = testing::random_item(1, 1, 4, rng);
  Item anchor = pos;
  anchor.id = 2;
  t.outfit = {anchor};
  t.positive = pos;  // D_p = 0
  Item far = testing::random_item(3, 1, 4, rng);
  for (double& v : far.raw_feature) v *= 100.0;
  t.negatives = {far};
  EXPECT_EQ(outfit_ranking_loss(p, t, LossConfig{}), 0.0);
}

TEST(RankingLoss, TieGivesExactlyTheMargin) {
  const ModelParams p = testing::jittered_params(cfg_small(), 1);
  std::mt19937_64 rng(7);
  TrainingTriple t = random_triple(rng, 2, 1);
  t.negatives[0] = t.positive;
  t.negatives[0].id = 99;
  LossConfig c;
  c.margin = 0.3;
  EXPECT_EQ(outfit_ranking_loss(p, t, c), 0.3);
}

TEST(RankingLoss, HandSetInstanceMatchesOracle) {
  ModelConfig mc;
  mc.feature_dim = 2;
  mc.raw_dim = 2;
  mc.num_subspaces = 2;
  mc.num_categories = 3;
  mc.attention_hidden = 2;
  mc.projector = ProjectorMode::Identity;
  ModelParams p = init_params(mc);
  p.masks.data() = {1.0, 0.5, 0.2, 1.0};
  p.attn_w1.data() = {0.3, -0.1, 0.2, 0.4, -0.5, 0.1, 0.6, 0.2, -0.3, 0.7, 0.1, 0.1};
  p.attn_b1 = {0.05, -0.02};
  p.attn_w2.data() = {1.0, -1.0, 0.5, 0.25};
  p.attn_b2 = {0.1, 0.0};
  auto item = [](ItemId id, std::size_t c, double a, double b) {
    return Item{id, CategoryId(c), Vector{a, b}};
  };
  TrainingTriple t;
  t.outfit = {item(1, 0, 1.0, 0.5), item(2, 1, -0.3, 0.8)};
  t.positive = item(3, 2, 0.9, 0.6);
  t.negatives = {item(4, 2, -1.0, 0.2), item(5, 2, 0.4, -0.7)};
  for (auto agg : {Aggregation::Min, Aggregation::Average}) {
    LossConfig c;
    c.aggregation = agg;
    c.margin = 0.3;
    EXPECT_TRUE(testing::near_rel(outfit_ranking_loss(p, t, c),
                                  testing::oracle_ranking_loss(p, t, c), 1e-12));
  }
}

TEST(RankingLoss, PropertiesOverRandomInstances) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 40; ++trial) {
    const ModelParams p = testing::jittered_params(cfg_small(), trial);
    const TrainingTriple t = random_triple(rng, 1 + trial % 3, 1 + trial % 4);
    LossConfig mn, av;
    mn.aggregation = Aggregation::Min;
    av.aggregation = Aggregation::Average;
    const double lmin = outfit_ranking_loss(p, t, mn);
    const double lavg = outfit_ranking_loss(p, t, av);
    EXPECT_GE(lmin, 0.0);
    EXPECT_GE(lavg, 0.0);
    EXPECT_GE(lmin, lavg);
    double prev = -1.0;
    for (double margin : {0.0, 0.1, 0.3, 1.0, 5.0}) {
      mn.margin = margin;
      const double l = outfit_ranking_loss(p, t, mn);
      EXPECT_GE(l, prev);
      prev = l;
    }
  }
}

TEST(RankingLoss, ScalingEmbeddingsScalesDistances) {
  ModelParams p = testing::jittered_params(cfg_small(), 2);
  std::mt19937_64 rng(9);
  const TrainingTriple t = random_triple(rng, 3, 4);
  LossConfig c;
  c.margin = 0.0;
  const double alpha = 2.5;
  ModelParams scaled = p;
  for (double& m : scaled.masks.data()) m *= alpha;
  const double dp = outfit_distance(p, t.outfit, t.positive, c);
  const double dps = outfit_distance(scaled, t.outfit, t.positive, c);
  EXPECT_TRUE(testing::near_rel(dps, alpha * dp, 1e-12));
  for (const Item& n : t.negatives) {
    const double dn = outfit_distance(p, t.outfit, n, c);
    const double dns = outfit_distance(scaled, t.outfit, n, c);
    EXPECT_TRUE(testing::near_rel(dns, alpha * dn, 1e-12));
    EXPECT_EQ(dp < dn, dps < dns);
  }
  EXPECT_EQ(outfit_ranking_loss(p, t, c) > 0.0, outfit_ranking_loss(scaled, t, c) > 0.0);
}

TEST(TripletLoss, WorkedCases) {
  const ModelParams p = testing::jittered_params(cfg_small(), 1);
  std::mt19937_64 rng(10);
  Item a = testing::random_item(1, 0, 4, rng);
  Item pos = testing::random_item(2, 1, 4, rng);
  Item neg = pos;
  neg.id = 3;
  LossConfig c;
  EXPECT_EQ(triplet_loss(p, a, pos, neg, c), c.margin);
  Item far = testing::random_item(4, 1, 4, rng);
  for (double& v : far.raw_feature) v *= 1000.0;
  EXPECT_EQ(triplet_loss(p, a, pos, far, c), 0.0);
  Item wrong = testing::random_item(5, 2, 4, rng);
  EXPECT_THROW(triplet_loss(p, a, pos, wrong, c), InputError);
}

TEST(TripletLoss, ReducesFromRankingLossBitwise) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const ModelParams p = testing::jittered_params(cfg_small(), trial);
    const TrainingTriple t = random_triple(rng, 1, 1);
    for (auto agg : {Aggregation::Min, Aggregation::Average}) {
      LossConfig c;
      c.aggregation = agg;
      EXPECT_EQ(outfit_ranking_loss(p, t, c),
                triplet_loss(p, t.outfit[0], t.positive, t.negatives[0], c));
    }
  }
}

TEST(TrainingTriple, ValidateCatchesMalformedTriples) {
  std::mt19937_64 rng(12);
  TrainingTriple t = random_triple(rng, 2, 2);
  EXPECT_NO_THROW(t.validate());
  TrainingTriple empty_outfit = t;
  empty_outfit.outfit.clear();
  EXPECT_THROW(empty_outfit.validate(), InputError);
  TrainingTriple no_neg = t;
  no_neg.negatives.clear();
  EXPECT_THROW(no_neg.validate(), InputError);
  TrainingTriple bad = t;
  bad.negatives[1].category = CategoryId((t.positive.category.value + 1) % 3);
  EXPECT_THROW(bad.validate(), InputError);
  EXPECT_THROW(outfit_ranking_loss(testing::jittered_params(cfg_small(), 1), bad, LossConfig{}),
               InputError);
}

TEST(LossConfig, RejectsNegativeOrNonFiniteMargin) {
  LossConfig c;
  c.margin = -0.1;
  EXPECT_THROW(c.validate(), InputError);
  c.margin = std::nan("");
  EXPECT_THROW(c.validate(), InputError);
}

}  // namespace
}  // namespace csanet
