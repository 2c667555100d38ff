#include <gtest/gtest.h>

#include <random>

#include "csanet/errors.hpp"
#include "csanet/gradient.hpp"
#include "test_support.hpp"

namespace csanet {
namespace {

struct Problem {
  ModelParams params;
  std::vector<TrainingTriple> batch;
};

Problem make_problem(std::uint64_t seed, std::size_t k, std::size_t d, std::size_t n,
                     std::size_t m, std::size_t batch, bool normalize, std::size_t raw_dim = 0) {
  ModelConfig c;
  c.feature_dim = d;
  c.raw_dim = raw_dim ? raw_dim : d;
  c.num_subspaces = k;
  c.num_categories = 4;
  c.attention_hidden = 5;
  c.normalize = normalize;
  c.projector_init_scale = 1.0;
  c.rng_seed = seed;
  Problem pr{testing::jittered_params(c, seed + 100), {}};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> cat(0, 3);
  ItemId id = 1;
  for (std::size_t b = 0; b < batch; ++b) {
    TrainingTriple t;
    for (std::size_t i = 0; i < n; ++i) t.outfit.push_back(testing::random_item(id++, cat(rng), c.raw_dim, rng));
    const std::size_t pc = cat(rng);
    t.positive = testing::random_item(id++, pc, c.raw_dim, rng);
    for (std::size_t j = 0; j < m; ++j) t.negatives.push_back(testing::random_item(id++, pc, c.raw_dim, rng));
    pr.batch.push_back(std::move(t));
  }
  return pr;
}

double oracle_batch_loss(const ModelParams& p, const std::vector<TrainingTriple>& batch,
                         const LossConfig& cfg) {
  double s = 0.0;
  for (const auto& t : batch) s += testing::oracle_ranking_loss(p, t, cfg);
  return s / static_cast<double>(batch.size());
}

// Central differences of the loop oracle, every coordinate.
void expect_matches_finite_differences(const ModelParams& params,
                                       const std::vector<TrainingTriple>& batch,
                                       const LossConfig& cfg) {
  LossGradient lg = loss_gradient(params, batch, cfg);
  auto grads = lg.gradient.tensors(params.config.projector);
  ModelParams work = params;
  auto views = tensors(work);
  const double h = 1e-4;
  double norm = 0.0;
  for (std::size_t ti = 0; ti < views.size(); ++ti) {
    for (std::size_t i = 0; i < views[ti].values.size(); ++i) {
      const double orig = views[ti].values[i];
      views[ti].values[i] = orig + h;
      const double lp = oracle_batch_loss(work, batch, cfg);
      views[ti].values[i] = orig - h;
      const double lm = oracle_batch_loss(work, batch, cfg);
      views[ti].values[i] = orig;
      const double fd = (lp - lm) / (2 * h);
      const double a = grads[ti].values[i];
      norm += a * a;
      EXPECT_TRUE(testing::near_rel(a, fd, 1e-4, 1e-6))
          << views[ti].name << "[" << i << "] analytic " << a << " numeric " << fd;
    }
  }
  EXPECT_GT(norm, 0.0);
}

LossConfig active(Aggregation agg, DistanceKind dist) {
  LossConfig c;
  c.aggregation = agg;
  c.distance = dist;
  c.margin = 50.0;  // keeps every hinge active
  return c;
}

TEST(LossGradient, SingleTripleMatchesFiniteDifferences) {
  const Problem pr = make_problem(1, 2, 4, 2, 2, 1, false, 5);
  expect_matches_finite_differences(pr.params, pr.batch, active(Aggregation::Min, DistanceKind::Euclidean));
}

TEST(LossGradient, BatchMatchesFiniteDifferencesAcrossModes) {
  int seed = 10;
  for (auto agg : {Aggregation::Min, Aggregation::Average}) {
    for (auto dist : {DistanceKind::Euclidean, DistanceKind::SquaredEuclidean}) {
      for (bool normalize : {false, true}) {
        const Problem pr = make_problem(seed++, 3, 5, 3, 3, 3, normalize);
        expect_matches_finite_differences(pr.params, pr.batch, active(agg, dist));
      }
    }
  }
}

TEST(LossGradient, IdentityProjectorHasNoProjectorGradient) {
  Problem pr = make_problem(3, 2, 4, 2, 2, 2, false);
  ModelConfig c = pr.params.config;
  c.projector = ProjectorMode::Identity;
  ModelParams p = testing::jittered_params(c, 9);
  const auto lg = loss_gradient(p, pr.batch, active(Aggregation::Min, DistanceKind::Euclidean));
  EXPECT_TRUE(lg.gradient.backbone_proj.empty());
  expect_matches_finite_differences(p, pr.batch, active(Aggregation::Average, DistanceKind::Euclidean));
}

TEST(LossGradient, InactiveHingeGivesZeroLossAndGradient) {
  const Problem pr = make_problem(4, 2, 4, 2, 3, 3, false);
  LossConfig c;
  c.margin = 0.0;
  std::vector<TrainingTriple> batch;
  for (auto t : pr.batch) {
    // positive coincides with an outfit item's conditioning; negatives are far away
    for (auto& n : t.negatives) {
      for (double& v : n.raw_feature) v *= 1e3;
    }
    batch.push_back(t);
  }
  for (const auto& t : batch) ASSERT_EQ(outfit_ranking_loss(pr.params, t, c), 0.0);
  const auto lg = loss_gradient(pr.params, batch, c);
  EXPECT_EQ(lg.loss, 0.0);
  EXPECT_EQ(lg.gradient, GradientSet::zeros_like(pr.params));
}

TEST(LossGradient, DuplicatingATripleKeepsTheMean) {
  const Problem pr = make_problem(5, 2, 4, 2, 2, 1, false);
  const LossConfig c = active(Aggregation::Min, DistanceKind::Euclidean);
  const auto one = loss_gradient(pr.params, pr.batch, c);
  const std::vector<TrainingTriple> twice{pr.batch[0], pr.batch[0]};
  const auto two = loss_gradient(pr.params, twice, c);
  EXPECT_TRUE(testing::near_rel(one.loss, two.loss, 1e-14));
  auto g1 = one.gradient;
  auto g2 = two.gradient;
  auto t1 = g1.tensors(pr.params.config.projector);
  auto t2 = g2.tensors(pr.params.config.projector);
  for (std::size_t ti = 0; ti < t1.size(); ++ti) {
    for (std::size_t i = 0; i < t1[ti].values.size(); ++i) {
      EXPECT_TRUE(testing::near_rel(t1[ti].values[i], t2[ti].values[i], 1e-12, 1e-15));
    }
  }
}

TEST(LossGradient, LossMatchesPublicLoss) {
  const Problem pr = make_problem(6, 3, 6, 3, 4, 4, false);
  LossConfig c;
  double want = 0.0;
  for (const auto& t : pr.batch) want += outfit_ranking_loss(pr.params, t, c);
  want /= 4.0;
  EXPECT_TRUE(testing::near_rel(loss_gradient(pr.params, pr.batch, c).loss, want, 1e-12));
}

TEST(LossGradient, CachedAndNaivePathsAgreeBitwise) {
  for (int seed = 0; seed < 5; ++seed) {
    Problem pr = make_problem(20 + seed, 5, 8, 3, 5, 6, seed % 2 == 1);
    // share items across triples so the cache is actually hit
    pr.batch[1].outfit[0] = pr.batch[0].outfit[0];
    pr.batch[2].negatives[0] = pr.batch[0].outfit[1];
    pr.batch[2].negatives[0].category = pr.batch[2].positive.category;
    pr.batch[2].negatives[0].id = 5000;
    for (auto agg : {Aggregation::Min, Aggregation::Average}) {
      LossConfig c;
      c.aggregation = agg;
      GradientOptions cached{ForwardMode::Cached, {}};
      GradientOptions naive{ForwardMode::Naive, {}};
      const auto a = loss_gradient(pr.params, pr.batch, c, cached);
      const auto b = loss_gradient(pr.params, pr.batch, c, naive);
      EXPECT_EQ(a.loss, b.loss);
      EXPECT_EQ(a.gradient, b.gradient);
    }
  }
}

TEST(LossGradient, FlippedConditioningMatchesFiniteDifferences) {
  const Problem pr = make_problem(7, 2, 4, 2, 2, 2, false);
  const LossConfig c = active(Aggregation::Average, DistanceKind::Euclidean);
  GradientOptions opts;
  opts.flips = {true, false};
  auto flipped_loss = [&](const ModelParams& p) {
    BatchEngine e(p, ForwardMode::Naive);
    double s = 0.0;
    for (std::size_t b = 0; b < pr.batch.size(); ++b) {
      const auto& t = pr.batch[b];
      const double dp = e.outfit_distance(t.outfit, t.positive, c, opts.flips[b]);
      double dn = 0.0;
      for (const auto& n : t.negatives) dn += e.outfit_distance(t.outfit, n, c, opts.flips[b]);
      dn /= static_cast<double>(t.negatives.size());
      s += std::max(0.0, dp - dn + c.margin);
    }
    return s / static_cast<double>(pr.batch.size());
  };
  auto lg = loss_gradient(pr.params, pr.batch, c, opts);
  EXPECT_TRUE(testing::near_rel(lg.loss, flipped_loss(pr.params), 1e-12));
  EXPECT_NE(lg.loss, loss_gradient(pr.params, pr.batch, c).loss);
  auto grads = lg.gradient.tensors(pr.params.config.projector);
  ModelParams work = pr.params;
  auto views = tensors(work);
  for (std::size_t ti = 0; ti < views.size(); ++ti) {
    for (std::size_t i = 0; i < views[ti].values.size(); ++i) {
      const double orig = views[ti].values[i];
      views[ti].values[i] = orig + 1e-4;
      const double lp = flipped_loss(work);
      views[ti].values[i] = orig - 1e-4;
      const double lm = flipped_loss(work);
      views[ti].values[i] = orig;
      EXPECT_TRUE(testing::near_rel(grads[ti].values[i], (lp - lm) / 2e-4, 1e-4, 1e-6));
    }
  }
}

TEST(LossGradient, MinRoutesGradientToFirstArgmin) {
  Problem pr = make_problem(8, 2, 4, 1, 1, 1, false);
  TrainingTriple t = pr.batch[0];
  // two identical negatives: only the first may receive gradient, so the
  // result equals the single-negative gradient
  Item dup = t.negatives[0];
  dup.id = 777;
  TrainingTriple two = t;
  two.negatives.push_back(dup);
  const LossConfig c = active(Aggregation::Min, DistanceKind::Euclidean);
  const auto g1 = loss_gradient(pr.params, std::vector<TrainingTriple>{t}, c);
  const auto g2 = loss_gradient(pr.params, std::vector<TrainingTriple>{two}, c);
  EXPECT_EQ(g1.loss, g2.loss);
  EXPECT_EQ(g1.gradient, g2.gradient);
}

TEST(LossGradient, ErrorsAreReported) {
  Problem pr = make_problem(9, 2, 4, 2, 2, 2, false);
  EXPECT_THROW(loss_gradient(pr.params, std::vector<TrainingTriple>{}, LossConfig{}), InputError);
  GradientOptions bad;
  bad.flips = {true};
  EXPECT_THROW(loss_gradient(pr.params, pr.batch, LossConfig{}, bad), InputError);

  // same id, different features
  std::vector<TrainingTriple> clash = pr.batch;
  clash[1].outfit[0].id = clash[0].outfit[0].id;
  clash[1].outfit[0].raw_feature[0] += 1.0;
  EXPECT_THROW(loss_gradient(pr.params, clash, LossConfig{}), InputError);

  std::vector<TrainingTriple> huge = pr.batch;
  for (auto& t : huge) {
    for (double& v : t.positive.raw_feature) v = 1e300;
  }
  EXPECT_THROW(loss_gradient(pr.params, huge, active(Aggregation::Min, DistanceKind::SquaredEuclidean)),
               NumericalError);
}

TEST(BatchEngine, EmbeddingMatchesModel) {
  const Problem pr = make_problem(10, 3, 5, 2, 2, 1, false);
  BatchEngine e(pr.params, ForwardMode::Cached);
  const Item& it = pr.batch[0].positive;
  EXPECT_EQ(e.embedding(it, CategoryId(1), CategoryId(2)),
            embed(pr.params, project(pr.params, it.raw_feature), CategoryId(1), CategoryId(2)));
  EXPECT_EQ(e.outfit_distance(pr.batch[0].outfit, it, LossConfig{}),
            outfit_distance(pr.params, pr.batch[0].outfit, it, LossConfig{}));
}

TEST(GradientSet, ZerosLikeHasParameterShapes) {
  const Problem pr = make_problem(11, 3, 5, 2, 2, 1, false, 7);
  GradientSet g = GradientSet::zeros_like(pr.params);
  EXPECT_EQ(g.masks.rows(), 3u);
  EXPECT_EQ(g.backbone_proj.rows(), 7u);
  EXPECT_TRUE(g.all_finite());
  g.attn_b2[0] = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(g.all_finite());
  const auto views = g.tensors(ProjectorMode::Learnable);
  const auto pviews = tensors(pr.params);
  ASSERT_EQ(views.size(), pviews.size());
  for (std::size_t i = 0; i < views.size(); ++i) {
    EXPECT_EQ(views[i].name, pviews[i].name);
    EXPECT_EQ(views[i].values.size(), pviews[i].values.size());
  }
}

}  // namespace
}  // namespace csanet
