#include "csanet/eval.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <unordered_set>

#include "csanet/errors.hpp"
#include "csanet/parallel.hpp"
#include "csanet/retrieval.hpp"

namespace csanet {

double auc(std::span<const double> scores_pos, std::span<const double> scores_neg) {
  if (scores_pos.empty() || scores_neg.empty()) {
    throw InputError("auc: both score lists must be nonempty");
  }
  struct Scored {
    double score;
    bool positive;
  };
  std::vector<Scored> all;
  all.reserve(scores_pos.size() + scores_neg.size());
  for (double s : scores_pos) all.push_back({s, true});
  for (double s : scores_neg) all.push_back({s, false});
  std::sort(all.begin(), all.end(),
            [](const Scored& a, const Scored& b) { return a.score < b.score; });
  // Sum of (1-based, tie-averaged) ranks of the positives.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    std::size_t pos_in_group = 0;
    while (j < all.size() && all[j].score == all[i].score) {
      pos_in_group += all[j].positive ? 1 : 0;
      ++j;
    }
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += avg_rank * static_cast<double>(pos_in_group);
    i = j;
  }
  const double n_pos = static_cast<double>(scores_pos.size());
  const double n_neg = static_cast<double>(scores_neg.size());
  const double u = rank_sum - n_pos * (n_pos + 1.0) / 2.0;
  return u / (n_pos * n_neg);
}

// ---------------------------------------------------------------------------

namespace {

/// Draws up to `count` ids from `from` without replacement, skipping `exclude`.
std::vector<ItemId> draw_distinct(const std::vector<ItemId>& from,
                                  const std::unordered_set<ItemId>& exclude, std::size_t count,
                                  Rng& rng) {
  std::vector<ItemId> pool;
  for (ItemId id : from) {
    if (!exclude.count(id)) pool.push_back(id);
  }
  const std::size_t take = std::min(count, pool.size());
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(take);
  return pool;
}

}  // namespace

std::vector<FitbQuestion> build_fitb_questions(const Dataset& dataset, Split split,
                                               std::size_t num_candidates, Rng& rng) {
  if (num_candidates < 2) throw InputError("build_fitb_questions: need >= 2 candidates");
  std::vector<std::vector<ItemId>> in_split(dataset.num_categories());
  std::vector<std::vector<ItemId>> everywhere(dataset.num_categories());
  for (std::size_t c = 0; c < dataset.num_categories(); ++c) {
    in_split[c] = dataset.items_in(split, CategoryId(c));
    everywhere[c] = dataset.items_of(CategoryId(c));
  }
  std::vector<FitbQuestion> out;
  for (const Outfit* o : dataset.outfits_in(split)) {
    if (o->items.size() < 2) continue;
    std::uniform_int_distribution<std::size_t> pick(0, o->items.size() - 1);
    const std::size_t held = pick(rng);
    const Item& positive = dataset.item(o->items[held]);
    const std::unordered_set<ItemId> exclude(o->items.begin(), o->items.end());
    auto distractors =
        draw_distinct(in_split[positive.category.value], exclude, num_candidates - 1, rng);
    if (distractors.size() < num_candidates - 1) {
      std::unordered_set<ItemId> ex2 = exclude;
      ex2.insert(distractors.begin(), distractors.end());
      const auto more = draw_distinct(everywhere[positive.category.value], ex2,
                                      num_candidates - 1 - distractors.size(), rng);
      distractors.insert(distractors.end(), more.begin(), more.end());
    }
    if (distractors.size() < num_candidates - 1) continue;

    FitbQuestion q;
    q.name = "outfit-" + std::to_string(o->id);
    for (std::size_t i = 0; i < o->items.size(); ++i) {
      if (i != held) q.outfit.push_back(dataset.item(o->items[i]));
    }
    std::uniform_int_distribution<std::size_t> slot(0, num_candidates - 1);
    q.answer = slot(rng);
    std::size_t next = 0;
    for (std::size_t i = 0; i < num_candidates; ++i) {
      q.candidates.push_back(i == q.answer ? positive : dataset.item(distractors[next++]));
    }
    out.push_back(std::move(q));
  }
  return out;
}

FitbResult fitb_accuracy(const ModelParams& params, std::span<const FitbQuestion> questions,
                         const LossConfig& cfg, std::size_t threads) {
  std::vector<std::size_t> usable;
  FitbResult result;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    const auto& q = questions[i];
    if (q.outfit.empty() || q.candidates.empty()) {
      ++result.skipped;
      continue;
    }
    if (q.candidates.size() < 2 || q.answer >= q.candidates.size()) {
      throw InputError("malformed FITB question '" + q.name +
                       "': needs >= 2 candidates and a valid answer index");
    }
    usable.push_back(i);
  }
  std::vector<char> correct(usable.size(), 0);
  parallel_for(usable.size(), threads, [&](std::size_t u) {
    const auto& q = questions[usable[u]];
    correct[u] = fitb_answer(params, q.outfit, q.candidates, cfg) == q.answer;
  });
  result.evaluated = usable.size();
  const auto hits = std::count(correct.begin(), correct.end(), 1);
  result.accuracy = usable.empty() ? 0.0 : double(hits) / double(usable.size());
  return result;
}

CompatibilityResult compatibility_auc(const ModelParams& params, const Dataset& dataset,
                                      Split split, const LossConfig& cfg, Rng& rng,
                                      std::size_t threads) {
  std::vector<std::vector<ItemId>> in_split(dataset.num_categories());
  for (std::size_t c = 0; c < dataset.num_categories(); ++c) {
    in_split[c] = dataset.items_in(split, CategoryId(c));
  }
  std::vector<std::vector<Item>> positives, negatives;
  for (const Outfit* o : dataset.outfits_in(split)) {
    if (o->items.size() < 2) continue;
    positives.push_back(dataset.outfit_items(*o));
    std::vector<Item> fake;
    for (ItemId id : o->items) {
      const auto& cands = in_split[dataset.item(id).category.value];
      std::uniform_int_distribution<std::size_t> pick(0, cands.size() - 1);
      ItemId sub = cands[pick(rng)];
      if (sub == id && cands.size() > 1) sub = cands[(pick(rng) + 1) % cands.size()];
      fake.push_back(dataset.item(sub));
    }
    negatives.push_back(std::move(fake));
  }
  if (positives.empty()) throw InputError("compatibility_auc: no outfits in split");
  std::vector<double> pos(positives.size()), neg(negatives.size());
  parallel_for(positives.size(), threads, [&](std::size_t i) {
    pos[i] = compatibility_score(params, positives[i], cfg);
    neg[i] = compatibility_score(params, negatives[i], cfg);
  });
  return {auc(pos, neg), pos.size(), neg.size()};
}

// ---------------------------------------------------------------------------

void RetrievalBenchmark::validate() const {
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& q = queries[i];
    if (std::find(q.pool.begin(), q.pool.end(), q.positive) == q.pool.end()) {
      throw InputError("benchmark query " + std::to_string(i) + ": positive " +
                       std::to_string(q.positive) + " missing from its pool");
    }
    if (q.pool.size() != pool_size) {
      throw InputError("benchmark query " + std::to_string(i) + ": pool size " +
                       std::to_string(q.pool.size()) + " != " + std::to_string(pool_size));
    }
    if (q.outfit.empty()) {
      throw InputError("benchmark query " + std::to_string(i) + ": empty outfit");
    }
  }
}

RetrievalBenchmark build_retrieval_benchmark(const Dataset& dataset, std::size_t pool_size,
                                             Rng& rng) {
  if (pool_size < 1) throw InputError("build_retrieval_benchmark: pool_size must be >= 1");
  const std::size_t C = dataset.num_categories();
  RetrievalBenchmark bench;
  bench.pool_size = pool_size;
  std::vector<char> usable(C, 0);
  std::vector<std::vector<ItemId>> test_items(C), other_items(C);
  for (std::size_t c = 0; c < C; ++c) {
    test_items[c] = dataset.items_in(Split::Test, CategoryId(c));
    const auto all = dataset.items_of(CategoryId(c));
    const std::unordered_set<ItemId> t(test_items[c].begin(), test_items[c].end());
    for (ItemId id : all) {
      if (!t.count(id)) other_items[c].push_back(id);
    }
    usable[c] = all.size() >= pool_size;
    if (!usable[c]) bench.skipped_categories.push_back(CategoryId(c));
  }
  for (const Outfit* o : dataset.outfits_in(Split::Test)) {
    if (o->items.size() < 2) continue;
    std::uniform_int_distribution<std::size_t> pick(0, o->items.size() - 1);
    const std::size_t held = pick(rng);
    const Item& positive = dataset.item(o->items[held]);
    const std::size_t c = positive.category.value;
    if (!usable[c]) continue;
    RetrievalQuery q;
    q.positive = positive.id;
    q.category = positive.category;
    for (std::size_t i = 0; i < o->items.size(); ++i) {
      if (i != held) q.outfit.push_back(dataset.item(o->items[i]));
    }
    std::unordered_set<ItemId> exclude(o->items.begin(), o->items.end());
    auto pool = draw_distinct(test_items[c], exclude, pool_size - 1, rng);
    if (pool.size() < pool_size - 1) {
      exclude.insert(pool.begin(), pool.end());
      const auto more = draw_distinct(other_items[c], exclude, pool_size - 1 - pool.size(), rng);
      pool.insert(pool.end(), more.begin(), more.end());
    }
    pool.push_back(positive.id);
    std::sort(pool.begin(), pool.end());
    q.pool = std::move(pool);
    bench.queries.push_back(std::move(q));
  }
  bench.validate();
  return bench;
}

void save_benchmark(const RetrievalBenchmark& bench, const std::string& path) {
  using json = nlohmann::json;
  json j;
  j["format"] = "csanet-benchmark";
  j["version"] = 1;
  j["pool_size"] = bench.pool_size;
  j["skipped_categories"] = json::array();
  for (auto c : bench.skipped_categories) j["skipped_categories"].push_back(c.value);
  j["queries"] = json::array();
  for (const auto& q : bench.queries) {
    std::vector<ItemId> outfit;
    for (const auto& it : q.outfit) outfit.push_back(it.id);
    j["queries"].push_back({{"outfit", outfit},
                            {"positive", q.positive},
                            {"category", q.category.value},
                            {"pool", q.pool}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(DataError::Code::Io, "cannot write benchmark: " + path);
  out << j.dump(1) << '\n';
}

RetrievalBenchmark load_benchmark(const std::string& path, const Dataset& dataset) {
  using json = nlohmann::json;
  std::ifstream in(path);
  if (!in) throw DataError(DataError::Code::Io, "cannot open benchmark: " + path);
  RetrievalBenchmark bench;
  try {
    const json j = json::parse(in);
    if (j.at("format").get<std::string>() != "csanet-benchmark" || j.at("version") != 1) {
      throw DataError(DataError::Code::Parse, "benchmark " + path + ": unsupported format");
    }
    bench.pool_size = j.at("pool_size").get<std::size_t>();
    for (const auto& c : j.value("skipped_categories", json::array())) {
      bench.skipped_categories.emplace_back(c.get<std::size_t>());
    }
    for (const auto& jq : j.at("queries")) {
      RetrievalQuery q;
      for (ItemId id : jq.at("outfit").get<std::vector<ItemId>>()) {
        q.outfit.push_back(dataset.item(id));
      }
      q.positive = jq.at("positive").get<ItemId>();
      q.category = CategoryId(jq.at("category").get<std::size_t>());
      q.pool = jq.at("pool").get<std::vector<ItemId>>();
      bench.queries.push_back(std::move(q));
    }
  } catch (const json::exception& e) {
    throw DataError(DataError::Code::Parse, "benchmark " + path + ": " + e.what());
  }
  bench.validate();
  return bench;
}

std::vector<std::size_t> positive_ranks(const RetrievalBenchmark& bench,
                                        const ModelParams& params, const CategoryIndex& index,
                                        std::size_t threads) {
  bench.validate();
  std::vector<std::size_t> ranks(bench.queries.size());
  parallel_for(bench.queries.size(), threads, [&](std::size_t i) {
    const auto& bq = bench.queries[i];
    Query q{bq.outfit, bq.category, bq.pool.size()};
    RetrieveOptions opts;
    opts.restrict_to = bq.pool;
    const RankedResult ranked = retrieve(params, index, q, opts);
    const auto it = std::find_if(ranked.begin(), ranked.end(),
                                 [&](const RankedEntry& e) { return e.id == bq.positive; });
    ranks[i] = static_cast<std::size_t>(it - ranked.begin()) + 1;
  });
  return ranks;
}

RecallTable recall_at_k(const RetrievalBenchmark& bench, const ModelParams& params,
                        const CategoryIndex& index, std::span<const std::size_t> ks,
                        std::size_t threads) {
  const auto ranks = positive_ranks(bench, params, index, threads);
  std::map<std::size_t, std::vector<std::size_t>> by_category;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    by_category[bench.queries[i].category.value].push_back(ranks[i]);
  }
  RecallTable t;
  t.ks.assign(ks.begin(), ks.end());
  t.mean.assign(ks.size(), 0.0);
  for (const auto& [c, rs] : by_category) {
    t.categories.emplace_back(c);
    t.queries_per_category.push_back(rs.size());
    std::vector<double> row;
    for (std::size_t k : ks) {
      const auto hits = std::count_if(rs.begin(), rs.end(), [k](std::size_t r) { return r <= k; });
      row.push_back(double(hits) / double(rs.size()));
    }
    t.per_category.push_back(std::move(row));
  }
  for (std::size_t j = 0; j < ks.size() && !t.per_category.empty(); ++j) {
    double s = 0.0;
    for (const auto& row : t.per_category) s += row[j];
    t.mean[j] = s / double(t.per_category.size());
  }
  return t;
}

}  // namespace csanet
