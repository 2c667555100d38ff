// csanet command-line tool: gen-synthetic, train, index, query, eval, gradcheck.

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "csanet/checkpoint.hpp"
#include "csanet/data.hpp"
#include "csanet/errors.hpp"
#include "csanet/eval.hpp"
#include "csanet/gradcheck.hpp"
#include "csanet/index.hpp"
#include "csanet/retrieval.hpp"
#include "csanet/trainer.hpp"

namespace {

using namespace csanet;
using json = nlohmann::json;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;
constexpr int kExitIntegrity = 5;
constexpr int kExitCheckFailed = 1;

const std::map<std::string, Aggregation> kAggregations{{"min", Aggregation::Min},
                                                       {"average", Aggregation::Average}};
const std::map<std::string, DistanceKind> kDistances{
    {"euclidean", DistanceKind::Euclidean}, {"squared", DistanceKind::SquaredEuclidean}};
const std::map<std::string, LossObjective> kObjectives{
    {"ranking", LossObjective::OutfitRanking}, {"triplet", LossObjective::Triplet}};
const std::map<std::string, ProjectorMode> kProjectors{{"identity", ProjectorMode::Identity},
                                                       {"learnable", ProjectorMode::Learnable}};
const std::map<std::string, Schedule> kSchedules{{"constant", Schedule::Constant},
                                                 {"linear", Schedule::LinearDecay}};
const std::map<std::string, OptimizerKind> kOptimizers{{"adam", OptimizerKind::Adam},
                                                       {"sgd", OptimizerKind::Sgd}};
const std::map<std::string, Mining> kMinings{{"random", Mining::Random},
                                             {"semi-hard", Mining::SemiHard}};
const std::map<std::string, SearchMode> kModes{{"exact", SearchMode::Exact},
                                               {"approx", SearchMode::Approx}};
const std::map<std::string, Split> kSplits{
    {"train", Split::Train}, {"valid", Split::Valid}, {"test", Split::Test}};

struct DataPaths {
  std::string manifest;
  std::string features;

  void add(CLI::App* app) {
    app->add_option("--manifest", manifest, "Dataset manifest (JSON)")->required();
    app->add_option("--features", features, "Feature file (float32)")->required();
  }
  Dataset load() const { return load_dataset(manifest, features); }
};

struct Options {
  std::size_t threads = 1;

  SyntheticSpec synth;
  DataPaths gen_out;

  DataPaths train_data;
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
  std::string checkpoint_out;
  std::string train_log;

  DataPaths index_data;
  std::string index_checkpoint;
  std::string index_out;
  IndexOptions index_opts;

  DataPaths query_data;
  std::string query_checkpoint;
  std::string query_index;
  std::vector<ItemId> query_items;
  std::optional<std::uint64_t> query_outfit;
  std::size_t query_category = 0;
  std::size_t query_k = 10;
  SearchMode query_mode = SearchMode::Exact;
  std::size_t query_ef = 0;

  DataPaths eval_data;
  std::string eval_checkpoint;
  Split eval_split = Split::Test;
  std::size_t eval_candidates = 4;
  std::size_t eval_pool = 200;
  std::vector<std::size_t> eval_ks{10, 30, 50};
  std::string bench_in;
  std::string bench_out;
  std::uint64_t eval_seed = 0;

  GradCheckSpec grad;
  double grad_margin = std::nan("");
  double grad_step = 1e-4;
};

// Resolved values of the global options and the selected subcommand.
void echo_config(const CLI::App& app, const CLI::App& sub) {
  std::istringstream all(app.config_to_str(true, false));
  const std::string prefix = sub.get_name() + ".";
  std::cerr << "# resolved config\n";
  for (std::string line; std::getline(all, line);) {
    const auto eq = line.find('=');
    const auto dot = line.find('.');
    const bool global = dot == std::string::npos || dot > eq;
    if (global || line.rfind(prefix, 0) == 0) std::cerr << line << "\n";
  }
  std::cerr << std::flush;
}

Item lookup(const Dataset& ds, ItemId id) { return ds.item(id); }

int run_gen(const Options& o) {
  Dataset ds = generate_synthetic(o.synth);
  save_dataset(ds, o.gen_out.manifest, o.gen_out.features);
  std::cout << json{{"items", ds.items().size()},
                    {"outfits", ds.outfits().size()},
                    {"categories", ds.num_categories()}}
                   .dump()
            << "\n";
  return 0;
}

int run_train(Options o) {
  Dataset ds = o.train_data.load();
  o.model.num_categories = ds.num_categories();
  o.model.raw_dim = ds.raw_dim();
  if (o.model.projector == ProjectorMode::Identity) o.model.feature_dim = ds.raw_dim();
  o.train.threads = o.threads;

  std::ofstream log;
  if (!o.train_log.empty()) {
    log.open(o.train_log);
    if (!log) throw DataError(DataError::Code::Io, "cannot open log file " + o.train_log);
  }
  TrainCallbacks cb;
  cb.on_epoch = [&](const EpochMetrics& m) {
    const std::string line = to_json_line(m);
    std::cout << line << "\n" << std::flush;
    if (log) log << line << "\n" << std::flush;
  };
  try {
    TrainResult res = train(ds, o.model, o.loss, o.train, cb);
    save_checkpoint(o.checkpoint_out, Checkpoint{res.params, o.loss});
  } catch (const TrainingAborted& e) {
    const std::string path = o.checkpoint_out + ".last-good";
    save_checkpoint(path, Checkpoint{e.last_good(), o.loss});
    std::cerr << "last good parameters written to " << path << "\n";
    throw;
  }
  return 0;
}

int run_index(const Options& o) {
  Checkpoint ck = load_checkpoint(o.index_checkpoint);
  Dataset ds = o.index_data.load();
  IndexOptions opts = o.index_opts;
  opts.distance = ck.loss.distance;
  opts.threads = o.threads;
  CategoryIndex index = build_index(ck.params, ds.items(), opts);
  save_index(index, o.index_out);
  std::cout << json{{"items", index.num_items()}, {"entries", index.num_entries()}}.dump()
            << "\n";
  return 0;
}

int run_query(const Options& o) {
  Checkpoint ck = load_checkpoint(o.query_checkpoint);
  std::string warning;
  CategoryIndex index = load_index(o.query_index, &ck.params, &warning, o.threads);
  if (!warning.empty()) std::cerr << "warning: " << warning << "\n";
  Dataset ds = o.query_data.load();

  Query q;
  q.target_category = CategoryId(o.query_category);
  q.k_results = o.query_k;
  if (o.query_outfit) {
    const Outfit* found = nullptr;
    for (const Outfit& out : ds.outfits()) {
      if (out.id == *o.query_outfit) found = &out;
    }
    if (!found) {
      throw DataError(DataError::Code::DanglingReference,
                      "unknown outfit id " + std::to_string(*o.query_outfit));
    }
    for (const Item& it : ds.outfit_items(*found)) {
      if (it.category != q.target_category) q.outfit.push_back(it);
    }
  }
  for (ItemId id : o.query_items) q.outfit.push_back(lookup(ds, id));
  if (q.outfit.empty()) throw InputError("query: no outfit items given");

  RetrieveOptions ro;
  ro.mode = o.query_mode;
  ro.ef = o.query_ef;
  RankedResult res = retrieve(ck.params, index, q, ro);
  std::size_t rank = 1;
  for (const RankedEntry& e : res) {
    std::cout << json{{"rank", rank++}, {"id", e.id}, {"distance", e.fused_distance}}.dump()
              << "\n";
  }
  return 0;
}

int run_eval(const Options& o) {
  Checkpoint ck = load_checkpoint(o.eval_checkpoint);
  Dataset ds = o.eval_data.load();
  Rng rng(o.eval_seed);

  auto questions = build_fitb_questions(ds, o.eval_split, o.eval_candidates, rng);
  FitbResult fitb = fitb_accuracy(ck.params, questions, ck.loss, o.threads);
  CompatibilityResult compat = compatibility_auc(ck.params, ds, o.eval_split, ck.loss, rng, o.threads);

  RetrievalBenchmark bench = o.bench_in.empty()
                                 ? build_retrieval_benchmark(ds, o.eval_pool, rng)
                                 : load_benchmark(o.bench_in, ds);
  if (!o.bench_out.empty()) save_benchmark(bench, o.bench_out);
  IndexOptions io;
  io.distance = ck.loss.distance;
  io.build_graph = false;
  io.threads = o.threads;
  CategoryIndex index = build_index(ck.params, ds.items(), io);
  RecallTable table = recall_at_k(bench, ck.params, index, o.eval_ks, o.threads);

  json recall = json::object();
  for (std::size_t i = 0; i < table.ks.size(); ++i) {
    recall[std::to_string(table.ks[i])] = table.mean[i];
  }
  json per_cat = json::array();
  for (std::size_t c = 0; c < table.categories.size(); ++c) {
    per_cat.push_back({{"category", table.categories[c].value},
                       {"queries", table.queries_per_category[c]},
                       {"recall", table.per_category[c]}});
  }
  json out{{"split", to_string(o.eval_split)},
           {"fitb", fitb.accuracy},
           {"fitb_questions", fitb.evaluated},
           {"auc", compat.auc},
           {"auc_outfits", compat.positives},
           {"pool_size", bench.pool_size},
           {"recall_at_k", recall},
           {"recall_per_category", per_cat}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

int run_gradcheck(const Options& o) {
  GradCheckSpec spec = o.grad;
  if (!std::isnan(o.grad_margin)) spec.margin = o.grad_margin;
  GradCheckProblem prob = make_gradcheck_problem(spec);
  GradCheckOptions opts;
  opts.step = o.grad_step;
  GradCheckReport rep = check_gradients(prob.params, prob.batch, prob.loss, opts);
  std::cout << json{{"max_rel_error", rep.max_rel_error},
                    {"max_abs_error", rep.max_abs_error},
                    {"worst", rep.worst},
                    {"checked", rep.checked},
                    {"skipped", rep.skipped},
                    {"failures", rep.failures},
                    {"gradient_norm", rep.analytic_norm}}
                   .dump()
            << "\n";
  return rep.passed() && rep.max_rel_error < opts.rel_tol ? 0 : kExitCheckFailed;
}

template <typename T>
CLI::Option* add_enum(CLI::App* app, const std::string& name, T& target,
                      const std::map<std::string, T>& table, const std::string& help) {
  std::string current;
  std::vector<std::string> keys;
  for (const auto& [key, value] : table) {
    keys.push_back(key);
    if (value == target) current = key;
  }
  return app
      ->add_option_function<std::string>(
          name, [&target, &table](const std::string& v) { target = table.at(v); }, help)
      ->check(CLI::IsMember(keys))
      ->default_str(current);
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Category-conditioned subspace embeddings for outfit compatibility and retrieval"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "Read options from a key=value file (flags override it)");
  app.add_option("--threads", o.threads, "Worker threads for evaluation and indexing")
      ->check(CLI::PositiveNumber);
  app.require_subcommand(1);

  // gen-synthetic
  CLI::App* gen = app.add_subcommand("gen-synthetic", "Write a planted-style synthetic dataset");
  gen->add_option("--outfits", o.synth.num_outfits);
  gen->add_option("--items-per-outfit", o.synth.items_per_outfit);
  gen->add_option("--categories", o.synth.num_categories);
  gen->add_option("--latent-dim", o.synth.latent_dim);
  gen->add_option("--raw-dim", o.synth.raw_dim);
  gen->add_option("--noise", o.synth.noise_sigma);
  gen->add_option("--seed", o.synth.rng_seed);
  gen->add_option("--train-fraction", o.synth.train_fraction);
  gen->add_option("--valid-fraction", o.synth.valid_fraction);
  o.gen_out.add(gen);

  // train
  CLI::App* tr = app.add_subcommand("train", "Train a model and write a checkpoint");
  o.train_data.add(tr);
  tr->add_option("--out", o.checkpoint_out, "Checkpoint path")->required();
  tr->add_option("--log", o.train_log, "Per-epoch JSON-lines log");
  tr->add_option("--dim", o.model.feature_dim, "Embedding dimension");
  tr->add_option("--subspaces", o.model.num_subspaces);
  tr->add_option("--hidden", o.model.attention_hidden, "Attention hidden width");
  add_enum(tr, "--projector", o.model.projector, kProjectors, "identity|learnable");
  tr->add_option("--projector-init-scale", o.model.projector_init_scale);
  tr->add_flag("--normalize,!--no-normalize", o.model.normalize);
  tr->add_option("--model-seed", o.model.rng_seed);
  tr->add_option("--margin", o.loss.margin);
  add_enum(tr, "--aggregation", o.loss.aggregation, kAggregations, "min|average");
  add_enum(tr, "--distance", o.loss.distance, kDistances, "euclidean|squared");
  add_enum(tr, "--objective", o.loss.objective, kObjectives, "ranking|triplet");
  tr->add_option("--batch-size", o.train.batch_size);
  tr->add_option("--lr", o.train.learning_rate);
  add_enum(tr, "--schedule", o.train.schedule, kSchedules, "constant|linear");
  add_enum(tr, "--optimizer", o.train.optimizer, kOptimizers, "adam|sgd");
  tr->add_option("--epochs", o.train.epochs);
  tr->add_option("--m-neg", o.train.m_neg);
  tr->add_option("--pool-size", o.train.pool_size);
  add_enum(tr, "--mining", o.train.mining, kMinings, "random|semi-hard");
  tr->add_flag("--order-flip,!--no-order-flip", o.train.order_flip);
  tr->add_option("--seed", o.train.rng_seed);
  tr->add_flag("--cache,!--no-cache", o.train.use_cache);
  tr->add_option("--valid-candidates", o.train.validation_candidates);

  // index
  CLI::App* ix = app.add_subcommand("index", "Build the category-enumerated index");
  o.index_data.add(ix);
  ix->add_option("--checkpoint", o.index_checkpoint)->required();
  ix->add_option("--out", o.index_out, "Index path")->required();
  ix->add_flag("--graph,!--no-graph", o.index_opts.build_graph);
  ix->add_option("--hnsw-m", o.index_opts.hnsw.m);
  ix->add_option("--ef-construction", o.index_opts.hnsw.ef_construction);
  ix->add_option("--ef-search", o.index_opts.hnsw.ef_search);
  ix->add_option("--hnsw-seed", o.index_opts.hnsw.seed);

  // query
  CLI::App* qu = app.add_subcommand("query", "Retrieve items completing a partial outfit");
  o.query_data.add(qu);
  qu->add_option("--checkpoint", o.query_checkpoint)->required();
  qu->add_option("--index", o.query_index)->required();
  qu->add_option("--items", o.query_items, "Outfit item ids")->delimiter(',');
  qu->add_option("--outfit", o.query_outfit, "Use this outfit's items (minus the target category)");
  qu->add_option("--category", o.query_category, "Target category")->required();
  qu->add_option("-k,--k", o.query_k);
  add_enum(qu, "--mode", o.query_mode, kModes, "exact|approx");
  qu->add_option("--ef", o.query_ef);

  // eval
  CLI::App* ev = app.add_subcommand("eval", "FITB, compatibility AUC and recall@k");
  o.eval_data.add(ev);
  ev->add_option("--checkpoint", o.eval_checkpoint)->required();
  add_enum(ev, "--split", o.eval_split, kSplits, "train|valid|test");
  ev->add_option("--candidates", o.eval_candidates);
  ev->add_option("--pool-size", o.eval_pool);
  ev->add_option("--ks", o.eval_ks)->delimiter(',');
  ev->add_option("--benchmark", o.bench_in, "Load a retrieval benchmark instead of building one");
  ev->add_option("--save-benchmark", o.bench_out);
  ev->add_option("--seed", o.eval_seed);

  // gradcheck
  CLI::App* gc = app.add_subcommand("gradcheck", "Compare analytic and numeric gradients");
  gc->add_option("--dim", o.grad.feature_dim);
  gc->add_option("--subspaces", o.grad.num_subspaces);
  gc->add_option("--categories", o.grad.num_categories);
  gc->add_option("--hidden", o.grad.attention_hidden);
  gc->add_option("--raw-dim", o.grad.raw_dim);
  add_enum(gc, "--projector", o.grad.projector, kProjectors, "identity|learnable");
  gc->add_flag("--normalize,!--no-normalize", o.grad.normalize);
  gc->add_option("--outfit-size", o.grad.outfit_size);
  gc->add_option("--m-neg", o.grad.m_neg);
  gc->add_option("--batch-size", o.grad.batch_size);
  add_enum(gc, "--aggregation", o.grad.aggregation, kAggregations, "min|average");
  add_enum(gc, "--distance", o.grad.distance, kDistances, "euclidean|squared");
  gc->add_option("--margin", o.grad_margin, "Default: large enough for active hinges");
  gc->add_option("--seed", o.grad.seed);
  gc->add_option("--step", o.grad_step);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  echo_config(app, *app.get_subcommands().front());

  try {
    if (*gen) return run_gen(o);
    if (*tr) return run_train(o);
    if (*ix) return run_index(o);
    if (*qu) return run_query(o);
    if (*ev) return run_eval(o);
    if (*gc) return run_gradcheck(o);
  } catch (const IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return kExitIntegrity;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  }
  return kExitUsage;
}
