#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <tuple>
#include <vector>

#include "csanet/checkpoint.hpp"
#include "csanet/errors.hpp"
#include "csanet/eval.hpp"
#include "csanet/index.hpp"
#include "csanet/retrieval.hpp"
#include "csanet/trainer.hpp"

namespace py = pybind11;
using namespace csanet;

namespace {

py::dict metrics_dict(const EpochMetrics& m) {
  py::dict d;
  d["epoch"] = m.epoch;
  d["mean_loss"] = m.mean_loss;
  d["valid_fitb"] = m.valid_fitb;
  d["steps"] = m.steps;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Category-conditioned subspace embeddings for outfit compatibility";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InputError>(m, "InputError", error);
  py::register_exception<DataError>(m, "DataError", error);
  py::register_exception<NumericalError>(m, "NumericalError", error);
  py::register_exception<IntegrityError>(m, "IntegrityError", error);

  py::enum_<Aggregation>(m, "Aggregation")
      .value("MIN", Aggregation::Min)
      .value("AVERAGE", Aggregation::Average);
  py::enum_<DistanceKind>(m, "DistanceKind")
      .value("EUCLIDEAN", DistanceKind::Euclidean)
      .value("SQUARED_EUCLIDEAN", DistanceKind::SquaredEuclidean);
  py::enum_<LossObjective>(m, "LossObjective")
      .value("OUTFIT_RANKING", LossObjective::OutfitRanking)
      .value("TRIPLET", LossObjective::Triplet);
  py::enum_<SearchMode>(m, "SearchMode")
      .value("EXACT", SearchMode::Exact)
      .value("APPROX", SearchMode::Approx);

  py::class_<Item>(m, "Item")
      .def(py::init([](ItemId id, std::size_t category, Vector features) {
             return Item{id, CategoryId(category), std::move(features)};
           }),
           py::arg("id"), py::arg("category"), py::arg("features"))
      .def_readwrite("id", &Item::id)
      .def_property(
          "category", [](const Item& it) { return it.category.value; },
          [](Item& it, std::size_t c) { it.category = CategoryId(c); })
      .def_readwrite("features", &Item::raw_feature)
      .def("__repr__", [](const Item& it) {
        return "Item(id=" + std::to_string(it.id) + ", category=" +
               std::to_string(it.category.value) + ")";
      });

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("feature_dim", &ModelConfig::feature_dim)
      .def_readwrite("num_subspaces", &ModelConfig::num_subspaces)
      .def_readwrite("num_categories", &ModelConfig::num_categories)
      .def_readwrite("attention_hidden", &ModelConfig::attention_hidden)
      .def_readwrite("raw_dim", &ModelConfig::raw_dim)
      .def_readwrite("projector_init_scale", &ModelConfig::projector_init_scale)
      .def_readwrite("normalize", &ModelConfig::normalize)
      .def_readwrite("rng_seed", &ModelConfig::rng_seed);

  py::class_<LossConfig>(m, "LossConfig")
      .def(py::init<>())
      .def_readwrite("margin", &LossConfig::margin)
      .def_readwrite("aggregation", &LossConfig::aggregation)
      .def_readwrite("distance", &LossConfig::distance)
      .def_readwrite("objective", &LossConfig::objective);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("m_neg", &TrainConfig::m_neg)
      .def_readwrite("pool_size", &TrainConfig::pool_size)
      .def_readwrite("order_flip", &TrainConfig::order_flip)
      .def_readwrite("rng_seed", &TrainConfig::rng_seed)
      .def_readwrite("threads", &TrainConfig::threads);

  py::class_<ModelParams>(m, "ModelParams")
      .def_readonly("config", &ModelParams::config)
      .def("checksum", &params_checksum)
      .def("tensors", [](const ModelParams& p) {
        py::dict d;
        for (const auto& t : tensors(p)) d[py::str(t.name)] = Vector(t.values.begin(), t.values.end());
        return d;
      });

  py::class_<SyntheticSpec>(m, "SyntheticSpec")
      .def(py::init<>())
      .def_readwrite("num_outfits", &SyntheticSpec::num_outfits)
      .def_readwrite("items_per_outfit", &SyntheticSpec::items_per_outfit)
      .def_readwrite("num_categories", &SyntheticSpec::num_categories)
      .def_readwrite("latent_dim", &SyntheticSpec::latent_dim)
      .def_readwrite("raw_dim", &SyntheticSpec::raw_dim)
      .def_readwrite("noise_sigma", &SyntheticSpec::noise_sigma)
      .def_readwrite("rng_seed", &SyntheticSpec::rng_seed);

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("num_categories", &Dataset::num_categories)
      .def_property_readonly("raw_dim", &Dataset::raw_dim)
      .def_property_readonly("items", &Dataset::items)
      .def("item", &Dataset::item, py::arg("id"))
      .def("outfits", [](const Dataset& ds, const std::string& split) {
        std::vector<std::vector<Item>> out;
        for (const Outfit* o : ds.outfits_in(split_from_string(split))) {
          out.push_back(ds.outfit_items(*o));
        }
        return out;
      }, py::arg("split"))
      .def("save", [](const Dataset& ds, const std::string& manifest, const std::string& features) {
        save_dataset(ds, manifest, features);
      });

  m.def("generate_synthetic", &generate_synthetic, py::arg("spec"));
  m.def("load_dataset", &load_dataset, py::arg("manifest"), py::arg("features"));

  m.def("init_params", &init_params, py::arg("config"));
  m.def("embed_item",
        [](const ModelParams& p, const Item& it, std::size_t target) {
          return embed_item(p, it, CategoryId(target));
        },
        py::arg("params"), py::arg("item"), py::arg("target_category"));
  m.def("outfit_distance",
        [](const ModelParams& p, const std::vector<Item>& outfit, const Item& cand,
           const LossConfig& lc) { return outfit_distance(p, outfit, cand, lc); },
        py::arg("params"), py::arg("outfit"),
        py::arg("candidate"), py::arg("loss") = LossConfig{});
  m.def("outfit_ranking_loss",
        [](const ModelParams& p, std::vector<Item> outfit, Item positive,
           std::vector<Item> negatives, const LossConfig& cfg) {
          return outfit_ranking_loss(p, TrainingTriple{std::move(outfit), std::move(positive),
                                                       std::move(negatives)},
                                     cfg);
        },
        py::arg("params"), py::arg("outfit"), py::arg("positive"), py::arg("negatives"),
        py::arg("loss") = LossConfig{});
  m.def("triplet_loss", &triplet_loss, py::arg("params"), py::arg("anchor"), py::arg("positive"),
        py::arg("negative"), py::arg("loss") = LossConfig{});

  m.def("train",
        [](const Dataset& ds, const ModelConfig& mc, const LossConfig& lc, const TrainConfig& tc) {
          TrainResult r;
          {
            py::gil_scoped_release release;
            r = train(ds, mc, lc, tc);
          }
          py::list log;
          for (const auto& e : r.log) log.append(metrics_dict(e));
          return py::make_tuple(r.params, log);
        },
        py::arg("dataset"), py::arg("model"), py::arg("loss") = LossConfig{},
        py::arg("train") = TrainConfig{},
        "Returns (params, per-epoch metrics).");

  m.def("save_checkpoint",
        [](const std::string& path, const ModelParams& p, const LossConfig& lc) {
          save_checkpoint(path, Checkpoint{p, lc});
        },
        py::arg("path"), py::arg("params"), py::arg("loss") = LossConfig{});
  m.def("load_checkpoint",
        [](const std::string& path) {
          Checkpoint c = load_checkpoint(path);
          return py::make_tuple(c.params, c.loss);
        },
        py::arg("path"), "Returns (params, loss config).");

  py::class_<CategoryIndex>(m, "Index")
      .def_property_readonly("num_entries", &CategoryIndex::num_entries)
      .def_property_readonly("num_items", &CategoryIndex::num_items)
      .def_property_readonly("num_categories", &CategoryIndex::num_categories)
      .def("save", [](const CategoryIndex& idx, const std::string& path) { save_index(idx, path); });

  m.def("build_index",
        [](const ModelParams& p, const std::vector<Item>& items, bool build_graph,
           std::size_t threads) {
          IndexOptions o;
          o.build_graph = build_graph;
          o.threads = threads;
          py::gil_scoped_release release;
          return build_index(p, items, o);
        },
        py::arg("params"), py::arg("items"), py::arg("build_graph") = true, py::arg("threads") = 1);
  m.def("load_index",
        [](const std::string& path, const ModelParams* p) {
          std::string warning;
          CategoryIndex idx = load_index(path, p, &warning);
          if (!warning.empty()) PyErr_WarnEx(PyExc_UserWarning, warning.c_str(), 1);
          return idx;
        },
        py::arg("path"), py::arg("params") = nullptr);

  m.def("retrieve",
        [](const ModelParams& p, const CategoryIndex& idx, std::vector<Item> outfit,
           std::size_t target, std::size_t k, SearchMode mode) {
          RetrieveOptions o;
          o.mode = mode;
          std::vector<std::tuple<ItemId, double>> out;
          for (const auto& e : retrieve(p, idx, Query{std::move(outfit), CategoryId(target), k}, o)) {
            out.emplace_back(e.id, e.fused_distance);
          }
          return out;
        },
        py::arg("params"), py::arg("index"), py::arg("outfit"), py::arg("target_category"),
        py::arg("k") = 10, py::arg("mode") = SearchMode::Exact,
        "Ranked (item id, fused distance) pairs.");
  m.def("fitb_answer",
        [](const ModelParams& p, const std::vector<Item>& outfit, const std::vector<Item>& cands,
           const LossConfig& lc) { return fitb_answer(p, outfit, cands, lc); },
        py::arg("params"), py::arg("outfit"),
        py::arg("candidates"), py::arg("loss") = LossConfig{});
  m.def("fitb_accuracy",
        [](const ModelParams& p, const Dataset& ds, const std::string& split,
           std::size_t candidates, std::uint64_t seed, const LossConfig& lc) {
          Rng rng(seed);
          const auto qs = build_fitb_questions(ds, split_from_string(split), candidates, rng);
          return fitb_accuracy(p, qs, lc).accuracy;
        },
        py::arg("params"), py::arg("dataset"), py::arg("split") = "test",
        py::arg("candidates") = 4, py::arg("seed") = 0, py::arg("loss") = LossConfig{});
  m.def("compatibility_score",
        [](const ModelParams& p, const std::vector<Item>& outfit, const LossConfig& lc) {
          return compatibility_score(p, outfit, lc);
        },
        py::arg("params"), py::arg("outfit"),
        py::arg("loss") = LossConfig{});
  m.def("auc",
        [](const std::vector<double>& pos, const std::vector<double>& neg) { return auc(pos, neg); },
        py::arg("positive_scores"), py::arg("negative_scores"));
}
