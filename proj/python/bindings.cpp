#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>

#include "m2io/generation.hpp"
#include "m2io/insertion.hpp"
#include "m2io/metrics.hpp"
#include "m2io/reward.hpp"
#include "m2io/reward_service.hpp"
#include "m2io/schema.hpp"

namespace py = pybind11;
using namespace m2io;

namespace {

using Placements = std::map<std::string, int>;
using Slots = std::vector<std::optional<std::string>>;

PlacementMap placement_map(const Placements& in) {
  PlacementMap out;
  for (const auto& [id, index] : in) out.insert(id, index);
  return out;
}

Placements placements_dict(const PlacementMap& in) { return in.entries(); }

GroundTruth ground_truth(const std::vector<std::string>& sentences, const Placements& placements) {
  return GroundTruth{SentenceMap(sentences), placement_map(placements)};
}

py::dict score_dict(const RolloutScore& s) {
  py::dict d;
  d["r_format"] = s.r_format;
  d["r_rec"] = s.r_rec;
  d["r_pos"] = s.r_pos;
  d["r_answer"] = s.r_answer;
  d["r_total"] = s.r_total;
  d["parse_status"] = s.parse_status;
  d["warnings"] = s.warnings;
  return d;
}

py::dict output_dict(const InserterOutput& out) {
  py::dict d;
  d["status"] = out.status_string();
  d["well_formed"] = out.well_formed();
  d["think"] = out.think;
  d["placements"] = out.answer_dict ? py::cast(placements_dict(*out.answer_dict)) : py::none();
  d["warnings"] = out.warning_strings();
  return d;
}

EditCostConfig costs(double p1, double p2, double p3, double p) {
  EditCostConfig c{p1, p2, p3, p};
  c.validate();
  return c;
}

std::vector<RolloutItem> rollout_items(const py::iterable& items) {
  std::vector<RolloutItem> out;
  for (const auto& item : items) {
    if (py::isinstance<py::dict>(item)) {
      auto d = item.cast<py::dict>();
      out.push_back({d["sample_id"].cast<std::string>(), d["completion"].cast<std::string>()});
    } else {
      auto pair = item.cast<std::pair<std::string, std::string>>();
      out.push_back({pair.first, pair.second});
    }
  }
  return out;
}

class Scorer {
 public:
  explicit Scorer(const std::filesystem::path& dataset)
      : index_(std::make_shared<const DatasetIndex>(load_samples(dataset))) {}

  std::size_t size() const { return index_->size(); }

  std::vector<std::string> sample_ids() const {
    std::vector<std::string> out;
    for (const auto& s : index_->samples()) out.push_back(s.id);
    return out;
  }

  std::string canonical(const std::string& sample_id) const {
    const auto* sample = index_->find(sample_id);
    if (!sample) throw Error(ErrorCode::UnknownSample, sample_id);
    return canonical_completion(sample->gt.placements);
  }

  py::list score_batch(const py::iterable& items, double alpha) const {
    RewardConfig config{alpha};
    config.validate();
    auto rollouts = rollout_items(items);
    std::vector<BatchEntry> entries;
    {
      py::gil_scoped_release release;
      entries = m2io::score_batch(rollouts, *index_, config);
    }
    py::list out;
    for (const auto& e : entries) {
      if (e.score) {
        out.append(score_dict(*e.score));
      } else {
        py::dict d;
        d["sample_id"] = e.sample_id;
        d["error"] = e.error;
        out.append(d);
      }
    }
    return out;
  }

  std::shared_ptr<const DatasetIndex> index() const { return index_; }

 private:
  std::shared_ptr<const DatasetIndex> index_;
};

class Server {
 public:
  Server(const Scorer& scorer, double alpha, std::size_t workers) {
    ServiceConfig config;
    config.reward.alpha = alpha;
    config.reward.validate();
    config.workers = workers;
    service_ = std::make_unique<RewardService>(config);
    service_->load(scorer.index());
  }

  int start(const std::string& host, int port) { return service_->start(host, port); }

  void stop() {
    py::gil_scoped_release release;
    service_->stop();
  }

  std::size_t requests_served() const { return service_->requests_served(); }

 private:
  std::unique_ptr<RewardService> service_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multimodal answer insertion: parsing, metrics and rollout rewards";

  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error;
  error.call_once_and_store_result(
      [&]() -> py::object { return py::exception<Error>(m, "M2ioError", PyExc_ValueError); });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object type = error.get_stored();
      py::object exc = type(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(type.ptr(), exc.ptr());
    }
  });

  m.def(
      "split_sentences", [](const std::string& text) { return split_sentences(text).sentences(); },
      py::arg("text"));

  m.def(
      "parse_inserter_output",
      [](const std::string& raw, const ImageIdSet& valid_ids, std::size_t sentence_count) {
        return output_dict(parse_inserter_output(raw, valid_ids, sentence_count));
      },
      py::arg("raw"), py::arg("valid_ids"), py::arg("sentence_count"));

  m.def(
      "score_rollout",
      [](const std::string& completion, const std::vector<std::string>& sentences, const Placements& placements,
         const ImageIdSet& valid_ids, double alpha) {
        RewardConfig config{alpha};
        config.validate();
        return score_dict(score_rollout(completion, ground_truth(sentences, placements), valid_ids, config));
      },
      py::arg("completion"), py::arg("sentences"), py::arg("placements"), py::arg("valid_ids"),
      py::arg("alpha") = RewardConfig{}.alpha);

  m.def(
      "canonical_completion",
      [](const Placements& placements, const std::string& think) {
        return canonical_completion(placement_map(placements), think);
      },
      py::arg("placements"), py::arg("think") = "ground truth");

  m.def(
      "to_sequence",
      [](const Placements& placements, std::size_t sentence_count) {
        return to_sequence(placement_map(placements), sentence_count).slots;
      },
      py::arg("placements"), py::arg("sentence_count"));

  const EditCostConfig d;
  m.def(
      "weighted_edit_distance",
      [](const std::vector<ImageId>& gt, const std::vector<ImageId>& pred, double p1, double p2, double p3,
         double p) { return weighted_edit_distance(gt, pred, costs(p1, p2, p3, p)); },
      py::arg("gt"), py::arg("pred"), py::arg("p1") = d.p1, py::arg("p2") = d.p2, py::arg("p3") = d.p3,
      py::arg("p") = d.p);
  m.def(
      "order_score",
      [](const std::vector<ImageId>& gt, const std::vector<ImageId>& pred, double p1, double p2, double p3,
         double p) { return order_score(gt, pred, costs(p1, p2, p3, p)); },
      py::arg("gt"), py::arg("pred"), py::arg("p1") = d.p1, py::arg("p2") = d.p2, py::arg("p3") = d.p3,
      py::arg("p") = d.p);
  m.def(
      "position_score",
      [](const Slots& gt, const Slots& pred) { return position_score({gt}, {pred}); }, py::arg("gt"),
      py::arg("pred"));
  m.def("recall", &recall, py::arg("pred"), py::arg("gt"));
  m.def("precision", &precision, py::arg("pred"), py::arg("gt"));
  m.def("f1", &f1, py::arg("pred"), py::arg("gt"));
  m.def("f1_from", &f1_from, py::arg("p"), py::arg("r"));
  m.def("rouge_l", &rouge_l, py::arg("candidate"), py::arg("reference"));

  m.def(
      "max_weight_assignment",
      [](const std::vector<std::vector<double>>& weights) {
        auto a = max_weight_assignment(weights);
        return py::make_tuple(a.pairs, a.total);
      },
      py::arg("weights"));

  py::class_<Scorer>(m, "Scorer")
      .def(py::init<const std::filesystem::path&>(), py::arg("dataset"))
      .def("__len__", &Scorer::size)
      .def("sample_ids", &Scorer::sample_ids)
      .def("canonical_completion", &Scorer::canonical, py::arg("sample_id"))
      .def("score_batch", &Scorer::score_batch, py::arg("items"), py::arg("alpha") = RewardConfig{}.alpha);

  py::class_<Server>(m, "Server")
      .def(py::init<const Scorer&, double, std::size_t>(), py::arg("scorer"),
           py::arg("alpha") = RewardConfig{}.alpha, py::arg("workers") = ServiceConfig{}.workers)
      .def("start", &Server::start, py::arg("host") = "127.0.0.1", py::arg("port") = 0)
      .def("stop", &Server::stop)
      .def_property_readonly("requests_served", &Server::requests_served);
}
