#include <algorithm>
#include <map>
#include <set>

#include "m2io/pipeline.hpp"
#include "m2io/text.hpp"

namespace m2io {

Json SampleMetrics::to_json() const {
  Json j;
  j["sample_id"] = sample_id;
  j["source"] = source;
  j["metrics"] = report.to_json();
  j["notes"] = notes;
  return j;
}

namespace {

std::vector<SampleAnswer> read_answers(const std::filesystem::path& path) {
  auto file = std::filesystem::is_directory(path) ? path / "answers.jsonl" : path;
  std::vector<SampleAnswer> out;
  for (const auto& row : read_jsonl(file)) {
    if (row.contains("gt_placements")) {
      auto s = sample_from_json(row);
      SampleAnswer a;
      a.sample_id = s.id;
      a.strategy = "ground_truth";
      a.answer_text = s.gt.sentence_map.joined();
      a.sentences = s.gt.sentence_map;
      a.placements = s.gt.placements;
      out.push_back(std::move(a));
    } else {
      out.push_back(SampleAnswer::from_json(row));
    }
  }
  return out;
}

std::vector<ImageId> placement_order(const PlacementMap& pm) {
  std::vector<std::pair<int, ImageId>> v;
  for (const auto& [id, index] : pm.entries()) v.emplace_back(index, id);
  std::sort(v.begin(), v.end());
  std::vector<ImageId> out;
  for (auto& [index, id] : v) out.push_back(std::move(id));
  return out;
}

std::string source_label(const DatasetSample& s) {
  if (!s.source) return "unlabeled";
  auto c = canonical_source(*s.source);
  return c ? *c : *s.source;
}

bool order_matters(const std::string& source) { return source == "Recipe" || source == "Manual"; }

SampleMetrics evaluate_one(const DatasetSample& sample, const SampleAnswer& answer, const EvaluateOptions& options,
                           ChatProvider* judge, EmbeddingProvider* similarity) {
  SampleMetrics m;
  m.sample_id = sample.id;
  m.source = source_label(sample);
  auto& r = m.report;
  if (!answer.ok) m.notes.push_back("run_failed");

  const auto pred = answer.placements.image_set();
  const auto gt = sample.gt.placements.image_set();
  r.rec = recall(pred, gt);
  r.prec = precision(pred, gt);
  r.f1 = f1_from(r.prec, r.rec);

  if (options.order_all || order_matters(m.source)) {
    const auto gt_order = sample.gt.ordered_images();
    if (gt_order.empty()) {
      m.notes.push_back("ord_skipped_empty_gt");
    } else {
      r.ord = order_score(gt_order, placement_order(answer.placements), options.edit_costs);
    }
  }

  const std::size_t m_gt = sample.gt.sentence_map.size();
  bool placements_fit = true;
  for (const auto& [id, index] : answer.placements.entries()) {
    if (static_cast<std::size_t>(index) > answer.sentences.size()) placements_fit = false;
  }
  if (answer.sentences.size() == m_gt && placements_fit) {
    r.pos = position_score(sample.gt.sequence(), to_sequence(answer.placements, m_gt));
  } else {
    m.notes.push_back("pos_skipped_sentence_count");
  }

  const std::string reference = sample.gt.sentence_map.joined();
  r.rouge_l = rouge_l(answer.answer_text, reference);

  if (judge || similarity) {
    MultimodalAnswer merged;
    if (placements_fit && !answer.sentences.empty()) {
      merged = merge(answer.answer_text, answer.sentences, answer.placements, sample.images);
    }
    if (judge && merged.image_count() > 0) {
      JudgeOptions jo;
      jo.model = options.judge->model;
      jo.scale = options.relevance_scale;
      try {
        r.rel = judge_relevance(merged, sample.query, sample.images, *judge, jo);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::JudgeParseError) throw;
        m.notes.push_back("rel_judge_parse_error");
      }
      if (!r.pos) {
        try {
          r.pos = judge_position(merged, sample.query, sample.images, *judge, jo);
          m.notes.push_back("pos_from_judge");
        } catch (const Error& e) {
          if (e.code() != ErrorCode::JudgeParseError) throw;
          m.notes.push_back("pos_judge_parse_error");
        }
      }
    } else if (judge) {
      m.notes.push_back("rel_skipped_no_images");
    }
    if (similarity) r.bert_sim = bert_sim(answer.answer_text, reference, *similarity);
  }
  fill_overall(r);
  return m;
}

struct Accumulator {
  std::size_t count = 0;
  double rec = 0, prec = 0, f1 = 0, rouge = 0;
  std::map<std::string, std::pair<double, std::size_t>> optional;

  void add(const MetricReport& r) {
    ++count;
    rec += r.rec;
    prec += r.prec;
    f1 += r.f1;
    rouge += r.rouge_l;
    auto put = [&](const char* k, const std::optional<double>& v) {
      if (!v) return;
      auto& slot = optional[k];
      slot.first += *v;
      ++slot.second;
    };
    put("ord", r.ord);
    put("pos", r.pos);
    put("rel", r.rel);
    put("bert_sim", r.bert_sim);
  }

  MetricReport mean() const {
    MetricReport r;
    const double n = static_cast<double>(count);
    r.rec = rec / n;
    r.prec = prec / n;
    r.f1 = f1 / n;
    r.rouge_l = rouge / n;
    auto get = [&](const char* k) -> std::optional<double> {
      auto it = optional.find(k);
      if (it == optional.end()) return std::nullopt;
      return it->second.first / static_cast<double>(it->second.second);
    };
    r.ord = get("ord");
    r.pos = get("pos");
    r.rel = get("rel");
    r.bert_sim = get("bert_sim");
    fill_overall(r);
    return r;
  }
};

}  // namespace

Evaluation cmd_evaluate(const EvaluateOptions& options) {
  options.edit_costs.validate();
  const auto samples = load_samples(options.dataset);
  std::map<std::string, SampleAnswer> by_id;
  for (auto& a : read_answers(options.answers)) by_id.insert_or_assign(a.sample_id, std::move(a));

  Evaluation ev;
  ev.label = options.label;
  std::vector<const DatasetSample*> present;
  for (const auto& s : samples) {
    if (by_id.count(s.id)) {
      present.push_back(&s);
    } else {
      ev.skipped.push_back(s.id);
    }
  }
  if (!ev.skipped.empty() && (!options.allow_missing || present.empty())) {
    throw Error(ErrorCode::MissingSamples, text::join(ev.skipped, ", "));
  }

  std::shared_ptr<ChatProvider> judge;
  if (options.judge) judge = make_chat_provider(*options.judge);
  std::shared_ptr<EmbeddingProvider> similarity;
  if (options.similarity) similarity = make_embedder(*options.similarity);

  ev.samples.resize(present.size());
  parallel_for(present.size(), options.workers, [&](std::size_t i) {
    ev.samples[i] = evaluate_one(*present[i], by_id.at(present[i]->id), options, judge.get(), similarity.get());
  });

  Accumulator all;
  std::map<std::string, Accumulator> per_source;
  for (const auto& s : ev.samples) {
    all.add(s.report);
    per_source[s.source].add(s.report);
  }
  ev.aggregates.push_back({"All", all.count, all.mean()});
  for (const auto& [name, acc] : per_source) ev.aggregates.push_back({name, acc.count, acc.mean()});
  return ev;
}

Json Evaluation::summary_json() const {
  Json j;
  j["label"] = label;
  j["samples"] = samples.size();
  j["skipped"] = skipped;
  Json rows = Json::array();
  for (const auto& a : aggregates) {
    Json row;
    row["source"] = a.source;
    row["count"] = a.count;
    row["metrics"] = a.mean.to_json();
    rows.push_back(std::move(row));
  }
  j["aggregates"] = rows;
  return j;
}

Evaluation Evaluation::from_summary_json(const Json& j) {
  Evaluation ev;
  ev.label = j.at("label").get<std::string>();
  if (j.contains("skipped")) ev.skipped = j["skipped"].get<std::vector<std::string>>();
  for (const auto& row : j.at("aggregates")) {
    ev.aggregates.push_back(
        {row.at("source").get<std::string>(), row.at("count").get<std::size_t>(), MetricReport::from_json(row.at("metrics"))});
  }
  return ev;
}

namespace {

struct Column {
  const char* key;
  const char* title;
  std::optional<double> (*get)(const MetricReport&);
};

const std::vector<Column>& columns() {
  static const std::vector<Column> c{
      {"rec", "Rec", [](const MetricReport& r) -> std::optional<double> { return r.rec; }},
      {"prec", "Prec", [](const MetricReport& r) -> std::optional<double> { return r.prec; }},
      {"f1", "F1", [](const MetricReport& r) -> std::optional<double> { return r.f1; }},
      {"ord", "Ord", [](const MetricReport& r) { return r.ord; }},
      {"pos", "Pos", [](const MetricReport& r) { return r.pos; }},
      {"rel", "Rel", [](const MetricReport& r) { return r.rel; }},
      {"rouge_l", "ROUGE-L", [](const MetricReport& r) -> std::optional<double> { return r.rouge_l; }},
      {"bert_sim", "BERT", [](const MetricReport& r) { return r.bert_sim; }},
      {"ovr", "Ovr", [](const MetricReport& r) { return r.ovr; }},
  };
  return c;
}

std::vector<std::string> source_order(const std::vector<Evaluation>& evaluations) {
  std::vector<std::string> out{"All"};
  std::set<std::string> rest;
  for (const auto& e : evaluations) {
    for (const auto& a : e.aggregates) {
      if (a.source != "All") rest.insert(a.source);
    }
  }
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

const AggregateRow* find_row(const Evaluation& e, const std::string& source) {
  for (const auto& a : e.aggregates) {
    if (a.source == source) return &a;
  }
  return nullptr;
}

std::string display(const std::optional<double>& v) { return v ? text::format_percent(*v) : "-"; }

}  // namespace

std::string report_csv(const std::vector<Evaluation>& evaluations) {
  std::string out = "strategy,source,n";
  for (const auto& c : columns()) out += std::string(",") + c.key;
  out += "\n";
  for (const auto& e : evaluations) {
    for (const auto& source : source_order(evaluations)) {
      const auto* row = find_row(e, source);
      if (!row) continue;
      out += e.label + "," + source + "," + std::to_string(row->count);
      for (const auto& c : columns()) {
        auto v = c.get(row->mean);
        out += "," + (v ? text::format_percent(*v) : std::string());
      }
      out += "\n";
    }
  }
  return out;
}

std::string report_markdown(const std::vector<Evaluation>& evaluations) {
  const auto sources = source_order(evaluations);
  std::vector<std::pair<std::string, const Column*>> cols;
  for (const auto& source : sources) {
    for (const auto& c : columns()) {
      bool any = false;
      for (const auto& e : evaluations) {
        const auto* row = find_row(e, source);
        if (row && c.get(row->mean)) any = true;
      }
      if (any) cols.emplace_back(source, &c);
    }
  }
  std::string header = "| Strategy |";
  std::string rule = "|---|";
  for (const auto& [source, c] : cols) {
    header += " " + source + " " + c->title + " |";
    rule += "---:|";
  }
  std::string out = header + "\n" + rule + "\n";
  for (const auto& e : evaluations) {
    out += "| " + e.label + " |";
    for (const auto& [source, c] : cols) {
      const auto* row = find_row(e, source);
      out += " " + (row ? display(c->get(row->mean)) : std::string("-")) + " |";
    }
    out += "\n";
  }
  return out;
}

void write_evaluation(const Evaluation& evaluation, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<Json> rows;
  for (const auto& s : evaluation.samples) rows.push_back(s.to_json());
  write_jsonl(dir / "metrics.jsonl", rows);
  write_file(dir / "summary.json", evaluation.summary_json().dump(2) + "\n");
  write_file(dir / "table.csv", report_csv({evaluation}));
  write_file(dir / "table.md", report_markdown({evaluation}));
}

// ---------------------------------------------------------------------------
// Alpha sweep

std::vector<SweepRow> sweep_alpha(const std::vector<RolloutItem>& rollouts, const DatasetIndex& index,
                                  const std::vector<double>& alphas, std::vector<std::string>* errors) {
  std::vector<SweepRow> rows;
  bool first = true;
  for (double alpha : alphas) {
    RewardConfig cfg{alpha};
    cfg.validate();
    const auto entries = score_batch(rollouts, index, cfg);
    SweepRow row;
    row.alpha = alpha;
    for (const auto& e : entries) {
      if (!e.score) {
        if (first && errors) errors->push_back(e.error);
        continue;
      }
      ++row.scored;
      row.r_format += e.score->r_format;
      row.r_rec += e.score->r_rec;
      row.r_pos += e.score->r_pos;
      row.r_answer += e.score->r_answer;
      row.r_total += e.score->r_total;
    }
    if (row.scored > 0) {
      const double n = static_cast<double>(row.scored);
      row.r_format /= n;
      row.r_rec /= n;
      row.r_pos /= n;
      row.r_answer /= n;
      row.r_total /= n;
    }
    rows.push_back(row);
    first = false;
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "alpha,n,r_format,r_rec,r_pos,r_answer,r_total\n";
  for (const auto& r : rows) {
    out += text::format_double(r.alpha) + "," + std::to_string(r.scored) + "," + text::format_double(r.r_format) +
           "," + text::format_double(r.r_rec) + "," + text::format_double(r.r_pos) + "," +
           text::format_double(r.r_answer) + "," + text::format_double(r.r_total) + "\n";
  }
  return out;
}

std::vector<RolloutItem> read_rollouts(const std::filesystem::path& path) {
  std::vector<RolloutItem> out;
  for (const auto& row : read_jsonl(path)) out.push_back(rollout_item_from_json(row));
  return out;
}

}  // namespace m2io
