#include "m2io/metrics.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "m2io/generation.hpp"
#include "m2io/retrieval.hpp"
#include "m2io/text.hpp"

namespace m2io {

namespace {

std::size_t intersection_size(const ImageIdSet& a, const ImageIdSet& b) {
  std::size_t n = 0;
  for (const auto& x : a) n += b.count(x);
  return n;
}

}  // namespace

double recall(const ImageIdSet& pred, const ImageIdSet& gt) {
  if (gt.empty()) return pred.empty() ? 1.0 : 0.0;
  return static_cast<double>(intersection_size(pred, gt)) / static_cast<double>(gt.size());
}

double precision(const ImageIdSet& pred, const ImageIdSet& gt) {
  if (pred.empty()) return gt.empty() ? 1.0 : 0.0;
  return static_cast<double>(intersection_size(pred, gt)) / static_cast<double>(pred.size());
}

double f1_from(double p, double r) {
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

double f1(const ImageIdSet& pred, const ImageIdSet& gt) { return f1_from(precision(pred, gt), recall(pred, gt)); }

void EditCostConfig::validate() const {
  if (!(p1 > p2 && p2 > p3 && p3 > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "edit costs must satisfy p1 > p2 > p3 > 0");
  }
  if (!(p >= p1)) throw Error(ErrorCode::InvalidArgument, "normalizer p must be >= p1");
}

double weighted_edit_distance(std::span<const ImageId> gt, std::span<const ImageId> pred,
                              const EditCostConfig& costs) {
  const std::size_t n = gt.size();
  const std::size_t m = pred.size();
  // dp[i][j]: cost of turning pred[0..j) into gt[0..i).
  std::vector<double> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<double>(j) * costs.p2;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<double>(i) * costs.p1;
    for (std::size_t j = 1; j <= m; ++j) {
      double insert = prev[j] + costs.p1;
      double remove = cur[j - 1] + costs.p2;
      double subst = prev[j - 1] + (gt[i - 1] == pred[j - 1] ? 0.0 : costs.p3);
      cur[j] = std::min({insert, remove, subst});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double order_score(std::span<const ImageId> gt, std::span<const ImageId> pred, const EditCostConfig& costs) {
  if (gt.empty()) throw Error(ErrorCode::EmptyGroundTruth, "order score needs at least one ground-truth image");
  const ImageIdSet g(gt.begin(), gt.end());
  const ImageIdSet p(pred.begin(), pred.end());
  const double n = static_cast<double>(gt.size());
  const double overlap = static_cast<double>(intersection_size(g, p)) / n;
  const double dist = weighted_edit_distance(gt, pred, costs);
  const double penalty = std::min(dist / n, costs.p) / costs.p;
  return std::clamp(overlap * (1.0 - penalty), 0.0, 1.0);
}

double position_score(const PlacementSequence& gt, const PlacementSequence& pred) {
  if (gt.size() != pred.size()) {
    throw Error(ErrorCode::LengthMismatch,
                "gt has " + std::to_string(gt.size()) + " slots, pred has " + std::to_string(pred.size()));
  }
  const bool gt_empty = gt.all_empty();
  const bool pred_empty = pred.all_empty();
  if (gt_empty && pred_empty) return 1.0;
  if (pred_empty) return 0.0;
  ImageIdSet gt_images;
  for (const auto& s : gt.slots) {
    if (s) gt_images.insert(*s);
  }
  double total = 0.0;
  for (std::size_t j = 0; j < gt.size(); ++j) {
    const auto& g = gt.slots[j];
    const auto& p = pred.slots[j];
    if (g == p) {
      total += 1.0;
    } else if (p && gt_images.count(*p)) {
      total += 0.5;
    }
  }
  return total / static_cast<double>(gt.size());
}

double rouge_l(std::string_view candidate, std::string_view reference) {
  const auto c = text::word_tokens(candidate);
  const auto r = text::word_tokens(reference);
  if (c.empty() || r.empty()) return 0.0;
  std::vector<std::size_t> prev(r.size() + 1, 0), cur(r.size() + 1, 0);
  for (std::size_t i = 1; i <= c.size(); ++i) {
    for (std::size_t j = 1; j <= r.size(); ++j) {
      cur[j] = c[i - 1] == r[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[r.size()]);
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(c.size());
  const double rr = lcs / static_cast<double>(r.size());
  return 2.0 * p * rr / (p + rr);
}

// ---------------------------------------------------------------------------
// Judges

namespace {

std::optional<std::string> tag_body(std::string_view reply, std::string_view tag) {
  const std::string open = "<" + std::string(tag) + ">";
  const std::string close = "</" + std::string(tag) + ">";
  auto b = reply.find(open);
  if (b == std::string_view::npos) return std::nullopt;
  b += open.size();
  auto e = reply.find(close, b);
  if (e == std::string_view::npos) return std::nullopt;
  return std::string(text::trim(reply.substr(b, e - b)));
}

std::optional<int> small_int(const std::string& s) {
  if (s.empty() || s.size() > 3) return std::nullopt;
  int v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + (c - '0');
  }
  return v;
}

struct JudgeView {
  std::string answer_str;
  std::size_t placeholders = 0;
  std::vector<std::size_t> first_occurrence;  // 1-based placeholder numbers
  std::vector<const ImageAsset*> unique_images;
};

JudgeView judge_view(const MultimodalAnswer& answer, std::span<const ImageAsset> catalog) {
  JudgeView v;
  std::set<ImageId> seen;
  std::vector<std::string> parts;
  for (const auto& b : answer.blocks) {
    if (const auto* t = std::get_if<TextBlock>(&b)) {
      parts.push_back(t->text);
      continue;
    }
    const auto& id = std::get<ImageBlock>(b).image_id;
    ++v.placeholders;
    parts.push_back("<img_" + std::to_string(v.placeholders) + ">");
    if (seen.insert(id).second) {
      v.first_occurrence.push_back(v.placeholders);
      const ImageAsset* asset = nullptr;
      for (const auto& a : catalog) {
        if (a.id == id) asset = &a;
      }
      v.unique_images.push_back(asset);
    }
  }
  v.answer_str = text::join(parts, " ");
  return v;
}

ChatRequest judge_request(const PromptTemplate& tmpl, const Bindings& bindings, const JudgeOptions& options,
                          std::size_t image_count, int attempt) {
  ChatRequest req;
  req.model = options.model;
  req.temperature = 0.0;
  req.user = render(tmpl, bindings);
  req.metadata = {{"task", tmpl.name},
                  {"image_count", std::to_string(image_count)},
                  {"attempt", std::to_string(attempt)}};
  return req;
}

}  // namespace

std::optional<int> parse_relevance_score(std::string_view reply) {
  auto body = tag_body(reply, "relevance_score");
  if (!body) return std::nullopt;
  auto v = small_int(*body);
  if (!v || *v < 1 || *v > 5) return std::nullopt;
  return v;
}

std::optional<std::vector<int>> parse_position_scores(std::string_view reply, std::size_t count) {
  std::vector<int> out;
  for (std::size_t k = 1; k <= count; ++k) {
    auto body = tag_body(reply, "img_" + std::to_string(k) + "_score");
    if (!body) return std::nullopt;
    auto v = small_int(*body);
    if (!v || *v > 1) return std::nullopt;
    out.push_back(*v);
  }
  return out;
}

Bindings judge_bindings(const MultimodalAnswer& answer, const Query& query, std::span<const ImageAsset> catalog) {
  auto v = judge_view(answer, catalog);
  Json contexts = Json::array();
  Json captions = Json::array();
  for (const auto* a : v.unique_images) {
    if (!a) {
      contexts.push_back("");
      captions.push_back("");
      continue;
    }
    contexts.push_back("[" + a->context_above.value_or("") + "] <img> [" + a->context_below.value_or("") + "]");
    captions.push_back(a->caption.value_or(""));
  }
  return {{"query_str", query.text},
          {"answer_str", v.answer_str},
          {"context_str_list", contexts.dump()},
          {"caption_str_list", captions.dump()},
          {"image_number", std::to_string(v.placeholders)}};
}

double judge_relevance(const MultimodalAnswer& answer, const Query& query, std::span<const ImageAsset> catalog,
                       ChatProvider& judge, const JudgeOptions& options) {
  if (answer.image_count() == 0) throw Error(ErrorCode::InvalidArgument, "relevance needs at least one image");
  const auto bindings = judge_bindings(answer, query, catalog);
  const auto count = judge_view(answer, catalog).placeholders;
  for (int attempt = 0; attempt < std::max(options.attempts, 1); ++attempt) {
    auto resp = judge.complete(judge_request(prompts::judge_relevance(), bindings, options, count, attempt));
    if (auto s = parse_relevance_score(resp.text)) {
      return options.scale == RelevanceScale::ZeroBased ? (*s - 1) / 4.0 : *s / 5.0;
    }
  }
  throw Error(ErrorCode::JudgeParseError, "no <relevance_score> in judge reply for " + query.id);
}

double judge_position(const MultimodalAnswer& answer, const Query& query, std::span<const ImageAsset> catalog,
                      ChatProvider& judge, const JudgeOptions& options) {
  if (answer.image_count() == 0) throw Error(ErrorCode::InvalidArgument, "position judging needs at least one image");
  const auto bindings = judge_bindings(answer, query, catalog);
  const auto view = judge_view(answer, catalog);
  for (int attempt = 0; attempt < std::max(options.attempts, 1); ++attempt) {
    auto resp = judge.complete(judge_request(prompts::judge_position(), bindings, options, view.placeholders, attempt));
    std::vector<int> scores;
    bool ok = true;
    for (auto k : view.first_occurrence) {
      auto body = tag_body(resp.text, "img_" + std::to_string(k) + "_score");
      auto v = body ? small_int(*body) : std::nullopt;
      if (!v || *v > 1) {
        ok = false;
        break;
      }
      scores.push_back(*v);
    }
    if (!ok) continue;
    double sum = 0.0;
    for (int s : scores) sum += s;
    return sum / static_cast<double>(scores.size());
  }
  throw Error(ErrorCode::JudgeParseError, "missing <img_k_score> tags in judge reply for " + query.id);
}

double bert_sim(std::string_view candidate, std::string_view reference, EmbeddingProvider& embedder) {
  std::vector<std::string> texts{std::string(candidate), std::string(reference)};
  auto v = embedder.embed(texts);
  if (v.size() != 2) throw Error(ErrorCode::ProviderError, embedder.name() + " returned wrong batch size");
  return std::clamp(cosine(v[0], v[1]), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Report

namespace {

void put_optional(Json& j, const char* key, const std::optional<double>& v) {
  if (v) {
    j[key] = *v;
  } else {
    j[key] = nullptr;
  }
}

std::optional<double> get_optional(const Json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

}  // namespace

Json MetricReport::to_json() const {
  Json j;
  j["rec"] = rec;
  j["prec"] = prec;
  j["f1"] = f1;
  put_optional(j, "ord", ord);
  put_optional(j, "pos", pos);
  put_optional(j, "rel", rel);
  j["rouge_l"] = rouge_l;
  put_optional(j, "bert_sim", bert_sim);
  put_optional(j, "ovr", ovr);
  return j;
}

MetricReport MetricReport::from_json(const Json& j) {
  MetricReport r;
  r.rec = j.at("rec").get<double>();
  r.prec = j.at("prec").get<double>();
  r.f1 = j.at("f1").get<double>();
  r.ord = get_optional(j, "ord");
  r.pos = get_optional(j, "pos");
  r.rel = get_optional(j, "rel");
  r.rouge_l = j.at("rouge_l").get<double>();
  r.bert_sim = get_optional(j, "bert_sim");
  r.ovr = get_optional(j, "ovr");
  return r;
}

double overall(const MetricReport& report) {
  std::vector<std::string> missing;
  if (!report.rel) missing.push_back("rel");
  if (!report.bert_sim) missing.push_back("bert_sim");
  if (!missing.empty()) throw Error(ErrorCode::MissingComponent, text::join(missing, ", "));
  double sum = report.f1 + *report.rel + *report.bert_sim + report.rouge_l;
  double n = 4.0;
  if (report.ord) {
    sum += *report.ord;
    n += 1.0;
  }
  return sum / n;
}

void fill_overall(MetricReport& report) {
  if (report.rel && report.bert_sim) {
    report.ovr = overall(report);
  } else {
    report.ovr.reset();
  }
}

}  // namespace m2io
