#include "m2io/insertion.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>

#include "m2io/retrieval.hpp"
#include "m2io/text.hpp"

namespace m2io {

std::string ParseWarning::to_string() const {
  switch (kind) {
    case WarningKind::UnknownImage: return "unknown_image(" + image_id + ")";
    case WarningKind::OutOfRange:
      return "out_of_range(" + image_id + "->" + std::to_string(index) + ")";
    case WarningKind::DuplicateTarget:
      return "duplicate_target(" + image_id + ")";
    case WarningKind::DuplicateKey: return "duplicate_key(" + image_id + ")";
    case WarningKind::NoSentence: return "no_sentence(" + image_id + ")";
  }
  return "unknown";
}

std::string InserterOutput::status_string() const {
  return well_formed() ? std::string("well_formed") : "malformed:" + reason;
}

std::vector<std::string> InserterOutput::warning_strings() const {
  std::vector<std::string> out;
  for (const auto& w : warnings) out.push_back(w.to_string());
  return out;
}

// ---------------------------------------------------------------------------
// Lenient dict parsing

namespace {

class DictScanner {
 public:
  explicit DictScanner(std::string_view s) : s_(s) {}

  std::optional<std::vector<DictEntry>> parse(std::string* error, bool allow_trailing) {
    std::vector<DictEntry> entries;
    skip_ws();
    if (!eat('{')) return fail(error, "expected '{'");
    skip_ws();
    if (eat('}')) return finish(std::move(entries), error, allow_trailing);
    for (;;) {
      skip_ws();
      if (peek() == '}' && !entries.empty()) {  // trailing comma
        ++pos_;
        return finish(std::move(entries), error, allow_trailing);
      }
      DictEntry entry;
      if (!string_literal(entry.key)) return fail(error, "expected quoted key");
      skip_ws();
      if (!eat(':')) return fail(error, "expected ':' after key");
      skip_ws();
      if (!integer_value(entry)) return fail(error, "expected integer value for " + entry.key);
      entries.push_back(std::move(entry));
      skip_ws();
      if (eat(',')) continue;
      if (eat('}')) return finish(std::move(entries), error, allow_trailing);
      return fail(error, "expected ',' or '}'");
    }
  }

 private:
  std::optional<std::vector<DictEntry>> finish(std::vector<DictEntry> entries, std::string* error,
                                               bool allow_trailing) {
    skip_ws();
    if (!allow_trailing && pos_ != s_.size()) return fail(error, "text after closing '}'");
    return entries;
  }

  static std::optional<std::vector<DictEntry>> fail(std::string* error, std::string msg) {
    if (error) *error = std::move(msg);
    return std::nullopt;
  }

  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }
  bool eat(char c) {
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void skip_ws() {
    while (pos_ < s_.size() && text::is_space(s_[pos_])) ++pos_;
  }

  bool string_literal(std::string& out) {
    char quote = peek();
    if (quote != '"' && quote != '\'') return false;
    ++pos_;
    while (pos_ < s_.size()) {
      char c = s_[pos_++];
      if (c == quote) return true;
      if (c == '\\') {
        if (pos_ >= s_.size()) return false;
        char esc = s_[pos_++];
        switch (esc) {
          case 'n': out.push_back('\n'); break;
          case 't': out.push_back('\t'); break;
          case 'r': out.push_back('\r'); break;
          default: out.push_back(esc); break;
        }
        continue;
      }
      out.push_back(c);
    }
    return false;
  }

  bool integer_value(DictEntry& entry) {
    char quote = 0;
    if (peek() == '"' || peek() == '\'') {
      quote = peek();
      ++pos_;
      skip_ws();
    }
    bool negative = false;
    if (peek() == '-' || peek() == '+') {
      negative = peek() == '-';
      ++pos_;
    }
    std::size_t digits = 0;
    long long value = 0;
    while (pos_ < s_.size() && s_[pos_] >= '0' && s_[pos_] <= '9') {
      int d = s_[pos_] - '0';
      if (value > (std::numeric_limits<long long>::max() - d) / 10) {
        entry.overflow = true;
      } else {
        value = value * 10 + d;
      }
      ++pos_;
      ++digits;
    }
    if (digits == 0) return false;
    if (quote) {
      skip_ws();
      if (!eat(quote)) return false;
    }
    if (entry.overflow) value = std::numeric_limits<long long>::max();
    entry.value = negative ? -value : value;
    return true;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

std::string_view strip_code_fence(std::string_view s) {
  auto t = text::trim(s);
  if (!t.starts_with("```")) return s;
  auto first_nl = t.find('\n');
  if (first_nl == std::string_view::npos) return s;
  auto body = t.substr(first_nl + 1);
  auto close = body.rfind("```");
  if (close == std::string_view::npos) return s;
  return body.substr(0, close);
}

std::size_t count_of(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

PlacementMap normalize_entries(const std::vector<DictEntry>& entries, const ImageIdSet& valid_ids,
                               std::size_t m, std::vector<ParseWarning>& warnings) {
  PlacementMap pm;
  std::set<std::string> seen_keys;
  for (const auto& e : entries) {
    if (!seen_keys.insert(e.key).second) {
      warnings.push_back({WarningKind::DuplicateKey, e.key, e.value});
      continue;
    }
    if (!valid_ids.count(e.key)) {
      warnings.push_back({WarningKind::UnknownImage, e.key, e.value});
      continue;
    }
    if (e.overflow || e.value < 1 || static_cast<unsigned long long>(e.value) > m) {
      warnings.push_back({WarningKind::OutOfRange, e.key, e.value});
      continue;
    }
    if (pm.target_taken(static_cast<int>(e.value))) {
      warnings.push_back({WarningKind::DuplicateTarget, e.key, e.value});
      continue;
    }
    pm.insert(e.key, static_cast<int>(e.value));
  }
  return pm;
}

InserterOutput malformed(std::string_view raw, std::string reason) {
  InserterOutput out;
  out.raw = std::string(raw);
  out.status = ParseStatus::Malformed;
  out.reason = std::move(reason);
  return out;
}

bool only_space(std::string_view s) { return text::trim(s).empty(); }

}  // namespace

std::optional<std::vector<DictEntry>> parse_lenient_dict(std::string_view payload, std::string* error,
                                                          bool allow_trailing_text) {
  return DictScanner(strip_code_fence(payload)).parse(error, allow_trailing_text);
}

InserterOutput parse_inserter_output(std::string_view raw, const ImageIdSet& valid_ids,
                                     std::size_t sentence_count) {
  static constexpr std::string_view kOpenThink = "<think>";
  static constexpr std::string_view kCloseThink = "</think>";
  static constexpr std::string_view kOpenAnswer = "<answer>";
  static constexpr std::string_view kCloseAnswer = "</answer>";

  auto n_ot = count_of(raw, kOpenThink);
  auto n_ct = count_of(raw, kCloseThink);
  auto n_oa = count_of(raw, kOpenAnswer);
  auto n_ca = count_of(raw, kCloseAnswer);
  if (n_ot == 0 && n_ct == 0) return malformed(raw, "missing_think");
  if (n_ot > 1 || n_ct > 1) return malformed(raw, "duplicate_think");
  if (n_ot != n_ct) return malformed(raw, "unclosed_think");
  if (n_oa == 0 && n_ca == 0) return malformed(raw, "missing_answer");
  if (n_oa > 1 || n_ca > 1) return malformed(raw, "duplicate_answer");
  if (n_oa != n_ca) return malformed(raw, "unclosed_answer");

  auto ot = raw.find(kOpenThink);
  auto ct = raw.find(kCloseThink);
  auto oa = raw.find(kOpenAnswer);
  auto ca = raw.find(kCloseAnswer);
  if (!(ot < ct && ct < oa && oa < ca)) return malformed(raw, "tag_order");
  if (!only_space(raw.substr(0, ot)) ||
      !only_space(raw.substr(ct + kCloseThink.size(), oa - ct - kCloseThink.size())) ||
      !only_space(raw.substr(ca + kCloseAnswer.size()))) {
    return malformed(raw, "text_outside_tags");
  }

  auto payload = raw.substr(oa + kOpenAnswer.size(), ca - oa - kOpenAnswer.size());
  std::string error;
  auto entries = parse_lenient_dict(payload, &error);
  if (!entries) return malformed(raw, "invalid_dict: " + error);

  InserterOutput out;
  out.raw = std::string(raw);
  out.think = std::string(raw.substr(ot + kOpenThink.size(), ct - ot - kOpenThink.size()));
  out.answer_dict = normalize_entries(*entries, valid_ids, sentence_count, out.warnings);
  out.status = ParseStatus::WellFormed;
  return out;
}

InserterOutput parse_base_output(std::string_view raw, const ImageIdSet& valid_ids,
                                 std::size_t sentence_count) {
  auto body = strip_code_fence(raw);
  auto brace = body.find('{');
  if (brace == std::string_view::npos) return malformed(raw, "missing_dict");
  std::string error;
  auto entries = DictScanner(body.substr(brace)).parse(&error, true);
  if (!entries) return malformed(raw, "invalid_dict: " + error);
  InserterOutput out;
  out.raw = std::string(raw);
  out.answer_dict = normalize_entries(*entries, valid_ids, sentence_count, out.warnings);
  out.status = ParseStatus::WellFormed;
  return out;
}

// ---------------------------------------------------------------------------
// Prompt-based insertion

std::string render_candidates(std::span<const ImageAsset> candidates) {
  std::vector<const ImageAsset*> sorted;
  for (const auto& c : candidates) sorted.push_back(&c);
  std::sort(sorted.begin(), sorted.end(),
            [](const ImageAsset* a, const ImageAsset* b) { return text::natural_less(a->id, b->id); });
  Json arr = Json::array();
  for (const auto* c : sorted) {
    Json j;
    j["image_id"] = c->id;
    if (c->caption) j["caption"] = *c->caption;
    if (c->context_above || c->context_below) {
      j["context"] = "[" + c->context_above.value_or("") + "] <img> [" + c->context_below.value_or("") + "]";
    }
    arr.push_back(std::move(j));
  }
  return arr.dump();
}

std::string render_sentence_dict(const SentenceMap& sentences) {
  return sentences_to_json(sentences).dump();
}

ChatRequest build_insertion_request(const Query& query, const SentenceMap& sentences,
                                    std::span<const ImageAsset> candidates, InserterStyle style,
                                    const GenerationOptions& options) {
  const auto& tmpl = style == InserterStyle::R1 ? prompts::insert_r1() : prompts::insert_base();
  ChatRequest req;
  req.model = options.model;
  req.temperature = options.temperature;
  req.max_tokens = options.max_tokens;
  req.user = render(tmpl, {{"question", query.text},
                           {"ground_truth_dict", render_sentence_dict(sentences)},
                           {"imgs_info", render_candidates(candidates)}});
  std::vector<std::string> ids;
  for (const auto& c : candidates) ids.push_back(c.id);
  std::sort(ids.begin(), ids.end(), [](const auto& a, const auto& b) { return text::natural_less(a, b); });
  req.metadata = {{"task", tmpl.name},
                  {"candidate_ids", text::join(ids, ",")},
                  {"sentence_count", std::to_string(sentences.size())}};
  return req;
}

PromptInsertion insert_prompt_based(const Query& query, const SentenceMap& sentences,
                                    std::span<const ImageAsset> candidates, ChatProvider& provider,
                                    InserterStyle style, const GenerationOptions& options) {
  if (sentences.empty()) throw Error(ErrorCode::InvalidArgument, "no sentences to illustrate");
  auto req = build_insertion_request(query, sentences, candidates, style, options);
  auto resp = provider.complete(req);
  ImageIdSet valid;
  for (const auto& c : candidates) valid.insert(c.id);
  PromptInsertion out;
  out.output = style == InserterStyle::R1 ? parse_inserter_output(resp.text, valid, sentences.size())
                                          : parse_base_output(resp.text, valid, sentences.size());
  if (out.output.well_formed()) out.placements = *out.output.answer_dict;
  return out;
}

// ---------------------------------------------------------------------------
// Hungarian assignment

Assignment max_weight_assignment(const std::vector<std::vector<double>>& weights) {
  Assignment result;
  const std::size_t rows = weights.size();
  const std::size_t cols = rows ? weights.front().size() : 0;
  for (const auto& r : weights) {
    if (r.size() != cols) throw Error(ErrorCode::InvalidArgument, "ragged weight matrix");
  }
  if (rows == 0 || cols == 0) return result;

  // Work on an n x m cost matrix with n <= m.
  const bool transposed = rows > cols;
  const std::size_t n = transposed ? cols : rows;
  const std::size_t m = transposed ? rows : cols;
  auto cost = [&](std::size_t i, std::size_t j) {  // 1-based
    return transposed ? -weights[j - 1][i - 1] : -weights[i - 1][j - 1];
  };

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      std::size_t i0 = p[j0];
      std::size_t j1 = 0;
      double delta = inf;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        double cur = cost(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  for (std::size_t j = 1; j <= m; ++j) {
    if (!p[j]) continue;
    std::size_t r = transposed ? j - 1 : p[j] - 1;
    std::size_t c = transposed ? p[j] - 1 : j - 1;
    result.pairs.emplace_back(r, c);
  }
  std::sort(result.pairs.begin(), result.pairs.end());
  for (auto [r, c] : result.pairs) result.total += weights[r][c];
  return result;
}

PlacementMap match_sentences_to_images(const std::vector<std::vector<double>>& weights,
                                       const std::vector<ImageId>& image_ids, double threshold) {
  PlacementMap pm;
  auto assignment = max_weight_assignment(weights);
  for (auto [s, i] : assignment.pairs) {
    if (i >= image_ids.size()) throw Error(ErrorCode::InvalidArgument, "image id list too short");
    if (weights[s][i] >= threshold) pm.insert(image_ids[i], static_cast<int>(s + 1));
  }
  return pm;
}

PlacementMap insert_rule_based(const SentenceMap& sentences, std::span<const ImageAsset> candidates,
                               EmbeddingProvider& embedder, double threshold) {
  std::vector<ImageId> ids;
  std::vector<std::string> texts(sentences.sentences().begin(), sentences.sentences().end());
  for (const auto& c : candidates) {
    if (!c.has_text()) continue;
    ids.push_back(c.id);
    texts.push_back(c.matching_text());
  }
  if (sentences.empty() || ids.empty()) return {};
  auto vectors = embedder.embed(texts);
  if (vectors.size() != texts.size()) {
    throw Error(ErrorCode::ProviderError, embedder.name() + " returned wrong batch size");
  }
  const std::size_t m = sentences.size();
  std::vector<std::vector<double>> w(m, std::vector<double>(ids.size()));
  for (std::size_t s = 0; s < m; ++s) {
    for (std::size_t i = 0; i < ids.size(); ++i) w[s][i] = cosine(vectors[s], vectors[m + i]);
  }
  return match_sentences_to_images(w, ids, threshold);
}

// ---------------------------------------------------------------------------
// Single-shot

namespace {

struct Placeholder {
  std::size_t begin = 0;
  std::size_t end = 0;
  ImageId id;
  bool valid = false;
};

std::optional<Placeholder> placeholder_at(std::string_view s, std::size_t pos, const ImageIdSet& valid) {
  if (s[pos] != '<') return std::nullopt;
  auto close = s.find('>', pos + 1);
  if (close == std::string_view::npos || close - pos > 128) return std::nullopt;
  std::string inner(s.substr(pos + 1, close - pos - 1));
  Placeholder ph{pos, close + 1, {}, false};
  if (valid.count(inner)) {
    ph.id = inner;
    ph.valid = true;
    return ph;
  }
  auto digits_after = [&](std::string_view prefix) -> std::optional<std::string> {
    if (!std::string_view(inner).starts_with(prefix) || inner.size() == prefix.size()) return std::nullopt;
    auto rest = std::string_view(inner).substr(prefix.size());
    if (!std::all_of(rest.begin(), rest.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      return std::nullopt;
    }
    return std::string(rest);
  };
  if (auto d = digits_after("image")) {
    ph.id = "image" + *d;
  } else if (auto d2 = digits_after("img_")) {
    ph.id = "image" + *d2;
  } else {
    return std::nullopt;
  }
  ph.valid = valid.count(ph.id) != 0;
  return ph;
}

}  // namespace

SingleShotResult parse_single_shot(std::string_view interleaved, const ImageIdSet& valid_ids) {
  SingleShotResult result;
  std::string stripped;
  std::vector<std::pair<std::size_t, Placeholder>> found;  // offset in stripped text
  for (std::size_t i = 0; i < interleaved.size();) {
    if (auto ph = placeholder_at(interleaved, i, valid_ids)) {
      // Drop one side of the surrounding whitespace so no double gap remains.
      bool left_space = stripped.empty() || text::is_space(stripped.back());
      std::size_t next = ph->end;
      if (left_space) {
        while (next < interleaved.size() && text::is_space(interleaved[next])) ++next;
      }
      if (next >= interleaved.size() || std::string_view(".,;:!?)]").find(interleaved[next]) != std::string_view::npos) {
        while (!stripped.empty() && text::is_space(stripped.back())) stripped.pop_back();
      }
      found.emplace_back(stripped.size(), *ph);
      i = next;
      continue;
    }
    stripped.push_back(interleaved[i]);
    ++i;
  }
  if (found.empty()) {
    result.text = std::string(interleaved);
  } else {
    result.text = stripped;
  }
  result.sentences = split_sentences(result.text);
  auto spans = split_sentence_spans(result.text);
  std::set<ImageId> seen;
  for (const auto& [offset, ph] : found) {
    if (!ph.valid) {
      result.warnings.push_back({WarningKind::UnknownImage, ph.id, 0});
      continue;
    }
    if (!seen.insert(ph.id).second) {
      result.warnings.push_back({WarningKind::DuplicateKey, ph.id, 0});
      continue;
    }
    if (spans.empty()) {
      result.warnings.push_back({WarningKind::NoSentence, ph.id, 0});
      continue;
    }
    std::size_t before = 0;
    for (const auto& sp : spans) {
      if (sp.begin < offset) ++before;
    }
    int index = static_cast<int>(std::max<std::size_t>(before, 1));
    if (result.placements.target_taken(index)) {
      result.warnings.push_back({WarningKind::DuplicateTarget, ph.id, index});
      continue;
    }
    result.placements.insert(ph.id, index);
  }
  return result;
}

SingleShotAnswer generate_single_shot(const Query& query, std::span<const DocumentChunk> context,
                                      std::span<const ImageAsset> candidates, ChatProvider& provider,
                                      const GenerationOptions& options) {
  if (context.empty()) throw Error(ErrorCode::InvalidArgument, "no retrieved context for " + query.id);
  auto ctx = build_context(context);
  ChatRequest req;
  req.model = options.model;
  req.temperature = options.temperature;
  req.max_tokens = options.max_tokens;
  req.user = render(prompts::single_shot(), {{"query_str", query.text},
                                             {"context_str", ctx},
                                             {"imgs_info", render_candidates(candidates)}});
  std::vector<std::string> ids;
  ImageIdSet valid;
  for (const auto& c : candidates) {
    ids.push_back(c.id);
    valid.insert(c.id);
  }
  std::sort(ids.begin(), ids.end(), [](const auto& a, const auto& b) { return text::natural_less(a, b); });
  req.metadata = {{"task", "single_shot"}, {"context", ctx}, {"candidate_ids", text::join(ids, ",")}};
  SingleShotAnswer out;
  out.response = provider.complete(req);
  out.raw = out.response.text;
  if (text::trim(out.raw).empty()) {
    throw Error(ErrorCode::EmptyCompletion, "single-shot generator returned no text for " + query.id);
  }
  out.parsed = parse_single_shot(out.raw, valid);
  return out;
}

// ---------------------------------------------------------------------------
// Merge

MultimodalAnswer merge(std::string_view answer_text, const SentenceMap& sentences,
                       const PlacementMap& placements, std::span<const ImageAsset> catalog) {
  std::set<ImageId> known;
  for (const auto& a : catalog) known.insert(a.id);
  std::map<int, ImageId> after;
  for (const auto& [id, index] : placements.entries()) {
    if (!known.count(id)) throw Error(ErrorCode::UnknownImage, id);
    if (index < 1 || static_cast<std::size_t>(index) > sentences.size()) {
      throw Error(ErrorCode::OutOfRange, id + " -> " + std::to_string(index));
    }
    after.emplace(index, id);
  }
  MultimodalAnswer answer;
  if (sentences.empty()) {
    auto t = text::normalize_whitespace(answer_text);
    if (!t.empty()) answer.blocks.emplace_back(TextBlock{std::move(t)});
    return answer;
  }
  std::vector<std::string> pending;
  for (std::size_t j = 1; j <= sentences.size(); ++j) {
    pending.push_back(sentences.at(j));
    if (auto it = after.find(static_cast<int>(j)); it != after.end()) {
      answer.blocks.emplace_back(TextBlock{text::join(pending, " ")});
      pending.clear();
      answer.blocks.emplace_back(ImageBlock{it->second});
    }
  }
  if (!pending.empty()) answer.blocks.emplace_back(TextBlock{text::join(pending, " ")});
  return answer;
}

std::string to_markdown(const MultimodalAnswer& answer, std::span<const ImageAsset> catalog) {
  std::vector<std::string> parts;
  for (const auto& b : answer.blocks) {
    if (const auto* t = std::get_if<TextBlock>(&b)) {
      parts.push_back(t->text);
    } else {
      const auto& id = std::get<ImageBlock>(b).image_id;
      std::string uri;
      for (const auto& a : catalog) {
        if (a.id == id) uri = a.uri;
      }
      parts.push_back("![" + id + "](" + uri + ")");
    }
  }
  return text::join(parts, "\n\n") + "\n";
}

std::string to_interleaved(const MultimodalAnswer& answer) {
  std::vector<std::string> parts;
  for (const auto& b : answer.blocks) {
    if (const auto* t = std::get_if<TextBlock>(&b)) {
      parts.push_back(t->text);
    } else {
      parts.push_back("<" + std::get<ImageBlock>(b).image_id + ">");
    }
  }
  return text::join(parts, " ");
}

Json insertion_trace(std::string_view strategy, std::string_view raw_output, std::string_view parse_status,
                     const std::vector<std::string>& warnings, const PlacementMap& placements) {
  Json j;
  j["strategy"] = strategy;
  j["raw_output"] = raw_output;
  j["parse_status"] = parse_status;
  j["warnings"] = warnings;
  j["placements"] = placements_to_json(placements);
  return j;
}

}  // namespace m2io
