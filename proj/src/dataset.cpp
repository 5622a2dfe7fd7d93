#include "m2io/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "m2io/generation.hpp"
#include "m2io/insertion.hpp"
#include "m2io/retrieval.hpp"
#include "m2io/text.hpp"

namespace m2io {

void SampleBuilderConfig::validate() const {
  if (!(negative_ratio >= 0.0)) throw Error(ErrorCode::InvalidArgument, "negative_ratio must be >= 0");
  if (!(hard_fraction >= 0.0 && hard_fraction <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "hard_fraction must lie in [0, 1]");
  }
}

std::uint64_t SeededRng::below(std::uint64_t bound) {
  if (bound == 0) throw Error(ErrorCode::InvalidArgument, "empty range");
  // Rejection sampling keeps the draw unbiased and independent of the stdlib.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  for (;;) {
    std::uint64_t x = engine_();
    if (x < limit) return x % bound;
  }
}

std::uint64_t sample_seed(std::uint64_t seed, std::string_view sample_id) {
  std::uint64_t h = text::fnv1a64(sample_id);
  // splitmix64 finalizer over the combination
  std::uint64_t z = seed ^ (h + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

long long round_half_up(double x) { return static_cast<long long>(std::floor(x + 0.5)); }

}  // namespace

DatasetSample build_sample(const DatasetSample& base, std::span<const ImageAsset> image_corpus,
                           EmbeddingProvider& embedder, const SampleBuilderConfig& config) {
  config.validate();
  const auto positive_ids = base.gt.placements.image_set();
  if (positive_ids.empty()) throw Error(ErrorCode::InvalidArgument, base.id + " has no positive images");

  std::vector<ImageAsset> positives;
  for (const auto& id : positive_ids) {
    const ImageAsset* found = base.find_image(id);
    if (!found) {
      for (const auto& a : image_corpus) {
        if (a.id == id) {
          found = &a;
          break;
        }
      }
    }
    if (!found) throw Error(ErrorCode::InvalidArgument, base.id + ": positive image " + id + " not found");
    positives.push_back(*found);
  }

  std::vector<const ImageAsset*> pool;
  std::set<ImageId> seen(positive_ids.begin(), positive_ids.end());
  for (const auto& a : image_corpus) {
    if (seen.insert(a.id).second) pool.push_back(&a);
  }
  const auto n_neg = static_cast<std::size_t>(round_half_up(config.negative_ratio * positives.size()));
  if (pool.size() < n_neg) {
    throw Error(ErrorCode::InsufficientCorpus, base.id + " needs " + std::to_string(n_neg) +
                                                   " negatives, corpus offers " + std::to_string(pool.size()));
  }
  const auto n_hard = static_cast<std::size_t>(round_half_up(config.hard_fraction * static_cast<double>(n_neg)));

  std::vector<const ImageAsset*> negatives;
  if (n_hard > 0) {
    std::vector<std::string> texts{base.query.text};
    for (const auto* a : pool) texts.push_back(a->matching_text());
    auto vectors = embedder.embed(texts);
    if (vectors.size() != texts.size()) {
      throw Error(ErrorCode::ProviderError, embedder.name() + " returned wrong batch size");
    }
    std::vector<std::pair<double, const ImageAsset*>> scored;
    for (std::size_t i = 0; i < pool.size(); ++i) scored.emplace_back(cosine(vectors[0], vectors[i + 1]), pool[i]);
    std::sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
      if (x.first != y.first) return x.first > y.first;
      return x.second->id < y.second->id;
    });
    for (std::size_t i = 0; i < n_hard; ++i) negatives.push_back(scored[i].second);
  }
  std::set<ImageId> hard_ids;
  for (const auto* a : negatives) hard_ids.insert(a->id);
  std::vector<const ImageAsset*> remainder;
  for (const auto* a : pool) {
    if (!hard_ids.count(a->id)) remainder.push_back(a);
  }
  std::sort(remainder.begin(), remainder.end(),
            [](const ImageAsset* a, const ImageAsset* b) { return a->id < b->id; });

  SeededRng rng(sample_seed(config.seed, base.id));
  for (std::size_t k = 0; negatives.size() < n_neg; ++k) {
    std::size_t j = k + static_cast<std::size_t>(rng.below(remainder.size() - k));
    std::swap(remainder[k], remainder[j]);
    negatives.push_back(remainder[k]);
  }

  DatasetSample out = base;
  out.images = positives;
  for (const auto* a : negatives) out.images.push_back(*a);
  rng.shuffle(out.images);
  return out;
}

// ---------------------------------------------------------------------------
// Difficulty

std::vector<Difficulty> assign_tiers(std::span<const double> means) {
  std::vector<Difficulty> out(means.size(), Difficulty::Medium);
  if (means.empty()) return out;
  std::vector<double> v(means.begin(), means.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  const std::size_t third = (n + 2) / 3;
  const double q1 = v[third - 1];
  const double q2 = v[n - third];
  for (std::size_t i = 0; i < means.size(); ++i) {
    const double x = means[i];
    if (q1 == q2) {
      if (x < q1) out[i] = Difficulty::Hard;
      if (x > q2) out[i] = Difficulty::Easy;
    } else if (x <= q1) {
      out[i] = Difficulty::Hard;
    } else if (x >= q2) {
      out[i] = Difficulty::Easy;
    }
  }
  return out;
}

std::optional<int> parse_difficulty_score(std::string_view reply) {
  static constexpr std::string_view kOpen = "<difficulty_score>";
  static constexpr std::string_view kClose = "</difficulty_score>";
  auto b = reply.find(kOpen);
  if (b == std::string_view::npos) return std::nullopt;
  b += kOpen.size();
  auto e = reply.find(kClose, b);
  if (e == std::string_view::npos) return std::nullopt;
  auto body = text::trim(reply.substr(b, e - b));
  if (body.size() != 1 || body[0] < '1' || body[0] > '5') return std::nullopt;
  return body[0] - '0';
}

namespace {

std::vector<std::optional<double>> normalize(const std::vector<std::optional<int>>& scores, Normalization mode) {
  std::vector<double> present;
  for (const auto& s : scores) {
    if (s) present.push_back(*s);
  }
  std::vector<std::optional<double>> out(scores.size());
  if (present.empty()) return out;
  if (mode == Normalization::MinMax) {
    const auto [lo, hi] = std::minmax_element(present.begin(), present.end());
    const double range = *hi - *lo;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i]) out[i] = range > 0.0 ? (*scores[i] - *lo) / range : 0.5;
    }
  } else {
    double mean = 0.0;
    for (double x : present) mean += x;
    mean /= static_cast<double>(present.size());
    double var = 0.0;
    for (double x : present) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(present.size()));
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i]) out[i] = sd > 0.0 ? (*scores[i] - mean) / sd : 0.0;
    }
  }
  return out;
}

}  // namespace

std::vector<DifficultyOutcome> stratify_difficulty(std::vector<DatasetSample>& samples,
                                                   std::span<ChatProvider* const> judges,
                                                   const DifficultyOptions& options) {
  if (samples.size() < 3) throw Error(ErrorCode::InvalidArgument, "difficulty terciles need at least 3 samples");
  if (judges.empty()) throw Error(ErrorCode::InvalidArgument, "no difficulty judges configured");

  std::vector<DifficultyOutcome> out(samples.size());
  std::vector<std::vector<std::optional<int>>> by_judge(judges.size(),
                                                        std::vector<std::optional<int>>(samples.size()));
  for (std::size_t s = 0; s < samples.size(); ++s) {
    out[s].sample_id = samples[s].id;
    Bindings b{{"query_str", samples[s].query.text}, {"answer_str", samples[s].gt.sentence_map.joined()}};
    const auto prompt = render(prompts::difficulty(), b);
    for (std::size_t j = 0; j < judges.size(); ++j) {
      for (int attempt = 0; attempt < std::max(options.attempts, 1); ++attempt) {
        ChatRequest req;
        req.model = options.model;
        req.user = prompt;
        req.metadata = {{"task", "difficulty"}, {"judge", std::to_string(j)}, {"attempt", std::to_string(attempt)}};
        auto resp = judges[j]->complete(req);
        if (auto score = parse_difficulty_score(resp.text)) {
          by_judge[j][s] = score;
          break;
        }
      }
      out[s].raw_scores.push_back(by_judge[j][s]);
      if (!by_judge[j][s]) out[s].flagged = true;
    }
  }

  std::vector<std::vector<std::optional<double>>> normalized;
  for (const auto& scores : by_judge) normalized.push_back(normalize(scores, options.normalization));

  std::vector<double> means;
  std::vector<std::size_t> ranked;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    if (out[s].flagged) continue;
    double sum = 0.0;
    for (const auto& col : normalized) sum += *col[s];
    out[s].mean = sum / static_cast<double>(judges.size());
    means.push_back(*out[s].mean);
    ranked.push_back(s);
  }
  const auto tiers = assign_tiers(means);
  for (std::size_t i = 0; i < ranked.size(); ++i) out[ranked[i]].tier = tiers[i];
  for (std::size_t s = 0; s < samples.size(); ++s) {
    samples[s].difficulty = out[s].tier;
    samples[s].difficulty_score = out[s].mean;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splits

std::optional<SplitProtocol> parse_split_protocol(std::string_view name) {
  auto n = text::to_lower(name);
  if (n == "full_source" || n == "full-source" || n == "fullsource") return SplitProtocol::FullSource;
  if (n == "web_focused" || n == "web-focused" || n == "webfocused") return SplitProtocol::WebFocused;
  return std::nullopt;
}

std::optional<std::string> canonical_source(std::string_view name) {
  static const std::vector<std::string> known{"Wit", "Web", "Wiki", "Arxiv", "Recipe", "Manual"};
  const auto lower = text::to_lower(text::trim(name));
  for (const auto& k : known) {
    if (text::to_lower(k) == lower) return k;
  }
  return std::nullopt;
}

SplitResult split(const std::vector<DatasetSample>& samples, SplitProtocol protocol, std::uint64_t seed) {
  std::vector<char> to_train(samples.size(), 0);
  std::map<std::string, std::vector<std::size_t>> groups;
  std::vector<std::size_t> always_eval;

  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (protocol == SplitProtocol::FullSource) {
      groups[samples[i].difficulty ? std::string(to_string(*samples[i].difficulty)) : "unlabeled"].push_back(i);
      continue;
    }
    if (!samples[i].source) throw Error(ErrorCode::UnknownSource, samples[i].id + " has no source label");
    auto src = canonical_source(*samples[i].source);
    if (!src) throw Error(ErrorCode::UnknownSource, samples[i].id + ": " + *samples[i].source);
    if (*src == "Wit" || *src == "Web" || *src == "Wiki") {
      groups[*src].push_back(i);
    } else {
      always_eval.push_back(i);
    }
  }

  bool extra_to_train = true;
  for (auto& [name, members] : groups) {
    SeededRng rng(sample_seed(seed, name));
    rng.shuffle(members);
    std::size_t n_train = 0;
    if (protocol == SplitProtocol::FullSource) {
      n_train = members.size() / 2;
      if (members.size() % 2 == 1) {
        if (extra_to_train) ++n_train;
        extra_to_train = !extra_to_train;
      }
    } else {
      n_train = static_cast<std::size_t>(round_half_up(0.8 * static_cast<double>(members.size())));
    }
    for (std::size_t k = 0; k < n_train; ++k) to_train[members[k]] = 1;
  }

  SplitResult result;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (to_train[i] ? result.train : result.eval).push_back(samples[i]);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Adapters

namespace {

DatasetSample sample_from_interleaved(const std::string& id, const std::string& question, const std::string& answer,
                                      std::vector<ImageAsset> images) {
  ImageIdSet valid;
  for (const auto& img : images) valid.insert(img.id);
  auto parsed = parse_single_shot(answer, valid);
  if (parsed.sentences.empty()) throw Error(ErrorCode::ParseError, id + ": answer has no sentences");
  for (const auto& w : parsed.warnings) {
    throw Error(ErrorCode::ParseError, id + ": " + w.to_string());
  }
  DatasetSample s;
  s.id = id;
  s.query = {id, question};
  s.gt.sentence_map = parsed.sentences;
  s.gt.placements = parsed.placements;
  s.images = std::move(images);
  return s;
}

std::string field(const Json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string()) {
    throw Error(ErrorCode::ParseError, std::string("missing string field '") + key + "'");
  }
  return j[key].get<std::string>();
}

}  // namespace

std::vector<DatasetSample> load_mramg_json(const std::filesystem::path& path) {
  const auto content = read_file(path);
  std::vector<Json> rows;
  const auto first = text::trim(content);
  if (first.starts_with("[")) {
    Json arr = Json::parse(content, nullptr, false);
    if (arr.is_discarded()) throw Error(ErrorCode::ParseError, path.string() + ": invalid JSON");
    for (auto& r : arr) rows.push_back(std::move(r));
  } else {
    rows = read_jsonl(path);
  }
  std::vector<DatasetSample> out;
  for (const auto& r : rows) {
    std::vector<ImageAsset> images;
    if (r.contains("images")) {
      for (const auto& img : r["images"]) {
        Json copy = img;
        if (!copy.contains("uri") && copy.contains("path")) copy["uri"] = copy["path"];
        images.push_back(image_from_json(copy));
      }
    }
    auto id = field(r, "id");
    auto s = sample_from_interleaved(id, field(r, "question"), field(r, "answer"), std::move(images));
    if (r.contains("source") && r["source"].is_string()) s.source = r["source"].get<std::string>();
    if (r.contains("documents")) {
      for (const auto& d : r["documents"]) s.documents.push_back(document_from_json(d));
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::vector<std::string>> parse_csv(std::string_view content) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < content.size(); ++i) {
    char c = content[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(cell));
      cell.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < content.size() && content[i + 1] == '\n') ++i;
      if (any || !cell.empty()) {
        row.push_back(std::move(cell));
        rows.push_back(std::move(row));
      }
      row.clear();
      cell.clear();
      any = false;
    } else {
      cell.push_back(c);
      any = true;
    }
  }
  if (quoted) throw Error(ErrorCode::ParseError, "unterminated quoted CSV field");
  if (any || !cell.empty()) {
    row.push_back(std::move(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

struct CsvTable {
  std::map<std::string, std::size_t> columns;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::string> get(const std::vector<std::string>& row, const std::string& name) const {
    auto it = columns.find(name);
    if (it == columns.end() || it->second >= row.size()) return std::nullopt;
    return row[it->second];
  }
  std::string need(const std::vector<std::string>& row, const std::string& name) const {
    auto v = get(row, name);
    if (!v) throw Error(ErrorCode::ParseError, "missing CSV column '" + name + "'");
    return *v;
  }
};

CsvTable read_csv(const std::filesystem::path& path) {
  auto records = parse_csv(read_file(path));
  if (records.empty()) throw Error(ErrorCode::ParseError, path.string() + ": empty CSV");
  CsvTable t;
  for (std::size_t i = 0; i < records[0].size(); ++i) t.columns[std::string(text::trim(records[0][i]))] = i;
  t.rows.assign(records.begin() + 1, records.end());
  return t;
}

std::optional<std::string> non_empty(std::optional<std::string> v) {
  if (v && text::trim(*v).empty()) return std::nullopt;
  return v;
}

}  // namespace

std::vector<DatasetSample> load_csv(const std::filesystem::path& samples_csv,
                                    const std::filesystem::path& manifest_csv) {
  const auto manifest = read_csv(manifest_csv);
  std::map<std::string, std::vector<ImageAsset>> images;
  for (const auto& row : manifest.rows) {
    ImageAsset a;
    a.id = manifest.need(row, "image_id");
    a.uri = manifest.need(row, "uri");
    a.caption = non_empty(manifest.get(row, "caption"));
    a.context_above = non_empty(manifest.get(row, "context_above"));
    a.context_below = non_empty(manifest.get(row, "context_below"));
    images[manifest.need(row, "sample_id")].push_back(std::move(a));
  }
  const auto table = read_csv(samples_csv);
  std::vector<DatasetSample> out;
  for (const auto& row : table.rows) {
    auto id = table.need(row, "id");
    auto s = sample_from_interleaved(id, table.need(row, "query"), table.need(row, "answer"), images[id]);
    s.source = non_empty(table.get(row, "source"));
    if (auto d = non_empty(table.get(row, "difficulty"))) {
      s.difficulty = parse_difficulty(*d);
      if (!s.difficulty) throw Error(ErrorCode::ParseError, id + ": bad difficulty '" + *d + "'");
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace m2io
