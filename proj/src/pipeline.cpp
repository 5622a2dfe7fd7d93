#include "m2io/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "m2io/generation.hpp"
#include "m2io/retrieval.hpp"
#include "m2io/text.hpp"

namespace m2io {

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

using KeySet = std::set<std::string>;

void reject_unknown(const Json& j, const KeySet& known, std::string_view where) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, std::string(where) + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) {
      throw Error(ErrorCode::ConfigError, "unknown key '" + it.key() + "' in " + std::string(where));
    }
  }
}

template <typename T>
void read_into(const Json& j, const char* key, T& out, std::string_view where) {
  if (!j.contains(key) || j[key].is_null()) return;
  try {
    out = j[key].get<T>();
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigError, std::string(where) + "." + key + " has the wrong type");
  }
}

}  // namespace

Json ChatProviderConfig::to_json() const {
  Json j;
  j["kind"] = kind;
  j["model"] = model;
  j["base_url"] = base_url;
  j["api_key_env"] = api_key_env;
  j["cassette"] = cassette;
  j["timeout_seconds"] = timeout_seconds;
  j["parallelism"] = parallelism;
  return j;
}

ChatProviderConfig ChatProviderConfig::from_json(const Json& j) {
  reject_unknown(j, {"kind", "model", "base_url", "api_key_env", "cassette", "timeout_seconds", "parallelism"},
                 "provider");
  ChatProviderConfig c;
  read_into(j, "kind", c.kind, "provider");
  read_into(j, "model", c.model, "provider");
  read_into(j, "base_url", c.base_url, "provider");
  read_into(j, "api_key_env", c.api_key_env, "provider");
  read_into(j, "cassette", c.cassette, "provider");
  read_into(j, "timeout_seconds", c.timeout_seconds, "provider");
  read_into(j, "parallelism", c.parallelism, "provider");
  return c;
}

Json EmbedderConfig::to_json() const {
  Json j;
  j["kind"] = kind;
  j["dimension"] = dimension;
  j["model"] = model;
  j["base_url"] = base_url;
  j["api_key_env"] = api_key_env;
  j["cache_dir"] = cache_dir;
  j["parallelism"] = parallelism;
  return j;
}

EmbedderConfig EmbedderConfig::from_json(const Json& j) {
  reject_unknown(j, {"kind", "dimension", "model", "base_url", "api_key_env", "cache_dir", "parallelism"},
                 "embedder");
  EmbedderConfig c;
  read_into(j, "kind", c.kind, "embedder");
  read_into(j, "dimension", c.dimension, "embedder");
  read_into(j, "model", c.model, "embedder");
  read_into(j, "base_url", c.base_url, "embedder");
  read_into(j, "api_key_env", c.api_key_env, "embedder");
  read_into(j, "cache_dir", c.cache_dir, "embedder");
  read_into(j, "parallelism", c.parallelism, "embedder");
  return c;
}

namespace {

HttpEndpoint endpoint_of(const std::string& base_url, const std::string& model, const std::string& key_env,
                         int timeout_seconds, int parallelism) {
  if (base_url.empty()) throw Error(ErrorCode::ConfigError, "remote provider needs base_url");
  HttpEndpoint e;
  e.base_url = base_url;
  e.model = model;
  e.api_key_env = key_env;
  e.timeout = std::chrono::seconds(timeout_seconds);
  e.parallelism = std::max(parallelism, 1);
  return e;
}

}  // namespace

std::shared_ptr<ChatProvider> make_chat_provider(const ChatProviderConfig& c) {
  if (c.kind == "mock") return std::make_shared<MockChatProvider>(MockChatProvider::Mode::Extractive);
  if (c.kind == "echo") return std::make_shared<MockChatProvider>(MockChatProvider::Mode::Echo);
  if (c.kind == "cassette") {
    if (c.cassette.empty()) throw Error(ErrorCode::ConfigError, "cassette provider needs a cassette path");
    return CassetteChatProvider::replay(c.cassette);
  }
  auto remote = std::make_shared<RemoteChatProvider>(
      endpoint_of(c.base_url, c.model, c.api_key_env, c.timeout_seconds, c.parallelism));
  if (c.kind == "remote") return remote;
  if (c.kind == "record") {
    if (c.cassette.empty()) throw Error(ErrorCode::ConfigError, "record provider needs a cassette path");
    return CassetteChatProvider::record(c.cassette, remote);
  }
  throw Error(ErrorCode::ConfigError, "unknown provider kind '" + c.kind + "'");
}

std::shared_ptr<EmbeddingProvider> make_embedder(const EmbedderConfig& c) {
  std::shared_ptr<EmbeddingProvider> inner;
  if (c.kind == "hash") {
    if (c.dimension == 0) throw Error(ErrorCode::ConfigError, "embedder dimension must be > 0");
    inner = std::make_shared<HashEmbedder>(c.dimension);
  } else if (c.kind == "remote") {
    inner = std::make_shared<RemoteEmbeddingProvider>(endpoint_of(c.base_url, c.model, c.api_key_env, 60, c.parallelism));
  } else {
    throw Error(ErrorCode::ConfigError, "unknown embedder kind '" + c.kind + "'");
  }
  std::optional<std::filesystem::path> dir;
  if (!c.cache_dir.empty()) dir = c.cache_dir;
  return std::make_shared<CachedEmbedder>(inner, dir);
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::SingleShot: return "single_shot";
    case Strategy::RuleBased: return "rule_based";
    case Strategy::M2io: return "m2io";
  }
  return "unknown";
}

std::optional<Strategy> parse_strategy(std::string_view name) {
  auto n = text::to_lower(name);
  std::replace(n.begin(), n.end(), '-', '_');
  if (n == "single_shot") return Strategy::SingleShot;
  if (n == "rule_based") return Strategy::RuleBased;
  if (n == "m2io") return Strategy::M2io;
  return std::nullopt;
}

void RunConfig::validate() const {
  if (dataset.empty()) throw Error(ErrorCode::ConfigError, "dataset path is required");
  if (retrieval_k < 1) throw Error(ErrorCode::ConfigError, "retrieval_k must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorCode::ConfigError, "alpha must lie in [0, 1]");
  try {
    edit_costs.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  if (!(match_threshold >= -1.0 && match_threshold <= 1.0)) {
    throw Error(ErrorCode::ConfigError, "match_threshold must lie in [-1, 1]");
  }
  if (workers < 1) throw Error(ErrorCode::ConfigError, "workers must be >= 1");
  if (output_dir.empty()) throw Error(ErrorCode::ConfigError, "output_dir is required");
}

Json RunConfig::to_json() const {
  Json j;
  j["dataset"] = dataset;
  j["corpus"] = corpus;
  j["strategy"] = to_string(strategy);
  j["inserter_style"] = inserter_style == InserterStyle::R1 ? "r1" : "base";
  j["generator"] = generator.to_json();
  j["inserter"] = inserter.to_json();
  j["judge"] = judge ? judge->to_json() : Json();
  j["embedder"] = embedder.to_json();
  j["retrieval_k"] = retrieval_k;
  j["alpha"] = alpha;
  j["edit_costs"] = {{"p1", edit_costs.p1}, {"p2", edit_costs.p2}, {"p3", edit_costs.p3}, {"p", edit_costs.p}};
  j["match_threshold"] = match_threshold;
  j["seed"] = seed;
  j["workers"] = workers;
  j["output_dir"] = output_dir;
  return j;
}

RunConfig RunConfig::from_json(const Json& j) {
  reject_unknown(j,
                 {"dataset", "corpus", "strategy", "inserter_style", "generator", "inserter", "judge", "embedder",
                  "retrieval_k", "alpha", "edit_costs", "match_threshold", "seed", "workers", "output_dir"},
                 "config");
  RunConfig c;
  read_into(j, "dataset", c.dataset, "config");
  read_into(j, "corpus", c.corpus, "config");
  if (j.contains("strategy")) {
    auto s = parse_strategy(j["strategy"].is_string() ? j["strategy"].get<std::string>() : "");
    if (!s) throw Error(ErrorCode::ConfigError, "strategy must be single_shot, rule_based or m2io");
    c.strategy = *s;
  }
  if (j.contains("inserter_style")) {
    auto s = j["inserter_style"].is_string() ? text::to_lower(j["inserter_style"].get<std::string>()) : "";
    if (s == "r1") {
      c.inserter_style = InserterStyle::R1;
    } else if (s == "base") {
      c.inserter_style = InserterStyle::Base;
    } else {
      throw Error(ErrorCode::ConfigError, "inserter_style must be r1 or base");
    }
  }
  if (j.contains("generator")) c.generator = ChatProviderConfig::from_json(j["generator"]);
  if (j.contains("inserter")) c.inserter = ChatProviderConfig::from_json(j["inserter"]);
  if (j.contains("judge") && !j["judge"].is_null()) c.judge = ChatProviderConfig::from_json(j["judge"]);
  if (j.contains("embedder")) c.embedder = EmbedderConfig::from_json(j["embedder"]);
  read_into(j, "retrieval_k", c.retrieval_k, "config");
  read_into(j, "alpha", c.alpha, "config");
  if (j.contains("edit_costs")) {
    const auto& e = j["edit_costs"];
    reject_unknown(e, {"p1", "p2", "p3", "p"}, "edit_costs");
    read_into(e, "p1", c.edit_costs.p1, "edit_costs");
    read_into(e, "p2", c.edit_costs.p2, "edit_costs");
    read_into(e, "p3", c.edit_costs.p3, "edit_costs");
    read_into(e, "p", c.edit_costs.p, "edit_costs");
  }
  read_into(j, "match_threshold", c.match_threshold, "config");
  read_into(j, "seed", c.seed, "config");
  read_into(j, "workers", c.workers, "config");
  read_into(j, "output_dir", c.output_dir, "config");
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::string content;
  try {
    content = read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  Json j = Json::parse(content, nullptr, false, true);
  if (j.is_discarded()) throw Error(ErrorCode::ConfigError, path.string() + " is not valid JSON");
  return from_json(j);
}

std::string RunConfig::hash() const {
  Json j = to_json();
  j.erase("workers");
  j.erase("output_dir");
  return text::sha256_hex(j.dump());
}

// ---------------------------------------------------------------------------
// Answers

Json SampleAnswer::to_json() const {
  Json j;
  j["sample_id"] = sample_id;
  j["strategy"] = strategy;
  j["status"] = ok ? "ok" : "error";
  if (!ok) j["error"] = error;
  j["answer_text"] = answer_text;
  j["sentences"] = sentences_to_json(sentences);
  j["placements"] = placements_to_json(placements);
  return j;
}

SampleAnswer SampleAnswer::from_json(const Json& j) {
  SampleAnswer a;
  if (!j.contains("sample_id") || !j["sample_id"].is_string()) {
    throw Error(ErrorCode::ParseError, "answer line without sample_id");
  }
  a.sample_id = j["sample_id"].get<std::string>();
  if (j.contains("strategy") && j["strategy"].is_string()) a.strategy = j["strategy"].get<std::string>();
  a.ok = !j.contains("status") || j["status"] == "ok";
  if (j.contains("error") && j["error"].is_string()) a.error = j["error"].get<std::string>();
  if (j.contains("answer_text") && j["answer_text"].is_string()) a.answer_text = j["answer_text"].get<std::string>();
  if (j.contains("sentences") && !j["sentences"].empty()) a.sentences = sentences_from_json(j["sentences"]);
  if (j.contains("placements")) a.placements = placements_from_json(j["placements"]);
  return a;
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

/// Forwards to a provider and logs what was asked of it.
class RecordingProvider final : public ChatProvider {
 public:
  RecordingProvider(ChatProvider& inner, std::string role, Json& log) : inner_(inner), role_(std::move(role)), log_(log) {}

  ChatResponse complete(const ChatRequest& request) override {
    Json entry;
    entry["role"] = role_;
    auto task = request.metadata.find("task");
    entry["task"] = task == request.metadata.end() ? "" : task->second;
    entry["request_hash"] = request.hash();
    auto resp = inner_.complete(request);
    entry["prompt_tokens"] = resp.prompt_tokens;
    entry["completion_tokens"] = resp.completion_tokens;
    log_.push_back(std::move(entry));
    return resp;
  }

 private:
  ChatProvider& inner_;
  std::string role_;
  Json& log_;
};

std::vector<DocumentChunk> corpus_for(const DatasetSample& sample, const PipelineContext& context) {
  if (!context.corpus.empty()) return context.corpus;
  if (!sample.documents.empty()) return sample.documents;
  DocumentChunk doc;
  doc.id = sample.id + "#answer";
  doc.text = sample.gt.sentence_map.joined();
  for (const auto& img : sample.images) doc.image_ids.push_back(img.id);
  return {doc};
}

std::vector<ImageAsset> candidates_for(const DatasetSample& sample, const std::vector<DocumentChunk>& retrieved) {
  std::set<ImageId> referenced;
  for (const auto& d : retrieved) referenced.insert(d.image_ids.begin(), d.image_ids.end());
  std::vector<ImageAsset> out;
  for (const auto& img : sample.images) {
    if (referenced.count(img.id)) out.push_back(img);
  }
  if (out.empty()) out = sample.images;
  return out;
}

}  // namespace

PipelineContext make_context(const RunConfig& config) {
  PipelineContext ctx;
  ctx.generator = make_chat_provider(config.generator);
  ctx.inserter = make_chat_provider(config.inserter);
  ctx.embedder = make_embedder(config.embedder);
  if (!config.corpus.empty()) {
    for (const auto& row : read_jsonl(config.corpus)) ctx.corpus.push_back(document_from_json(row));
  }
  return ctx;
}

SampleRun run_sample(const DatasetSample& sample, const RunConfig& config, const PipelineContext& context) {
  SampleRun run;
  auto& answer = run.answer;
  answer.sample_id = sample.id;
  answer.strategy = std::string(to_string(config.strategy));
  Json& trace = run.trace;
  trace["sample_id"] = sample.id;
  trace["strategy"] = answer.strategy;
  Json calls = Json::array();
  RecordingProvider generator(*context.generator, "generator", calls);
  RecordingProvider inserter(*context.inserter, "inserter", calls);
  GenerationOptions gen_opts{config.generator.model, 0.0, 1024};
  GenerationOptions ins_opts{config.inserter.model, 0.0, 1024};

  try {
    const auto corpus = corpus_for(sample, context);
    const auto ranked = rank_documents(sample.query, corpus, *context.embedder);
    std::vector<DocumentChunk> retrieved;
    Json retrieved_json = Json::array();
    for (std::size_t i = 0; i < ranked.size() && i < config.retrieval_k; ++i) {
      retrieved.push_back(*ranked[i].document);
      retrieved_json.push_back({{"id", ranked[i].document->id}, {"score", ranked[i].score}});
    }
    trace["retrieved"] = retrieved_json;
    const auto candidates = candidates_for(sample, retrieved);
    Json cand = Json::array();
    for (const auto& c : candidates) cand.push_back(c.id);
    trace["candidates"] = cand;

    Json insertion;
    switch (config.strategy) {
      case Strategy::SingleShot: {
        auto ss = generate_single_shot(sample.query, retrieved, candidates, generator, gen_opts);
        answer.answer_text = ss.parsed.text;
        answer.sentences = ss.parsed.sentences;
        answer.placements = ss.parsed.placements;
        std::vector<std::string> warnings;
        for (const auto& w : ss.parsed.warnings) warnings.push_back(w.to_string());
        insertion = insertion_trace("single_shot", ss.raw, "well_formed", warnings, answer.placements);
        break;
      }
      case Strategy::RuleBased: {
        auto gen = generate_answer(sample.query, retrieved, generator, gen_opts);
        answer.answer_text = gen.text;
        answer.sentences = split_sentences(gen.text);
        answer.placements = insert_rule_based(answer.sentences, candidates, *context.embedder, config.match_threshold);
        insertion = insertion_trace("rule_based", "", "not_applicable", {}, answer.placements);
        break;
      }
      case Strategy::M2io: {
        auto gen = generate_answer(sample.query, retrieved, generator, gen_opts);
        answer.answer_text = gen.text;
        answer.sentences = split_sentences(gen.text);
        auto ins = insert_prompt_based(sample.query, answer.sentences, candidates, inserter, config.inserter_style,
                                       ins_opts);
        answer.placements = ins.placements;
        insertion = insertion_trace(config.inserter_style == InserterStyle::R1 ? "m2io_r1" : "m2io_base",
                                    ins.output.raw, ins.output.status_string(), ins.output.warning_strings(),
                                    answer.placements);
        break;
      }
    }
    trace["answer_text"] = answer.answer_text;
    trace["sentences"] = sentences_to_json(answer.sentences);
    trace["insertion"] = insertion;
    auto merged = merge(answer.answer_text, answer.sentences, answer.placements, sample.images);
    run.markdown = to_markdown(merged, sample.images);
    trace["status"] = "ok";
  } catch (const Error& e) {
    answer.ok = false;
    answer.error = e.what();
    answer.sentences = {};
    answer.placements = {};
    trace["status"] = "error";
    trace["error"] = e.what();
  }
  trace["calls"] = std::move(calls);
  return run;
}

namespace {

std::string file_stem(const std::string& id) {
  std::string out;
  for (char c : id) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_' ||
              c == '.';
    out.push_back(ok ? c : '_');
  }
  if (out.empty() || out[0] == '.') out.insert(out.begin(), '_');
  return out;
}

}  // namespace

RunSummary cmd_run(const RunConfig& config) {
  config.validate();
  const auto samples = load_samples(config.dataset);
  const auto context = make_context(config);
  std::vector<SampleRun> results(samples.size());
  parallel_for(samples.size(), config.workers,
               [&](std::size_t i) { results[i] = run_sample(samples[i], config, context); });

  RunSummary summary;
  summary.run_dir = config.output_dir;
  summary.samples = samples.size();
  std::filesystem::create_directories(summary.run_dir / "samples");

  Json files = Json::object();
  std::set<std::string> stems;
  std::vector<Json> answers;
  for (const auto& r : results) {
    auto stem = file_stem(r.answer.sample_id);
    while (!stems.insert(stem).second) stem += "_";
    const auto trace_text = r.trace.dump(2) + "\n";
    write_file(summary.run_dir / "samples" / (stem + ".json"), trace_text);
    files["samples/" + stem + ".json"] = text::sha256_hex(trace_text);
    if (r.answer.ok) {
      write_file(summary.run_dir / "samples" / (stem + ".md"), r.markdown);
      files["samples/" + stem + ".md"] = text::sha256_hex(r.markdown);
    } else {
      summary.failed.push_back(r.answer.sample_id);
    }
    answers.push_back(r.answer.to_json());
  }
  write_jsonl(summary.run_dir / "answers.jsonl", answers);
  files["answers.jsonl"] = text::sha256_hex(read_file(summary.run_dir / "answers.jsonl"));

  if (config.generator.kind == "record") dynamic_cast<CassetteChatProvider&>(*context.generator).save();
  if (config.inserter.kind == "record") dynamic_cast<CassetteChatProvider&>(*context.inserter).save();

  Json semantic = config.to_json();
  semantic.erase("workers");
  semantic.erase("output_dir");
  Json manifest;
  manifest["format"] = "m2io-run/1";
  manifest["config"] = semantic;
  manifest["config_hash"] = config.hash();
  manifest["seed"] = config.seed;
  manifest["splitter_version"] = kSplitterVersion;
  manifest["samples"] = samples.size();
  manifest["succeeded"] = samples.size() - summary.failed.size();
  manifest["failed"] = summary.failed;
  manifest["files"] = files;
  write_file(summary.run_dir / "manifest.json", manifest.dump(2) + "\n");
  return summary;
}

}  // namespace m2io
