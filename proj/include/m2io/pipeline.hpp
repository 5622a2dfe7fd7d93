#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "m2io/core.hpp"
#include "m2io/dataset.hpp"
#include "m2io/insertion.hpp"
#include "m2io/metrics.hpp"
#include "m2io/providers.hpp"
#include "m2io/reward.hpp"
#include "m2io/schema.hpp"

namespace m2io {

/// Runs fn(0..n-1) on up to `workers` threads. The first exception is
/// rethrown after all workers finish.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

/// kind: "mock" (extractive), "echo", "cassette" (replay), "record"
/// (remote, recorded to `cassette`), "remote".
struct ChatProviderConfig {
  std::string kind = "mock";
  std::string model;
  std::string base_url;
  std::string api_key_env = "OPENAI_API_KEY";
  std::string cassette;
  int timeout_seconds = 60;
  int parallelism = 4;

  Json to_json() const;
  static ChatProviderConfig from_json(const Json& j);
};

/// kind: "hash" or "remote"; optional on-disk cache.
struct EmbedderConfig {
  std::string kind = "hash";
  std::size_t dimension = 256;
  std::string model;
  std::string base_url;
  std::string api_key_env = "OPENAI_API_KEY";
  std::string cache_dir;
  int parallelism = 4;

  Json to_json() const;
  static EmbedderConfig from_json(const Json& j);
};

std::shared_ptr<ChatProvider> make_chat_provider(const ChatProviderConfig& config);
std::shared_ptr<EmbeddingProvider> make_embedder(const EmbedderConfig& config);

enum class Strategy { SingleShot, RuleBased, M2io };

std::string_view to_string(Strategy s);
std::optional<Strategy> parse_strategy(std::string_view name);

struct RunConfig {
  std::string dataset;
  std::string corpus;  // optional shared DocumentChunk JSONL
  Strategy strategy = Strategy::M2io;
  InserterStyle inserter_style = InserterStyle::R1;
  ChatProviderConfig generator;
  ChatProviderConfig inserter;
  std::optional<ChatProviderConfig> judge;
  EmbedderConfig embedder;
  std::size_t retrieval_k = 3;
  double alpha = 0.8;
  EditCostConfig edit_costs;
  double match_threshold = kDefaultMatchThreshold;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string output_dir = "run";

  /// Throws ConfigError.
  void validate() const;
  Json to_json() const;
  /// Unknown keys are a ConfigError.
  static RunConfig from_json(const Json& j);
  static RunConfig load(const std::filesystem::path& path);
  /// SHA-256 of the canonical JSON without workers and output_dir.
  std::string hash() const;
};

struct SampleAnswer {
  std::string sample_id;
  std::string strategy;
  bool ok = true;
  std::string error;
  std::string answer_text;
  SentenceMap sentences;
  PlacementMap placements;

  Json to_json() const;
  static SampleAnswer from_json(const Json& j);
};

/// The four pipeline stages for one sample. Provider failures are caught and
/// reported in the returned answer (ok = false) and trace.
struct SampleRun {
  SampleAnswer answer;
  Json trace;
  std::string markdown;
};

struct PipelineContext {
  std::shared_ptr<ChatProvider> generator;
  std::shared_ptr<ChatProvider> inserter;
  std::shared_ptr<EmbeddingProvider> embedder;
  std::vector<DocumentChunk> corpus;
};

PipelineContext make_context(const RunConfig& config);
SampleRun run_sample(const DatasetSample& sample, const RunConfig& config, const PipelineContext& context);

struct RunSummary {
  std::filesystem::path run_dir;
  std::size_t samples = 0;
  std::vector<std::string> failed;
};

/// Writes <output_dir>/samples/<id>.json and .md, answers.jsonl and
/// manifest.json (config, config hash, seed, per-file digests).
RunSummary cmd_run(const RunConfig& config);

struct EvaluateOptions {
  std::filesystem::path answers;  // run directory or answers JSONL
  std::filesystem::path dataset;
  EditCostConfig edit_costs;
  bool order_all = false;
  bool allow_missing = false;
  std::optional<ChatProviderConfig> judge;
  std::optional<EmbedderConfig> similarity;  // enables bert_sim
  RelevanceScale relevance_scale = RelevanceScale::ZeroBased;
  std::size_t workers = 1;
  std::string label = "run";
};

struct SampleMetrics {
  std::string sample_id;
  std::string source;
  MetricReport report;
  std::vector<std::string> notes;

  Json to_json() const;
};

struct AggregateRow {
  std::string source;  // "All" or a source name
  std::size_t count = 0;
  MetricReport mean;   // optional fields present when any sample had them
};

struct Evaluation {
  std::string label;
  std::vector<SampleMetrics> samples;
  std::vector<AggregateRow> aggregates;  // "All" first, then sources by name
  std::vector<std::string> skipped;      // missing answers under allow_missing

  Json summary_json() const;
  static Evaluation from_summary_json(const Json& j);
};

/// Answers may be run output or canonical samples (their gt_placements are
/// then read as the prediction). Ord applies to Recipe and Manual sources
/// unless order_all; Pos needs equal sentence counts. Throws MissingSamples.
Evaluation cmd_evaluate(const EvaluateOptions& options);

/// Writes metrics.jsonl, summary.json, table.csv and table.md.
void write_evaluation(const Evaluation& evaluation, const std::filesystem::path& dir);

/// Rows are evaluations, column groups are sources; values x100 with one decimal.
std::string report_csv(const std::vector<Evaluation>& evaluations);
std::string report_markdown(const std::vector<Evaluation>& evaluations);

struct SweepRow {
  double alpha = 0.0;
  std::size_t scored = 0;
  double r_format = 0.0;
  double r_rec = 0.0;
  double r_pos = 0.0;
  double r_answer = 0.0;
  double r_total = 0.0;
};

inline const std::vector<double> kDefaultAlphas{0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0};

/// Mean rollout scores per alpha. Unknown samples are skipped and listed in
/// `errors` when given.
std::vector<SweepRow> sweep_alpha(const std::vector<RolloutItem>& rollouts, const DatasetIndex& index,
                                  const std::vector<double>& alphas, std::vector<std::string>* errors = nullptr);
std::string sweep_csv(const std::vector<SweepRow>& rows);

std::vector<RolloutItem> read_rollouts(const std::filesystem::path& path);

}  // namespace m2io
