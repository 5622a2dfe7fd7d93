#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "m2io/core.hpp"
#include "m2io/providers.hpp"
#include "m2io/schema.hpp"

namespace m2io {

struct SampleBuilderConfig {
  double negative_ratio = 1.0;
  double hard_fraction = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Seeded generator with a portable bounded draw, so sampled outputs are
/// identical across standard libraries.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}
  /// Uniform in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

/// Per-sample seed: mixes the run seed with the sample id.
std::uint64_t sample_seed(std::uint64_t seed, std::string_view sample_id);

/// Keeps every positive (the images placed by `base.gt`), adds
/// round(ratio * |I+|) negatives from `image_corpus`: round(hard_fraction * n)
/// hard ones ranked by cosine(E(query), E(image text)) with ties by id, the
/// rest drawn uniformly. Candidates are shuffled by seed. Positives are looked
/// up in base.images first, then in the corpus.
/// Throws InvalidArgument (no positives or a positive missing),
/// InsufficientCorpus.
DatasetSample build_sample(const DatasetSample& base, std::span<const ImageAsset> image_corpus,
                           EmbeddingProvider& embedder, const SampleBuilderConfig& config);

enum class Normalization { MinMax, ZScore };

/// Tercile tiers of `means`: Hard at or below the lower tercile value,
/// Easy at or above the upper one, Medium between. Equal thresholds make the
/// comparisons strict, so a constant distribution is all Medium.
std::vector<Difficulty> assign_tiers(std::span<const double> means);

struct DifficultyOptions {
  std::string model;
  int attempts = 3;
  Normalization normalization = Normalization::MinMax;
};

struct DifficultyOutcome {
  std::string sample_id;
  std::vector<std::optional<int>> raw_scores;  // per judge, 1..5
  std::optional<double> mean;
  Difficulty tier = Difficulty::Medium;
  bool flagged = false;  // some judge never produced a parseable score
};

/// Extracts the 1..5 integer inside <difficulty_score> tags.
std::optional<int> parse_difficulty_score(std::string_view reply);

/// Each judge rates every sample; scores are normalized per judge over the
/// corpus, averaged per sample, and bucketed by assign_tiers. Samples whose
/// judging failed are flagged and set to Medium. Writes tier and mean into
/// `samples`. Throws InvalidArgument with fewer than 3 samples or no judges.
std::vector<DifficultyOutcome> stratify_difficulty(std::vector<DatasetSample>& samples,
                                                   std::span<ChatProvider* const> judges,
                                                   const DifficultyOptions& options = {});

enum class SplitProtocol { FullSource, WebFocused };

std::optional<SplitProtocol> parse_split_protocol(std::string_view name);

struct SplitResult {
  std::vector<DatasetSample> train;
  std::vector<DatasetSample> eval;
};

/// FullSource: seeded half split within each difficulty tier (odd groups
/// alternate which side gets the extra sample). WebFocused: round(80%) of
/// each of Wit, Web, Wiki to train, the rest plus all of Arxiv, Recipe and
/// Manual to eval. Output keeps input order. Throws UnknownSource.
SplitResult split(const std::vector<DatasetSample>& samples, SplitProtocol protocol, std::uint64_t seed);

/// Canonical spelling ("Wit", "Arxiv", ...) of a known source, matched
/// case-insensitively.
std::optional<std::string> canonical_source(std::string_view name);

/// Benchmark-style JSON: an array (or JSONL) of
/// {"id","question","answer","images":[{"id","uri"|"path","caption",
/// "context_above","context_below"}],"source"?,"documents"?}, where the
/// answer carries <imageN> placeholders after the sentences they illustrate.
std::vector<DatasetSample> load_mramg_json(const std::filesystem::path& path);

/// samples.csv: id,query,answer[,source][,difficulty] (answer as above);
/// manifest.csv: sample_id,image_id,uri[,caption][,context_above][,context_below].
std::vector<DatasetSample> load_csv(const std::filesystem::path& samples_csv,
                                    const std::filesystem::path& manifest_csv);

/// RFC 4180 records; the first record is the header.
std::vector<std::vector<std::string>> parse_csv(std::string_view content);

}  // namespace m2io
