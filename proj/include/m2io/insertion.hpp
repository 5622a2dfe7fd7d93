#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "m2io/core.hpp"
#include "m2io/generation.hpp"
#include "m2io/providers.hpp"
#include "m2io/schema.hpp"

namespace m2io {

enum class ParseStatus { WellFormed, Malformed };

enum class WarningKind { UnknownImage, OutOfRange, DuplicateTarget, DuplicateKey, NoSentence };

/// An entry dropped during normalization. Drops never change ParseStatus.
struct ParseWarning {
  WarningKind kind;
  std::string image_id;
  long long index = 0;

  /// e.g. "duplicate_target(image2)", "out_of_range(image1->7)".
  std::string to_string() const;
  bool operator==(const ParseWarning&) const = default;
};

struct InserterOutput {
  std::string raw;
  std::optional<std::string> think;
  std::optional<PlacementMap> answer_dict;
  ParseStatus status = ParseStatus::Malformed;
  std::string reason;  // empty when well formed
  std::vector<ParseWarning> warnings;

  bool well_formed() const { return status == ParseStatus::WellFormed; }
  /// "well_formed" or "malformed:<reason>".
  std::string status_string() const;
  std::vector<std::string> warning_strings() const;
};

struct DictEntry {
  std::string key;
  long long value = 0;
  bool overflow = false;  // integer did not fit; treated as out of range
};

/// Tolerant flat dict parser: JSON or Python-literal quoting, optional
/// trailing comma, optional markdown code fence, whitespace-insensitive.
/// Values are integers, bare or quoted. Text after the closing brace is
/// rejected unless allow_trailing_text. Returns nullopt and sets *error on
/// failure; never throws.
std::optional<std::vector<DictEntry>> parse_lenient_dict(std::string_view payload,
                                                          std::string* error = nullptr,
                                                          bool allow_trailing_text = false);

/// Strict structure: whitespace, one <think>...</think>, whitespace, one
/// <answer>...</answer>, whitespace. Dict entries are then normalized in
/// textual order: unknown ids, indices outside [1, m] and repeated targets
/// (first wins) are dropped and recorded as warnings. Accepts arbitrary bytes.
InserterOutput parse_inserter_output(std::string_view raw, const ImageIdSet& valid_ids,
                                     std::size_t sentence_count);

/// Bare-dict output of the non-reasoning inserter: the first {...} in the text.
InserterOutput parse_base_output(std::string_view raw, const ImageIdSet& valid_ids,
                                 std::size_t sentence_count);

enum class InserterStyle { R1, Base };

/// JSON array of candidate descriptions, ordered naturally by image id.
std::string render_candidates(std::span<const ImageAsset> candidates);
/// {"1": "first sentence", ...}
std::string render_sentence_dict(const SentenceMap& sentences);

ChatRequest build_insertion_request(const Query& query, const SentenceMap& sentences,
                                    std::span<const ImageAsset> candidates, InserterStyle style,
                                    const GenerationOptions& options = {});

struct PromptInsertion {
  PlacementMap placements;
  InserterOutput output;
};

/// Malformed output yields empty placements plus the diagnostic.
PromptInsertion insert_prompt_based(const Query& query, const SentenceMap& sentences,
                                    std::span<const ImageAsset> candidates, ChatProvider& provider,
                                    InserterStyle style, const GenerationOptions& options = {});

struct Assignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (row, col), sorted by row
  double total = 0.0;
};

/// Maximum-weight one-to-one assignment on a rectangular matrix (Hungarian
/// algorithm with potentials, O(n^2 m)). Matches min(rows, cols) pairs.
Assignment max_weight_assignment(const std::vector<std::vector<double>>& weights);

inline constexpr double kDefaultMatchThreshold = 0.5;

/// weights[s][i]: sentence s (0-based) vs image i. Keeps assigned pairs with
/// weight >= threshold.
PlacementMap match_sentences_to_images(const std::vector<std::vector<double>>& weights,
                                       const std::vector<ImageId>& image_ids, double threshold);

/// Bipartite sentence/image matching on embedding cosine. Candidates with
/// no caption or context cannot be matched and are skipped.
PlacementMap insert_rule_based(const SentenceMap& sentences, std::span<const ImageAsset> candidates,
                               EmbeddingProvider& embedder,
                               double threshold = kDefaultMatchThreshold);

struct SingleShotResult {
  std::string text;
  SentenceMap sentences;
  PlacementMap placements;
  std::vector<ParseWarning> warnings;
};

/// Recognizes <imageN>, <img_N> (read as imageN) and <id> for any valid id.
/// Placeholders are stripped; each image goes after the sentence in which
/// or after which its placeholder sits (index 1 when it precedes all text).
SingleShotResult parse_single_shot(std::string_view interleaved, const ImageIdSet& valid_ids);

struct SingleShotAnswer {
  std::string raw;
  SingleShotResult parsed;
  ChatResponse response;
};

SingleShotAnswer generate_single_shot(const Query& query, std::span<const DocumentChunk> context,
                                      std::span<const ImageAsset> candidates, ChatProvider& provider,
                                      const GenerationOptions& options = {});

/// Text then image blocks in sentence order. Throws UnknownImage, OutOfRange.
MultimodalAnswer merge(std::string_view answer_text, const SentenceMap& sentences,
                       const PlacementMap& placements, std::span<const ImageAsset> catalog);

/// Paragraph per TextBlock, "![id](uri)" line per ImageBlock.
std::string to_markdown(const MultimodalAnswer& answer, std::span<const ImageAsset> catalog);
/// "text <id> text ..." form accepted by parse_single_shot.
std::string to_interleaved(const MultimodalAnswer& answer);

/// {strategy, raw_output, parse_status, warnings, placements}
Json insertion_trace(std::string_view strategy, std::string_view raw_output,
                     std::string_view parse_status, const std::vector<std::string>& warnings,
                     const PlacementMap& placements);

}  // namespace m2io
