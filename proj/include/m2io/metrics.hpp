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

/// Empty-set convention on both: 1 when both sides are empty.
double recall(const ImageIdSet& pred, const ImageIdSet& gt);
double precision(const ImageIdSet& pred, const ImageIdSet& gt);
/// Harmonic mean; 0 when p + r == 0.
double f1_from(double p, double r);
double f1(const ImageIdSet& pred, const ImageIdSet& gt);

/// Insertion p1, deletion p2, substitution p3, normalizer p.
struct EditCostConfig {
  double p1 = 1.0;
  double p2 = 0.8;
  double p3 = 0.5;
  double p = 1.0;

  /// Throws InvalidArgument unless p1 > p2 > p3 > 0 and p >= p1.
  void validate() const;
};

/// Minimum cost of turning `pred` into `gt`: insert a missing gt image (p1),
/// delete a pred image (p2), substitute (p3).
double weighted_edit_distance(std::span<const ImageId> gt, std::span<const ImageId> pred,
                              const EditCostConfig& costs = {});

/// (|gt ∩ pred| / n) * (1 - min(dist / n, p) / p) with n = |gt|.
/// Throws EmptyGroundTruth when gt is empty.
double order_score(std::span<const ImageId> gt, std::span<const ImageId> pred,
                   const EditCostConfig& costs = {});

/// Per slot: 1 on agreement (EMPTY == EMPTY included), 0.5 when the predicted
/// image appears elsewhere in gt, else 0; averaged. Throws LengthMismatch.
double position_score(const PlacementSequence& gt, const PlacementSequence& pred);

/// LCS F-measure over lowercase alphanumeric tokens.
double rouge_l(std::string_view candidate, std::string_view reference);

enum class RelevanceScale { ZeroBased, FifthScale };  // (s-1)/4 or s/5

/// Extracts the integer in <relevance_score>..</relevance_score> when in 1..5.
std::optional<int> parse_relevance_score(std::string_view reply);
/// First-occurrence scores for <img_1_score>..<img_count_score>; nullopt if any
/// is missing or not 0/1.
std::optional<std::vector<int>> parse_position_scores(std::string_view reply, std::size_t count);

struct JudgeOptions {
  std::string model;
  int attempts = 3;
  RelevanceScale scale = RelevanceScale::ZeroBased;
};

/// Judge inputs for an answer; images listed by first occurrence.
Bindings judge_bindings(const MultimodalAnswer& answer, const Query& query,
                        std::span<const ImageAsset> catalog);

/// Throws InvalidArgument if the answer has no image, JudgeParseError when
/// every attempt is unparseable.
double judge_relevance(const MultimodalAnswer& answer, const Query& query,
                       std::span<const ImageAsset> catalog, ChatProvider& judge,
                       const JudgeOptions& options = {});
double judge_position(const MultimodalAnswer& answer, const Query& query,
                      std::span<const ImageAsset> catalog, ChatProvider& judge,
                      const JudgeOptions& options = {});

/// Embedding cosine of candidate vs reference, clamped to [0, 1]. A proxy
/// for BERTScore, not a reproduction of it.
double bert_sim(std::string_view candidate, std::string_view reference, EmbeddingProvider& embedder);

struct MetricReport {
  double rec = 0.0;
  double prec = 0.0;
  double f1 = 0.0;
  std::optional<double> ord;
  std::optional<double> pos;
  std::optional<double> rel;
  double rouge_l = 0.0;
  std::optional<double> bert_sim;
  std::optional<double> ovr;

  Json to_json() const;
  static MetricReport from_json(const Json& j);
};

/// Mean of f1, rel, bert_sim, rouge_l, plus ord when present.
/// Throws MissingComponent naming the absent fields.
double overall(const MetricReport& report);
/// Sets report.ovr when all components are present; leaves it empty otherwise.
void fill_overall(MetricReport& report);

}  // namespace m2io
