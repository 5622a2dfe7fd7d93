#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "m2io/core.hpp"

namespace m2io {

using Json = nlohmann::ordered_json;

enum class Severity { Error, Warning };

struct LintIssue {
  std::string sample_id;
  std::size_t line = 0;  // 1-based line in the JSONL file, 0 when unknown
  Severity severity = Severity::Error;
  std::string rule;
  std::string message;

  std::string to_string() const;
};

/// Canonical sample line:
/// {"id","query","sentences":{"1":..},"images":[{"id","uri","caption",
///  "context_above","context_below"}],"gt_placements":{"image3":2},
///  "difficulty":"easy|medium|hard"} plus optional "source",
/// "difficulty_score" and "documents".
Json sample_to_json(const DatasetSample& sample);
/// Throws ParseError naming the first violated lint rule.
DatasetSample sample_from_json(const Json& j);
std::vector<LintIssue> lint_sample_json(const Json& j);

Json image_to_json(const ImageAsset& image);
ImageAsset image_from_json(const Json& j);
Json document_to_json(const DocumentChunk& doc);
DocumentChunk document_from_json(const Json& j);

Json sentences_to_json(const SentenceMap& sentences);
/// Accepts {"1": "...", ...} with contiguous indices starting at 1.
SentenceMap sentences_from_json(const Json& j);
Json placements_to_json(const PlacementMap& placements);
/// Entries sorted by sentence index, so serialized order follows the answer.
PlacementMap placements_from_json(const Json& j);

std::vector<Json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows);
std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary file and renames it into place.
void write_file(const std::filesystem::path& path, const std::string& contents);

std::vector<DatasetSample> load_samples(const std::filesystem::path& path);
void save_samples(const std::filesystem::path& path, const std::vector<DatasetSample>& samples);
/// Lints every line plus cross-sample rules (duplicate ids).
std::vector<LintIssue> lint_file(const std::filesystem::path& path);

}  // namespace m2io
