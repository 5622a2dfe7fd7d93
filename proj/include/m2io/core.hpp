#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "m2io/error.hpp"

namespace m2io {

using ImageId = std::string;
using ImageIdSet = std::set<ImageId>;

/// Serialized fixtures use this marker for an empty placement slot.
inline constexpr const char* kEmptySlotMarker = "\xE2\x88\x85";  // U+2205

struct Query {
  std::string id;
  std::string text;
};

struct DocumentChunk {
  std::string id;
  std::string text;
  std::vector<ImageId> image_ids;
};

struct ImageAsset {
  ImageId id;
  std::string uri;
  std::optional<std::string> caption;
  std::optional<std::string> context_above;
  std::optional<std::string> context_below;

  bool has_text() const;
  /// Caption first, then the surrounding contexts; used for similarity matching.
  std::string matching_text() const;
};

/// Sentences of an answer, addressed by 1-based index.
class SentenceMap {
 public:
  SentenceMap() = default;
  /// Throws InvalidArgument if any sentence is blank after trimming.
  explicit SentenceMap(std::vector<std::string> sentences);

  std::size_t size() const noexcept { return sentences_.size(); }
  bool empty() const noexcept { return sentences_.empty(); }
  /// 1-based.
  const std::string& at(std::size_t index) const;
  const std::vector<std::string>& sentences() const noexcept { return sentences_; }
  /// Sentences joined by single spaces.
  std::string joined() const;

  bool operator==(const SentenceMap&) const = default;

 private:
  std::vector<std::string> sentences_;
};

/// image id -> 1-based sentence index. One image per id, one image per sentence.
class PlacementMap {
 public:
  PlacementMap() = default;

  /// Throws DuplicateImage / DuplicateTarget / OutOfRange (index 0 or negative).
  void insert(const ImageId& image, int sentence_index);
  bool contains(const ImageId& image) const { return entries_.count(image) != 0; }
  bool target_taken(int sentence_index) const { return targets_.count(sentence_index) != 0; }
  std::optional<int> find(const ImageId& image) const;

  const std::map<ImageId, int>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  ImageIdSet image_set() const;
  int max_index() const;

  bool operator==(const PlacementMap& other) const { return entries_ == other.entries_; }

 private:
  std::map<ImageId, int> entries_;
  std::set<int> targets_;
};

using Slot = std::optional<ImageId>;

/// Per-sentence view: slot j holds the image placed after sentence j+1.
struct PlacementSequence {
  std::vector<Slot> slots;

  std::size_t size() const noexcept { return slots.size(); }
  bool all_empty() const;
  bool operator==(const PlacementSequence&) const = default;
};

PlacementSequence to_sequence(const PlacementMap& placements, std::size_t sentence_count);
/// Inverse of to_sequence; throws DuplicateImage if a slot repeats an image.
PlacementMap to_placement_map(const PlacementSequence& sequence);
std::vector<ImageId> ordered_images(const PlacementSequence& sequence);

struct TextBlock {
  std::string text;
  bool operator==(const TextBlock&) const = default;
};

struct ImageBlock {
  ImageId image_id;
  bool operator==(const ImageBlock&) const = default;
};

using AnswerBlock = std::variant<TextBlock, ImageBlock>;

struct MultimodalAnswer {
  std::vector<AnswerBlock> blocks;

  std::vector<ImageId> image_ids() const;
  /// TextBlocks joined with single spaces.
  std::string text() const;
  std::size_t image_count() const;
};

struct GroundTruth {
  SentenceMap sentence_map;
  PlacementMap placements;

  PlacementSequence sequence() const { return to_sequence(placements, sentence_map.size()); }
  std::vector<ImageId> ordered_images() const { return m2io::ordered_images(sequence()); }
};

enum class Difficulty { Easy, Medium, Hard };

std::string_view to_string(Difficulty d);
std::optional<Difficulty> parse_difficulty(std::string_view text);

struct DatasetSample {
  std::string id;
  Query query;
  GroundTruth gt;
  std::vector<ImageAsset> images;  // candidates: positives plus distractors
  std::optional<Difficulty> difficulty;
  std::optional<double> difficulty_score;
  std::optional<std::string> source;
  std::vector<DocumentChunk> documents;

  ImageIdSet candidate_ids() const;
  const ImageAsset* find_image(const ImageId& id) const;
};

}  // namespace m2io
