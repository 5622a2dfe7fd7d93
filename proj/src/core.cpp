#include "m2io/core.hpp"

#include "m2io/text.hpp"

namespace m2io {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DuplicateTarget: return "DuplicateTarget";
    case ErrorCode::DuplicateImage: return "DuplicateImage";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroNorm: return "ZeroNorm";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::ProviderError: return "ProviderError";
    case ErrorCode::MissingSlot: return "MissingSlot";
    case ErrorCode::EmptyCompletion: return "EmptyCompletion";
    case ErrorCode::UnknownImage: return "UnknownImage";
    case ErrorCode::EmptyGroundTruth: return "EmptyGroundTruth";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::JudgeParseError: return "JudgeParseError";
    case ErrorCode::MissingComponent: return "MissingComponent";
    case ErrorCode::UnknownSample: return "UnknownSample";
    case ErrorCode::InsufficientCorpus: return "InsufficientCorpus";
    case ErrorCode::UnknownSource: return "UnknownSource";
    case ErrorCode::MissingSamples: return "MissingSamples";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

bool ImageAsset::has_text() const {
  auto nonblank = [](const std::optional<std::string>& s) {
    return s && !text::trim(*s).empty();
  };
  return nonblank(caption) || nonblank(context_above) || nonblank(context_below);
}

std::string ImageAsset::matching_text() const {
  std::vector<std::string> parts;
  for (const auto* field : {&caption, &context_above, &context_below}) {
    if (*field && !text::trim(**field).empty()) parts.emplace_back(text::trim(**field));
  }
  return text::join(parts, " ");
}

SentenceMap::SentenceMap(std::vector<std::string> sentences) : sentences_(std::move(sentences)) {
  for (std::size_t i = 0; i < sentences_.size(); ++i) {
    if (text::trim(sentences_[i]).empty()) {
      throw Error(ErrorCode::InvalidArgument,
                  "sentence " + std::to_string(i + 1) + " is blank");
    }
  }
}

const std::string& SentenceMap::at(std::size_t index) const {
  if (index == 0 || index > sentences_.size()) {
    throw Error(ErrorCode::OutOfRange, "sentence index " + std::to_string(index) +
                                           " outside [1, " + std::to_string(sentences_.size()) + "]");
  }
  return sentences_[index - 1];
}

std::string SentenceMap::joined() const { return text::join(sentences_, " "); }

void PlacementMap::insert(const ImageId& image, int sentence_index) {
  if (image.empty()) throw Error(ErrorCode::InvalidArgument, "empty image id");
  if (sentence_index < 1) {
    throw Error(ErrorCode::OutOfRange,
                "sentence index " + std::to_string(sentence_index) + " for " + image);
  }
  if (entries_.count(image)) throw Error(ErrorCode::DuplicateImage, image);
  if (targets_.count(sentence_index)) {
    throw Error(ErrorCode::DuplicateTarget,
                image + " -> " + std::to_string(sentence_index) + " already occupied");
  }
  entries_.emplace(image, sentence_index);
  targets_.insert(sentence_index);
}

std::optional<int> PlacementMap::find(const ImageId& image) const {
  auto it = entries_.find(image);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

ImageIdSet PlacementMap::image_set() const {
  ImageIdSet out;
  for (const auto& [id, _] : entries_) out.insert(id);
  return out;
}

int PlacementMap::max_index() const { return targets_.empty() ? 0 : *targets_.rbegin(); }

bool PlacementSequence::all_empty() const {
  for (const auto& s : slots) {
    if (s) return false;
  }
  return true;
}

PlacementSequence to_sequence(const PlacementMap& placements, std::size_t sentence_count) {
  PlacementSequence seq;
  seq.slots.resize(sentence_count);
  for (const auto& [image, index] : placements.entries()) {
    if (index < 1 || static_cast<std::size_t>(index) > sentence_count) {
      throw Error(ErrorCode::OutOfRange, image + " -> " + std::to_string(index) + " with m=" +
                                             std::to_string(sentence_count));
    }
    auto& slot = seq.slots[static_cast<std::size_t>(index) - 1];
    if (slot) throw Error(ErrorCode::DuplicateTarget, *slot + " and " + image);
    slot = image;
  }
  return seq;
}

PlacementMap to_placement_map(const PlacementSequence& sequence) {
  PlacementMap pm;
  for (std::size_t j = 0; j < sequence.slots.size(); ++j) {
    if (sequence.slots[j]) pm.insert(*sequence.slots[j], static_cast<int>(j + 1));
  }
  return pm;
}

std::vector<ImageId> ordered_images(const PlacementSequence& sequence) {
  std::vector<ImageId> out;
  for (const auto& s : sequence.slots) {
    if (s) out.push_back(*s);
  }
  return out;
}

std::vector<ImageId> MultimodalAnswer::image_ids() const {
  std::vector<ImageId> out;
  for (const auto& b : blocks) {
    if (const auto* img = std::get_if<ImageBlock>(&b)) out.push_back(img->image_id);
  }
  return out;
}

std::string MultimodalAnswer::text() const {
  std::vector<std::string> parts;
  for (const auto& b : blocks) {
    if (const auto* t = std::get_if<TextBlock>(&b)) parts.push_back(t->text);
  }
  return text::join(parts, " ");
}

std::size_t MultimodalAnswer::image_count() const { return image_ids().size(); }

std::string_view to_string(Difficulty d) {
  switch (d) {
    case Difficulty::Easy: return "easy";
    case Difficulty::Medium: return "medium";
    case Difficulty::Hard: return "hard";
  }
  return "medium";
}

std::optional<Difficulty> parse_difficulty(std::string_view s) {
  auto lower = text::to_lower(s);
  if (lower == "easy") return Difficulty::Easy;
  if (lower == "medium") return Difficulty::Medium;
  if (lower == "hard") return Difficulty::Hard;
  return std::nullopt;
}

ImageIdSet DatasetSample::candidate_ids() const {
  ImageIdSet out;
  for (const auto& img : images) out.insert(img.id);
  return out;
}

const ImageAsset* DatasetSample::find_image(const ImageId& id) const {
  for (const auto& img : images) {
    if (img.id == id) return &img;
  }
  return nullptr;
}

}  // namespace m2io
