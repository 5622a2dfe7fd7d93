#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "m2io/core.hpp"
#include "m2io/insertion.hpp"
#include "m2io/schema.hpp"

namespace m2io {

struct RewardConfig {
  double alpha = 0.8;

  /// Throws InvalidArgument unless 0 <= alpha <= 1.
  void validate() const;
};

struct RolloutScore {
  double r_format = 0.0;
  double r_rec = 0.0;
  double r_pos = 0.0;
  double r_answer = 0.0;
  double r_total = 0.0;
  std::string parse_status;
  std::vector<std::string> warnings;

  /// {r_format, r_rec, r_pos, r_answer, r_total}
  Json to_json() const;
  bool operator==(const RolloutScore&) const = default;
};

/// Scores one raw inserter completion against ground truth. A malformed
/// completion scores zero everywhere. Throws InvalidArgument when the ground
/// truth has no sentences.
RolloutScore score_rollout(std::string_view raw_completion, const GroundTruth& gt, const ImageIdSet& valid_ids,
                           const RewardConfig& config = {});

/// The completion an ideal inserter would emit for `placements`.
std::string canonical_completion(const PlacementMap& placements, std::string_view think = "ground truth");

/// Immutable id -> sample lookup shared by the batch scorer and the service.
class DatasetIndex {
 public:
  /// Throws InvalidArgument on duplicate sample ids.
  explicit DatasetIndex(std::vector<DatasetSample> samples);

  const DatasetSample* find(const std::string& id) const;
  const ImageIdSet* valid_ids(const std::string& id) const;
  std::size_t size() const noexcept { return samples_.size(); }
  const std::vector<DatasetSample>& samples() const noexcept { return samples_; }

 private:
  std::vector<DatasetSample> samples_;
  std::map<std::string, std::size_t> by_id_;
  std::vector<ImageIdSet> valid_;
};

struct RolloutItem {
  std::string sample_id;
  std::string completion;
};

struct BatchEntry {
  std::string sample_id;
  std::optional<RolloutScore> score;
  std::string error;  // "UnknownSample: <id>" when score is empty
};

struct GroupStats {
  std::string sample_id;
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population
};

/// Order-preserving; unknown ids yield an error entry and the batch continues.
std::vector<BatchEntry> score_batch(const std::vector<RolloutItem>& items, const DatasetIndex& index,
                                    const RewardConfig& config = {});

/// r_total mean and population stddev per sample id, in first-seen order.
std::vector<GroupStats> group_stats(const std::vector<BatchEntry>& entries);

/// {"sample_id","completion"} object.
RolloutItem rollout_item_from_json(const Json& j);
Json batch_entry_to_json(const BatchEntry& entry);

}  // namespace m2io
