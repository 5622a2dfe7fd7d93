#include "m2io/reward.hpp"

#include <cmath>

#include "m2io/metrics.hpp"
#include "m2io/text.hpp"

namespace m2io {

void RewardConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "alpha must lie in [0, 1], got " + text::format_double(alpha));
  }
}

Json RolloutScore::to_json() const {
  Json j;
  j["r_format"] = r_format;
  j["r_rec"] = r_rec;
  j["r_pos"] = r_pos;
  j["r_answer"] = r_answer;
  j["r_total"] = r_total;
  return j;
}

RolloutScore score_rollout(std::string_view raw_completion, const GroundTruth& gt, const ImageIdSet& valid_ids,
                           const RewardConfig& config) {
  const std::size_t m = gt.sentence_map.size();
  if (m == 0) throw Error(ErrorCode::InvalidArgument, "ground truth has no sentences");
  auto parsed = parse_inserter_output(raw_completion, valid_ids, m);
  RolloutScore s;
  s.parse_status = parsed.status_string();
  s.warnings = parsed.warning_strings();
  if (!parsed.well_formed()) return s;

  const auto pred = to_sequence(*parsed.answer_dict, m);
  const auto truth = gt.sequence();
  s.r_format = 1.0;
  s.r_rec = recall(parsed.answer_dict->image_set(), gt.placements.image_set());
  std::size_t agree = 0;
  for (std::size_t k = 0; k < m; ++k) agree += pred.slots[k] == truth.slots[k] ? 1 : 0;
  s.r_pos = static_cast<double>(agree) / static_cast<double>(m);
  s.r_answer = config.alpha * s.r_rec + (1.0 - config.alpha) * s.r_pos;
  s.r_total = s.r_format + s.r_answer;
  return s;
}

std::string canonical_completion(const PlacementMap& placements, std::string_view think) {
  Json dict = placements_to_json(placements);
  return "<think>" + std::string(think) + "</think><answer>" + dict.dump() + "</answer>";
}

DatasetIndex::DatasetIndex(std::vector<DatasetSample> samples) : samples_(std::move(samples)) {
  valid_.reserve(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (!by_id_.emplace(samples_[i].id, i).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate sample id " + samples_[i].id);
    }
    auto ids = samples_[i].candidate_ids();
    for (const auto& [id, index] : samples_[i].gt.placements.entries()) ids.insert(id);
    valid_.push_back(std::move(ids));
  }
}

const DatasetSample* DatasetIndex::find(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &samples_[it->second];
}

const ImageIdSet* DatasetIndex::valid_ids(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &valid_[it->second];
}

std::vector<BatchEntry> score_batch(const std::vector<RolloutItem>& items, const DatasetIndex& index,
                                    const RewardConfig& config) {
  config.validate();
  std::vector<BatchEntry> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    BatchEntry e;
    e.sample_id = item.sample_id;
    const auto* sample = index.find(item.sample_id);
    if (!sample) {
      e.error = std::string(to_string(ErrorCode::UnknownSample)) + ": " + item.sample_id;
    } else {
      try {
        e.score = score_rollout(item.completion, sample->gt, *index.valid_ids(item.sample_id), config);
      } catch (const Error& err) {
        e.error = err.what();
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<GroupStats> group_stats(const std::vector<BatchEntry>& entries) {
  std::vector<GroupStats> out;
  std::map<std::string, std::vector<double>> totals;
  for (const auto& e : entries) {
    if (!e.score) continue;
    auto [it, fresh] = totals.try_emplace(e.sample_id);
    if (fresh) out.push_back({e.sample_id, 0, 0.0, 0.0});
    it->second.push_back(e.score->r_total);
  }
  for (auto& g : out) {
    const auto& v = totals[g.sample_id];
    g.count = v.size();
    double sum = 0.0;
    for (double x : v) sum += x;
    g.mean = sum / static_cast<double>(v.size());
    double sq = 0.0;
    for (double x : v) sq += (x - g.mean) * (x - g.mean);
    g.stddev = std::sqrt(sq / static_cast<double>(v.size()));
  }
  return out;
}

RolloutItem rollout_item_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("sample_id") || !j.contains("completion") || !j["sample_id"].is_string() ||
      !j["completion"].is_string()) {
    throw Error(ErrorCode::ParseError, "rollout item needs string fields sample_id and completion");
  }
  return {j["sample_id"].get<std::string>(), j["completion"].get<std::string>()};
}

Json batch_entry_to_json(const BatchEntry& entry) {
  Json j;
  j["sample_id"] = entry.sample_id;
  if (entry.score) {
    const Json score = entry.score->to_json();
    for (auto it = score.begin(); it != score.end(); ++it) j[it.key()] = it.value();
    j["parse_status"] = entry.score->parse_status;
    j["warnings"] = entry.score->warnings;
  } else {
    j["error"] = entry.error;
  }
  return j;
}

}  // namespace m2io
