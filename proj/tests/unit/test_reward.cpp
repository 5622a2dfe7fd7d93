#include "doctest.h"
#include "m2io/reward.hpp"
#include "oracles.hpp"
#include "synth.hpp"

using namespace m2io;

namespace {

GroundTruth small_gt() {
  GroundTruth gt;
  gt.sentence_map = SentenceMap({"One.", "Two.", "Three."});
  gt.placements.insert("image1", 1);
  gt.placements.insert("image2", 3);
  return gt;
}

const ImageIdSet kValid{"image1", "image2", "image3", "image4"};

}  // namespace

TEST_SUITE("reward") {
  TEST_CASE("perfect completion") {
    auto gt = small_gt();
    auto s = score_rollout(canonical_completion(gt.placements), gt, kValid);
    CHECK(s.r_format == 1.0);
    CHECK(s.r_rec == 1.0);
    CHECK(s.r_pos == 1.0);
    CHECK(s.r_total == 2.0);
    CHECK(s.parse_status == "well_formed");
  }

  TEST_CASE("partial completion matches hand computation") {
    auto gt = small_gt();
    auto s = score_rollout("<think>t</think><answer>{'image1': 1, 'image2': 2}</answer>", gt, kValid);
    CHECK(s.r_rec == 1.0);
    // Only slot 1 agrees exactly; the reward gives no partial credit.
    CHECK(s.r_pos == doctest::Approx(1.0 / 3.0));
    CHECK(s.r_answer == doctest::Approx(0.8 * 1.0 + 0.2 / 3.0));
    CHECK(s.r_total == s.r_format + s.r_answer);
  }

  TEST_CASE("malformed completion scores zero") {
    auto s = score_rollout("{'image1': 1}", small_gt(), kValid);
    CHECK(s.r_format == 0.0);
    CHECK(s.r_answer == 0.0);
    CHECK(s.r_total == 0.0);
    CHECK(s.parse_status == "malformed:missing_think");
  }

  TEST_CASE("alpha validation") {
    CHECK_THROWS_AS((RewardConfig{1.5}.validate()), Error);
    CHECK_THROWS_AS((RewardConfig{-0.1}.validate()), Error);
    GroundTruth empty;
    CHECK_THROWS_AS(score_rollout("", empty, kValid), Error);
  }

  TEST_CASE("identities over random rollouts") {
    auto samples = testing::synth_dataset(100, 99);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      auto raw = testing::random_completion(s, i);
      auto base = score_rollout(raw, s.gt, s.candidate_ids());
      CHECK(base.r_total == base.r_format + base.r_answer);
      if (base.r_format == 0.0) CHECK(base.r_total == 0.0);
      for (double a : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        auto r = score_rollout(raw, s.gt, s.candidate_ids(), {a});
        CHECK(std::abs(r.r_answer - base.r_format * (a * r.r_rec + (1 - a) * r.r_pos)) < 1e-12);
      }
      if (base.r_format == 1.0) {
        InserterOutput out = parse_inserter_output(raw, s.candidate_ids(), s.gt.sentence_map.size());
        std::vector<std::string> pred, gt;
        for (const auto& [img, idx] : out.answer_dict->entries()) pred.push_back(img);
        for (const auto& [img, idx] : s.gt.placements.entries()) gt.push_back(img);
        CHECK(base.r_rec == doctest::Approx(oracle::recall(pred, gt)).epsilon(1e-15));
      }
    }
  }

  TEST_CASE("dataset index and batch scoring") {
    auto samples = testing::synth_dataset(4, 1);
    DatasetIndex index(samples);
    CHECK(index.size() == 4);
    CHECK(index.find("s2"));
    CHECK_FALSE(index.find("nope"));
    CHECK_THROWS_AS(DatasetIndex({samples[0], samples[0]}), Error);

    std::vector<RolloutItem> items{{"s1", canonical_completion(samples[0].gt.placements)},
                                   {"missing", "x"},
                                   {"s1", "garbage"}};
    auto entries = score_batch(items, index);
    REQUIRE(entries.size() == 3);
    CHECK(entries[0].score->r_total == 2.0);
    CHECK_FALSE(entries[1].score);
    CHECK(entries[1].error == "UnknownSample: missing");
    CHECK(entries[2].score->r_total == 0.0);

    auto stats = group_stats(entries);
    REQUIRE(stats.size() == 1);
    CHECK(stats[0].count == 2);
    CHECK(stats[0].mean == 1.0);
    CHECK(stats[0].stddev == 1.0);

    auto j = batch_entry_to_json(entries[1]);
    CHECK(j["error"] == "UnknownSample: missing");
    CHECK_FALSE(j.contains("r_total"));
    auto item = rollout_item_from_json(Json{{"sample_id", "s3"}, {"completion", "c"}});
    CHECK(item.sample_id == "s3");
  }
}
