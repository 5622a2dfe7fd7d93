#include "doctest.h"
#include "m2io/metrics.hpp"
#include "oracles.hpp"

#include <random>

using namespace m2io;

namespace {

std::vector<ImageId> letters(const std::vector<int>& s) {
  std::vector<ImageId> out;
  for (int c : s) out.push_back(std::string(1, static_cast<char>('A' + c)));
  return out;
}

PlacementSequence seq(std::initializer_list<const char*> slots) {
  PlacementSequence s;
  for (const char* x : slots) s.slots.push_back(x ? Slot(x) : std::nullopt);
  return s;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("set metrics agree with counting") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 500; ++trial) {
      std::vector<std::string> pred, gt;
      for (int i = 0; i < 6; ++i) {
        if (rng() % 2) pred.push_back("image" + std::to_string(i));
        if (rng() % 2) gt.push_back("image" + std::to_string(i));
      }
      ImageIdSet p(pred.begin(), pred.end()), g(gt.begin(), gt.end());
      CHECK(recall(p, g) == doctest::Approx(oracle::recall(pred, gt)).epsilon(1e-15));
      CHECK(precision(p, g) == doctest::Approx(oracle::precision(pred, gt)).epsilon(1e-15));
      double expected = oracle::f1(oracle::precision(pred, gt), oracle::recall(pred, gt));
      CHECK(f1(p, g) == doctest::Approx(expected).epsilon(1e-15));
    }
  }

  TEST_CASE("empty sets") {
    CHECK(recall({}, {}) == 1.0);
    CHECK(precision({}, {}) == 1.0);
    CHECK(recall({"a"}, {}) == 0.0);
    CHECK(precision({}, {"a"}) == 0.0);
    CHECK(f1_from(0.0, 0.0) == 0.0);
  }

  TEST_CASE("f1 of precision 1 and recall 0.5") {
    CHECK(std::abs(f1_from(1.0, 0.5) - 2.0 / 3.0) < 1e-12);
    CHECK(std::abs(f1_from(1.0, 0.5) - oracle::f1(1.0, 0.5)) < 1e-12);
  }

  TEST_CASE("cost validation") {
    CHECK_NOTHROW(EditCostConfig{}.validate());
    CHECK_THROWS_AS((EditCostConfig{0.8, 0.8, 0.5, 1.0}.validate()), Error);
    CHECK_THROWS_AS((EditCostConfig{1.0, 0.8, 0.0, 1.0}.validate()), Error);
    CHECK_THROWS_AS((EditCostConfig{1.0, 0.8, 0.5, 0.9}.validate()), Error);
  }

  TEST_CASE("edit distance matches exhaustive search on short sequences") {
    oracle::EditGraph graph(3, 4);
    auto seqs = oracle::all_sequences(3, 2);
    EditCostConfig costs;
    for (const auto& pred : seqs) {
      auto dist = graph.distances_from(pred, costs.p1, costs.p2, costs.p3);
      for (const auto& gt : seqs) {
        auto g = letters(gt), p = letters(pred);
        CHECK(weighted_edit_distance(g, p, costs) == doctest::Approx(dist[graph.index_of(gt)]).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("edit distance edge cases") {
    std::vector<ImageId> abc{"A", "B", "C"}, none;
    CHECK(weighted_edit_distance(abc, none) == doctest::Approx(3.0));
    CHECK(weighted_edit_distance(none, abc) == doctest::Approx(2.4));
    CHECK(weighted_edit_distance(abc, abc) == 0.0);
  }

  TEST_CASE("order score worked examples") {
    std::vector<ImageId> abc{"A", "B", "C"}, ac{"A", "C"}, ab{"A", "B"}, ba{"B", "A"};
    CHECK(std::abs(order_score(abc, ac) - 4.0 / 9.0) < 1e-9);
    CHECK(std::abs(order_score(ab, ba) - 0.5) < 1e-9);
    CHECK(order_score(abc, abc) == 1.0);
    CHECK(order_score(abc, std::vector<ImageId>{}) == 0.0);
    CHECK_THROWS_AS(order_score(std::vector<ImageId>{}, ab), Error);
  }

  TEST_CASE("position score") {
    CHECK(position_score(seq({"A", nullptr, "B"}), seq({"A", "B", nullptr})) == 0.5);
    CHECK(position_score(seq({nullptr, nullptr}), seq({nullptr, nullptr})) == 1.0);
    CHECK(position_score(seq({"A", nullptr}), seq({nullptr, nullptr})) == 0.0);
    CHECK(position_score(seq({nullptr, nullptr}), seq({"A", nullptr})) == 0.5);
    CHECK_THROWS_AS(position_score(seq({"A"}), seq({"A", nullptr})), Error);
  }

  TEST_CASE("position score agrees with slot oracle") {
    std::mt19937_64 rng(11);
    const char* pool[] = {nullptr, "A", "B", "C", "D"};
    for (int trial = 0; trial < 500; ++trial) {
      const std::size_t m = 1 + rng() % 5;
      PlacementSequence g, p;
      std::vector<std::string> go, po;
      std::set<std::string> gu, pu;
      for (std::size_t j = 0; j < m; ++j) {
        const char* a = pool[rng() % 5];
        const char* b = pool[rng() % 5];
        if (a && !gu.insert(a).second) a = nullptr;
        if (b && !pu.insert(b).second) b = nullptr;
        g.slots.push_back(a ? Slot(a) : std::nullopt);
        p.slots.push_back(b ? Slot(b) : std::nullopt);
        go.push_back(a ? a : "");
        po.push_back(b ? b : "");
      }
      CHECK(position_score(g, p) == doctest::Approx(oracle::position(go, po)).epsilon(1e-15));
    }
  }

  TEST_CASE("rouge-l") {
    CHECK(rouge_l("the cat sat", "the cat sat") == doctest::Approx(1.0));
    CHECK(rouge_l("", "the cat") == 0.0);
    // LCS "the sat" = 2, P = 2/3, R = 2/4.
    CHECK(rouge_l("The cat sat", "the dog really sat") == doctest::Approx(2.0 * (2.0 / 3) * 0.5 / (2.0 / 3 + 0.5)));
  }

  TEST_CASE("judge tag parsing") {
    CHECK(parse_relevance_score("reason\n<relevance_score>4</relevance_score>") == 4);
    CHECK_FALSE(parse_relevance_score("<relevance_score>9</relevance_score>"));
    CHECK_FALSE(parse_relevance_score("no tag"));
    auto pos = parse_position_scores("<img_1_score>1</img_1_score><img_2_score>0</img_2_score>", 2);
    REQUIRE(pos);
    CHECK(*pos == std::vector<int>{1, 0});
    CHECK_FALSE(parse_position_scores("<img_1_score>1</img_1_score>", 2));
  }

  TEST_CASE("judge relevance retries then normalizes") {
    int calls = 0;
    MockChatProvider judge([&](const ChatRequest&) {
      return ++calls < 3 ? std::string("unsure") : std::string("<relevance_score>5</relevance_score>");
    });
    MultimodalAnswer answer{{TextBlock{"Text."}, ImageBlock{"image1"}}};
    std::vector<ImageAsset> catalog{{"image1", "u", "cap", std::nullopt, std::nullopt}};
    CHECK(judge_relevance(answer, {"q", "query"}, catalog, judge) == 1.0);
    CHECK(calls == 3);
    JudgeOptions fifth;
    fifth.scale = RelevanceScale::FifthScale;
    MockChatProvider three([](const ChatRequest&) { return std::string("<relevance_score>3</relevance_score>"); });
    CHECK(judge_relevance(answer, {"q", "query"}, catalog, three) == 0.5);
    CHECK(judge_relevance(answer, {"q", "query"}, catalog, three, fifth) == doctest::Approx(0.6));
    MockChatProvider never([](const ChatRequest&) { return std::string("nothing"); });
    CHECK_THROWS_AS(judge_relevance(answer, {"q", "query"}, catalog, never), Error);
  }

  TEST_CASE("overall requires every component") {
    MetricReport r;
    r.f1 = 0.5;
    r.rouge_l = 0.5;
    CHECK_THROWS_AS(overall(r), Error);
    fill_overall(r);
    CHECK_FALSE(r.ovr);
    r.rel = 1.0;
    r.bert_sim = 0.0;
    CHECK(overall(r) == doctest::Approx(0.5));
    r.ord = 1.0;
    CHECK(overall(r) == doctest::Approx(0.6));
    auto back = MetricReport::from_json(r.to_json());
    CHECK(back.ord == r.ord);
    CHECK_FALSE(back.pos);
  }
}
