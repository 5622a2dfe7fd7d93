#include "doctest.h"
#include "httplib.h"
#include "m2io/reward_service.hpp"
#include "synth.hpp"

using namespace m2io;

namespace {

std::shared_ptr<const DatasetIndex> index_of(std::size_t n) {
  return std::make_shared<const DatasetIndex>(testing::synth_dataset(n, 4));
}

Json request_for(const std::vector<RolloutItem>& items) {
  Json j;
  j["items"] = Json::array();
  for (const auto& it : items) j["items"].push_back({{"sample_id", it.sample_id}, {"completion", it.completion}});
  return j;
}

}  // namespace

TEST_SUITE("service") {
  TEST_CASE("unavailable before a dataset is loaded") {
    RewardService svc;
    CHECK(svc.handle_score(R"({"items":[]})").status == 503);
    CHECK(svc.handle_health().status == 503);
  }

  TEST_CASE("request validation") {
    RewardService svc;
    svc.load(index_of(3));
    CHECK(svc.handle_score("not json").status == 400);
    CHECK(svc.handle_score("[]").status == 400);
    CHECK(svc.handle_score(R"({"items":[{"sample_id":1}]})").status == 400);
    CHECK(svc.handle_score(R"({"items":[],"alpha":2})").status == 400);
    CHECK(svc.handle_score(R"({"items":[],"alpha":"x"})").status == 400);
    CHECK(svc.handle_score(R"({"items":[]})").status == 200);
    CHECK(svc.handle_score(R"({"items":[{"sample_id":"zz","completion":""}]})").status == 404);
    auto health = Json::parse(svc.handle_health().body);
    CHECK(health["status"] == "ok");
    CHECK(health["samples"] == 3);
  }

  TEST_CASE("mixed batch reports unknown items inline") {
    RewardService svc;
    auto index = index_of(3);
    svc.load(index);
    std::vector<RolloutItem> items{{"s1", canonical_completion(index->find("s1")->gt.placements)}, {"zz", "x"}};
    auto reply = svc.handle_score(request_for(items).dump());
    CHECK(reply.status == 200);
    auto body = Json::parse(reply.body);
    CHECK(body["scores"][0]["r_total"] == 2.0);
    CHECK(body["scores"][1].is_null());
    CHECK(body["diagnostics"][1]["status"] == 404);
    CHECK(body["diagnostics"][0]["parse_status"] == "well_formed");
  }

  TEST_CASE("alpha override") {
    RewardService svc;
    auto index = index_of(2);
    svc.load(index);
    const auto& s = *index->find("s1");
    RolloutItem item{"s1", "<think>t</think><answer>{}</answer>"};
    auto req = request_for({item});
    req["alpha"] = 0.0;
    auto body = Json::parse(svc.handle_score(req.dump()).body);
    auto local = score_rollout(item.completion, s.gt, *index->valid_ids("s1"), {0.0});
    CHECK(body["scores"][0] == local.to_json());
  }

  TEST_CASE("http round trip") {
    RewardService svc({RewardConfig{}, 2});
    auto index = index_of(8);
    svc.load(index);
    int port = svc.start("127.0.0.1", 0);
    REQUIRE(port > 0);
    httplib::Client cli("127.0.0.1", port);
    auto health = cli.Get("/v1/health");
    REQUIRE(health);
    CHECK(health->status == 200);

    std::vector<RolloutItem> items;
    for (std::size_t i = 0; i < index->size(); ++i) {
      const auto& s = index->samples()[i];
      items.push_back({s.id, testing::random_completion(s, i)});
    }
    auto res = cli.Post("/v1/score", request_for(items).dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(res->has_header("X-Scoring-Micros"));
    auto body = Json::parse(res->body);
    auto local = score_batch(items, *index);
    for (std::size_t i = 0; i < items.size(); ++i) CHECK(body["scores"][i] == local[i].score->to_json());

    svc.load(index_of(2));
    auto after = Json::parse(cli.Get("/v1/health")->body);
    CHECK(after["samples"] == 2);
    svc.stop();
    CHECK(svc.requests_served() == 1);
  }
}
