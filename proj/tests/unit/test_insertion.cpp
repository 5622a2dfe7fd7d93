#include "doctest.h"
#include "m2io/insertion.hpp"
#include "oracles.hpp"
#include "synth.hpp"

#include <random>

using namespace m2io;

namespace {

Json load_cases() { return Json::parse(read_file(std::filesystem::path(M2IO_FIXTURE_DIR) / "inserter_cases.json")); }

std::vector<ImageAsset> captioned(std::initializer_list<std::pair<const char*, const char*>> items) {
  std::vector<ImageAsset> out;
  for (auto [id, caption] : items) {
    ImageAsset a;
    a.id = id;
    a.uri = std::string("img/") + id + ".png";
    if (caption) a.caption = caption;
    out.push_back(a);
  }
  return out;
}

}  // namespace

TEST_SUITE("insertion") {
  TEST_CASE("hand-labeled inserter outputs") {
    auto doc = load_cases();
    ImageIdSet valid;
    for (const auto& id : doc["valid_ids"]) valid.insert(id.get<std::string>());
    const auto m = doc["sentence_count"].get<std::size_t>();
    REQUIRE(doc["cases"].size() == 50);
    for (const auto& c : doc["cases"]) {
      CAPTURE(c["name"].get<std::string>());
      auto out = parse_inserter_output(c["raw"].get<std::string>(), valid, m);
      CHECK(out.status_string() == c["status"].get<std::string>());
      std::vector<std::string> warnings = c["warnings"];
      CHECK(out.warning_strings() == warnings);
      if (c.contains("placements")) {
        REQUIRE(out.answer_dict);
        CHECK(*out.answer_dict == placements_from_json(c["placements"]));
      } else {
        CHECK_FALSE(out.answer_dict);
      }
    }
  }

  TEST_CASE("random bytes never crash the parser") {
    ImageIdSet valid{"image1", "image2"};
    for (std::uint64_t seed = 0; seed < 2000; ++seed) {
      auto raw = testing::random_bytes(seed, 200);
      auto out = parse_inserter_output(raw, valid, 3);
      CHECK((out.well_formed() == out.answer_dict.has_value()));
    }
  }

  TEST_CASE("lenient dict") {
    std::string err;
    auto d = parse_lenient_dict("{'a': 1, \"b\": '2',}", &err);
    REQUIRE(d);
    CHECK(d->size() == 2);
    CHECK((*d)[1].value == 2);
    CHECK_FALSE(parse_lenient_dict("{'a': 1} tail", &err));
    CHECK(err == "text after closing '}'");
    CHECK(parse_lenient_dict("{'a': 1} tail", &err, true));
  }

  TEST_CASE("base output takes the first dict") {
    ImageIdSet valid{"image1", "image2"};
    auto out = parse_base_output("Here you go: {\"image2\": 1} hope it helps", valid, 2);
    REQUIRE(out.well_formed());
    CHECK(out.answer_dict->find("image2") == 1);
    CHECK(parse_base_output("nothing", valid, 2).status_string() == "malformed:missing_dict");
  }

  TEST_CASE("candidate rendering is naturally ordered") {
    auto imgs = captioned({{"image10", "ten"}, {"image2", nullptr}});
    imgs[1].context_above = "above";
    auto j = Json::parse(render_candidates(imgs));
    REQUIRE(j.size() == 2);
    CHECK(j[0]["image_id"] == "image2");
    CHECK(j[0]["context"] == "[above] <img> []");
    CHECK_FALSE(j[0].contains("caption"));
    CHECK(j[1]["caption"] == "ten");
  }

  TEST_CASE("prompt-based insertion through the mock inserter") {
    auto s = testing::synth_sample(3, 0);
    MockChatProvider mock(MockChatProvider::Mode::Extractive);
    auto r1 = insert_prompt_based(s.query, s.gt.sentence_map, s.images, mock, InserterStyle::R1);
    CHECK(r1.output.well_formed());
    auto base = insert_prompt_based(s.query, s.gt.sentence_map, s.images, mock, InserterStyle::Base);
    CHECK(base.output.well_formed());
    MockChatProvider bad([](const ChatRequest&) { return std::string("no idea"); });
    auto failed = insert_prompt_based(s.query, s.gt.sentence_map, s.images, bad, InserterStyle::R1);
    CHECK(failed.placements.empty());
    CHECK(failed.output.status_string() == "malformed:missing_think");
    CHECK_THROWS_AS(insert_prompt_based(s.query, SentenceMap{}, s.images, mock, InserterStyle::R1), Error);
  }

  TEST_CASE("hungarian equals enumeration") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
      const std::size_t rows = 1 + rng() % 4, cols = 1 + rng() % 4;
      std::vector<std::vector<double>> w(rows, std::vector<double>(cols));
      for (auto& row : w) {
        for (auto& x : row) x = u(rng);
      }
      auto a = max_weight_assignment(w);
      CHECK(a.pairs.size() == std::min(rows, cols));
      double total = 0.0;
      std::set<std::size_t> used_rows, used_cols;
      for (auto [r, c] : a.pairs) {
        total += w[r][c];
        CHECK(used_rows.insert(r).second);
        CHECK(used_cols.insert(c).second);
      }
      CHECK(std::abs(total - a.total) < 1e-9);
      CHECK(std::abs(a.total - oracle::best_assignment(w)) < 1e-9);
    }
    CHECK(max_weight_assignment({}).pairs.empty());
  }

  TEST_CASE("threshold drops weak pairs") {
    std::vector<std::vector<double>> w{{0.9, 0.1}, {0.2, 0.4}};
    auto pm = match_sentences_to_images(w, {"image1", "image2"}, 0.5);
    CHECK(pm.size() == 1);
    CHECK(pm.find("image1") == 1);
  }

  TEST_CASE("rule-based insertion on diagonal embeddings") {
    for (std::size_t i = 0; i < 20; ++i) {
      auto s = testing::synth_sample(17, i);
      auto emb = testing::diagonal_embedder(s);
      auto pm = insert_rule_based(s.gt.sentence_map, s.images, *emb);
      CHECK(pm == s.gt.placements);
    }
  }

  TEST_CASE("rule-based insertion skips images without text") {
    SentenceMap sm({"Alpha beta gamma.", "Delta epsilon."});
    auto imgs = captioned({{"image1", "alpha beta gamma"}, {"image2", nullptr}});
    HashEmbedder emb;
    auto pm = insert_rule_based(sm, imgs, emb);
    CHECK(pm.size() == 1);
    CHECK(pm.find("image1") == 1);
  }

  TEST_CASE("single-shot placeholders") {
    ImageIdSet valid{"image1", "image2", "image3"};
    auto r = parse_single_shot("First step. <image2> Second step <img_1>. Third <image7> step. <image2>", valid);
    CHECK(r.sentences.size() == 3);
    CHECK(r.sentences.at(1) == "First step.");
    CHECK(r.sentences.at(2) == "Second step.");
    CHECK(r.placements.find("image2") == 1);
    CHECK(r.placements.find("image1") == 2);
    auto w = std::vector<std::string>{};
    for (const auto& x : r.warnings) w.push_back(x.to_string());
    CHECK(w == std::vector<std::string>{"unknown_image(image7)", "duplicate_key(image2)"});
    auto lead = parse_single_shot("<image3> Only sentence.", valid);
    CHECK(lead.placements.find("image3") == 1);
  }

  TEST_CASE("merge and render") {
    SentenceMap sm({"One.", "Two."});
    PlacementMap pm;
    pm.insert("image1", 1);
    auto imgs = captioned({{"image1", "c"}});
    auto ans = merge("One. Two.", sm, pm, imgs);
    REQUIRE(ans.blocks.size() == 3);
    CHECK(std::get<ImageBlock>(ans.blocks[1]).image_id == "image1");
    CHECK(to_markdown(ans, imgs) == "One.\n\n![image1](img/image1.png)\n\nTwo.\n");
    CHECK(to_interleaved(ans) == "One. <image1> Two.");
    PlacementMap bad;
    bad.insert("image9", 1);
    CHECK_THROWS_AS(merge("One. Two.", sm, bad, imgs), Error);
    PlacementMap far;
    far.insert("image1", 5);
    CHECK_THROWS_AS(merge("One. Two.", sm, far, imgs), Error);
  }
}
