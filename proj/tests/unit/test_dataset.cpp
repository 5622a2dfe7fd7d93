#include "doctest.h"
#include "m2io/dataset.hpp"
#include "m2io/text.hpp"
#include "synth.hpp"

#include <random>

using namespace m2io;

namespace {

std::filesystem::path scratch(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<ImageAsset> pool(const std::vector<DatasetSample>& samples) {
  std::vector<ImageAsset> out;
  for (const auto& s : samples) {
    for (auto img : s.images) {
      img.id = s.id + "_" + img.id;
      out.push_back(img);
    }
  }
  return out;
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("seeded rng draws are bounded and reproducible") {
    SeededRng a(42), b(42);
    for (int i = 0; i < 1000; ++i) {
      auto x = a.below(7);
      CHECK(x < 7);
      CHECK(x == b.below(7));
    }
    CHECK(sample_seed(1, "s1") != sample_seed(1, "s2"));
    CHECK(sample_seed(1, "s1") == sample_seed(1, "s1"));
  }

  TEST_CASE("sample builder") {
    auto samples = testing::synth_dataset(6, 3, {2, 6, 0.0, false});
    auto corpus = pool(testing::synth_dataset(10, 77));
    HashEmbedder emb;
    SampleBuilderConfig cfg;
    cfg.seed = 9;
    for (const auto& base : samples) {
      auto built = build_sample(base, corpus, emb, cfg);
      const auto k = base.gt.placements.size();
      CHECK(built.images.size() == 2 * k);
      for (const auto& [img, idx] : base.gt.placements.entries()) CHECK(built.find_image(img));
      CHECK(sample_to_json(build_sample(base, corpus, emb, cfg)) == sample_to_json(built));
    }
    cfg.negative_ratio = 1000.0;
    CHECK_THROWS_AS(build_sample(samples[0], corpus, emb, cfg), Error);
    DatasetSample none = samples[0];
    none.gt.placements = {};
    CHECK_THROWS_AS(build_sample(none, corpus, emb, SampleBuilderConfig{}), Error);
  }

  TEST_CASE("hard negatives are the most similar") {
    auto base = testing::synth_sample(1, 0, {3, 3, 0.0, false});
    std::vector<ImageAsset> corpus;
    for (const auto& [img, idx] : base.gt.placements.entries()) {
      ImageAsset close{"close_" + img, "u", base.query.text, std::nullopt, std::nullopt};
      corpus.push_back(close);
    }
    for (int i = 0; i < 20; ++i) corpus.push_back({"far" + std::to_string(i), "u", "zzz" + std::to_string(i), {}, {}});
    HashEmbedder emb;
    SampleBuilderConfig cfg{1.0, 1.0, 3};
    auto built = build_sample(base, corpus, emb, cfg);
    for (const auto& img : built.images) CHECK_FALSE(img.id.starts_with("far"));
  }

  TEST_CASE("tercile tiers") {
    std::vector<double> v{0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
    auto t = assign_tiers(v);
    CHECK(t == std::vector<Difficulty>{Difficulty::Hard, Difficulty::Hard, Difficulty::Medium, Difficulty::Medium,
                                       Difficulty::Easy, Difficulty::Easy});
    std::vector<double> flat(5, 0.5);
    for (auto d : assign_tiers(flat)) CHECK(d == Difficulty::Medium);

    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 3 + rng() % 30;
      std::vector<double> xs(n);
      for (std::size_t i = 0; i < n; ++i) xs[i] = static_cast<double>(rng() % 1000000) / 7.0 + static_cast<double>(i) * 1e-9;
      auto tiers = assign_tiers(xs);
      const std::size_t third = (n + 2) / 3;
      std::size_t hard = 0, easy = 0;
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t below = 0;
        for (std::size_t j = 0; j < n; ++j) below += xs[j] < xs[i];
        if (below < third) {
          CHECK(tiers[i] == Difficulty::Hard);
        } else if (below >= n - third) {
          CHECK(tiers[i] == Difficulty::Easy);
        } else {
          CHECK(tiers[i] == Difficulty::Medium);
        }
        hard += tiers[i] == Difficulty::Hard;
        easy += tiers[i] == Difficulty::Easy;
      }
      CHECK(hard == third);
      CHECK(easy == third);
    }
  }

  TEST_CASE("stratification with three judges") {
    auto samples = testing::synth_dataset(9, 5);
    MockChatProvider j1(MockChatProvider::Mode::Extractive);
    MockChatProvider j2([](const ChatRequest& r) {
      return "<difficulty_score>" + std::to_string(1 + r.user.size() % 5) + "</difficulty_score>";
    });
    MockChatProvider j3([](const ChatRequest& r) {
      if (r.user.find("s4") != std::string::npos && r.user.find("s4") == r.user.rfind("s4")) return std::string("??");
      return std::string("<difficulty_score>3</difficulty_score>");
    });
    std::vector<ChatProvider*> judges{&j1, &j2, &j3};
    auto outcomes = stratify_difficulty(samples, judges);
    REQUIRE(outcomes.size() == 9);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      CHECK(samples[i].difficulty == outcomes[i].tier);
      if (outcomes[i].flagged) CHECK(outcomes[i].tier == Difficulty::Medium);
    }
    std::vector<DatasetSample> two(samples.begin(), samples.begin() + 2);
    CHECK_THROWS_AS(stratify_difficulty(two, judges), Error);
    CHECK(parse_difficulty_score("x <difficulty_score> 4 </difficulty_score>") == 4);
    CHECK_FALSE(parse_difficulty_score("<difficulty_score>0</difficulty_score>"));
  }

  TEST_CASE("full-source split halves each tier") {
    auto samples = testing::synth_dataset(31, 2);
    auto r = split(samples, SplitProtocol::FullSource, 7);
    CHECK(r.train.size() + r.eval.size() == 31);
    std::map<std::string, int> diff;
    for (const auto& s : r.train) diff[std::string(to_string(*s.difficulty))]++;
    for (const auto& s : r.eval) diff[std::string(to_string(*s.difficulty))]--;
    for (const auto& [tier, d] : diff) CHECK(std::abs(d) <= 1);
    auto again = split(samples, SplitProtocol::FullSource, 7);
    CHECK(again.train.size() == r.train.size());
    for (std::size_t i = 0; i < r.train.size(); ++i) CHECK(again.train[i].id == r.train[i].id);
    CHECK(std::is_sorted(r.train.begin(), r.train.end(), [](const auto& a, const auto& b) {
      return std::stoi(a.id.substr(1)) < std::stoi(b.id.substr(1));
    }));
  }

  TEST_CASE("web-focused split") {
    auto samples = testing::synth_dataset(60, 2);
    auto r = split(samples, SplitProtocol::WebFocused, 1);
    std::map<std::string, int> train;
    for (const auto& s : r.train) train[*s.source]++;
    CHECK(train["Wit"] == 8);
    CHECK(train["Web"] == 8);
    CHECK(train["Wiki"] == 8);
    CHECK(train.count("Recipe") == 0);
    CHECK(r.eval.size() == 36);
    samples[0].source = "Blog";
    CHECK_THROWS_AS(split(samples, SplitProtocol::WebFocused, 1), Error);
    CHECK(canonical_source("ARXIV") == "Arxiv");
    CHECK(parse_split_protocol("web_focused") == SplitProtocol::WebFocused);
  }

  TEST_CASE("csv parsing") {
    auto rows = parse_csv("a,b\n\"x, y\",\"he said \"\"hi\"\"\"\r\nz,\"multi\nline\"\n");
    REQUIRE(rows.size() == 3);
    CHECK(rows[1][0] == "x, y");
    CHECK(rows[1][1] == "he said \"hi\"");
    CHECK(rows[2][1] == "multi\nline");
  }

  TEST_CASE("benchmark adapters") {
    auto dir = scratch("m2io_adapter_test");
    Json rec = {{"id", "q1"},
                {"question", "How to bake?"},
                {"answer", "Mix the flour. <image1> Bake it well. <image2>"},
                {"images", {{{"id", "image1"}, {"path", "a.jpg"}, {"caption", "flour"}},
                            {{"id", "image2"}, {"uri", "b.jpg"}},
                            {{"id", "image3"}, {"uri", "c.jpg"}}}},
                {"source", "recipe"}};
    write_file(dir / "bench.json", Json::array({rec}).dump());
    auto samples = load_mramg_json(dir / "bench.json");
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].gt.sentence_map.size() == 2);
    CHECK(samples[0].gt.placements.find("image2") == 2);
    CHECK(samples[0].images[0].uri == "a.jpg");

    write_file(dir / "samples.csv",
               "id,query,answer,source\nq1,How?,\"Cut it. <image1> Serve.\",Manual\n");
    write_file(dir / "manifest.csv",
               "sample_id,image_id,uri,caption\nq1,image1,x.jpg,knife\nq1,image2,y.jpg,\n");
    auto csv = load_csv(dir / "samples.csv", dir / "manifest.csv");
    REQUIRE(csv.size() == 1);
    CHECK(csv[0].images.size() == 2);
    CHECK(csv[0].gt.placements.find("image1") == 1);

    Json bad = rec;
    bad["answer"] = "Text. <image9>";
    write_file(dir / "bad.json", Json::array({bad}).dump());
    CHECK_THROWS_AS(load_mramg_json(dir / "bad.json"), Error);
    std::filesystem::remove_all(dir);
  }
}
