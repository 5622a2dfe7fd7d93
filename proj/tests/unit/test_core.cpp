#include "doctest.h"
#include "m2io/core.hpp"
#include "m2io/schema.hpp"
#include "m2io/text.hpp"
#include "synth.hpp"

using namespace m2io;

TEST_SUITE("core") {
  TEST_CASE("sentence map") {
    SentenceMap sm({"One.", "Two."});
    CHECK(sm.at(1) == "One.");
    CHECK(sm.joined() == "One. Two.");
    CHECK_THROWS_AS(sm.at(0), Error);
    CHECK_THROWS_AS(sm.at(3), Error);
    CHECK_THROWS_AS(SentenceMap({"ok", "  "}), Error);
  }

  TEST_CASE("placement map invariants") {
    PlacementMap pm;
    pm.insert("image1", 2);
    CHECK_THROWS_AS(pm.insert("image1", 3), Error);
    CHECK_THROWS_AS(pm.insert("image2", 2), Error);
    CHECK_THROWS_AS(pm.insert("image3", 0), Error);
    try {
      pm.insert("image2", 2);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DuplicateTarget);
    }
    CHECK(pm.max_index() == 2);
    CHECK(pm.find("image1") == 2);
    CHECK_FALSE(pm.find("image9"));
  }

  TEST_CASE("sequence round trip") {
    PlacementMap pm;
    pm.insert("image3", 3);
    pm.insert("image1", 1);
    auto seq = to_sequence(pm, 4);
    CHECK(seq.slots == std::vector<Slot>{"image1", std::nullopt, "image3", std::nullopt});
    CHECK(to_placement_map(seq) == pm);
    CHECK(ordered_images(seq) == std::vector<ImageId>{"image1", "image3"});
    CHECK_THROWS_AS(to_sequence(pm, 2), Error);
    CHECK(to_sequence({}, 2).all_empty());
  }

  TEST_CASE("image matching text") {
    ImageAsset a{"image1", "u", "cap", "above", "below"};
    CHECK(a.has_text());
    CHECK(a.matching_text().find("cap") == 0);
    ImageAsset b{"image2", "u", std::nullopt, std::nullopt, std::nullopt};
    CHECK_FALSE(b.has_text());
  }

  TEST_CASE("text helpers") {
    CHECK(text::natural_less("image2", "image10"));
    CHECK_FALSE(text::natural_less("image10", "image2"));
    CHECK(text::word_tokens("Hello, World 42!") == std::vector<std::string>{"hello", "world", "42"});
    CHECK(text::normalize_whitespace("  a \n b  ") == "a b");
    CHECK(text::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(text::format_percent(1.0) == "100.0");
    CHECK(text::format_percent(0.4444) == "44.4");
  }

  TEST_CASE("sample json round trip") {
    for (const auto& s : testing::synth_dataset(12, 8, {2, 6, 1.0, true})) {
      auto j = sample_to_json(s);
      auto back = sample_from_json(j);
      CHECK(sample_to_json(back) == j);
      CHECK(lint_sample_json(j).empty());
    }
  }

  TEST_CASE("lint rules") {
    auto j = sample_to_json(testing::synth_sample(1, 0));
    auto broken = j;
    broken["gt_placements"]["image99"] = 1;
    auto issues = lint_sample_json(broken);
    REQUIRE_FALSE(issues.empty());
    CHECK(issues[0].rule == "placement_unknown_image");
    CHECK_THROWS_AS(sample_from_json(broken), Error);

    auto gap = j;
    gap["sentences"]["9"] = "Extra.";
    CHECK(lint_sample_json(gap)[0].rule == "sentence_index");

    auto bare = j;
    bare["images"][0].erase("caption");
    auto warns = lint_sample_json(bare);
    REQUIRE(warns.size() == 1);
    CHECK(warns[0].severity == Severity::Warning);
  }

  TEST_CASE("jsonl files") {
    auto dir = std::filesystem::temp_directory_path() / "m2io_core_test";
    std::filesystem::create_directories(dir);
    auto samples = testing::synth_dataset(3, 2);
    save_samples(dir / "a.jsonl", samples);
    auto back = load_samples(dir / "a.jsonl");
    REQUIRE(back.size() == 3);
    CHECK(back[2].id == "s3");
    write_file(dir / "dup.jsonl", sample_to_json(samples[0]).dump() + "\n" + sample_to_json(samples[0]).dump() + "\n");
    auto issues = lint_file(dir / "dup.jsonl");
    REQUIRE(issues.size() == 1);
    CHECK(issues[0].line == 2);
    write_file(dir / "bad.jsonl", "{not json\n");
    CHECK_FALSE(lint_file(dir / "bad.jsonl").empty());
    std::filesystem::remove_all(dir);
  }
}
