#include "doctest.h"
#include "m2io/pipeline.hpp"
#include "m2io/text.hpp"
#include "synth.hpp"

#include <atomic>

using namespace m2io;

namespace {

std::filesystem::path scratch(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

RunConfig mock_config(const std::filesystem::path& dir, Strategy strategy) {
  RunConfig cfg;
  cfg.dataset = (dir / "data.jsonl").string();
  cfg.strategy = strategy;
  cfg.generator.kind = "mock";
  cfg.inserter.kind = "mock";
  cfg.output_dir = (dir / ("run_" + std::string(to_string(strategy)))).string();
  return cfg;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("parallel_for visits every index once and rethrows") {
    std::vector<std::atomic<int>> hits(100);
    parallel_for(100, 4, [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) CHECK(h.load() == 1);
    CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                      if (i == 5) throw Error(ErrorCode::InvalidArgument, "boom");
                    }),
                    Error);
  }

  TEST_CASE("config parsing") {
    auto cfg = RunConfig::from_json(Json{{"dataset", "d.jsonl"}, {"strategy", "rule_based"}, {"seed", 4}});
    CHECK(cfg.strategy == Strategy::RuleBased);
    CHECK(RunConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());
    CHECK_THROWS_AS(RunConfig::from_json(Json{{"datset", "x"}}), Error);
    CHECK_THROWS_AS(RunConfig::from_json(Json{{"strategy", "magic"}}), Error);
    CHECK_THROWS_AS(RunConfig::from_json(Json{{"generator", {{"kind", "mock"}, {"colour", 1}}}}), Error);
    auto a = cfg, b = cfg;
    b.workers = 8;
    b.output_dir = "elsewhere";
    CHECK(a.hash() == b.hash());
    b.seed = 5;
    CHECK(a.hash() != b.hash());
    RunConfig bad;
    bad.alpha = 3.0;
    CHECK_THROWS_AS(bad.validate(), Error);
  }

  TEST_CASE("each strategy runs end to end with mocks") {
    auto dir = scratch("m2io_pipeline_strategies");
    save_samples(dir / "data.jsonl", testing::synth_dataset(6, 12, {2, 5, 1.0, true}));
    for (auto strategy : {Strategy::M2io, Strategy::RuleBased, Strategy::SingleShot}) {
      CAPTURE(to_string(strategy));
      auto cfg = mock_config(dir, strategy);
      auto summary = cmd_run(cfg);
      CHECK(summary.samples == 6);
      CHECK(summary.failed.empty());
      CHECK(std::filesystem::exists(summary.run_dir / "manifest.json"));
      CHECK(std::filesystem::exists(summary.run_dir / "samples" / "s1.md"));
      auto manifest = Json::parse(read_file(summary.run_dir / "manifest.json"));
      CHECK(manifest["config_hash"] == cfg.hash());
      EvaluateOptions opts;
      opts.answers = summary.run_dir;
      opts.dataset = dir / "data.jsonl";
      auto ev = cmd_evaluate(opts);
      CHECK(ev.samples.size() == 6);
    }
    auto cfg = mock_config(dir, Strategy::M2io);
    cfg.inserter_style = InserterStyle::Base;
    CHECK(cmd_run(cfg).failed.empty());
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("provider failures are recorded per sample") {
    auto dir = scratch("m2io_pipeline_failures");
    save_samples(dir / "data.jsonl", testing::synth_dataset(3, 1));
    auto cfg = mock_config(dir, Strategy::M2io);
    cfg.generator.kind = "cassette";
    cfg.generator.cassette = (dir / "empty.json").string();
    write_file(dir / "empty.json", "[]");
    auto summary = cmd_run(cfg);
    CHECK(summary.failed.size() == 3);
    auto first = Json::parse(read_file(summary.run_dir / "samples" / "s1.json"));
    CHECK(first["status"] == "error");
    CHECK(first["calls"].empty());
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("identity evaluation") {
    auto dir = scratch("m2io_pipeline_identity");
    save_samples(dir / "data.jsonl", testing::synth_dataset(12, 3));
    EvaluateOptions opts;
    opts.answers = dir / "data.jsonl";
    opts.dataset = dir / "data.jsonl";
    opts.similarity = EmbedderConfig{};
    opts.label = "gt";
    auto ev = cmd_evaluate(opts);
    const auto& all = ev.aggregates.front();
    CHECK(all.source == "All");
    CHECK(all.mean.rec == 1.0);
    CHECK(all.mean.f1 == 1.0);
    CHECK(all.mean.pos == 1.0);
    CHECK(all.mean.ord == 1.0);
    CHECK(all.mean.rouge_l == doctest::Approx(1.0));
    CHECK(all.mean.bert_sim == doctest::Approx(1.0));
    auto md = report_markdown({ev});
    CHECK(md.find("| gt | 100.0 |") != std::string::npos);
    auto csv = report_csv({ev});
    CHECK(csv.starts_with("strategy,source,n,rec,prec,f1,ord,pos,rel,rouge_l,bert_sim,ovr\n"));

    write_evaluation(ev, dir / "eval");
    auto back = Evaluation::from_summary_json(Json::parse(read_file(dir / "eval" / "summary.json")));
    CHECK(report_markdown({back}) == md);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("missing answers") {
    auto dir = scratch("m2io_pipeline_missing");
    auto samples = testing::synth_dataset(4, 3);
    save_samples(dir / "data.jsonl", samples);
    samples.pop_back();
    save_samples(dir / "answers.jsonl", samples);
    EvaluateOptions opts;
    opts.answers = dir / "answers.jsonl";
    opts.dataset = dir / "data.jsonl";
    try {
      cmd_evaluate(opts);
      FAIL("expected MissingSamples");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MissingSamples);
      CHECK(std::string(e.what()).find("s4") != std::string::npos);
    }
    opts.allow_missing = true;
    auto ev = cmd_evaluate(opts);
    CHECK(ev.skipped == std::vector<std::string>{"s4"});
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("judged metrics and overall") {
    auto dir = scratch("m2io_pipeline_judge");
    save_samples(dir / "data.jsonl", testing::synth_dataset(6, 3));
    EvaluateOptions opts;
    opts.answers = dir / "data.jsonl";
    opts.dataset = dir / "data.jsonl";
    opts.judge = ChatProviderConfig{};
    opts.similarity = EmbedderConfig{};
    auto ev = cmd_evaluate(opts);
    for (const auto& s : ev.samples) {
      CHECK(s.report.rel);
      CHECK(s.report.ovr);
    }
    CHECK(ev.aggregates.front().mean.ovr);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("alpha sweep columns") {
    auto samples = testing::synth_dataset(30, 6);
    DatasetIndex index(samples);
    std::vector<RolloutItem> rollouts;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      rollouts.push_back({samples[i].id, testing::random_completion(samples[i], i)});
    }
    rollouts.push_back({"ghost", "x"});
    std::vector<std::string> errors;
    auto rows = sweep_alpha(rollouts, index, kDefaultAlphas, &errors);
    CHECK(errors.size() == 1);
    REQUIRE(rows.size() == kDefaultAlphas.size());
    for (const auto& r : rows) CHECK(r.r_rec == rows.front().r_rec);
    CHECK(std::abs(rows.front().r_answer - rows.front().r_pos) < 1e-12);
    CHECK(std::abs(rows.back().r_answer - rows.back().r_rec) < 1e-12);
    CHECK(sweep_csv(rows).starts_with("alpha,n,r_format,r_rec,r_pos,r_answer,r_total\n0,30,"));
    CHECK_THROWS_AS(sweep_alpha(rollouts, index, {1.5}), Error);
  }
}
