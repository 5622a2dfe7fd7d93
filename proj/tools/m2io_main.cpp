// m2io command-line interface.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 partial failure
// (some samples or items failed and were recorded).

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <iostream>

#include "CLI11.hpp"
#include "m2io/dataset.hpp"
#include "m2io/pipeline.hpp"
#include "m2io/reward_service.hpp"
#include "m2io/text.hpp"

namespace {

using namespace m2io;

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kPartial = 2;

void emit(const std::string& content, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << content;
  } else {
    write_file(path, content);
  }
}

EditCostConfig parse_costs(const std::vector<double>& v, EditCostConfig base) {
  if (v.empty()) return base;
  if (v.size() != 4) throw Error(ErrorCode::ConfigError, "--costs takes p1 p2 p3 p");
  return {v[0], v[1], v[2], v[3]};
}

ChatProviderConfig provider_from_flags(const std::string& kind, const std::string& cassette, const std::string& url,
                                       const std::string& model) {
  ChatProviderConfig c;
  c.kind = kind;
  c.cassette = cassette;
  c.base_url = url;
  c.model = model;
  return c;
}

std::pair<std::string, int> parse_bind(const std::string& bind) {
  auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::ConfigError, "--bind expects host:port");
  try {
    return {bind.substr(0, colon), std::stoi(bind.substr(colon + 1))};
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigError, "bad port in --bind " + bind);
  }
}

std::unique_ptr<RewardService> g_service;

void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("m2io");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");

  CLI::App app{"Multimodal answer pipeline, metrics and reward scoring"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  // run
  auto* run = app.add_subcommand("run", "Retrieve, generate, insert images and merge for every sample");
  std::string run_config, run_dataset, run_strategy, run_output;
  std::size_t run_workers = 0, run_k = 0;
  std::optional<std::uint64_t> run_seed;
  run->add_option("-c,--config", run_config, "JSON run configuration")->check(CLI::ExistingFile);
  run->add_option("--dataset", run_dataset, "Sample JSONL (overrides config)");
  run->add_option("--strategy", run_strategy, "single_shot | rule_based | m2io");
  run->add_option("-o,--output", run_output, "Run directory");
  run->add_option("-j,--workers", run_workers, "Worker threads");
  run->add_option("-k", run_k, "Documents retrieved per query");
  run->add_option("--seed", run_seed, "Run seed");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score answers against ground truth");
  EvaluateOptions eval_opts;
  std::string eval_output, eval_config, judge_kind, judge_cassette, judge_url, judge_model, bert_kind, rel_scale;
  std::vector<double> eval_costs;
  evaluate->add_option("-a,--answers", eval_opts.answers, "Run directory or answers JSONL")->required();
  evaluate->add_option("-d,--dataset", eval_opts.dataset, "Sample JSONL")->required()->check(CLI::ExistingFile);
  evaluate->add_option("-o,--output", eval_output, "Directory for metrics.jsonl, summary.json, table.csv, table.md");
  evaluate->add_option("-c,--config", eval_config, "Run configuration supplying judge, embedder and edit costs");
  evaluate->add_option("--costs", eval_costs, "Edit costs p1 p2 p3 p")->expected(4);
  evaluate->add_flag("--order-all", eval_opts.order_all, "Compute Ord for every source");
  evaluate->add_flag("--allow-missing", eval_opts.allow_missing, "Skip samples without an answer");
  evaluate->add_option("--judge", judge_kind, "Judge provider kind: mock | echo | cassette | remote");
  evaluate->add_option("--judge-cassette", judge_cassette, "Cassette for --judge cassette");
  evaluate->add_option("--judge-url", judge_url, "Base URL for --judge remote");
  evaluate->add_option("--judge-model", judge_model, "Judge model name");
  evaluate->add_option("--bert", bert_kind, "Embedder for the text-similarity component: hash | none");
  evaluate->add_option("--rel-scale", rel_scale, "Relevance mapping: zero (s-1)/4 | fifth s/5");
  evaluate->add_option("-j,--workers", eval_opts.workers, "Worker threads");
  evaluate->add_option("--label", eval_opts.label, "Row label in tables");

  // sweep-alpha
  auto* sweep = app.add_subcommand("sweep-alpha", "Mean rollout rewards for a range of alpha values");
  std::string sweep_rollouts, sweep_dataset, sweep_output;
  std::vector<double> sweep_alphas = kDefaultAlphas;
  sweep->add_option("-r,--rollouts", sweep_rollouts, "Rollout JSONL {sample_id, completion}")->required();
  sweep->add_option("-d,--dataset", sweep_dataset, "Sample JSONL")->required()->check(CLI::ExistingFile);
  sweep->add_option("--alphas", sweep_alphas, "Alpha values")->delimiter(',');
  sweep->add_option("-o,--output", sweep_output, "CSV path (stdout when omitted)");

  // score
  auto* score = app.add_subcommand("score", "Offline reward scoring of a rollout file");
  std::string score_rollouts, score_dataset, score_output;
  double score_alpha = 0.8;
  score->add_option("-r,--rollouts", score_rollouts, "Rollout JSONL")->required();
  score->add_option("-d,--dataset", score_dataset, "Sample JSONL")->required()->check(CLI::ExistingFile);
  score->add_option("-o,--output", score_output, "Score JSONL (stdout when omitted)");
  score->add_option("--alpha", score_alpha, "Recall weight")->check(CLI::Range(0.0, 1.0));

  // serve
  auto* serve = app.add_subcommand("serve", "Reward scoring HTTP service");
  std::string serve_dataset, serve_bind = "127.0.0.1:8080";
  ServiceConfig serve_cfg;
  serve->add_option("-d,--dataset", serve_dataset, "Sample JSONL")->required()->check(CLI::ExistingFile);
  serve->add_option("--bind", serve_bind, "host:port");
  serve->add_option("--alpha", serve_cfg.reward.alpha, "Default recall weight")->check(CLI::Range(0.0, 1.0));
  serve->add_option("-j,--workers", serve_cfg.workers, "Batches scored concurrently");
  serve->add_option("--connections", serve_cfg.connection_threads, "Client connections served concurrently");

  // sample
  auto* sample = app.add_subcommand("sample", "Add positive and distractor candidates to samples");
  std::string sample_input, sample_images, sample_output;
  SampleBuilderConfig sample_cfg;
  std::size_t sample_dim = 256;
  sample->add_option("-i,--input", sample_input, "Sample JSONL")->required()->check(CLI::ExistingFile);
  sample->add_option("--images", sample_images, "Image corpus JSONL (default: every image in the input)");
  sample->add_option("--seed", sample_cfg.seed, "Sampling seed")->required();
  sample->add_option("--ratio", sample_cfg.negative_ratio, "Negatives per positive");
  sample->add_option("--hard-fraction", sample_cfg.hard_fraction, "Share of hard negatives");
  sample->add_option("--dimension", sample_dim, "Hash embedder dimension");
  sample->add_option("-o,--output", sample_output, "Output JSONL (stdout when omitted)");

  // split
  auto* split_cmd = app.add_subcommand("split", "Train/eval split");
  std::string split_input, split_protocol = "full_source", split_train, split_eval;
  std::uint64_t split_seed = 0;
  split_cmd->add_option("-i,--input", split_input, "Sample JSONL")->required()->check(CLI::ExistingFile);
  split_cmd->add_option("--protocol", split_protocol, "full_source | web_focused");
  split_cmd->add_option("--seed", split_seed, "Split seed")->required();
  split_cmd->add_option("--train", split_train, "Train JSONL")->required();
  split_cmd->add_option("--eval", split_eval, "Eval JSONL")->required();

  // lint
  auto* lint = app.add_subcommand("lint", "Validate a sample JSONL file");
  std::string lint_input;
  lint->add_option("input", lint_input, "Sample JSONL")->required()->check(CLI::ExistingFile);

  // report
  auto* report = app.add_subcommand("report", "Combine evaluation summaries into one table");
  std::vector<std::string> report_inputs;
  std::string report_csv_path, report_md_path;
  report->add_option("inputs", report_inputs, "label=evaluation_dir or evaluation_dir")->required();
  report->add_option("--csv", report_csv_path, "CSV output path");
  report->add_option("--md", report_md_path, "Markdown output path (stdout when omitted)");

  // stratify
  auto* stratify = app.add_subcommand("stratify", "Assign difficulty tiers with three judges");
  std::string strat_input, strat_output, strat_judges, strat_norm = "minmax";
  stratify->add_option("-i,--input", strat_input, "Sample JSONL")->required()->check(CLI::ExistingFile);
  stratify->add_option("-o,--output", strat_output, "Output JSONL")->required();
  stratify->add_option("--judges", strat_judges, "JSON array of provider configs (default: three mocks)");
  stratify->add_option("--normalization", strat_norm, "minmax | zscore");

  // import
  auto* import = app.add_subcommand("import", "Convert benchmark JSON or CSV into sample JSONL");
  std::string import_format = "mramg", import_input, import_manifest, import_output;
  import->add_option("--format", import_format, "mramg | csv");
  import->add_option("-i,--input", import_input, "Input file")->required()->check(CLI::ExistingFile);
  import->add_option("--manifest", import_manifest, "Image manifest CSV (csv format)");
  import->add_option("-o,--output", import_output, "Output JSONL")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (verbose) spdlog::set_level(spdlog::level::debug);

  try {
    if (*run) {
      RunConfig cfg;
      if (!run_config.empty()) cfg = RunConfig::load(run_config);
      if (!run_dataset.empty()) cfg.dataset = run_dataset;
      if (!run_strategy.empty()) {
        auto s = parse_strategy(run_strategy);
        if (!s) throw Error(ErrorCode::ConfigError, "unknown strategy " + run_strategy);
        cfg.strategy = *s;
      }
      if (!run_output.empty()) cfg.output_dir = run_output;
      if (run_workers) cfg.workers = run_workers;
      if (run_k) cfg.retrieval_k = run_k;
      if (run_seed) cfg.seed = *run_seed;
      cfg.validate();
      spdlog::info("run {} strategy={} workers={} config={}", cfg.dataset, to_string(cfg.strategy), cfg.workers,
                   cfg.hash().substr(0, 12));
      auto summary = cmd_run(cfg);
      spdlog::info("{} samples, {} failed, output {}", summary.samples, summary.failed.size(),
                   summary.run_dir.string());
      for (const auto& id : summary.failed) spdlog::warn("sample {} failed", id);
      return summary.failed.empty() ? kOk : kPartial;
    }

    if (*evaluate) {
      if (!eval_config.empty()) {
        auto cfg = RunConfig::load(eval_config);
        eval_opts.judge = cfg.judge;
        eval_opts.edit_costs = cfg.edit_costs;
      }
      eval_opts.edit_costs = parse_costs(eval_costs, eval_opts.edit_costs);
      if (!judge_kind.empty() && judge_kind != "none") {
        eval_opts.judge = provider_from_flags(judge_kind, judge_cassette, judge_url, judge_model);
      }
      if (bert_kind == "hash") {
        eval_opts.similarity = EmbedderConfig{};
      } else if (!bert_kind.empty() && bert_kind != "none") {
        throw Error(ErrorCode::ConfigError, "--bert must be hash or none");
      }
      if (rel_scale == "fifth") {
        eval_opts.relevance_scale = RelevanceScale::FifthScale;
      } else if (!rel_scale.empty() && rel_scale != "zero") {
        throw Error(ErrorCode::ConfigError, "--rel-scale must be zero or fifth");
      }
      auto ev = cmd_evaluate(eval_opts);
      if (!eval_output.empty()) write_evaluation(ev, eval_output);
      std::cout << report_markdown({ev});
      for (const auto& id : ev.skipped) spdlog::warn("no answer for {}", id);
      return ev.skipped.empty() ? kOk : kPartial;
    }

    if (*sweep) {
      DatasetIndex index(load_samples(sweep_dataset));
      std::vector<std::string> errors;
      auto rows = sweep_alpha(read_rollouts(sweep_rollouts), index, sweep_alphas, &errors);
      emit(sweep_csv(rows), sweep_output);
      for (const auto& e : errors) spdlog::warn("{}", e);
      return errors.empty() ? kOk : kPartial;
    }

    if (*score) {
      DatasetIndex index(load_samples(score_dataset));
      RewardConfig cfg{score_alpha};
      auto entries = score_batch(read_rollouts(score_rollouts), index, cfg);
      std::string out;
      std::size_t failed = 0;
      for (const auto& e : entries) {
        out += batch_entry_to_json(e).dump() + "\n";
        if (!e.score) ++failed;
      }
      emit(out, score_output);
      if (failed) spdlog::warn("{} of {} items could not be scored", failed, entries.size());
      return failed ? kPartial : kOk;
    }

    if (*serve) {
      auto [host, port] = parse_bind(serve_bind);
      auto index = std::make_shared<const DatasetIndex>(load_samples(serve_dataset));
      g_service = std::make_unique<RewardService>(serve_cfg);
      g_service->load(index);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      spdlog::info("serving {} samples on {}:{}", index->size(), host, port);
      g_service->listen(host, port);
      g_service.reset();
      return kOk;
    }

    if (*sample) {
      auto samples = load_samples(sample_input);
      std::vector<ImageAsset> corpus;
      if (!sample_images.empty()) {
        for (const auto& row : read_jsonl(sample_images)) corpus.push_back(image_from_json(row));
      } else {
        std::set<ImageId> seen;
        for (const auto& s : samples) {
          for (const auto& img : s.images) {
            if (seen.insert(img.id).second) corpus.push_back(img);
          }
        }
      }
      HashEmbedder embedder(sample_dim);
      std::string out;
      for (const auto& s : samples) out += sample_to_json(build_sample(s, corpus, embedder, sample_cfg)).dump() + "\n";
      emit(out, sample_output);
      return kOk;
    }

    if (*split_cmd) {
      auto protocol = parse_split_protocol(split_protocol);
      if (!protocol) throw Error(ErrorCode::ConfigError, "unknown protocol " + split_protocol);
      auto result = split(load_samples(split_input), *protocol, split_seed);
      save_samples(split_train, result.train);
      save_samples(split_eval, result.eval);
      spdlog::info("train {} eval {}", result.train.size(), result.eval.size());
      return kOk;
    }

    if (*lint) {
      auto issues = lint_file(lint_input);
      std::size_t errors = 0;
      for (const auto& i : issues) {
        std::cout << i.to_string() << "\n";
        if (i.severity == Severity::Error) ++errors;
      }
      if (errors) {
        spdlog::error("{} error(s) in {}", errors, lint_input);
        return kUsage;
      }
      spdlog::info("{}: ok", lint_input);
      return kOk;
    }

    if (*report) {
      std::vector<Evaluation> evaluations;
      for (const auto& in : report_inputs) {
        auto eq = in.find('=');
        std::filesystem::path dir = eq == std::string::npos ? in : in.substr(eq + 1);
        auto ev = Evaluation::from_summary_json(Json::parse(read_file(dir / "summary.json")));
        if (eq != std::string::npos) ev.label = in.substr(0, eq);
        evaluations.push_back(std::move(ev));
      }
      if (!report_csv_path.empty()) write_file(report_csv_path, report_csv(evaluations));
      emit(report_markdown(evaluations), report_md_path);
      return kOk;
    }

    if (*stratify) {
      auto samples = load_samples(strat_input);
      std::vector<ChatProviderConfig> configs(3);
      if (!strat_judges.empty()) {
        configs.clear();
        for (const auto& j : Json::parse(read_file(strat_judges))) configs.push_back(ChatProviderConfig::from_json(j));
      }
      std::vector<std::shared_ptr<ChatProvider>> owned;
      std::vector<ChatProvider*> judges;
      for (const auto& c : configs) {
        owned.push_back(make_chat_provider(c));
        judges.push_back(owned.back().get());
      }
      DifficultyOptions opts;
      if (strat_norm == "zscore") {
        opts.normalization = Normalization::ZScore;
      } else if (strat_norm != "minmax") {
        throw Error(ErrorCode::ConfigError, "--normalization must be minmax or zscore");
      }
      auto outcomes = stratify_difficulty(samples, judges, opts);
      std::size_t flagged = 0;
      for (const auto& o : outcomes) {
        if (o.flagged) {
          ++flagged;
          spdlog::warn("{}: judge output unparseable, tier set to medium", o.sample_id);
        }
      }
      save_samples(strat_output, samples);
      return flagged ? kPartial : kOk;
    }

    if (*import) {
      std::vector<DatasetSample> samples;
      if (import_format == "mramg") {
        samples = load_mramg_json(import_input);
      } else if (import_format == "csv") {
        if (import_manifest.empty()) throw Error(ErrorCode::ConfigError, "csv import needs --manifest");
        samples = load_csv(import_input, import_manifest);
      } else {
        throw Error(ErrorCode::ConfigError, "--format must be mramg or csv");
      }
      save_samples(import_output, samples);
      spdlog::info("wrote {} samples to {}", samples.size(), import_output);
      return kOk;
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kUsage;
  }
  return kUsage;
}
