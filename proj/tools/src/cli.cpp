// SPDX-License-Identifier: Apache-2.0
#include "hanet_cli/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "hanet/checkpoint.hpp"
#include "hanet/corpus.hpp"
#include "hanet/errors.hpp"
#include "hanet/eval.hpp"
#include "hanet/trainer.hpp"
#include "hanet/version.hpp"

namespace hanet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
  if (!out) throw ValidationError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct GenOptions {
  SyntheticParams params;
  std::string out;
};

void add_gen(CLI::App& app, GenOptions& o) {
  auto* cmd = app.add_subcommand("gen-synthetic", "Write a synthetic event-detection corpus");
  cmd->add_option("--types", o.params.n_types, "Number of event types")->required();
  cmd->add_option("--per-type", o.params.instances_per_type, "Sentences per type")->required();
  cmd->add_option("--seed", o.params.seed, "Random seed")->required();
  cmd->add_option("--vocab", o.params.vocab_size, "Vocabulary size");
  cmd->add_option("--length", o.params.sentence_len, "Tokens per sentence");
  cmd->add_option("--signal", o.params.signal_strength, "Probability of a type-specific trigger");
  cmd->add_option("--lexicon", o.params.lexicon_size, "Trigger tokens per type");
  cmd->add_option("--out", o.out, "Output corpus file (JSON lines)")->required();
}

int cmd_gen(const GenOptions& o, std::ostream& out) {
  const auto corpus = gen_synthetic_corpus(o.params);
  save_corpus(o.out, corpus);
  out << "wrote " << corpus.size() << " instances to " << o.out << "\nchecksum "
      << corpus_checksum(corpus) << "\n";
  return kExitOk;
}

struct BuildOptions {
  BenchmarkParams params;
  std::string corpus;
  std::string out;
};

void add_build(CLI::App& app, BuildOptions& o) {
  auto* cmd = app.add_subcommand("build", "Build a continual benchmark from a corpus");
  cmd->add_option("--corpus", o.corpus, "Corpus file (JSON lines)")->required();
  cmd->add_option("--out", o.out, "Benchmark directory")->required();
  cmd->add_option("--tasks", o.params.n_tasks, "Number of tasks");
  cmd->add_option("--way", o.params.way, "Types per task");
  cmd->add_option("--base-shots", o.params.base_shots, "Training sentences per base type");
  cmd->add_option("--shots", o.params.shots, "Training sentences per incremental type");
  cmd->add_option("--dev", o.params.dev_per_type, "Dev sentences per type");
  cmd->add_option("--test", o.params.test_per_type, "Test sentences per type");
  cmd->add_option("--na-ratio", o.params.na_ratio, "NA spans per sentence");
  cmd->add_option("--seed", o.params.seed, "Random seed");
}

int cmd_build(const BuildOptions& o, std::ostream& out) {
  const auto corpus = load_corpus(o.corpus);
  const Benchmark bench = build_benchmark(corpus, o.params);
  save_benchmark(o.out, bench);
  out << "built " << bench.n_tasks() << " tasks in " << o.out << "\nchecksum " << bench.checksum()
      << "\n";
  return kExitOk;
}

struct TrainOptions {
  std::string benchmark;
  std::string mode = "hanet";
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::size_t jobs = 1;
};

void add_train(CLI::App& app, TrainOptions& o) {
  auto* cmd = app.add_subcommand("train", "Train over every stage of a benchmark");
  cmd->add_option("--benchmark", o.benchmark, "Benchmark directory")->required();
  cmd->add_option("--mode", o.mode, "hanet, finetune or retrain")
      ->check(CLI::IsMember({"hanet", "finetune", "retrain"}));
  cmd->add_option("--config", o.config, "Training configuration (JSON)");
  auto* seeds = cmd->add_option("--seeds", o.seeds, "Comma-separated seeds")->delimiter(',');
  cmd->add_option("--seed", o.seeds, "Single seed")->excludes(seeds);
  cmd->add_option("--out", o.out, "Output directory")->required();
  cmd->add_option("--jobs", o.jobs, "Seeds trained concurrently")->check(CLI::PositiveNumber);
}

struct SeedOutcome {
  RunReport report;
  std::string error;
};

int cmd_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
  const Benchmark bench = load_benchmark(o.benchmark);
  const TrainConfig base = o.config.empty() ? TrainConfig{} : load_config(o.config);
  validate_config(base);
  const RunMode mode = parse_mode(o.mode);
  const std::vector<std::uint64_t> seeds =
      o.seeds.empty() ? std::vector<std::uint64_t>{base.seed} : o.seeds;
  const fs::path root = fs::path(o.out) / o.mode;

  std::vector<SeedOutcome> outcomes(seeds.size());
  auto run_seed = [&](std::size_t i) {
    try {
      TrainConfig cfg = base;
      cfg.seed = seeds[i];
      const fs::path dir = root / ("seed" + std::to_string(seeds[i]));
      write_text(dir / "config.json", config_to_json(cfg));
      StreamResult result = run_stream(bench, cfg, mode, dir / "checkpoints");
      write_text(dir / "report.json", report_to_json(result.report));
      const TableRow row = table_row(std::string(mode_name(mode)), result.report);
      write_text(dir / "report.txt", format_table(std::span(&row, 1)));
      outcomes[i].report = std::move(result.report);
    } catch (const std::exception& e) {
      outcomes[i].error = "seed " + std::to_string(seeds[i]) + ": " + e.what();
    }
  };
  std::size_t next = 0;
  std::mutex next_mutex;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(next_mutex);
        if (next == seeds.size()) return;
        i = next++;
      }
      run_seed(i);
    }
  };
  std::vector<std::jthread> pool;
  for (std::size_t w = 1; w < std::min(o.jobs, seeds.size()); ++w) pool.emplace_back(worker);
  worker();
  pool.clear();

  bool failed = false;
  std::vector<RunReport> reports;
  json runs = json::array();
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (!outcomes[i].error.empty()) {
      err << "error: " << outcomes[i].error << "\n";
      failed = true;
      continue;
    }
    runs.push_back({{"seed", seeds[i]}, {"manifest_id", outcomes[i].report.manifest_id}});
    reports.push_back(outcomes[i].report);
  }
  if (failed) return kExitRuntime;

  const json manifest = {{"version", std::string(kVersion)},
                         {"mode", o.mode},
                         {"benchmark_checksum", bench.checksum()},
                         {"config_checksum", config_checksum(base)},
                         {"seeds", seeds},
                         {"runs", runs},
                         {"created_utc", utc_now()}};
  write_text(root / "manifest.json", manifest.dump(2) + "\n");
  const std::string method(mode_name(mode));
  const TableRow row =
      reports.size() == 1 ? table_row(method, reports.front()) : aggregate_row(method, reports);
  const std::string table = format_table(std::span(&row, 1));
  write_text(root / "summary.txt", table);
  out << table;
  return kExitOk;
}

struct ReportOptions {
  std::vector<std::string> reports;
  std::string out;
};

void add_report(CLI::App& app, ReportOptions& o) {
  auto* cmd = app.add_subcommand("report", "Merge run reports into one comparison table");
  cmd->add_option("reports", o.reports, "Report files (report.json)")->required();
  cmd->add_option("--out", o.out, "Write the table to this file as well");
}

int cmd_report(const ReportOptions& o, std::ostream& out, std::ostream& err) {
  std::vector<RunReport> reports;
  for (const std::string& p : o.reports) reports.push_back(report_from_json(read_text(p)));
  for (std::size_t i = 1; i < reports.size(); ++i) {
    if (reports[i].benchmark_checksum != reports.front().benchmark_checksum) {
      err << "error: " << o.reports[i] << " was produced on benchmark "
          << reports[i].benchmark_checksum << ", " << o.reports.front() << " on "
          << reports.front().benchmark_checksum << "\n";
      return kExitRuntime;
    }
  }
  std::vector<std::string> order;
  std::map<std::string, std::vector<RunReport>> by_mode;
  for (const RunReport& r : reports) {
    if (!by_mode.contains(r.mode)) order.push_back(r.mode);
    by_mode[r.mode].push_back(r);
  }
  std::vector<TableRow> rows;
  for (const std::string& m : order) {
    const auto& group = by_mode.at(m);
    rows.push_back(group.size() == 1 ? table_row(m, group.front()) : aggregate_row(m, group));
  }
  const std::string table = format_table(rows);
  if (!o.out.empty()) write_text(o.out, table);
  out << table;
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Continual few-shot event detection: data, training and evaluation", "hanet"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  GenOptions gen;
  BuildOptions build;
  TrainOptions train;
  ReportOptions report;
  add_gen(app, gen);
  add_build(app, build);
  add_train(app, train);
  add_report(app, report);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (app.got_subcommand("gen-synthetic")) return cmd_gen(gen, out);
    if (app.got_subcommand("build")) return cmd_build(build, out);
    if (app.got_subcommand("train")) return cmd_train(train, out, err);
    if (app.got_subcommand("report")) return cmd_report(report, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace hanet::cli
