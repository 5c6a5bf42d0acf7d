// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace hanet {

inline constexpr std::string_view kNaLabel = "NA";

/// Token span, end-exclusive.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const noexcept { return end - start; }
  bool overlaps(const Span& o) const noexcept { return start < o.end && o.start < end; }
  bool operator==(const Span&) const = default;
  auto operator<=>(const Span&) const = default;
};

struct Trigger {
  Span span;
  std::string label;
  bool operator==(const Trigger&) const = default;
};

struct Instance {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<Trigger> triggers;
  bool operator==(const Instance&) const = default;
};

/// A span to classify: a gold trigger or a sampled non-trigger ("NA") span.
struct Candidate {
  std::string instance_id;
  Span span;
  std::string gold;

  bool is_na() const noexcept { return gold == kNaLabel; }
  bool operator==(const Candidate&) const = default;
};

/// Throws ValidationError naming the instance id.
void validate_instance(const Instance& inst);

/// One JSON object per line: {"id", "tokens", "triggers": [{"start","end","label"}]}.
std::vector<Instance> parse_corpus(std::istream& in);
std::vector<Instance> load_corpus(const std::filesystem::path& path);
void write_corpus(std::ostream& out, const std::vector<Instance>& corpus);
void save_corpus(const std::filesystem::path& path, const std::vector<Instance>& corpus);
/// 16-hex-digit FNV-1a digest of the canonical serialization.
std::string corpus_checksum(const std::vector<Instance>& corpus);

struct SyntheticParams {
  std::size_t n_types = 20;
  std::size_t instances_per_type = 200;
  std::size_t vocab_size = 100;
  std::size_t sentence_len = 8;
  double signal_strength = 0.9;
  std::size_t lexicon_size = 3;
  std::uint64_t seed = 7;
};

/// Each sentence holds exactly one single-token trigger. With probability
/// signal_strength the trigger token comes from the label's own lexicon,
/// otherwise from the lexicon of a uniformly drawn type (any of n_types).
std::vector<Instance> gen_synthetic_corpus(const SyntheticParams& params);

struct BenchmarkParams {
  std::size_t n_tasks = 5;
  std::size_t way = 2;
  std::size_t base_shots = 100;
  std::size_t shots = 5;
  std::size_t dev_per_type = 20;
  std::size_t test_per_type = 40;
  std::size_t na_ratio = 1;
  std::uint64_t seed = 7;
};

struct TaskSplit {
  std::vector<std::string> labels;
  std::vector<Candidate> train;
  std::vector<Candidate> dev;
  std::vector<Candidate> test;
};

class Benchmark {
 public:
  BenchmarkParams params;
  std::string corpus_checksum;
  std::vector<TaskSplit> tasks;

  const std::vector<Instance>& instances() const noexcept { return instances_; }
  void set_instances(std::vector<Instance> instances);
  bool has_instance(std::string_view id) const;
  /// Throws MemoryIntegrityError for unknown ids.
  const Instance& instance(std::string_view id) const;
  std::size_t instance_index(std::string_view id) const;

  std::size_t n_tasks() const noexcept { return tasks.size(); }
  /// Digest over params, corpus checksum, task labels and all splits.
  std::string checksum() const;

 private:
  std::vector<Instance> instances_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Ranks types by trigger frequency (ties lexicographic), keeps the top
/// n_tasks * way and partitions them into tasks in rank order. Splits and NA
/// spans are drawn from the "split" stream of `params.seed`.
Benchmark build_benchmark(const std::vector<Instance>& corpus, const BenchmarkParams& params);

/// Union of test candidates of tasks 1..t (1-based) in task order.
std::vector<Candidate> accumulate_test(const Benchmark& bench, std::size_t t);
/// Union of train candidates of tasks 1..t (1-based) in task order.
std::vector<Candidate> accumulate_train(const Benchmark& bench, std::size_t t);

/// Directory layout: manifest.json, splits.json, instances.jsonl.
void save_benchmark(const std::filesystem::path& dir, const Benchmark& bench);
Benchmark load_benchmark(const std::filesystem::path& dir);

std::string hex64(std::uint64_t v);

}  // namespace hanet
