// SPDX-License-Identifier: Apache-2.0
#pragma once

// Micro-F1 over candidate classifications and run-level report assembly.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hanet/corpus.hpp"
#include "hanet/model.hpp"

namespace hanet {

struct LabelStats {
  std::string label;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  double precision() const noexcept;
  double recall() const noexcept;
  bool operator==(const LabelStats&) const = default;
};

struct StageReport {
  std::size_t stage = 0;
  double micro_f1 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t test_size = 0;
  /// Non-NA labels seen in golds or predictions, sorted by name.
  std::vector<LabelStats> per_label;

  bool operator==(const StageReport&) const = default;
};

/// Counting rule per candidate: gold non-NA and pred == gold is a TP; a non-NA
/// prediction that differs from the gold is a FP; a non-NA gold predicted as
/// anything else is a FN. NA/NA contributes nothing.
StageReport micro_f1(std::span<const std::string> predictions, std::span<const std::string> golds);

/// Argmax label for each candidate (lowest index wins ties).
std::vector<std::string> predict_labels(const Model& model, const Benchmark& bench,
                                        std::span<const Candidate> candidates);

/// Scores the model on the accumulated test set of tasks 1..t. NA candidates are
/// dropped when the registry has no NA slot.
StageReport evaluate_stage(const Model& model, const Benchmark& bench, std::size_t t);

struct RunReport {
  std::string mode;
  std::uint64_t seed = 0;
  std::string benchmark_checksum;
  std::string manifest_id;
  std::vector<StageReport> stages;
  /// Mean of the stage micro-F1 values.
  double overall = 0.0;

  bool operator==(const RunReport&) const = default;
};

/// Throws InvalidArgument for an empty list.
RunReport assemble_report(std::vector<StageReport> stages);

std::string report_to_json(const RunReport& report);
RunReport report_from_json(std::string_view text);

/// One table row: per-stage scores and the overall score, optionally with spreads.
struct TableRow {
  std::string method;
  std::vector<double> stages;
  double overall = 0.0;
  std::optional<std::vector<double>> stage_std;
  std::optional<double> overall_std;
};

TableRow table_row(std::string method, const RunReport& report);
/// Mean and sample standard deviation across reports of the same benchmark.
TableRow aggregate_row(std::string method, std::span<const RunReport> reports);

/// Aligned plain-text table: method, stage columns 1..n, then the overall column.
/// Scores are printed as percentages with two decimals.
std::string format_table(std::span<const TableRow> rows);

}  // namespace hanet
