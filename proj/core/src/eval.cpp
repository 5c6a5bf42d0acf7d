// SPDX-License-Identifier: Apache-2.0
#include "hanet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <nlohmann/json.hpp>
#include <unordered_map>

#include "hanet/errors.hpp"

namespace hanet {

double LabelStats::precision() const noexcept {
  return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double LabelStats::recall() const noexcept {
  return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

StageReport micro_f1(std::span<const std::string> predictions, std::span<const std::string> golds) {
  if (predictions.size() != golds.size()) {
    throw InvalidArgument("micro_f1: " + std::to_string(predictions.size()) + " predictions for " +
                          std::to_string(golds.size()) + " golds");
  }
  StageReport r;
  r.test_size = golds.size();
  std::map<std::string, LabelStats> per;
  auto stats = [&](const std::string& l) -> LabelStats& {
    auto& s = per[l];
    s.label = l;
    return s;
  };
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const std::string& g = golds[i];
    const std::string& p = predictions[i];
    const bool gold_event = g != kNaLabel;
    const bool pred_event = p != kNaLabel;
    if (gold_event && p == g) {
      ++r.tp;
      ++stats(g).tp;
      continue;
    }
    if (pred_event) {
      ++r.fp;
      ++stats(p).fp;
    }
    if (gold_event) {
      ++r.fn;
      ++stats(g).fn;
    }
  }
  const std::size_t denom = 2 * r.tp + r.fp + r.fn;
  r.micro_f1 = denom == 0 ? 0.0 : static_cast<double>(2 * r.tp) / static_cast<double>(denom);
  for (auto& [_, s] : per) r.per_label.push_back(std::move(s));
  return r;
}

std::vector<std::string> predict_labels(const Model& model, const Benchmark& bench,
                                        std::span<const Candidate> candidates) {
  std::vector<std::string> out;
  out.reserve(candidates.size());
  std::unordered_map<std::string, Matrix> hidden_cache;
  RngStream unused(0, "eval");
  for (const Candidate& c : candidates) {
    auto it = hidden_cache.find(c.instance_id);
    if (it == hidden_cache.end()) {
      it = hidden_cache
               .emplace(c.instance_id, encode_values(model.encoder, model.vocab,
                                                     bench.instance(c.instance_id), Mode::kEval,
                                                     unused))
               .first;
    }
    const auto logits = logits_values(model.head, trigger_rep_values(it->second, c.span));
    const auto best = std::max_element(logits.begin(), logits.end()) - logits.begin();
    out.push_back(model.registry.label(static_cast<std::size_t>(best)));
  }
  return out;
}

StageReport evaluate_stage(const Model& model, const Benchmark& bench, std::size_t t) {
  for (std::size_t k = 0; k < t && k < bench.n_tasks(); ++k) {
    for (const std::string& l : bench.tasks[k].labels) {
      if (!model.registry.contains(l)) {
        throw StateError("evaluate_stage: registry is missing observed label " + l);
      }
    }
  }
  std::vector<Candidate> test = accumulate_test(bench, t);
  if (!model.registry.na_enabled()) {
    std::erase_if(test, [](const Candidate& c) { return c.is_na(); });
  }
  const auto preds = predict_labels(model, bench, test);
  std::vector<std::string> golds;
  golds.reserve(test.size());
  for (const Candidate& c : test) golds.push_back(c.gold);
  StageReport r = micro_f1(preds, golds);
  r.stage = t;
  return r;
}

RunReport assemble_report(std::vector<StageReport> stages) {
  if (stages.empty()) throw InvalidArgument("assemble_report: no stage reports");
  RunReport r;
  double sum = 0.0;
  for (const StageReport& s : stages) sum += s.micro_f1;
  r.overall = sum / static_cast<double>(stages.size());
  r.stages = std::move(stages);
  return r;
}

namespace {

using nlohmann::json;

json stage_json(const StageReport& s) {
  json labels = json::array();
  for (const LabelStats& l : s.per_label) {
    labels.push_back({{"label", l.label}, {"tp", l.tp}, {"fp", l.fp}, {"fn", l.fn},
                      {"precision", l.precision()}, {"recall", l.recall()}});
  }
  return {{"stage", s.stage}, {"micro_f1", s.micro_f1}, {"tp", s.tp},   {"fp", s.fp},
          {"fn", s.fn},       {"test_size", s.test_size}, {"per_label", labels}};
}

}  // namespace

std::string report_to_json(const RunReport& report) {
  json stages = json::array();
  for (const StageReport& s : report.stages) stages.push_back(stage_json(s));
  json j = {{"mode", report.mode},
            {"seed", report.seed},
            {"benchmark_checksum", report.benchmark_checksum},
            {"manifest_id", report.manifest_id},
            {"stages", stages},
            {"overall", report.overall}};
  return j.dump(2) + "\n";
}

RunReport report_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("report: ") + e.what());
  }
  try {
    RunReport r;
    r.mode = j.at("mode").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.benchmark_checksum = j.at("benchmark_checksum").get<std::string>();
    r.manifest_id = j.at("manifest_id").get<std::string>();
    r.overall = j.at("overall").get<double>();
    for (const json& s : j.at("stages")) {
      StageReport sr;
      sr.stage = s.at("stage").get<std::size_t>();
      sr.micro_f1 = s.at("micro_f1").get<double>();
      sr.tp = s.at("tp").get<std::size_t>();
      sr.fp = s.at("fp").get<std::size_t>();
      sr.fn = s.at("fn").get<std::size_t>();
      sr.test_size = s.at("test_size").get<std::size_t>();
      for (const json& l : s.at("per_label")) {
        sr.per_label.push_back({l.at("label").get<std::string>(), l.at("tp").get<std::size_t>(),
                                l.at("fp").get<std::size_t>(), l.at("fn").get<std::size_t>()});
      }
      r.stages.push_back(std::move(sr));
    }
    if (r.stages.empty()) throw ValidationError("report: no stages");
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("report: ") + e.what());
  }
}

TableRow table_row(std::string method, const RunReport& report) {
  TableRow row{std::move(method), {}, report.overall, std::nullopt, std::nullopt};
  for (const StageReport& s : report.stages) row.stages.push_back(s.micro_f1);
  return row;
}

namespace {

std::pair<double, double> mean_std(std::span<const double> xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

}  // namespace

TableRow aggregate_row(std::string method, std::span<const RunReport> reports) {
  if (reports.empty()) throw InvalidArgument("aggregate_row: no reports");
  const std::size_t n = reports.front().stages.size();
  for (const RunReport& r : reports) {
    if (r.stages.size() != n) throw InvalidArgument("aggregate_row: reports differ in stage count");
    if (r.benchmark_checksum != reports.front().benchmark_checksum) {
      throw ValidationError("aggregate_row: reports come from different benchmarks");
    }
  }
  TableRow row;
  row.method = std::move(method);
  row.stage_std.emplace();
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> xs;
    for (const RunReport& r : reports) xs.push_back(r.stages[s].micro_f1);
    const auto [m, sd] = mean_std(xs);
    row.stages.push_back(m);
    row.stage_std->push_back(sd);
  }
  std::vector<double> overall;
  for (const RunReport& r : reports) overall.push_back(r.overall);
  const auto [m, sd] = mean_std(overall);
  row.overall = m;
  row.overall_std = sd;
  return row;
}

namespace {

std::string cell(double v, std::optional<double> sd) {
  char buf[64];
  if (sd) {
    std::snprintf(buf, sizeof buf, "%.2f±%.2f", 100.0 * v, 100.0 * *sd);
  } else {
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  }
  return buf;
}

// Column width in code points; the ± sign is two bytes in UTF-8.
std::size_t display_width(const std::string& s) {
  std::size_t w = 0;
  for (unsigned char c : s) w += (c & 0xC0) != 0x80;
  return w;
}

}  // namespace

std::string format_table(std::span<const TableRow> rows) {
  std::size_t n = 0;
  for (const TableRow& r : rows) n = std::max(n, r.stages.size());
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header{"Method"};
  for (std::size_t s = 0; s < n; ++s) header.push_back(std::to_string(s + 1));
  header.push_back("Overall");
  grid.push_back(header);
  for (const TableRow& r : rows) {
    std::vector<std::string> line{r.method};
    for (std::size_t s = 0; s < n; ++s) {
      if (s >= r.stages.size()) {
        line.emplace_back("-");
        continue;
      }
      std::optional<double> sd;
      if (r.stage_std) sd = (*r.stage_std)[s];
      line.push_back(cell(r.stages[s], sd));
    }
    line.push_back(cell(r.overall, r.overall_std));
    grid.push_back(std::move(line));
  }
  std::vector<std::size_t> width(n + 2, 0);
  for (const auto& line : grid)
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], display_width(line[c]));
  std::string out;
  for (const auto& line : grid) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      const std::size_t pad = width[c] - display_width(line[c]);
      if (c == 0) {
        out += line[c] + std::string(pad, ' ');
      } else {
        out += "  " + std::string(pad, ' ') + line[c];
      }
    }
    out += '\n';
  }
  return out;
}

}  // namespace hanet
