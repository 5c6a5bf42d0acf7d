// SPDX-License-Identifier: Apache-2.0
#include "hanet/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hanet/errors.hpp"
#include "hanet/rng.hpp"

namespace hanet {

using nlohmann::json;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void validate_instance(const Instance& inst) {
  if (inst.id.empty()) throw ValidationError("instance with empty id");
  std::vector<Span> spans;
  for (const Trigger& t : inst.triggers) {
    if (!(t.span.start < t.span.end && t.span.end <= inst.tokens.size())) {
      throw ValidationError("instance " + inst.id + ": invalid trigger span [" +
                            std::to_string(t.span.start) + ", " + std::to_string(t.span.end) +
                            ")");
    }
    if (t.label.empty()) throw ValidationError("instance " + inst.id + ": empty trigger label");
    if (t.label == kNaLabel) {
      throw ValidationError("instance " + inst.id + ": trigger uses the reserved NA label");
    }
    spans.push_back(t.span);
  }
  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i - 1].overlaps(spans[i])) {
      throw ValidationError("instance " + inst.id + ": overlapping trigger spans");
    }
  }
}

namespace {

json instance_to_json(const Instance& inst) {
  json triggers = json::array();
  for (const Trigger& t : inst.triggers) {
    triggers.push_back({{"start", t.span.start}, {"end", t.span.end}, {"label", t.label}});
  }
  return {{"id", inst.id}, {"tokens", inst.tokens}, {"triggers", triggers}};
}

Instance instance_from_json(const json& j) {
  Instance inst;
  inst.id = j.at("id").get<std::string>();
  inst.tokens = j.at("tokens").get<std::vector<std::string>>();
  for (const json& t : j.at("triggers")) {
    const auto start = t.at("start").get<long long>();
    const auto end = t.at("end").get<long long>();
    if (start < 0 || end < 0) {
      throw ValidationError("instance " + inst.id + ": negative trigger index");
    }
    inst.triggers.push_back({{static_cast<std::size_t>(start), static_cast<std::size_t>(end)},
                             t.at("label").get<std::string>()});
  }
  return inst;
}

json candidate_to_json(const Candidate& c) {
  return {{"instance_id", c.instance_id}, {"start", c.span.start}, {"end", c.span.end},
          {"gold", c.gold}};
}

Candidate candidate_from_json(const json& j) {
  return {j.at("instance_id").get<std::string>(),
          {j.at("start").get<std::size_t>(), j.at("end").get<std::size_t>()},
          j.at("gold").get<std::string>()};
}

json candidates_to_json(const std::vector<Candidate>& cs) {
  json arr = json::array();
  for (const Candidate& c : cs) arr.push_back(candidate_to_json(c));
  return arr;
}

std::vector<Candidate> candidates_from_json(const json& arr) {
  std::vector<Candidate> out;
  for (const json& j : arr) out.push_back(candidate_from_json(j));
  return out;
}

json params_to_json(const BenchmarkParams& p) {
  return {{"n_tasks", p.n_tasks},           {"way", p.way},
          {"base_shots", p.base_shots},     {"shots", p.shots},
          {"dev_per_type", p.dev_per_type}, {"test_per_type", p.test_per_type},
          {"na_ratio", p.na_ratio},         {"seed", p.seed}};
}

BenchmarkParams params_from_json(const json& j) {
  BenchmarkParams p;
  p.n_tasks = j.at("n_tasks").get<std::size_t>();
  p.way = j.at("way").get<std::size_t>();
  p.base_shots = j.at("base_shots").get<std::size_t>();
  p.shots = j.at("shots").get<std::size_t>();
  p.dev_per_type = j.at("dev_per_type").get<std::size_t>();
  p.test_per_type = j.at("test_per_type").get<std::size_t>();
  p.na_ratio = j.at("na_ratio").get<std::size_t>();
  p.seed = j.at("seed").get<std::uint64_t>();
  return p;
}

json splits_to_json(const Benchmark& b) {
  json tasks = json::array();
  for (const TaskSplit& t : b.tasks) {
    tasks.push_back({{"labels", t.labels},
                     {"train", candidates_to_json(t.train)},
                     {"dev", candidates_to_json(t.dev)},
                     {"test", candidates_to_json(t.test)}});
  }
  return {{"tasks", tasks}};
}

}  // namespace

std::vector<Instance> parse_corpus(std::istream& in) {
  std::vector<Instance> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Instance inst;
    try {
      inst = instance_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(lineno, e.what());
    }
    validate_instance(inst);
    if (!seen.insert(inst.id).second) {
      throw ValidationError("instance " + inst.id + ": duplicate id");
    }
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<Instance> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file " + path.string());
  return parse_corpus(in);
}

void write_corpus(std::ostream& out, const std::vector<Instance>& corpus) {
  for (const Instance& inst : corpus) out << instance_to_json(inst).dump() << '\n';
}

void save_corpus(const std::filesystem::path& path, const std::vector<Instance>& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write corpus file " + path.string());
  write_corpus(out, corpus);
}

std::string corpus_checksum(const std::vector<Instance>& corpus) {
  std::ostringstream os;
  write_corpus(os, corpus);
  return hex64(fnv1a64(os.str()));
}

std::vector<Instance> gen_synthetic_corpus(const SyntheticParams& p) {
  if (p.n_types < 2) throw InvalidArgument("gen_synthetic_corpus: need at least 2 types");
  if (p.lexicon_size == 0) throw InvalidArgument("gen_synthetic_corpus: empty lexicon");
  if (p.sentence_len == 0) throw InvalidArgument("gen_synthetic_corpus: empty sentences");
  if (!(p.signal_strength >= 0.0 && p.signal_strength <= 1.0)) {
    throw InvalidArgument("gen_synthetic_corpus: signal_strength must be in [0, 1]");
  }
  if (p.vocab_size < p.n_types * p.lexicon_size + 1) {
    throw InvalidArgument("gen_synthetic_corpus: vocab_size " + std::to_string(p.vocab_size) +
                          " cannot hold " + std::to_string(p.n_types) + " lexicons of size " +
                          std::to_string(p.lexicon_size) + " plus filler");
  }
  auto name = [](const char* fmt, std::size_t a, std::size_t b = 0) {
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, a, b);
    return std::string(buf);
  };
  const std::size_t filler_count = p.vocab_size - p.n_types * p.lexicon_size;
  std::vector<std::vector<std::string>> lexicon(p.n_types);
  for (std::size_t t = 0; t < p.n_types; ++t)
    for (std::size_t j = 0; j < p.lexicon_size; ++j) lexicon[t].push_back(name("trg%02zu_%zu", t, j));
  std::vector<std::string> filler;
  for (std::size_t j = 0; j < filler_count; ++j) filler.push_back(name("w%03zu", j));

  RngStream rng(p.seed, "synthetic");
  std::vector<Instance> out;
  out.reserve(p.n_types * p.instances_per_type);
  for (std::size_t t = 0; t < p.n_types; ++t) {
    const std::string label = name("Type%02zu", t);
    for (std::size_t i = 0; i < p.instances_per_type; ++i) {
      Instance inst;
      inst.id = name("syn-%02zu-%04zu", t, i);
      inst.tokens.resize(p.sentence_len);
      const std::size_t pos = rng.uniform_int(p.sentence_len);
      const bool faithful = rng.uniform() < p.signal_strength;
      const std::size_t lex_type = faithful ? t : rng.uniform_int(p.n_types);
      for (std::size_t k = 0; k < p.sentence_len; ++k) {
        inst.tokens[k] = k == pos ? lexicon[lex_type][rng.uniform_int(p.lexicon_size)]
                                  : filler[rng.uniform_int(filler.size())];
      }
      inst.triggers.push_back({{pos, pos + 1}, label});
      out.push_back(std::move(inst));
    }
  }
  return out;
}

void Benchmark::set_instances(std::vector<Instance> instances) {
  instances_ = std::move(instances);
  index_.clear();
  for (std::size_t i = 0; i < instances_.size(); ++i) index_.emplace(instances_[i].id, i);
}

bool Benchmark::has_instance(std::string_view id) const {
  return index_.count(std::string(id)) != 0;
}

std::size_t Benchmark::instance_index(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) throw MemoryIntegrityError("unknown instance id " + std::string(id));
  return it->second;
}

const Instance& Benchmark::instance(std::string_view id) const {
  return instances_[instance_index(id)];
}

std::string Benchmark::checksum() const {
  json j = {{"params", params_to_json(params)},
            {"corpus_checksum", corpus_checksum},
            {"splits", splits_to_json(*this)}};
  return hex64(fnv1a64(j.dump()));
}

Benchmark build_benchmark(const std::vector<Instance>& corpus, const BenchmarkParams& p) {
  if (p.n_tasks == 0 || p.way == 0) throw InvalidArgument("build_benchmark: empty task layout");
  if (p.shots == 0) throw InvalidArgument("build_benchmark: shots must be positive");
  if (p.base_shots < p.shots) throw InvalidArgument("build_benchmark: base_shots < shots");

  // Trigger occurrences per label, in corpus order.
  std::map<std::string, std::vector<Candidate>> pool;
  for (const Instance& inst : corpus) {
    for (const Trigger& t : inst.triggers) pool[t.label].push_back({inst.id, t.span, t.label});
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (const auto& [label, occ] : pool) ranked.emplace_back(label, occ.size());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  const std::size_t needed_types = p.n_tasks * p.way;
  if (ranked.size() < needed_types) {
    throw BuildError("corpus has " + std::to_string(ranked.size()) + " event types, need " +
                     std::to_string(needed_types));
  }

  std::unordered_map<std::string, std::size_t> file_pos;
  for (std::size_t i = 0; i < corpus.size(); ++i) file_pos.emplace(corpus[i].id, i);
  std::unordered_map<std::string, const Instance*> by_id;
  for (const Instance& inst : corpus) by_id.emplace(inst.id, &inst);

  Benchmark bench;
  bench.params = p;
  bench.corpus_checksum = corpus_checksum(corpus);
  RngStream rng(p.seed, "split");
  std::set<std::pair<std::string, Span>> used_na;
  std::set<std::string> used_instances;

  auto add_na = [&](std::vector<Candidate>& split) {
    if (p.na_ratio == 0) return;
    std::vector<std::string> sentences;
    std::set<std::string> seen;
    for (const Candidate& c : split) {
      if (seen.insert(c.instance_id).second) sentences.push_back(c.instance_id);
    }
    for (const std::string& id : sentences) {
      const Instance& inst = *by_id.at(id);
      std::vector<std::size_t> free;
      for (std::size_t k = 0; k < inst.tokens.size(); ++k) {
        const Span s{k, k + 1};
        const bool in_trigger = std::any_of(inst.triggers.begin(), inst.triggers.end(),
                                            [&](const Trigger& t) { return t.span.overlaps(s); });
        if (!in_trigger && !used_na.count({id, s})) free.push_back(k);
      }
      for (std::size_t r = 0; r < p.na_ratio && !free.empty(); ++r) {
        const std::size_t pick = rng.uniform_int(free.size());
        const Span s{free[pick], free[pick] + 1};
        free.erase(free.begin() + static_cast<std::ptrdiff_t>(pick));
        used_na.insert({id, s});
        split.push_back({id, s, std::string(kNaLabel)});
      }
    }
  };
  auto file_order = [&](std::vector<Candidate>& split) {
    std::stable_sort(split.begin(), split.end(), [&](const Candidate& a, const Candidate& b) {
      const auto pa = file_pos.at(a.instance_id), pb = file_pos.at(b.instance_id);
      return pa != pb ? pa < pb : a.span < b.span;
    });
  };

  for (std::size_t task = 0; task < p.n_tasks; ++task) {
    TaskSplit split;
    const std::size_t shots = task == 0 ? p.base_shots : p.shots;
    for (std::size_t j = 0; j < p.way; ++j) {
      const std::string& label = ranked[task * p.way + j].first;
      split.labels.push_back(label);
      std::vector<Candidate> occ = pool.at(label);
      const std::size_t need = shots + p.dev_per_type + p.test_per_type;
      if (occ.size() < need) {
        throw BuildError("event type " + label + " has " + std::to_string(occ.size()) +
                         " instances, need " + std::to_string(need));
      }
      for (std::size_t i = occ.size() - 1; i > 0; --i) {
        std::swap(occ[i], occ[rng.uniform_int(i + 1)]);
      }
      split.train.insert(split.train.end(), occ.begin(), occ.begin() + shots);
      split.dev.insert(split.dev.end(), occ.begin() + shots,
                       occ.begin() + shots + p.dev_per_type);
      split.test.insert(split.test.end(), occ.begin() + shots + p.dev_per_type,
                        occ.begin() + need);
    }
    for (auto* part : {&split.train, &split.dev, &split.test}) {
      for (const Candidate& c : *part) used_instances.insert(c.instance_id);
      add_na(*part);
      file_order(*part);
    }
    bench.tasks.push_back(std::move(split));
  }

  std::vector<Instance> kept;
  for (const Instance& inst : corpus) {
    if (used_instances.count(inst.id)) kept.push_back(inst);
  }
  bench.set_instances(std::move(kept));
  return bench;
}

std::vector<Candidate> accumulate_test(const Benchmark& bench, std::size_t t) {
  if (t < 1 || t > bench.n_tasks()) {
    throw InvalidArgument("accumulate_test: stage " + std::to_string(t) + " out of range");
  }
  std::vector<Candidate> out;
  for (std::size_t i = 0; i < t; ++i) {
    out.insert(out.end(), bench.tasks[i].test.begin(), bench.tasks[i].test.end());
  }
  return out;
}

std::vector<Candidate> accumulate_train(const Benchmark& bench, std::size_t t) {
  if (t < 1 || t > bench.n_tasks()) {
    throw InvalidArgument("accumulate_train: stage " + std::to_string(t) + " out of range");
  }
  std::vector<Candidate> out;
  for (std::size_t i = 0; i < t; ++i) {
    out.insert(out.end(), bench.tasks[i].train.begin(), bench.tasks[i].train.end());
  }
  return out;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(1, path.string() + ": " + e.what());
  }
}

}  // namespace

void save_benchmark(const std::filesystem::path& dir, const Benchmark& bench) {
  std::filesystem::create_directories(dir);
  json labels = json::array();
  for (const TaskSplit& t : bench.tasks) labels.push_back(t.labels);
  json manifest = {{"format_version", 1},
                   {"params", params_to_json(bench.params)},
                   {"corpus_checksum", bench.corpus_checksum},
                   {"task_labels", labels},
                   {"benchmark_checksum", bench.checksum()}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  write_text(dir / "splits.json", splits_to_json(bench).dump() + "\n");
  save_corpus(dir / "instances.jsonl", bench.instances());
}

Benchmark load_benchmark(const std::filesystem::path& dir) {
  const json manifest = read_json(dir / "manifest.json");
  const json splits = read_json(dir / "splits.json");
  Benchmark bench;
  try {
    bench.params = params_from_json(manifest.at("params"));
    bench.corpus_checksum = manifest.at("corpus_checksum").get<std::string>();
    for (const json& t : splits.at("tasks")) {
      TaskSplit s;
      s.labels = t.at("labels").get<std::vector<std::string>>();
      s.train = candidates_from_json(t.at("train"));
      s.dev = candidates_from_json(t.at("dev"));
      s.test = candidates_from_json(t.at("test"));
      bench.tasks.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw ParseError(1, dir.string() + ": " + e.what());
  }
  bench.set_instances(load_corpus(dir / "instances.jsonl"));
  if (manifest.at("benchmark_checksum").get<std::string>() != bench.checksum()) {
    throw ValidationError("benchmark " + dir.string() + ": checksum mismatch");
  }
  for (const TaskSplit& t : bench.tasks) {
    for (const auto* part : {&t.train, &t.dev, &t.test}) {
      for (const Candidate& c : *part) {
        const Instance& inst = bench.instance(c.instance_id);
        if (!(c.span.start < c.span.end && c.span.end <= inst.tokens.size())) {
          throw ValidationError("candidate on " + c.instance_id + ": invalid span");
        }
      }
    }
  }
  return bench;
}

}  // namespace hanet
