// SPDX-License-Identifier: Apache-2.0
#include "hanet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <unordered_map>

#include "hanet/checkpoint.hpp"
#include "hanet/errors.hpp"
#include "hanet/version.hpp"

namespace hanet {

namespace {

using nlohmann::json;

bool finite_nonneg(double v) { return std::isfinite(v) && v >= 0.0; }
bool finite_pos(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

void validate_config(const TrainConfig& c) {
  const std::pair<const char*, double> weights[] = {
      {"lambda_ce", c.lambda_ce},   {"lambda_re", c.lambda_re}, {"lambda_cls", c.lambda_cls},
      {"lambda_trig", c.lambda_trig}, {"lambda_fd", c.lambda_fd}, {"lambda_pd", c.lambda_pd}};
  for (const auto& [name, w] : weights) {
    if (!finite_nonneg(w)) throw InvalidArgument(std::string("config: ") + name + " must be >= 0");
  }
  if (c.epochs == 0) throw InvalidArgument("config: epochs must be positive");
  if (c.batch_size == 0) throw InvalidArgument("config: batch_size must be positive");
  if (!finite_pos(c.learning_rate)) throw InvalidArgument("config: learning_rate must be positive");
  if (!finite_nonneg(c.weight_decay)) throw InvalidArgument("config: weight_decay must be >= 0");
  if (!finite_pos(c.tau)) throw InvalidArgument("config: tau must be positive");
  if (!finite_pos(c.tau_d)) throw InvalidArgument("config: tau_d must be positive");
  if (c.m_aug == 0) throw InvalidArgument("config: m_aug must be positive");
  if (c.n_syn == 0) throw InvalidArgument("config: n_syn must be positive");
  if (c.model_dim < 2 || c.model_dim % 2 != 0) {
    throw InvalidArgument("config: model_dim must be even and >= 2");
  }
  if (c.ff_dim == 0) throw InvalidArgument("config: ff_dim must be positive");
  if (!(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0)) {
    throw InvalidArgument("config: dropout_rate must be in [0, 1)");
  }
  if (!finite_pos(c.init_std)) throw InvalidArgument("config: init_std must be positive");
  if (!(c.rtr_rate >= 0.0 && c.rtr_rate <= 1.0)) {
    throw InvalidArgument("config: rtr_rate must be in [0, 1]");
  }
}

namespace {

json config_json(const TrainConfig& c) {
  return {{"lambda_ce", c.lambda_ce},
          {"lambda_re", c.lambda_re},
          {"lambda_cls", c.lambda_cls},
          {"lambda_trig", c.lambda_trig},
          {"lambda_fd", c.lambda_fd},
          {"lambda_pd", c.lambda_pd},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"tau", c.tau},
          {"tau_d", c.tau_d},
          {"m_aug", c.m_aug},
          {"n_syn", c.n_syn},
          {"aug_method", std::string(aug_method_name(c.aug_method))},
          {"metric", std::string(metric_name(c.metric))},
          {"na_enabled", c.na_enabled},
          {"seed", c.seed},
          {"model_dim", c.model_dim},
          {"ff_dim", c.ff_dim},
          {"dropout_rate", c.dropout_rate},
          {"init_std", c.init_std},
          {"rtr_rate", c.rtr_rate},
          {"replay_in_ce", c.replay_in_ce},
          {"literal_pd_temperature", c.literal_pd_temperature}};
}

}  // namespace

std::string config_to_json(const TrainConfig& config) { return config_json(config).dump(2) + "\n"; }

TrainConfig config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config: expected a JSON object");
  TrainConfig c;
  const json known = config_json(c);
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ValidationError("config: unknown key " + key);
  }
  auto read = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const json::exception&) {
      throw ValidationError(std::string("config: bad value for ") + key);
    }
  };
  read("lambda_ce", c.lambda_ce);
  read("lambda_re", c.lambda_re);
  read("lambda_cls", c.lambda_cls);
  read("lambda_trig", c.lambda_trig);
  read("lambda_fd", c.lambda_fd);
  read("lambda_pd", c.lambda_pd);
  read("epochs", c.epochs);
  read("batch_size", c.batch_size);
  read("learning_rate", c.learning_rate);
  read("weight_decay", c.weight_decay);
  read("tau", c.tau);
  read("tau_d", c.tau_d);
  read("m_aug", c.m_aug);
  read("n_syn", c.n_syn);
  read("na_enabled", c.na_enabled);
  read("seed", c.seed);
  read("model_dim", c.model_dim);
  read("ff_dim", c.ff_dim);
  read("dropout_rate", c.dropout_rate);
  read("init_std", c.init_std);
  read("rtr_rate", c.rtr_rate);
  read("replay_in_ce", c.replay_in_ce);
  read("literal_pd_temperature", c.literal_pd_temperature);
  std::string name;
  if (j.contains("aug_method")) {
    read("aug_method", name);
    c.aug_method = parse_aug_method(name);
  }
  if (j.contains("metric")) {
    read("metric", name);
    c.metric = parse_metric(name);
  }
  validate_config(c);
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return config_from_json(buf.str());
}

std::string config_checksum(const TrainConfig& config) {
  return hex64(fnv1a64(config_json(config).dump()));
}

RunMode parse_mode(std::string_view name) {
  if (name == "hanet") return RunMode::kHanet;
  if (name == "finetune") return RunMode::kFinetune;
  if (name == "retrain") return RunMode::kRetrain;
  throw InvalidArgument("unknown mode " + std::string(name));
}

std::string_view mode_name(RunMode mode) {
  switch (mode) {
    case RunMode::kHanet: return "hanet";
    case RunMode::kFinetune: return "finetune";
    case RunMode::kRetrain: return "retrain";
  }
  throw InvalidArgument("unknown mode");
}

TrainConfig effective_config(const TrainConfig& config, RunMode mode) {
  TrainConfig c = config;
  if (mode != RunMode::kHanet) {
    c.lambda_re = c.lambda_fd = c.lambda_pd = c.lambda_cls = c.lambda_trig = 0.0;
  }
  return c;
}

std::string manifest_id(const TrainConfig& config, std::string_view benchmark_checksum,
                        RunMode mode) {
  const json j = {{"version", std::string(kVersion)},
                  {"config", config_json(effective_config(config, mode))},
                  {"benchmark", std::string(benchmark_checksum)},
                  {"mode", std::string(mode_name(mode))}};
  return hex64(fnv1a64(j.dump()));
}

namespace {

struct Origin {
  const Instance* instance = nullptr;
  std::vector<std::size_t> candidates;
  std::vector<Span> spans;
  Var hidden;
  std::vector<Var> view_hidden;
  std::vector<AugmentedView> views;
};

void guard(double value, const char* component) {
  if (!std::isfinite(value)) {
    throw NumericGuardError(std::string("stage_loss: component ") + component +
                            " is not finite (" + std::to_string(value) + ")");
  }
}

}  // namespace

LossBreakdown stage_loss(StageState& state, const Benchmark& bench, const TrainingBatch& batch,
                         const TrainConfig& config, bool backward) {
  const std::size_t t = state.stage;
  if (t == 0) throw StateError("stage_loss: no stage has been started");
  const bool incremental = t > 1;
  if (incremental && !state.frozen) {
    throw StateError("stage_loss: stage " + std::to_string(t) + " requires a frozen snapshot");
  }
  const bool use_ce = config.lambda_ce > 0.0;
  const bool use_cls = config.lambda_cls > 0.0;
  const bool use_trig = incremental && config.lambda_trig > 0.0;
  const bool use_fd = incremental && config.lambda_fd > 0.0;
  const bool use_pd = incremental && config.lambda_pd > 0.0;
  const bool use_re = incremental && config.lambda_re > 0.0;

  Model& model = state.model;
  Tape tape(true);
  const BoundEncoder enc = bind(tape, model.encoder);
  const BoundHead head = bind(tape, model.head);
  RngStream dropout = batch.dropout_rng;
  RngStream aug = batch.augment_rng;

  std::vector<Origin> origins;
  std::unordered_map<std::string, std::size_t> origin_of;
  std::vector<std::size_t> slot(batch.candidates.size());
  for (std::size_t c = 0; c < batch.candidates.size(); ++c) {
    const Candidate& cand = batch.candidates[c];
    auto [it, fresh] = origin_of.emplace(cand.instance_id, origins.size());
    if (fresh) origins.push_back({&bench.instance(cand.instance_id), {}, {}, {}, {}, {}});
    Origin& o = origins[it->second];
    slot[c] = o.spans.size();
    o.candidates.push_back(c);
    o.spans.push_back(cand.span);
  }

  const bool need_views = use_cls || use_trig;
  for (Origin& o : origins) {
    const auto ids = model.vocab.ids(o.instance->tokens);
    o.hidden = encode(enc, ids, Mode::kTrain, dropout);
    if (!need_views) continue;
    o.views = augment(*o.instance, o.spans, config.aug_method, config.m_aug, aug,
                      model.vocab.tokens(), config.rtr_rate);
    for (const AugmentedView& v : o.views) {
      o.view_hidden.push_back(encode(enc, model.vocab.ids(v.instance.tokens), Mode::kTrain, dropout));
    }
  }

  std::vector<Var> reps(batch.candidates.size());
  std::vector<std::size_t> origin_index(batch.candidates.size());
  for (std::size_t oi = 0; oi < origins.size(); ++oi) {
    for (std::size_t c : origins[oi].candidates) {
      reps[c] = trigger_rep(origins[oi].hidden, batch.candidates[c].span);
      origin_index[c] = oi;
    }
  }

  LossBreakdown out;
  std::vector<Var> weighted;
  auto add = [&](Var loss, double lambda, double& slot_value, const char* name) {
    slot_value = loss.scalar();
    guard(slot_value, name);
    weighted.push_back(ad::scale(loss, lambda));
  };

  if (use_ce) {
    std::vector<Var> terms;
    for (std::size_t c = 0; c < batch.candidates.size(); ++c) {
      const std::size_t gold = model.registry.index(batch.candidates[c].gold);
      terms.push_back(ad::cross_entropy(head_logits(head, reps[c]), gold));
    }
    Var ce = terms.empty() ? tape.constant(Matrix(1, 1, 0.0)) : ad::sum(terms);
    add(ce, config.lambda_ce, out.ce, "ce");
  }
  if (use_re) add(replay_loss(tape, head, batch.synthetic), config.lambda_re, out.re, "re");
  if (use_cls) {
    std::vector<std::vector<Var>> groups;
    for (const Origin& o : origins) {
      std::vector<Var> g{sentence_rep(o.hidden)};
      for (Var h : o.view_hidden) g.push_back(sentence_rep(h));
      groups.push_back(std::move(g));
    }
    add(l_cls(tape, groups, config.tau), config.lambda_cls, out.cls, "cls");
  }
  if (use_trig) {
    std::vector<TriggerGroup> groups;
    for (std::size_t c = 0; c < batch.candidates.size(); ++c) {
      if (batch.candidates[c].is_na()) continue;
      const Origin& o = origins[origin_index[c]];
      TriggerGroup g{model.registry.index(batch.candidates[c].gold), {reps[c]}};
      for (std::size_t v = 0; v < o.views.size(); ++v) {
        g.views.push_back(trigger_rep(o.view_hidden[v], o.views[v].tracked[slot[c]]));
      }
      groups.push_back(std::move(g));
    }
    add(l_trig(tape, groups, config.tau), config.lambda_trig, out.trig, "trig");
  }
  if (use_fd || use_pd) {
    const FrozenSnapshot& frozen = *state.frozen;
    RngStream unused(0, "eval");
    std::vector<Matrix> frozen_hidden;
    for (const Origin& o : origins) {
      frozen_hidden.push_back(encode_values(frozen.encoder, model.vocab, *o.instance, Mode::kEval,
                                            unused));
    }
    std::vector<std::vector<double>> prev_reps;
    for (std::size_t c = 0; c < batch.candidates.size(); ++c) {
      prev_reps.push_back(trigger_rep_values(frozen_hidden[origin_index[c]], batch.candidates[c].span));
    }
    if (use_fd) add(feature_distill(tape, prev_reps, reps), config.lambda_fd, out.fd, "fd");
    if (use_pd) {
      std::vector<std::vector<double>> prev_logits;
      std::vector<Var> cur_logits;
      for (std::size_t c = 0; c < batch.candidates.size(); ++c) {
        prev_logits.push_back(logits_values(frozen.head, prev_reps[c]));
        cur_logits.push_back(head_logits(head, reps[c]));
      }
      const SoftenOptions opts{config.tau_d, config.literal_pd_temperature};
      add(predict_distill(tape, prev_logits, cur_logits, label_prefix(frozen.registry.size()), opts),
          config.lambda_pd, out.pd, "pd");
    }
  }

  if (weighted.empty()) return out;
  Var total = ad::sum(weighted);
  out.total = total.scalar();
  guard(out.total, "total");
  if (backward) tape.backward(total);
  return out;
}

std::vector<Candidate> training_pool(const StageState& state, const Benchmark& bench,
                                     const TrainConfig& config) {
  const std::size_t t = state.stage;
  if (t == 0 || t > bench.n_tasks()) throw StateError("training_pool: stage out of range");
  std::vector<Candidate> pool = state.mode == RunMode::kRetrain ? accumulate_train(bench, t)
                                                                : bench.tasks[t - 1].train;
  if (state.mode == RunMode::kHanet && config.replay_in_ce && state.memory) {
    for (const Exemplar& e : state.memory->exemplars()) pool.push_back(e.candidate);
  }
  if (!config.na_enabled) std::erase_if(pool, [](const Candidate& c) { return c.is_na(); });
  return pool;
}

namespace {

RngStream init_stream(const TrainConfig& config) { return RngStream(config.seed, "init"); }

void expand_for_task(Model& model, const Benchmark& bench, const TrainConfig& config,
                     std::size_t task) {
  RngStream rng = init_stream(config).derive("head/task" + std::to_string(task));
  expand_labels(model.head, model.registry, bench.tasks[task - 1].labels, rng);
}

}  // namespace

Model initial_model(const Benchmark& bench, const TrainConfig& config, std::size_t tasks) {
  if (tasks > bench.n_tasks()) throw InvalidArgument("initial_model: task count out of range");
  Model m;
  m.vocab = Vocabulary::from_instances(bench.instances());
  std::size_t longest = 0;
  for (const Instance& inst : bench.instances()) longest = std::max(longest, inst.tokens.size());
  const EncoderConfig ec{m.vocab.size(), config.model_dim, config.ff_dim, longest + 1,
                         config.dropout_rate};
  m.encoder = EncoderParams::init(ec, config.init_std, init_stream(config).derive("encoder"));
  m.registry = LabelRegistry(config.na_enabled);
  RngStream head_rng = init_stream(config).derive("head/base");
  m.head = HeadParams::create(2 * config.model_dim, m.registry, head_rng);
  for (std::size_t k = 1; k <= tasks; ++k) expand_for_task(m, bench, config, k);
  return m;
}

StageState initial_state(RunMode mode) {
  StageState s;
  s.mode = mode;
  return s;
}

void begin_stage(StageState& state, const Benchmark& bench, std::size_t t,
                 const TrainConfig& raw) {
  const TrainConfig config = effective_config(raw, state.mode);
  validate_config(config);
  if (t == 0 || t > bench.n_tasks()) {
    throw InvalidArgument("begin_stage: stage " + std::to_string(t) + " not in benchmark");
  }
  if (!state.stage_complete || t != state.stage + 1) {
    throw StateError("begin_stage: stage " + std::to_string(t) + " cannot follow stage " +
                     std::to_string(state.stage) + (state.stage_complete ? "" : " (unfinished)"));
  }
  if (t == 1) {
    state.model = initial_model(bench, config, 1);
    state.frozen.reset();
    if (state.mode == RunMode::kHanet) state.memory = MemorySet{};
  } else {
    state.frozen = FrozenSnapshot{state.model.encoder, state.model.head, state.model.registry};
    if (state.mode == RunMode::kRetrain) {
      state.model = initial_model(bench, config, t);
    } else {
      expand_for_task(state.model, bench, config, t);
    }
  }
  state.stage = t;
  state.stage_complete = false;
  state.epochs_done = 0;
  state.optimizer = OptimizerState(
      AdamWHyper{config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});
}

void train_epochs(StageState& state, const Benchmark& bench, const TrainConfig& raw,
                  std::size_t count) {
  const TrainConfig config = effective_config(raw, state.mode);
  if (state.stage_complete) throw StateError("train_epochs: no stage in progress");
  const std::size_t t = state.stage;
  const std::vector<Candidate> pool = training_pool(state, bench, config);
  if (pool.empty()) throw StateError("train_epochs: empty training pool");
  const bool replay = state.mode == RunMode::kHanet && t > 1 && config.lambda_re > 0.0 &&
                      state.memory && !state.memory->empty();
  const std::size_t stop = std::min(config.epochs, state.epochs_done + count);
  for (std::size_t e = state.epochs_done; e < stop; ++e) {
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    RngStream shuffle = RngStream(config.seed, "split")
                            .derive("stage" + std::to_string(t))
                            .derive("epoch" + std::to_string(e));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle.uniform_int(i)]);
    }
    for (std::size_t b = 0, first = 0; first < order.size(); ++b, first += config.batch_size) {
      const std::string key =
          "s" + std::to_string(t) + "/e" + std::to_string(e) + "/b" + std::to_string(b);
      TrainingBatch batch;
      const std::size_t last = std::min(order.size(), first + config.batch_size);
      for (std::size_t i = first; i < last; ++i) batch.candidates.push_back(pool[order[i]]);
      batch.dropout_rng = RngStream(config.seed, "dropout").derive(key);
      batch.augment_rng = RngStream(config.seed, "augment").derive(key);
      if (replay) {
        RngStream gauss = RngStream(config.seed, "gaussian").derive(key);
        batch.synthetic = sample_memory(*state.memory, bench, state.model.encoder,
                                        state.model.vocab, state.model.registry, config.n_syn,
                                        gauss);
      }
      auto params = state.model.parameters();
      for (Parameter* p : params) p->zero_grad();
      stage_loss(state, bench, batch, config, true);
      adamw_step(params, state.optimizer);
    }
    state.epochs_done = e + 1;
  }
}

void finish_stage(StageState& state, const Benchmark& bench, const TrainConfig& raw) {
  const TrainConfig config = effective_config(raw, state.mode);
  if (state.stage_complete) throw StateError("finish_stage: no stage in progress");
  if (state.mode == RunMode::kHanet) {
    const TaskSplit& task = bench.tasks[state.stage - 1];
    const auto exemplars = select_exemplars(task.train, bench, state.model.encoder,
                                            state.model.vocab, config.metric, task.labels);
    state.memory = merge_memory(state.memory.value_or(MemorySet{}), exemplars);
  }
  state.stage_complete = true;
}

namespace {

std::string with_stage(std::size_t t, const std::exception& e) {
  return "stage " + std::to_string(t) + ": " + e.what();
}

// Rethrows module errors with the stage prefixed, keeping the error category.
template <typename F>
void with_stage_context(std::size_t t, F&& body) {
  try {
    body();
  } catch (const NumericGuardError& e) {
    throw NumericGuardError(with_stage(t, e));
  } catch (const SelectionError& e) {
    throw SelectionError(with_stage(t, e));
  } catch (const MemoryIntegrityError& e) {
    throw MemoryIntegrityError(with_stage(t, e));
  } catch (const StateError& e) {
    throw StateError(with_stage(t, e));
  } catch (const ValidationError& e) {
    throw ValidationError(with_stage(t, e));
  } catch (const LengthError& e) {
    throw LengthError(with_stage(t, e));
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(with_stage(t, e));
  }
}

}  // namespace

void run_stage(StageState& state, const Benchmark& bench, std::size_t t,
               const TrainConfig& config,
               const std::optional<std::filesystem::path>& checkpoint_dir) {
  with_stage_context(t, [&] {
    begin_stage(state, bench, t, config);
    train_epochs(state, bench, config, config.epochs);
    finish_stage(state, bench, config);
  });
  if (checkpoint_dir) {
    std::filesystem::create_directories(*checkpoint_dir);
    const std::string checksum = bench.checksum();
    save_checkpoint(*checkpoint_dir / ("stage" + std::to_string(t) + ".json"),
                    Checkpoint{effective_config(config, state.mode), state, checksum,
                               manifest_id(config, checksum, state.mode)});
  }
}

StreamResult run_stream(const Benchmark& bench, const TrainConfig& config, RunMode mode,
                        const std::optional<std::filesystem::path>& checkpoint_dir) {
  validate_config(config);
  if (bench.n_tasks() == 0) throw InvalidArgument("run_stream: benchmark has no tasks");
  StageState state = initial_state(mode);
  std::vector<StageReport> stages;
  for (std::size_t t = 1; t <= bench.n_tasks(); ++t) {
    run_stage(state, bench, t, config, checkpoint_dir);
    stages.push_back(evaluate_stage(state.model, bench, t));
  }
  RunReport report = assemble_report(std::move(stages));
  report.mode = std::string(mode_name(mode));
  report.seed = config.seed;
  report.benchmark_checksum = bench.checksum();
  report.manifest_id = manifest_id(config, report.benchmark_checksum, mode);
  return {std::move(report), std::move(state)};
}

}  // namespace hanet
