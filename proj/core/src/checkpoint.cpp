// SPDX-License-Identifier: Apache-2.0
#include "hanet/checkpoint.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "hanet/errors.hpp"

namespace hanet {

namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

json matrix_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.values()}};
}

Matrix matrix_from(const json& j) {
  return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                j.at("data").get<std::vector<double>>());
}

json encoder_json(const EncoderParams& e) {
  json params = json::array();
  for (const Parameter* p : e.parameters()) {
    json m = matrix_json(p->value);
    m["name"] = p->name;
    params.push_back(std::move(m));
  }
  const EncoderConfig& c = e.config;
  return {{"config",
           {{"vocab_size", c.vocab_size},
            {"model_dim", c.model_dim},
            {"ff_dim", c.ff_dim},
            {"max_len", c.max_len},
            {"dropout_rate", c.dropout_rate}}},
          {"parameters", params}};
}

EncoderParams encoder_from(const json& j) {
  const json& cj = j.at("config");
  EncoderConfig c;
  c.vocab_size = cj.at("vocab_size").get<std::size_t>();
  c.model_dim = cj.at("model_dim").get<std::size_t>();
  c.ff_dim = cj.at("ff_dim").get<std::size_t>();
  c.max_len = cj.at("max_len").get<std::size_t>();
  c.dropout_rate = cj.at("dropout_rate").get<double>();
  // A throwaway init supplies the expected names and shapes.
  EncoderParams e = EncoderParams::init(c, 1.0, RngStream(0, "shape"));
  auto slots = e.parameters();
  const json& params = j.at("parameters");
  if (params.size() != slots.size()) {
    throw ValidationError("checkpoint: encoder has " + std::to_string(params.size()) +
                          " parameters, expected " + std::to_string(slots.size()));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const std::string name = params[i].at("name").get<std::string>();
    Matrix value = matrix_from(params[i]);
    if (name != slots[i]->name || !value.same_shape(slots[i]->value)) {
      throw ValidationError("checkpoint: encoder parameter " + name + " does not match its slot");
    }
    *slots[i] = Parameter(name, std::move(value));
  }
  return e;
}

json head_json(const HeadParams& h) {
  return {{"weight", matrix_json(h.weight.value)}, {"bias", matrix_json(h.bias.value)}};
}

HeadParams head_from(const json& j) {
  HeadParams h{{"head_weight", matrix_from(j.at("weight"))}, {"head_bias", matrix_from(j.at("bias"))}};
  if (h.bias.value.rows() != 1 || h.bias.value.cols() != h.weight.value.cols()) {
    throw ValidationError("checkpoint: head bias shape does not match weight");
  }
  return h;
}

json registry_json(const LabelRegistry& r) {
  json segments = json::array();
  for (const auto& [b, e] : r.segments()) segments.push_back({b, e});
  return {{"na_enabled", r.na_enabled()}, {"labels", r.labels()}, {"segments", segments}};
}

LabelRegistry registry_from(const json& j) {
  LabelRegistry r(j.at("na_enabled").get<bool>());
  const auto labels = j.at("labels").get<std::vector<std::string>>();
  for (const json& seg : j.at("segments")) {
    const auto b = seg.at(0).get<std::size_t>();
    const auto e = seg.at(1).get<std::size_t>();
    if (b != r.size() || e < b || e > labels.size()) {
      throw ValidationError("checkpoint: registry segments are not contiguous");
    }
    r.add_task(std::vector<std::string>(labels.begin() + static_cast<std::ptrdiff_t>(b),
                                        labels.begin() + static_cast<std::ptrdiff_t>(e)));
  }
  if (r.labels() != labels) throw ValidationError("checkpoint: registry labels do not match segments");
  return r;
}

void check_model(const HeadParams& head, const LabelRegistry& registry, const EncoderParams& enc) {
  if (head.label_count() != registry.size()) {
    throw ValidationError("checkpoint: head has " + std::to_string(head.label_count()) +
                          " columns for " + std::to_string(registry.size()) + " labels");
  }
  if (head.input_dim() != 2 * enc.dim()) {
    throw ValidationError("checkpoint: head input does not match encoder width");
  }
}

json memory_json(const MemorySet& m) {
  json out = json::array();
  for (const Exemplar& e : m.exemplars()) {
    out.push_back({{"instance_id", e.candidate.instance_id},
                   {"start", e.candidate.span.start},
                   {"end", e.candidate.span.end},
                   {"label", e.candidate.gold},
                   {"variance", e.variance}});
  }
  return out;
}

MemorySet memory_from(const json& j) {
  std::vector<Exemplar> entries;
  for (const json& e : j) {
    Candidate c{e.at("instance_id").get<std::string>(),
                {e.at("start").get<std::size_t>(), e.at("end").get<std::size_t>()},
                e.at("label").get<std::string>()};
    entries.push_back({std::move(c), e.at("variance").get<std::vector<double>>()});
  }
  return merge_memory(MemorySet{}, entries);
}

json optimizer_json(const OptimizerState& o) {
  json first = json::array();
  json second = json::array();
  for (const Matrix& m : o.first_moment) first.push_back(matrix_json(m));
  for (const Matrix& m : o.second_moment) second.push_back(matrix_json(m));
  return {{"learning_rate", o.hyper.learning_rate},
          {"beta1", o.hyper.beta1},
          {"beta2", o.hyper.beta2},
          {"epsilon", o.hyper.epsilon},
          {"weight_decay", o.hyper.weight_decay},
          {"step_count", o.step_count},
          {"first_moment", first},
          {"second_moment", second}};
}

OptimizerState optimizer_from(const json& j) {
  OptimizerState o(AdamWHyper{j.at("learning_rate").get<double>(), j.at("beta1").get<double>(),
                              j.at("beta2").get<double>(), j.at("epsilon").get<double>(),
                              j.at("weight_decay").get<double>()});
  o.step_count = j.at("step_count").get<std::size_t>();
  for (const json& m : j.at("first_moment")) o.first_moment.push_back(matrix_from(m));
  for (const json& m : j.at("second_moment")) o.second_moment.push_back(matrix_from(m));
  if (o.first_moment.size() != o.second_moment.size()) {
    throw ValidationError("checkpoint: optimizer moment lists differ in length");
  }
  return o;
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& ckpt) {
  const StageState& s = ckpt.state;
  json frozen = nullptr;
  if (s.frozen) {
    frozen = {{"encoder", encoder_json(s.frozen->encoder)},
              {"head", head_json(s.frozen->head)},
              {"registry", registry_json(s.frozen->registry)}};
  }
  json j = {{"format", "hanet-checkpoint"},
            {"format_version", kFormatVersion},
            {"benchmark_checksum", ckpt.benchmark_checksum},
            {"manifest_id", ckpt.manifest_id},
            {"config", json::parse(config_to_json(ckpt.config))},
            {"mode", std::string(mode_name(s.mode))},
            {"stage", s.stage},
            {"stage_complete", s.stage_complete},
            {"epochs_done", s.epochs_done},
            {"model",
             {{"vocab", s.model.vocab.tokens()},
              {"encoder", encoder_json(s.model.encoder)},
              {"head", head_json(s.model.head)},
              {"registry", registry_json(s.model.registry)}}},
            {"frozen", frozen},
            {"memory", s.memory ? memory_json(*s.memory) : json(nullptr)},
            {"optimizer", optimizer_json(s.optimizer)}};
  return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  }
  try {
    if (j.at("format") != "hanet-checkpoint" || j.at("format_version") != kFormatVersion) {
      throw ValidationError("checkpoint: unsupported format");
    }
    Checkpoint c;
    c.benchmark_checksum = j.at("benchmark_checksum").get<std::string>();
    c.manifest_id = j.at("manifest_id").get<std::string>();
    c.config = config_from_json(j.at("config").dump());
    StageState& s = c.state;
    s.mode = parse_mode(j.at("mode").get<std::string>());
    s.stage = j.at("stage").get<std::size_t>();
    s.stage_complete = j.at("stage_complete").get<bool>();
    s.epochs_done = j.at("epochs_done").get<std::size_t>();
    const json& m = j.at("model");
    s.model.vocab = Vocabulary(m.at("vocab").get<std::vector<std::string>>());
    s.model.encoder = encoder_from(m.at("encoder"));
    s.model.head = head_from(m.at("head"));
    s.model.registry = registry_from(m.at("registry"));
    check_model(s.model.head, s.model.registry, s.model.encoder);
    if (s.model.vocab.size() != s.model.encoder.config.vocab_size) {
      throw ValidationError("checkpoint: vocabulary size does not match the embedding table");
    }
    if (!j.at("frozen").is_null()) {
      const json& f = j.at("frozen");
      s.frozen = FrozenSnapshot{encoder_from(f.at("encoder")), head_from(f.at("head")),
                                registry_from(f.at("registry"))};
      check_model(s.frozen->head, s.frozen->registry, s.frozen->encoder);
    }
    if ((s.stage > 1) != s.frozen.has_value()) {
      throw ValidationError("checkpoint: frozen snapshot must be present exactly after stage 1");
    }
    if (!j.at("memory").is_null()) s.memory = memory_from(j.at("memory"));
    s.optimizer = optimizer_from(j.at("optimizer"));
    return c;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("checkpoint: cannot write " + path.string());
  out << checkpoint_to_json(ckpt);
  if (!out) throw ValidationError("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("checkpoint: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_json(buf.str());
}

}  // namespace hanet
