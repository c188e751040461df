// Copyright 2026 The diloco-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <set>
#include <sstream>

#include "diloco/errors.hpp"
#include "diloco/harness.hpp"
#include "diloco/rng.hpp"

namespace diloco::harness {

using nlohmann::json;

namespace {

std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

// Object view that records which keys were read and rejects the rest.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  bool has(std::string_view key) const { return j_.contains(std::string(key)); }

  const json* get(std::string_view key) {
    seen_.insert(std::string(key));
    auto it = j_.find(std::string(key));
    return it == j_.end() ? nullptr : &*it;
  }

  std::string field(std::string_view key) const { return join(path_, key); }

  double real(std::string_view key, double fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_number()) throw ConfigError(field(key), "expected a number");
    return v->get<double>();
  }

  std::uint64_t count(std::string_view key, std::uint64_t fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (v->is_number_unsigned()) return v->get<std::uint64_t>();
    if (v->is_number_integer()) {
      if (v->get<std::int64_t>() < 0) throw ConfigError(field(key), "must be >= 0");
      return static_cast<std::uint64_t>(v->get<std::int64_t>());
    }
    throw ConfigError(field(key), "expected a non-negative integer");
  }

  bool flag(std::string_view key, bool fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_boolean()) throw ConfigError(field(key), "expected true or false");
    return v->get<bool>();
  }

  std::string text(std::string_view key, std::string fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_string()) throw ConfigError(field(key), "expected a string");
    return v->get<std::string>();
  }

  std::string required_text(std::string_view key) {
    if (!has(key)) throw ConfigError(field(key), "is required");
    return text(key, "");
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.contains(it.key())) throw ConfigError(field(it.key()), "unknown field");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
auto with_field(const std::string& field, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(field, e.message());
  } catch (const std::exception& e) {
    throw ConfigError(field, e.what());
  }
}

models::ModelSpec parse_model(const json& j) {
  Reader r(j, "model");
  models::ModelSpec spec;
  spec.kind = models::model_kind_from_string(r.text("kind", "mlp-char-lm"));
  const bool mlp = spec.kind == models::ModelKind::kMlpCharLm;
  spec.vocab_size = r.count("vocab_size", 32);
  spec.context_length = r.count("context_length", mlp ? 8 : 1);
  spec.embed_dim = r.count("embed_dim", 16);
  if (!mlp && r.has("embed_dim"))
    throw ConfigError("model.embed_dim", "only valid for mlp-char-lm");
  spec.hidden_dims.clear();
  if (const json* h = r.get("hidden_dims")) {
    if (!h->is_array()) throw ConfigError("model.hidden_dims", "expected an array");
    for (std::size_t i = 0; i < h->size(); ++i) {
      const auto& d = (*h)[i];
      if (!d.is_number_integer() || d.get<std::int64_t>() <= 0)
        throw ConfigError("model.hidden_dims[" + std::to_string(i) + "]",
                          "expected a positive integer");
      spec.hidden_dims.push_back(d.get<std::size_t>());
    }
  } else if (mlp) {
    spec.hidden_dims = {64};
  }
  spec.init_scale = r.real("init_scale", 0.1);
  r.finish();
  spec.validate();
  return spec;
}

optim::AdamWConfig parse_adamw_fields(Reader& r, optim::AdamWConfig a) {
  a.lr = r.real("lr", a.lr);
  a.beta1 = r.real("beta1", a.beta1);
  a.beta2 = r.real("beta2", a.beta2);
  a.eps = r.real("eps", a.eps);
  a.weight_decay = r.real("weight_decay", a.weight_decay);
  return a;
}

numkit::NewtonSchulzCoefficients parse_ns_coefficients(const json& j, const std::string& field) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "convergent") return numkit::kConvergentQuintic;
    if (name == "muon-reference") return numkit::kMuonReferenceQuintic;
    throw ConfigError(field, "expected \"convergent\", \"muon-reference\" or [a, b, c]");
  }
  if (j.is_array() && j.size() == 3 &&
      std::all_of(j.begin(), j.end(), [](const json& x) { return x.is_number(); }))
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
  throw ConfigError(field, "expected \"convergent\", \"muon-reference\" or [a, b, c]");
}

optim::InnerConfig parse_inner(const json& j, const std::string& path) {
  Reader r(j, path);
  optim::InnerConfig cfg;
  const auto kind = r.text("kind", "adamw");
  cfg.kind = with_field(r.field("kind"), [&] { return optim::inner_kind_from_string(kind); });
  switch (cfg.kind) {
    case optim::InnerKind::kAdamW:
      cfg.adamw = parse_adamw_fields(r, cfg.adamw);
      break;
    case optim::InnerKind::kMuon:
      cfg.muon.lr = r.real("lr", cfg.muon.lr);
      cfg.muon.momentum = r.real("momentum", cfg.muon.momentum);
      cfg.muon.ns_iterations = static_cast<int>(r.count("ns_iterations", 5));
      if (const json* c = r.get("ns_coefficients"))
        cfg.muon.ns_coefficients = parse_ns_coefficients(*c, r.field("ns_coefficients"));
      if (const json* f = r.get("fallback")) {
        Reader fr(*f, r.field("fallback"));
        cfg.muon.fallback = parse_adamw_fields(fr, cfg.muon.fallback);
        fr.finish();
      }
      break;
    case optim::InnerKind::kSgd:
      cfg.sgd.lr = r.real("lr", cfg.sgd.lr);
      break;
  }
  r.finish();
  return cfg;
}

data::CorpusSpec parse_corpus(const json& j, const std::string& path, std::size_t vocab) {
  Reader r(j, path);
  data::CorpusSpec spec;
  spec.vocab_size = vocab;
  const auto gen = r.text("generator", "markov-chain");
  spec.generator = with_field(r.field("generator"), [&] { return data::generator_from_string(gen); });
  spec.length = r.count("length", spec.length);
  spec.shift_id = r.count("shift_id", 0);
  if (spec.generator == data::Generator::kMarkovChain) {
    spec.stickiness = r.real("stickiness", 0.0);
  } else {
    spec.max_operand = static_cast<std::uint32_t>(r.count("max_operand", spec.max_operand));
  }
  spec.token_file = r.text("token_file", "");
  r.finish();
  return spec;
}

engine::StageConfig parse_stage(const json& j, std::size_t index, std::size_t vocab) {
  const std::string path = "stages[" + std::to_string(index) + "]";
  Reader r(j, path);
  engine::StageConfig s;
  s.name = r.required_text("name");
  const auto method = r.required_text("method");
  s.method = with_field(r.field("method"), [&] { return engine::method_from_string(method); });
  const bool diloco = s.method == engine::Method::kDiLoCo;
  s.k = r.count("k", 8);
  if (!r.has("steps")) throw ConfigError(r.field("steps"), "is required");
  s.steps = r.count("steps", 0);
  if (diloco) {
    if (!r.has("H")) throw ConfigError(r.field("H"), "is required for diloco stages");
    s.h = r.count("H", 0);
    if (const json* o = r.get("outer")) {
      Reader orr(*o, r.field("outer"));
      s.outer.mu = orr.real("mu", s.outer.mu);
      s.outer.eta = orr.real("eta", s.outer.eta);
      s.outer.nesterov = orr.flag("nesterov", s.outer.nesterov);
      orr.finish();
    }
  } else {
    if (r.has("H")) throw ConfigError(r.field("H"), "only valid for diloco stages");
    if (r.has("outer")) throw ConfigError(r.field("outer"), "only valid for diloco stages");
    s.h = 0;
  }
  if (const json* in = r.get("inner")) s.inner = parse_inner(*in, r.field("inner"));
  if (const json* c = r.get("corpus")) {
    s.corpus = parse_corpus(*c, r.field("corpus"), vocab);
  } else {
    s.corpus.vocab_size = vocab;
  }
  s.batch_size = r.count("batch_size", 64);
  s.probe_every = r.count("probe_every", 10);
  if (const json* f = r.get("flags")) {
    Reader fr(*f, r.field("flags"));
    s.flags.reset_inner_state_on_sync = fr.flag("reset_inner_state_on_sync", false);
    s.flags.carry_state_across_stages = fr.flag("carry_state_across_stages", false);
    s.flags.allow_partial_round = fr.flag("allow_partial_round", false);
    fr.finish();
  }
  r.finish();
  s.validate(path);
  return s;
}

json adamw_json(const optim::AdamWConfig& a) {
  return {{"lr", a.lr},
          {"beta1", a.beta1},
          {"beta2", a.beta2},
          {"eps", a.eps},
          {"weight_decay", a.weight_decay}};
}

json inner_json(const optim::InnerConfig& c) {
  json j;
  switch (c.kind) {
    case optim::InnerKind::kAdamW:
      j = adamw_json(c.adamw);
      break;
    case optim::InnerKind::kMuon: {
      j = {{"lr", c.muon.lr},
           {"momentum", c.muon.momentum},
           {"ns_iterations", c.muon.ns_iterations},
           {"fallback", adamw_json(c.muon.fallback)}};
      const auto& k = c.muon.ns_coefficients;
      if (k == numkit::kConvergentQuintic)
        j["ns_coefficients"] = "convergent";
      else if (k == numkit::kMuonReferenceQuintic)
        j["ns_coefficients"] = "muon-reference";
      else
        j["ns_coefficients"] = {k.a, k.b, k.c};
      break;
    }
    case optim::InnerKind::kSgd:
      j = {{"lr", c.sgd.lr}};
      break;
  }
  j["kind"] = std::string(optim::to_string(c.kind));
  return j;
}

json stage_json(const engine::StageConfig& s) {
  json j = {{"name", s.name},
            {"method", std::string(engine::to_string(s.method))},
            {"k", s.k},
            {"steps", s.steps},
            {"inner", inner_json(s.inner)},
            {"batch_size", s.batch_size},
            {"probe_every", s.probe_every},
            {"flags",
             {{"reset_inner_state_on_sync", s.flags.reset_inner_state_on_sync},
              {"carry_state_across_stages", s.flags.carry_state_across_stages},
              {"allow_partial_round", s.flags.allow_partial_round}}}};
  if (s.method == engine::Method::kDiLoCo) {
    j["H"] = s.h;
    j["outer"] = {{"mu", s.outer.mu}, {"eta", s.outer.eta}, {"nesterov", s.outer.nesterov}};
  }
  json corpus = {{"generator", std::string(data::to_string(s.corpus.generator))},
                 {"length", s.corpus.length},
                 {"shift_id", s.corpus.shift_id}};
  if (s.corpus.generator == data::Generator::kMarkovChain)
    corpus["stickiness"] = s.corpus.stickiness;
  else
    corpus["max_operand"] = s.corpus.max_operand;
  if (!s.corpus.token_file.empty()) corpus["token_file"] = s.corpus.token_file;
  j["corpus"] = corpus;
  return j;
}

}  // namespace

engine::ExperimentEnv RunConfig::env() const {
  return {model, global_seed, payload_bytes_per_element, probe_batch_size};
}

void apply_global_seed(RunConfig& config, std::uint64_t seed) {
  config.global_seed = seed;
  config.model.init_seed = numkit::derive_seed(seed, "init");
  for (auto& s : config.stages) s.corpus.transition_seed = numkit::derive_seed(seed, "corpus");
}

void validate_config(const RunConfig& config) {
  config.model.validate();
  if (config.stages.empty()) throw ConfigError("stages", "must contain at least one stage");
  if (config.payload_bytes_per_element == 0)
    throw ConfigError("payload_bytes_per_element", "must be >= 1");
  if (config.probe_batch_size == 0) throw ConfigError("probe_batch_size", "must be >= 1");
  if (!config.write_csv && !config.write_json)
    throw ConfigError("report_formats", "must select at least one format");
  std::set<std::string> names;
  for (std::size_t i = 0; i < config.stages.size(); ++i) {
    const auto& s = config.stages[i];
    const std::string path = "stages[" + std::to_string(i) + "]";
    s.validate(path);
    if (!names.insert(s.name).second)
      throw ConfigError(path + ".name", "duplicate stage name '" + s.name + "'");
    if (s.corpus.vocab_size != config.model.vocab_size)
      throw ConfigError(path + ".corpus", "vocabulary does not match model.vocab_size");
    if (s.corpus.generator == data::Generator::kArithmeticExpr &&
        config.model.vocab_size < data::kArithmeticVocab)
      throw ConfigError(path + ".corpus.generator",
                        "arithmetic-expr needs model.vocab_size >= " +
                            std::to_string(data::kArithmeticVocab));
    if (s.corpus.generator == data::Generator::kMarkovChain &&
        !(s.corpus.stickiness >= 0.0 && s.corpus.stickiness <= 1.0))
      throw ConfigError(path + ".corpus.stickiness", "must lie in [0, 1]");
    const std::size_t min_len = s.k * config.model.context_length + s.k;
    if (s.corpus.token_file.empty() && s.corpus.length < min_len)
      throw ConfigError(path + ".corpus.length",
                        "must be >= k * context_length + k = " + std::to_string(min_len));
    if (s.flags.carry_state_across_stages && i > 0) {
      const auto& prev = config.stages[i - 1];
      if (prev.method != s.method || prev.k != s.k || prev.inner.kind != s.inner.kind)
        throw ConfigError(path + ".flags.carry_state_across_stages",
                          "previous stage must share method, k and inner optimizer kind");
    }
  }
}

RunConfig parse_config(const json& doc) {
  Reader r(doc, "");
  RunConfig cfg;
  const json* model = r.get("model");
  cfg.model = model ? parse_model(*model) : models::ModelSpec{};
  const std::uint64_t seed = r.count("global_seed", 0);
  cfg.output_dir = r.text("output_dir", "out");
  if (const json* f = r.get("report_formats")) {
    if (!f->is_array()) throw ConfigError("report_formats", "expected an array");
    cfg.write_csv = cfg.write_json = false;
    for (std::size_t i = 0; i < f->size(); ++i) {
      const auto& x = (*f)[i];
      const std::string field = "report_formats[" + std::to_string(i) + "]";
      if (!x.is_string()) throw ConfigError(field, "expected \"csv\" or \"json\"");
      const auto s = x.get<std::string>();
      if (s == "csv")
        cfg.write_csv = true;
      else if (s == "json")
        cfg.write_json = true;
      else
        throw ConfigError(field, "expected \"csv\" or \"json\"");
    }
  }
  cfg.payload_bytes_per_element = r.count("payload_bytes_per_element", 4);
  cfg.probe_batch_size = r.count("probe_batch_size", 256);
  cfg.export_corpora = r.flag("export_corpora", false);
  const json* stages = r.get("stages");
  if (!stages) throw ConfigError("stages", "is required");
  if (!stages->is_array()) throw ConfigError("stages", "expected an array");
  for (std::size_t i = 0; i < stages->size(); ++i)
    cfg.stages.push_back(parse_stage((*stages)[i], i, cfg.model.vocab_size));
  r.finish();
  apply_global_seed(cfg, seed);
  validate_config(cfg);
  return cfg;
}

RunConfig parse_config_text(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ConfigError("<syntax>", e.what());
  }
  return parse_config(doc);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

json to_json(const RunConfig& config) {
  const auto& m = config.model;
  json model = {{"kind", std::string(models::to_string(m.kind))},
                {"vocab_size", m.vocab_size},
                {"context_length", m.context_length},
                {"hidden_dims", m.hidden_dims},
                {"init_scale", m.init_scale}};
  if (m.kind == models::ModelKind::kMlpCharLm) model["embed_dim"] = m.embed_dim;
  json formats = json::array();
  if (config.write_csv) formats.push_back("csv");
  if (config.write_json) formats.push_back("json");
  json stages = json::array();
  for (const auto& s : config.stages) stages.push_back(stage_json(s));
  return {{"global_seed", config.global_seed},
          {"output_dir", config.output_dir.generic_string()},
          {"report_formats", formats},
          {"payload_bytes_per_element", config.payload_bytes_per_element},
          {"probe_batch_size", config.probe_batch_size},
          {"export_corpora", config.export_corpora},
          {"model", model},
          {"stages", stages}};
}

RunConfig default_config() {
  RunConfig cfg;
  cfg.model = models::ModelSpec{};
  cfg.output_dir = "out/desk";
  auto stage = [](std::string name, std::size_t steps, std::size_t h, data::Generator gen,
                  std::uint64_t shift) {
    engine::StageConfig s;
    s.name = std::move(name);
    s.method = engine::Method::kDiLoCo;
    s.k = 8;
    s.steps = steps;
    s.h = h;
    s.corpus.generator = gen;
    s.corpus.vocab_size = 32;
    s.corpus.shift_id = shift;
    s.batch_size = 64;
    return s;
  };
  cfg.stages = {stage("base", 2000, 100, data::Generator::kMarkovChain, 0),
                stage("mid", 600, 30, data::Generator::kArithmeticExpr, 1),
                stage("sft", 600, 30, data::Generator::kArithmeticExpr, 2)};
  apply_global_seed(cfg, 20251019);
  return cfg;
}

}  // namespace diloco::harness
