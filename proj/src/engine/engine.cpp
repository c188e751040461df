// Copyright 2026 The diloco-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "diloco/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "diloco/errors.hpp"

namespace diloco::engine {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

std::string_view to_string(Method m) { return m == Method::kSync ? "sync" : "diloco"; }

Method method_from_string(std::string_view s) {
  if (s == "sync") return Method::kSync;
  if (s == "diloco") return Method::kDiLoCo;
  throw UsageError("unknown method '" + std::string(s) + "'");
}

std::string_view to_string(CommKind kind) {
  return kind == CommKind::kGradAllReduce ? "grad-allreduce" : "delta-allreduce";
}

void StageConfig::validate(const std::string& prefix) const {
  auto field = [&prefix](std::string_view f) { return prefix + "." + std::string(f); };
  if (name.empty()) throw ConfigError(field("name"), "must not be empty");
  if (k == 0) throw ConfigError(field("k"), "must be >= 1");
  if (steps == 0) throw ConfigError(field("steps"), "must be >= 1");
  if (batch_size == 0) throw ConfigError(field("batch_size"), "must be >= 1");
  if (probe_every == 0) throw ConfigError(field("probe_every"), "must be >= 1");
  if (method == Method::kDiLoCo) {
    if (h == 0) throw ConfigError(field("H"), "must be >= 1");
    if (steps % h != 0 && !flags.allow_partial_round)
      throw ConfigError(field("steps"), "steps (" + std::to_string(steps) +
                                            ") is not divisible by H (" + std::to_string(h) +
                                            ") and flags.allow_partial_round is false");
    if (!(outer.mu >= 0.0 && outer.mu < 1.0)) throw ConfigError(field("outer.mu"), "must lie in [0, 1)");
    if (!(outer.eta > 0.0) || !std::isfinite(outer.eta))
      throw ConfigError(field("outer.eta"), "must be finite and > 0");
  }
  const auto& a = inner.kind == optim::InnerKind::kMuon ? inner.muon.fallback : inner.adamw;
  const std::string ap =
      inner.kind == optim::InnerKind::kMuon ? field("inner.fallback") : field("inner");
  if (inner.kind != optim::InnerKind::kSgd) {
    if (!(a.lr > 0.0)) throw ConfigError(ap + ".lr", "must be > 0");
    if (!(a.beta1 >= 0.0 && a.beta1 < 1.0)) throw ConfigError(ap + ".beta1", "must lie in [0, 1)");
    if (!(a.beta2 >= 0.0 && a.beta2 < 1.0)) throw ConfigError(ap + ".beta2", "must lie in [0, 1)");
    if (!(a.eps > 0.0)) throw ConfigError(ap + ".eps", "must be > 0");
    if (!(a.weight_decay >= 0.0)) throw ConfigError(ap + ".weight_decay", "must be >= 0");
  } else if (!(inner.sgd.lr > 0.0)) {
    throw ConfigError(field("inner.lr"), "must be > 0");
  }
  if (inner.kind == optim::InnerKind::kMuon) {
    if (!(inner.muon.lr > 0.0)) throw ConfigError(field("inner.lr"), "must be > 0");
    if (!(inner.muon.momentum >= 0.0 && inner.muon.momentum < 1.0))
      throw ConfigError(field("inner.momentum"), "must lie in [0, 1)");
    if (inner.muon.ns_iterations < 1) throw ConfigError(field("inner.ns_iterations"), "must be >= 1");
  }
  if (corpus.length == 0) throw ConfigError(field("corpus.length"), "must be >= 1");
}

std::size_t StageConfig::rounds() const {
  if (method == Method::kSync) return steps;
  return steps / h + (steps % h != 0 ? 1 : 0);
}

std::uint64_t sync_event_bytes(std::size_t k, std::size_t param_count,
                               std::size_t bytes_per_element) {
  return std::uint64_t{k} * param_count * bytes_per_element * 2;
}

void CommLedger::record(std::size_t step, std::uint64_t bytes, CommKind kind) {
  events_.push_back({step, bytes, kind});
  total_[static_cast<int>(kind)] += bytes;
  ++count_[static_cast<int>(kind)];
}

double communication_ratio(const CommLedger& ledger_sync, const CommLedger& ledger_diloco) {
  if (ledger_sync.empty() || ledger_diloco.empty())
    throw UsageError("communication_ratio: ledger is empty");
  return static_cast<double>(ledger_sync.total_bytes()) /
         static_cast<double>(ledger_diloco.total_bytes());
}

double max_pairwise_distance(std::span<const ParamVector> workers) {
  double worst = 0.0;
  for (std::size_t i = 0; i < workers.size(); ++i)
    for (std::size_t j = i + 1; j < workers.size(); ++j)
      worst = std::max(worst, numkit::distance(workers[i], workers[j]));
  return worst;
}

DriftRow drift_snapshot(std::span<const ParamVector> workers, const ParamVector& theta) {
  DriftRow row;
  const std::size_t k = workers.size();
  row.k = k;
  row.delta_cosine.assign(k * k, kNaN);
  if (k == 0) return row;
  std::vector<ParamVector> deltas;
  std::vector<double> norms;
  deltas.reserve(k);
  for (const auto& w : workers) {
    deltas.push_back(numkit::subtract(w, theta));
    norms.push_back(numkit::norm2(deltas.back()));
  }
  double sum = 0.0;
  for (double n : norms) sum += n;
  row.mean_delta_norm = sum / static_cast<double>(k);
  row.max_pairwise_distance = max_pairwise_distance(workers);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i; j < k; ++j) {
      if (norms[i] == 0.0 || norms[j] == 0.0) continue;
      const double c = i == j ? 1.0 : numkit::dot(deltas[i], deltas[j]) / (norms[i] * norms[j]);
      row.delta_cosine[i * k + j] = c;
      row.delta_cosine[j * k + i] = c;
    }
  }
  return row;
}

std::vector<data::Shard> make_stage_shards(const ExperimentEnv& env, const StageConfig& cfg) {
  const auto corpus = data::training_corpus(cfg.corpus);
  const std::uint64_t shuffle_seed = numkit::derive_seed(env.seed, "shuffle", cfg.corpus.shift_id);
  return data::shard_corpus(corpus, cfg.k, env.model.context_length, shuffle_seed);
}

models::Batch make_probe_batch(const ExperimentEnv& env, const StageConfig& cfg) {
  data::CorpusSpec spec = cfg.corpus;
  spec.length = env.probe_batch_size * 4 + env.model.context_length + 1;
  data::Shard shard;
  shard.tokens = data::generate_corpus(spec, 1);
  shard.epoch_shuffle_seed = numkit::derive_seed(env.seed, "probe", cfg.corpus.shift_id);
  data::BatchSampler sampler(std::move(shard), env.model.context_length, env.model.vocab_size);
  return sampler.next(env.probe_batch_size);
}

namespace {

void check_stage(const ExperimentEnv& env, const ParamVector& theta0, const StageConfig& cfg,
                 Method expected) {
  if (cfg.method != expected)
    throw UsageError("stage '" + cfg.name + "' has method " + std::string(to_string(cfg.method)) +
                     ", expected " + std::string(to_string(expected)));
  cfg.validate("stage");
  if (cfg.corpus.vocab_size != env.model.vocab_size)
    throw ConfigError("stage.corpus.vocab_size", "does not match model.vocab_size");
  if (!(theta0.layout() == *models::make_layout(env.model)))
    throw StructuralError("theta0 does not match the model layout");
}

bool can_carry(const CarryState* carry, const StageConfig& cfg) {
  return carry != nullptr && cfg.flags.carry_state_across_stages;
}

std::vector<data::BatchSampler> make_samplers(const ExperimentEnv& env, const StageConfig& cfg,
                                              const CarryState* carry) {
  auto shards = make_stage_shards(env, cfg);
  const bool reuse_cursors = can_carry(carry, cfg) && carry->corpus == cfg.corpus &&
                             carry->cursors.size() == cfg.k;
  std::vector<data::BatchSampler> samplers;
  samplers.reserve(cfg.k);
  for (std::size_t w = 0; w < cfg.k; ++w)
    samplers.emplace_back(std::move(shards[w]), env.model.context_length, env.model.vocab_size,
                          reuse_cursors ? carry->cursors[w] : data::Cursor{});
  return samplers;
}

void require_compatible_carry(const CarryState& carry, const StageConfig& cfg,
                              std::size_t states) {
  if (carry.method != cfg.method || carry.inner_kind != cfg.inner.kind || carry.inner.size() != states ||
      carry.k != cfg.k)
    throw ConfigError("stage.flags.carry_state_across_stages",
                      "previous stage state is incompatible (method, k and inner optimizer must "
                      "match)");
}

CarryState make_carry(const StageConfig& cfg, std::vector<optim::InnerState> inner,
                      const std::vector<data::BatchSampler>& samplers,
                      std::optional<optim::OuterState> outer) {
  CarryState c;
  c.method = cfg.method;
  c.k = cfg.k;
  c.inner_kind = cfg.inner.kind;
  c.corpus = cfg.corpus;
  c.inner = std::move(inner);
  for (const auto& s : samplers) c.cursors.push_back(s.cursor());
  c.outer = std::move(outer);
  return c;
}

RunReport begin_report(const ExperimentEnv& env, const ParamVector& theta0, const StageConfig& cfg,
                       std::size_t stage_index) {
  RunReport report;
  report.stage = cfg;
  report.stage_index = stage_index;
  report.parameter_count = theta0.size();
  report.theta_in_digest = theta0.digest();
  (void)env;
  return report;
}

}  // namespace

StageResult run_sync_stage(const ExperimentEnv& env, const ParamVector& theta0,
                           const StageConfig& cfg, std::size_t stage_index,
                           const CarryState* carry, const SyncObserver& observer) {
  check_stage(env, theta0, cfg, Method::kSync);
  const auto start = Clock::now();
  RunReport report = begin_report(env, theta0, cfg, stage_index);
  const models::Batch probe = make_probe_batch(env, cfg);
  auto samplers = make_samplers(env, cfg, carry);

  optim::InnerState state;
  if (can_carry(carry, cfg)) {
    require_compatible_carry(*carry, cfg, 1);
    state = carry->inner.front();
  } else {
    state = optim::make_inner_state(cfg.inner, theta0);
  }

  const std::uint64_t event_bytes =
      sync_event_bytes(cfg.k, theta0.size(), env.payload_bytes_per_element);
  ParamVector theta = theta0;
  ParamVector worker_grad = ParamVector::zeros_like(theta);
  ParamVector avg = ParamVector::zeros_like(theta);
  report.initial_probe_loss = models::loss(env.model, theta, probe);
  report.losses.push_back({0, -1, kNaN, report.initial_probe_loss});
  const auto k = static_cast<double>(cfg.k);

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    std::fill(avg.values().begin(), avg.values().end(), 0.0);
    double train = 0.0;
    for (std::size_t w = 0; w < cfg.k; ++w) {
      const models::Batch batch = samplers[w].next(cfg.batch_size);
      train += models::loss_and_grad(env.model, theta, batch, &worker_grad);
      auto a = avg.values();
      auto g = worker_grad.values();
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += g[i];
    }
    for (double& x : avg.values()) x /= k;
    train /= k;
    optim::inner_update(theta, avg, state, cfg.inner);
    report.ledger.record(step, event_bytes, CommKind::kGradAllReduce);
    if (observer) observer(step, theta);

    double probe_loss = kNaN;
    if (step % cfg.probe_every == 0 || step == cfg.steps)
      probe_loss = models::loss(env.model, theta, probe);
    report.losses.push_back({step, -1, train, probe_loss});
    report.final_train_loss = train;
    if (step == cfg.steps) report.final_probe_loss = probe_loss;
  }

  report.theta_out_digest = theta.digest();
  std::vector<optim::InnerState> states;
  states.push_back(std::move(state));
  CarryState next = make_carry(cfg, std::move(states), samplers, std::nullopt);
  report.wall_time_seconds = seconds_since(start);
  return {std::move(theta), std::move(report), std::move(next)};
}

StageResult run_diloco_stage(const ExperimentEnv& env, const ParamVector& theta0,
                             const StageConfig& cfg, std::size_t stage_index,
                             const CarryState* carry, const SyncObserver& observer) {
  check_stage(env, theta0, cfg, Method::kDiLoCo);
  const auto start = Clock::now();
  RunReport report = begin_report(env, theta0, cfg, stage_index);
  const models::Batch probe = make_probe_batch(env, cfg);
  auto samplers = make_samplers(env, cfg, carry);

  std::vector<optim::InnerState> states;
  optim::OuterState outer = optim::OuterState::fresh(cfg.outer, theta0);
  if (can_carry(carry, cfg)) {
    require_compatible_carry(*carry, cfg, cfg.k);
    states = carry->inner;
    if (carry->outer) {
      outer = *carry->outer;
      outer.mu = cfg.outer.mu;
      outer.eta = cfg.outer.eta;
      outer.nesterov = cfg.outer.nesterov;
    }
  } else {
    for (std::size_t w = 0; w < cfg.k; ++w)
      states.push_back(optim::make_inner_state(cfg.inner, theta0));
  }

  const std::uint64_t event_bytes =
      sync_event_bytes(cfg.k, theta0.size(), env.payload_bytes_per_element);
  ParamVector theta = theta0;
  std::vector<ParamVector> replicas(cfg.k, theta0);
  ParamVector grad = ParamVector::zeros_like(theta);
  report.initial_probe_loss = models::loss(env.model, theta, probe);
  report.losses.push_back({0, -1, kNaN, report.initial_probe_loss});

  std::size_t done = 0;
  for (std::size_t round = 0; done < cfg.steps; ++round) {
    const std::size_t inner_steps = std::min(cfg.h, cfg.steps - done);
    if (cfg.flags.reset_inner_state_on_sync && round > 0)
      for (auto& s : states) s = optim::make_inner_state(cfg.inner, theta);

    double round_train = 0.0;
    for (std::size_t w = 0; w < cfg.k; ++w) {
      replicas[w] = theta;
      for (std::size_t h = 0; h < inner_steps; ++h) {
        const models::Batch batch = samplers[w].next(cfg.batch_size);
        const double l = models::loss_and_grad(env.model, replicas[w], batch, &grad);
        optim::inner_update(replicas[w], grad, states[w], cfg.inner);
        report.losses.push_back({done + h + 1, static_cast<int>(w), l, kNaN});
        if (h + 1 == inner_steps) round_train += l;
      }
    }
    done += inner_steps;

    DriftRow drift = drift_snapshot(replicas, theta);
    drift.round = round;
    auto result = optim::outer_step_from_replicas(theta, replicas, std::move(outer));
    theta = std::move(result.theta);
    outer = std::move(result.outer);
    report.ledger.record(done, event_bytes, CommKind::kDeltaAllReduce);
    if (observer) observer(done, theta);

    for (auto& r : replicas) r = theta;
    drift.post_sync_max_distance = max_pairwise_distance(replicas);
    report.drift.push_back(std::move(drift));

    const double probe_loss = models::loss(env.model, theta, probe);
    report.final_train_loss = round_train / static_cast<double>(cfg.k);
    report.losses.push_back({done, -1, report.final_train_loss, probe_loss});
    report.final_probe_loss = probe_loss;
  }

  report.theta_out_digest = theta.digest();
  CarryState next = make_carry(cfg, std::move(states), samplers, std::move(outer));
  report.wall_time_seconds = seconds_since(start);
  return {std::move(theta), std::move(report), std::move(next)};
}

StageResult run_stage(const ExperimentEnv& env, const ParamVector& theta0, const StageConfig& cfg,
                      std::size_t stage_index, const CarryState* carry,
                      const SyncObserver& observer) {
  return cfg.method == Method::kSync
             ? run_sync_stage(env, theta0, cfg, stage_index, carry, observer)
             : run_diloco_stage(env, theta0, cfg, stage_index, carry, observer);
}

ScheduleResult run_hybrid_schedule(const ExperimentEnv& env, std::span<const StageConfig> stages,
                                   const ParamVector& theta0) {
  if (stages.empty()) throw UsageError("run_hybrid_schedule: no stages");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const std::string prefix = "stages[" + std::to_string(i) + "]";
    stages[i].validate(prefix);
    if (stages[i].corpus.vocab_size != env.model.vocab_size)
      throw ConfigError(prefix + ".corpus.vocab_size",
                        "stage vocabulary differs from the model vocabulary");
  }
  ScheduleResult out{theta0, {}};
  std::optional<CarryState> carry;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    StageResult r = run_stage(env, out.theta, stages[i], i, carry ? &*carry : nullptr);
    out.theta = std::move(r.theta);
    out.reports.push_back(std::move(r.report));
    carry = std::move(r.carry);
  }
  return out;
}

}  // namespace diloco::engine
