// Copyright 2026 The diloco-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "diloco/data.hpp"
#include "diloco/models.hpp"
#include "diloco/numkit.hpp"
#include "diloco/optim.hpp"

namespace diloco::engine {

using numkit::ParamVector;

enum class Method { kSync, kDiLoCo };

std::string_view to_string(Method m);
Method method_from_string(std::string_view s);

struct StageFlags {
  bool reset_inner_state_on_sync = false;
  bool carry_state_across_stages = false;
  bool allow_partial_round = false;

  bool operator==(const StageFlags&) const = default;
};

struct StageConfig {
  std::string name = "base";
  Method method = Method::kDiLoCo;
  std::size_t k = 8;
  std::size_t steps = 2000;
  std::size_t h = 100;  // DiLoCo only
  optim::OuterConfig outer{};  // DiLoCo only
  optim::InnerConfig inner{};
  data::CorpusSpec corpus{};
  std::size_t batch_size = 64;  // per worker
  /// Sync stages evaluate the probe batch every `probe_every` steps (and at
  /// step 0 and the final step). DiLoCo evaluates it after every round.
  std::size_t probe_every = 10;
  StageFlags flags{};

  /// Throws ConfigError with a path rooted at `prefix` (e.g. "stages[0]").
  void validate(const std::string& prefix = "stage") const;
  std::size_t rounds() const;

  bool operator==(const StageConfig&) const = default;
};

/// Settings shared by every stage of a run.
struct ExperimentEnv {
  models::ModelSpec model{};
  std::uint64_t seed = 0;
  /// Payload element width for the communication cost model only; all
  /// arithmetic stays in 64-bit.
  std::size_t payload_bytes_per_element = 4;
  std::size_t probe_batch_size = 256;
};

enum class CommKind { kGradAllReduce, kDeltaAllReduce };
std::string_view to_string(CommKind kind);

/// Every synchronization event is charged k · P · bytes_per_element · 2: each
/// worker sends and receives one parameter-sized payload.
std::uint64_t sync_event_bytes(std::size_t k, std::size_t param_count,
                               std::size_t bytes_per_element);

class CommLedger {
 public:
  struct Event {
    std::size_t step = 0;
    std::uint64_t bytes = 0;
    CommKind kind = CommKind::kGradAllReduce;

    bool operator==(const Event&) const = default;
  };

  void record(std::size_t step, std::uint64_t bytes, CommKind kind);

  const std::vector<Event>& events() const noexcept { return events_; }
  bool empty() const noexcept { return events_.empty(); }
  std::uint64_t total_bytes() const noexcept { return total_[0] + total_[1]; }
  std::uint64_t total_bytes(CommKind kind) const noexcept {
    return total_[static_cast<int>(kind)];
  }
  std::size_t count(CommKind kind) const noexcept { return count_[static_cast<int>(kind)]; }

 private:
  std::vector<Event> events_;
  std::uint64_t total_[2] = {0, 0};
  std::size_t count_[2] = {0, 0};
};

/// Total sync bytes divided by total DiLoCo bytes.
double communication_ratio(const CommLedger& ledger_sync, const CommLedger& ledger_diloco);

struct DriftRow {
  std::size_t round = 0;
  std::size_t k = 0;
  double max_pairwise_distance = 0.0;
  double mean_delta_norm = 0.0;
  /// Row-major k×k cosine similarities of the deltas θᵢ − θ; NaN where a
  /// delta is zero.
  std::vector<double> delta_cosine;
  /// Max pairwise distance re-measured right after the broadcast.
  double post_sync_max_distance = 0.0;
};

/// max_{i<j} ‖θᵢ − θⱼ‖, mean_i ‖θᵢ − θ‖ and the delta cosine matrix.
DriftRow drift_snapshot(std::span<const ParamVector> workers, const ParamVector& theta);

/// Largest pairwise replica distance.
double max_pairwise_distance(std::span<const ParamVector> workers);

struct LossRecord {
  std::size_t step = 0;
  int worker = -1;  // -1: global
  double loss_train;  // NaN when not measured
  double loss_probe;  // NaN when not measured
};

struct RunReport {
  StageConfig stage;
  std::size_t stage_index = 0;
  std::size_t parameter_count = 0;
  std::vector<LossRecord> losses;
  CommLedger ledger;
  std::vector<DriftRow> drift;
  std::uint64_t theta_in_digest = 0;
  std::uint64_t theta_out_digest = 0;
  double initial_probe_loss = 0.0;
  double final_probe_loss = 0.0;
  /// Mean training loss of the last step (sync) or last round (DiLoCo).
  double final_train_loss = 0.0;
  double wall_time_seconds = 0.0;
};

/// Optimizer and data-cursor state that may be threaded into the next stage.
struct CarryState {
  Method method = Method::kSync;
  std::size_t k = 0;
  optim::InnerKind inner_kind = optim::InnerKind::kAdamW;
  data::CorpusSpec corpus{};
  std::vector<optim::InnerState> inner;  // one (sync) or k (DiLoCo)
  std::vector<data::Cursor> cursors;
  std::optional<optim::OuterState> outer;
};

struct StageResult {
  ParamVector theta;
  RunReport report;
  CarryState carry;
};

/// Called with the global parameters after every synchronization: each step
/// of a sync stage, each round of a DiLoCo stage.
using SyncObserver = std::function<void(std::size_t step, const ParamVector& theta)>;

/// Deterministic per-worker shards of the stage corpus.
std::vector<data::Shard> make_stage_shards(const ExperimentEnv& env, const StageConfig& cfg);

/// Held-out batch drawn from an independent sample path of the stage corpus.
models::Batch make_probe_batch(const ExperimentEnv& env, const StageConfig& cfg);

/// Fully synchronous data parallelism: each step averages the k worker
/// gradients (ascending worker id) and applies one inner-optimizer step to
/// the shared parameters.
StageResult run_sync_stage(const ExperimentEnv& env, const ParamVector& theta0,
                           const StageConfig& cfg, std::size_t stage_index = 0,
                           const CarryState* carry = nullptr,
                           const SyncObserver& observer = {});

/// Inner/outer loop: every round broadcasts θ, runs H local inner steps per
/// worker, averages the deltas and applies the outer momentum step.
StageResult run_diloco_stage(const ExperimentEnv& env, const ParamVector& theta0,
                             const StageConfig& cfg, std::size_t stage_index = 0,
                             const CarryState* carry = nullptr,
                             const SyncObserver& observer = {});

/// Dispatches on cfg.method.
StageResult run_stage(const ExperimentEnv& env, const ParamVector& theta0,
                      const StageConfig& cfg, std::size_t stage_index = 0,
                      const CarryState* carry = nullptr, const SyncObserver& observer = {});

struct ScheduleResult {
  ParamVector theta;
  std::vector<RunReport> reports;
};

/// Runs stages in order, feeding each stage's output parameters into the
/// next. Optimizer state is fresh at each boundary unless the next stage sets
/// carry_state_across_stages.
ScheduleResult run_hybrid_schedule(const ExperimentEnv& env, std::span<const StageConfig> stages,
                                   const ParamVector& theta0);

}  // namespace diloco::engine
