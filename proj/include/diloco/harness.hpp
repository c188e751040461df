// Copyright 2026 The diloco-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "diloco/engine.hpp"
#include "diloco/models.hpp"

namespace diloco::harness {

struct RunConfig {
  models::ModelSpec model{};
  std::vector<engine::StageConfig> stages;
  std::uint64_t global_seed = 0;
  std::filesystem::path output_dir = "out";
  bool write_csv = true;
  bool write_json = true;
  std::size_t payload_bytes_per_element = 4;
  std::size_t probe_batch_size = 256;
  /// Also write each stage's training stream as corpus_<stage>.bin.
  bool export_corpora = false;

  engine::ExperimentEnv env() const;
};

/// Fills every seed (model init, corpus distributions) from `seed`.
void apply_global_seed(RunConfig& config, std::uint64_t seed);

/// Strict parse: unknown keys, wrong types and invariant violations raise
/// ConfigError naming the field path (e.g. `stages[1].H`).
RunConfig parse_config(const nlohmann::json& doc);
RunConfig parse_config_text(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Cross-field checks shared by parse_config and programmatic callers.
void validate_config(const RunConfig& config);

/// The effective configuration with every default written out. Parsing the
/// result yields the same RunConfig.
nlohmann::json to_json(const RunConfig& config);

/// Desk-scale experiment: vocab 32, context 8, hidden [64], k 8;
/// base 2000 steps (H 100, markov-chain), mid and sft 600 steps each (H 30,
/// arithmetic-expr).
RunConfig default_config();

// ---------------------------------------------------------------------------
// Reports

inline constexpr std::string_view kLossCsvHeader = "step,stage,method,worker,loss_train,loss_probe";
inline constexpr std::string_view kDriftCsvHeader =
    "stage,round,k,max_pairwise_distance,mean_delta_norm,post_sync_max_distance,delta_cosine";

/// `%.17g`; NaN renders as an empty field.
std::string format_real(double x);

void write_loss_csv(std::ostream& out, const engine::RunReport& report);
void write_drift_csv(std::ostream& out, const std::vector<engine::RunReport>& reports);
nlohmann::json ledger_json(const std::vector<engine::RunReport>& reports);
nlohmann::json summary_json(const RunConfig& config, const numkit::ParamVector& theta0,
                            const numkit::ParamVector& theta_final,
                            const std::vector<engine::RunReport>& reports);

struct RunOutcome {
  numkit::ParamVector theta0;
  numkit::ParamVector theta;
  std::vector<engine::RunReport> reports;
  nlohmann::json summary;
};

/// Executes all stages and returns the reports without touching disk.
RunOutcome execute(const RunConfig& config);

/// Writes loss_<stage>.csv and drift.csv (csv) plus ledger.json and
/// summary.json (json) under `dir`, and timing.json with wall-clock times.
/// With export_corpora, also corpus_<stage>.bin.
void write_run_artifacts(const std::filesystem::path& dir, const RunConfig& config,
                         const RunOutcome& outcome);

/// execute + write_run_artifacts into config.output_dir.
RunOutcome run(const RunConfig& config, std::ostream* log = nullptr);

// ---------------------------------------------------------------------------
// Three-way comparison

/// Variants derived from a config whose stages are all DiLoCo:
///   standard: every stage switched to sync
///   diloco:   stages as configured
///   hybrid:   first stage as configured, later stages switched to sync
RunConfig make_variant(const RunConfig& config, std::string_view variant);

struct CompareOutcome {
  RunOutcome standard;
  RunOutcome diloco;
  RunOutcome hybrid;
  nlohmann::json comparison;
};

/// Runs the three variants from the same θ₀ and seeds. The hybrid variant's
/// first stage is the DiLoCo first stage (same config and seeds), so its
/// result is reused instead of recomputed.
CompareOutcome compare(const RunConfig& config, std::ostream* log = nullptr);

/// Writes each variant's artifacts under <output_dir>/<variant>/ plus
/// comparison.csv and comparison.json.
void write_compare_artifacts(const RunConfig& config, const CompareOutcome& outcome);

inline constexpr std::string_view kComparisonCsvHeader = "stage,step,standard,diloco,hybrid";

// ---------------------------------------------------------------------------
// Command line

enum ExitCode : int { kExitOk = 0, kExitConfigError = 2, kExitRuntimeError = 3 };

struct CliOverrides {
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

/// Loads the config and applies the overrides.
RunConfig load_with_overrides(const std::filesystem::path& path, const CliOverrides& overrides);

int cmd_run(const std::filesystem::path& config_path, const CliOverrides& overrides,
            std::ostream& out, std::ostream& err);
int cmd_compare(const std::filesystem::path& config_path, const CliOverrides& overrides,
                std::ostream& out, std::ostream& err);
int cmd_validate(const std::filesystem::path& config_path, const CliOverrides& overrides,
                 std::ostream& out, std::ostream& err);

}  // namespace diloco::harness
