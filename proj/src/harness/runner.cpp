// Copyright 2026 The diloco-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include "diloco/errors.hpp"
#include "diloco/harness.hpp"

namespace diloco::harness {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void log_stage(std::ostream* log, std::string_view variant, const engine::RunReport& r) {
  if (!log) return;
  *log << (variant.empty() ? "" : std::string(variant) + "/") << r.stage.name << " ("
       << engine::to_string(r.stage.method) << ", k=" << r.stage.k << ", steps=" << r.stage.steps
       << "): probe loss " << format_real(r.initial_probe_loss) << " -> "
       << format_real(r.final_probe_loss) << ", " << r.ledger.total_bytes() << " bytes, "
       << r.wall_time_seconds << " s\n";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

// Runs stages[first..] starting from `theta`, optionally continuing from a
// previous stage's carry state.
void run_stages_from(const engine::ExperimentEnv& env, const std::vector<engine::StageConfig>& stages,
                     std::size_t first, numkit::ParamVector& theta,
                     std::optional<engine::CarryState> carry,
                     std::vector<engine::RunReport>& reports, std::ostream* log,
                     std::string_view variant) {
  for (std::size_t i = first; i < stages.size(); ++i) {
    auto r = engine::run_stage(env, theta, stages[i], i, carry ? &*carry : nullptr);
    theta = std::move(r.theta);
    log_stage(log, variant, r.report);
    reports.push_back(std::move(r.report));
    carry = std::move(r.carry);
  }
}

RunOutcome finish(const RunConfig& config, numkit::ParamVector theta0, numkit::ParamVector theta,
                  std::vector<engine::RunReport> reports) {
  RunOutcome out{std::move(theta0), std::move(theta), std::move(reports), {}};
  out.summary = summary_json(config, out.theta0, out.theta, out.reports);
  return out;
}

json timing_json(const RunOutcome& outcome) {
  json stages = json::array();
  double total = 0.0;
  for (const auto& r : outcome.reports) {
    stages.push_back({{"stage", r.stage.name}, {"wall_time_seconds", r.wall_time_seconds}});
    total += r.wall_time_seconds;
  }
  return {{"stages", stages}, {"total_wall_time_seconds", total}};
}

}  // namespace

RunOutcome execute(const RunConfig& config) {
  validate_config(config);
  const auto theta0 = models::init_params(config.model);
  auto schedule = engine::run_hybrid_schedule(config.env(), config.stages, theta0);
  return finish(config, theta0, std::move(schedule.theta), std::move(schedule.reports));
}

void write_run_artifacts(const fs::path& dir, const RunConfig& config, const RunOutcome& outcome) {
  fs::create_directories(dir);
  if (config.write_csv) {
    for (const auto& r : outcome.reports) {
      std::ostringstream ss;
      write_loss_csv(ss, r);
      write_text(dir / ("loss_" + r.stage.name + ".csv"), ss.str());
    }
    std::ostringstream drift;
    write_drift_csv(drift, outcome.reports);
    write_text(dir / "drift.csv", drift.str());
  }
  if (config.write_json) {
    write_text(dir / "ledger.json", ledger_json(outcome.reports).dump(2) + "\n");
    write_text(dir / "summary.json", outcome.summary.dump(2) + "\n");
  }
  write_text(dir / "timing.json", timing_json(outcome).dump(2) + "\n");
  if (config.export_corpora)
    for (const auto& s : config.stages)
      data::write_tokens(dir / ("corpus_" + s.name + ".bin"), data::training_corpus(s.corpus));
}

RunOutcome run(const RunConfig& config, std::ostream* log) {
  validate_config(config);
  const auto theta0 = models::init_params(config.model);
  numkit::ParamVector theta = theta0;
  std::vector<engine::RunReport> reports;
  run_stages_from(config.env(), config.stages, 0, theta, std::nullopt, reports, log, "");
  RunOutcome outcome = finish(config, theta0, std::move(theta), std::move(reports));
  write_run_artifacts(config.output_dir, config, outcome);
  return outcome;
}

RunConfig make_variant(const RunConfig& config, std::string_view variant) {
  for (std::size_t i = 0; i < config.stages.size(); ++i)
    if (config.stages[i].method != engine::Method::kDiLoCo)
      throw ConfigError("stages[" + std::to_string(i) + "].method",
                        "compare expects diloco stages; the sync and hybrid variants are derived");
  RunConfig out = config;
  if (variant == "diloco") return out;
  const std::size_t first_sync = variant == "standard" ? 0 : variant == "hybrid" ? 1 : SIZE_MAX;
  if (first_sync == SIZE_MAX) throw UsageError("unknown variant '" + std::string(variant) + "'");
  for (std::size_t i = first_sync; i < out.stages.size(); ++i) {
    auto& s = out.stages[i];
    s.method = engine::Method::kSync;
    s.h = 0;
    s.outer = {};
    s.flags.allow_partial_round = false;
    // Optimizer state cannot cross a method change.
    if (i == first_sync && i > 0) s.flags.carry_state_across_stages = false;
  }
  return out;
}

CompareOutcome compare(const RunConfig& config, std::ostream* log) {
  validate_config(config);
  const RunConfig standard_cfg = make_variant(config, "standard");
  const RunConfig diloco_cfg = make_variant(config, "diloco");
  const RunConfig hybrid_cfg = make_variant(config, "hybrid");
  validate_config(standard_cfg);
  validate_config(hybrid_cfg);
  const auto env = config.env();
  const auto theta0 = models::init_params(config.model);

  CompareOutcome out;
  {
    numkit::ParamVector theta = theta0;
    std::vector<engine::RunReport> reports;
    run_stages_from(env, standard_cfg.stages, 0, theta, std::nullopt, reports, log, "standard");
    out.standard = finish(standard_cfg, theta0, std::move(theta), std::move(reports));
  }

  // DiLoCo first stage, shared with the hybrid variant.
  auto first = engine::run_stage(env, theta0, diloco_cfg.stages.front(), 0, nullptr);
  log_stage(log, "diloco", first.report);
  {
    numkit::ParamVector theta = first.theta;
    std::vector<engine::RunReport> reports{first.report};
    run_stages_from(env, diloco_cfg.stages, 1, theta, first.carry, reports, log, "diloco");
    out.diloco = finish(diloco_cfg, theta0, std::move(theta), std::move(reports));
  }
  {
    numkit::ParamVector theta = first.theta;
    std::vector<engine::RunReport> reports{first.report};
    run_stages_from(env, hybrid_cfg.stages, 1, theta, first.carry, reports, log, "hybrid");
    out.hybrid = finish(hybrid_cfg, theta0, std::move(theta), std::move(reports));
  }

  json per_stage = json::array();
  for (std::size_t i = 0; i < config.stages.size(); ++i) {
    const auto& s = out.standard.reports[i].ledger;
    const auto& d = out.diloco.reports[i].ledger;
    per_stage.push_back({{"stage", config.stages[i].name},
                         {"steps", config.stages[i].steps},
                         {"H", config.stages[i].h},
                         {"standard_bytes", s.total_bytes()},
                         {"diloco_bytes", d.total_bytes()},
                         {"standard_events", s.events().size()},
                         {"diloco_events", d.events().size()},
                         {"communication_ratio", engine::communication_ratio(s, d)}});
  }
  const auto total_s = out.standard.summary["comm_total_bytes"].get<std::uint64_t>();
  const auto total_d = out.diloco.summary["comm_total_bytes"].get<std::uint64_t>();
  auto methods = [](const RunOutcome& o) {
    json m = json::array();
    for (const auto& r : o.reports) m.push_back(engine::to_string(r.stage.method));
    return m;
  };
  out.comparison = {
      {"schema_version", 1},
      {"global_seed", config.global_seed},
      {"theta0_digest", numkit::digest_hex(theta0.digest())},
      {"communication",
       {{"per_stage", per_stage},
        {"standard_total_bytes", total_s},
        {"diloco_total_bytes", total_d},
        {"communication_ratio_total",
         static_cast<double>(total_s) / static_cast<double>(total_d)}}},
      {"variants",
       {{"standard", {{"stage_methods", methods(out.standard)}, {"summary", out.standard.summary}}},
        {"diloco", {{"stage_methods", methods(out.diloco)}, {"summary", out.diloco.summary}}},
        {"hybrid",
         {{"stage_methods", methods(out.hybrid)},
          {"first_stage_shared_with", "diloco"},
          {"summary", out.hybrid.summary}}}}}};
  return out;
}

void write_compare_artifacts(const RunConfig& config, const CompareOutcome& outcome) {
  const fs::path& dir = config.output_dir;
  fs::create_directories(dir);
  write_run_artifacts(dir / "standard", make_variant(config, "standard"), outcome.standard);
  write_run_artifacts(dir / "diloco", make_variant(config, "diloco"), outcome.diloco);
  write_run_artifacts(dir / "hybrid", make_variant(config, "hybrid"), outcome.hybrid);

  std::ostringstream csv;
  csv << kComparisonCsvHeader << '\n';
  const RunOutcome* variants[3] = {&outcome.standard, &outcome.diloco, &outcome.hybrid};
  for (std::size_t i = 0; i < config.stages.size(); ++i) {
    std::map<std::size_t, std::array<double, 3>> rows;
    for (int v = 0; v < 3; ++v) {
      for (const auto& rec : variants[v]->reports[i].losses) {
        if (rec.worker >= 0 || std::isnan(rec.loss_probe)) continue;
        auto [it, inserted] = rows.try_emplace(rec.step);
        if (inserted) it->second.fill(std::numeric_limits<double>::quiet_NaN());
        it->second[v] = rec.loss_probe;
      }
    }
    for (const auto& [step, vals] : rows)
      csv << config.stages[i].name << ',' << step << ',' << format_real(vals[0]) << ','
          << format_real(vals[1]) << ',' << format_real(vals[2]) << '\n';
  }
  write_text(dir / "comparison.csv", csv.str());
  write_text(dir / "comparison.json", outcome.comparison.dump(2) + "\n");
}

RunConfig load_with_overrides(const fs::path& path, const CliOverrides& overrides) {
  RunConfig cfg = load_config(path);
  if (overrides.seed) apply_global_seed(cfg, *overrides.seed);
  if (overrides.output_dir) cfg.output_dir = *overrides.output_dir;
  return cfg;
}

namespace {

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    return kExitRuntimeError;
  }
}

}  // namespace

int cmd_run(const fs::path& config_path, const CliOverrides& overrides, std::ostream& out,
            std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = load_with_overrides(config_path, overrides);
    const auto outcome = run(cfg, overrides.quiet ? nullptr : &out);
    if (!overrides.quiet)
      out << "final params digest " << outcome.summary["final_params_digest"].get<std::string>()
          << "; artifacts in " << cfg.output_dir.string() << '\n';
    return int{kExitOk};
  });
}

int cmd_compare(const fs::path& config_path, const CliOverrides& overrides, std::ostream& out,
                std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = load_with_overrides(config_path, overrides);
    const auto outcome = compare(cfg, overrides.quiet ? nullptr : &out);
    write_compare_artifacts(cfg, outcome);
    if (!overrides.quiet) {
      for (const auto& s : outcome.comparison["communication"]["per_stage"])
        out << "stage " << s["stage"].get<std::string>() << ": communication ratio "
            << s["communication_ratio"].get<double>() << '\n';
      out << "artifacts in " << cfg.output_dir.string() << '\n';
    }
    return int{kExitOk};
  });
}

int cmd_validate(const fs::path& config_path, const CliOverrides& overrides, std::ostream& out,
                 std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = load_with_overrides(config_path, overrides);
    out << to_json(cfg).dump(2) << '\n';
    return int{kExitOk};
  });
}

}  // namespace diloco::harness
