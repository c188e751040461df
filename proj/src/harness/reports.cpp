// Copyright 2026 The diloco-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdio>
#include <ostream>

#include "diloco/harness.hpp"

namespace diloco::harness {

using nlohmann::json;

std::string format_real(double x) {
  if (std::isnan(x)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_loss_csv(std::ostream& out, const engine::RunReport& report) {
  out << kLossCsvHeader << '\n';
  const auto method = engine::to_string(report.stage.method);
  for (const auto& r : report.losses) {
    out << r.step << ',' << report.stage.name << ',' << method << ',';
    if (r.worker < 0)
      out << "global";
    else
      out << r.worker;
    out << ',' << format_real(r.loss_train) << ',' << format_real(r.loss_probe) << '\n';
  }
}

void write_drift_csv(std::ostream& out, const std::vector<engine::RunReport>& reports) {
  out << kDriftCsvHeader << '\n';
  for (const auto& report : reports) {
    for (const auto& d : report.drift) {
      out << report.stage.name << ',' << d.round << ',' << d.k << ','
          << format_real(d.max_pairwise_distance) << ',' << format_real(d.mean_delta_norm) << ','
          << format_real(d.post_sync_max_distance) << ',';
      for (std::size_t i = 0; i < d.delta_cosine.size(); ++i) {
        if (i) out << ';';
        out << (std::isnan(d.delta_cosine[i]) ? std::string("nan") : format_real(d.delta_cosine[i]));
      }
      out << '\n';
    }
  }
}

json ledger_json(const std::vector<engine::RunReport>& reports) {
  json stages = json::array();
  std::uint64_t grad_bytes = 0;
  std::uint64_t delta_bytes = 0;
  for (const auto& r : reports) {
    json events = json::array();
    for (const auto& e : r.ledger.events())
      events.push_back({{"step", e.step}, {"bytes", e.bytes}, {"kind", engine::to_string(e.kind)}});
    const auto g = r.ledger.total_bytes(engine::CommKind::kGradAllReduce);
    const auto d = r.ledger.total_bytes(engine::CommKind::kDeltaAllReduce);
    grad_bytes += g;
    delta_bytes += d;
    stages.push_back(
        {{"stage", r.stage.name},
         {"method", engine::to_string(r.stage.method)},
         {"totals",
          {{"grad-allreduce",
            {{"events", r.ledger.count(engine::CommKind::kGradAllReduce)}, {"bytes", g}}},
           {"delta-allreduce",
            {{"events", r.ledger.count(engine::CommKind::kDeltaAllReduce)}, {"bytes", d}}}}},
         {"events", events}});
  }
  return {{"cost_model", "k * parameter_count * bytes_per_element * 2 per event"},
          {"stages", stages},
          {"totals",
           {{"grad-allreduce", grad_bytes},
            {"delta-allreduce", delta_bytes},
            {"all", grad_bytes + delta_bytes}}}};
}

namespace {

json nullable(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json drift_summary(const engine::RunReport& r) {
  if (r.drift.empty()) return nullptr;
  double max_pre = 0.0;
  double max_post = 0.0;
  for (const auto& d : r.drift) {
    max_pre = std::max(max_pre, d.max_pairwise_distance);
    max_post = std::max(max_post, d.post_sync_max_distance);
  }
  const auto& last = r.drift.back();
  return {{"rounds", r.drift.size()},
          {"max_pre_sync_distance", max_pre},
          {"final_pre_sync_distance", last.max_pairwise_distance},
          {"final_mean_delta_norm", last.mean_delta_norm},
          {"max_post_sync_distance", max_post}};
}

}  // namespace

json summary_json(const RunConfig& config, const numkit::ParamVector& theta0,
                  const numkit::ParamVector& theta_final,
                  const std::vector<engine::RunReport>& reports) {
  json stages = json::array();
  std::uint64_t total = 0;
  for (const auto& r : reports) {
    total += r.ledger.total_bytes();
    json s = {{"name", r.stage.name},
              {"method", engine::to_string(r.stage.method)},
              {"k", r.stage.k},
              {"steps", r.stage.steps},
              {"theta_in_digest", numkit::digest_hex(r.theta_in_digest)},
              {"theta_out_digest", numkit::digest_hex(r.theta_out_digest)},
              {"initial_probe_loss", nullable(r.initial_probe_loss)},
              {"final_probe_loss", nullable(r.final_probe_loss)},
              {"final_train_loss", nullable(r.final_train_loss)},
              {"loss_records", r.losses.size()},
              {"comm",
               {{"events", r.ledger.events().size()}, {"total_bytes", r.ledger.total_bytes()}}},
              {"drift", drift_summary(r)}};
    if (r.stage.method == engine::Method::kDiLoCo) s["H"] = r.stage.h;
    stages.push_back(s);
  }
  return {{"schema_version", 1},
          {"global_seed", config.global_seed},
          {"model",
           {{"kind", models::to_string(config.model.kind)},
            {"vocab_size", config.model.vocab_size},
            {"parameter_count", theta0.size()}}},
          {"theta0_digest", numkit::digest_hex(theta0.digest())},
          {"final_params_digest", numkit::digest_hex(theta_final.digest())},
          {"comm_total_bytes", total},
          {"stages", stages}};
}

}  // namespace diloco::harness
