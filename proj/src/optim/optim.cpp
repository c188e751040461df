// Copyright 2026 The diloco-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "diloco/optim.hpp"

#include <algorithm>
#include <cmath>

#include "diloco/errors.hpp"

namespace diloco::optim {

namespace {

struct AdamWScalars {
  double lr;
  double decay;  // 1 - lr * wd
  double bias1;
  double bias2;
};

AdamWScalars adamw_scalars(const AdamWConfig& cfg, std::uint64_t t) {
  const auto td = static_cast<double>(t);
  return {cfg.lr, 1.0 - cfg.lr * cfg.weight_decay, 1.0 - std::pow(cfg.beta1, td),
          1.0 - std::pow(cfg.beta2, td)};
}

void adamw_kernel(std::span<double> p, std::span<const double> g, std::span<double> m,
                  std::span<double> v, const AdamWConfig& cfg, const AdamWScalars& s) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double m_hat = m[i] / s.bias1;
    const double v_hat = v[i] / s.bias2;
    p[i] *= s.decay;
    p[i] -= s.lr * (m_hat / (std::sqrt(v_hat) + cfg.eps));
  }
}

}  // namespace

AdamWState AdamWState::zeros_like(const ParamVector& params) {
  return {ParamVector::zeros_like(params), ParamVector::zeros_like(params), 0};
}

void adamw_update(ParamVector& params, const ParamVector& grad, AdamWState& state,
                  const AdamWConfig& cfg) {
  require_same_layout(params, grad, "adamw_step");
  require_same_layout(params, state.m, "adamw_step");
  require_same_layout(params, state.v, "adamw_step");
  ++state.t;
  adamw_kernel(params.values(), grad.values(), state.m.values(), state.v.values(), cfg,
               adamw_scalars(cfg, state.t));
}

AdamWStepResult adamw_step(const ParamVector& params, const ParamVector& grad, AdamWState state,
                           const AdamWConfig& cfg) {
  ParamVector out = params;
  adamw_update(out, grad, state, cfg);
  return {std::move(out), std::move(state)};
}

MuonState MuonState::zeros_like(const ParamVector& params) {
  return {ParamVector::zeros_like(params), AdamWState::zeros_like(params)};
}

void muon_update(ParamVector& params, const ParamVector& grad, MuonState& state,
                 const MuonConfig& cfg) {
  require_same_layout(params, grad, "muon_step");
  require_same_layout(params, state.buffer, "muon_step");
  require_same_layout(params, state.fallback.m, "muon_step");
  ++state.fallback.t;
  const AdamWScalars fallback = adamw_scalars(cfg.fallback, state.fallback.t);
  const auto& layout = params.layout();
  for (std::size_t t = 0; t < layout.tensor_count(); ++t) {
    const auto& entry = layout.entry(t);
    auto p = params.tensor(t);
    auto g = grad.tensor(t);
    if (entry.shape.size() != 2) {
      adamw_kernel(p, g, state.fallback.m.tensor(t), state.fallback.v.tensor(t), cfg.fallback,
                   fallback);
      continue;
    }
    auto buf = state.buffer.tensor(t);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = cfg.momentum * buf[i] + g[i];
    const numkit::Matrix direction = numkit::newton_schulz_orthogonalize(
        numkit::Matrix::from_tensor(entry.shape, buf), cfg.ns_iterations, cfg.ns_coefficients);
    const double rows = static_cast<double>(entry.shape[0]);
    const double cols = static_cast<double>(entry.shape[1]);
    const double step = cfg.lr * std::sqrt(std::max(1.0, rows / cols));
    auto d = direction.data();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= step * d[i];
  }
}

MuonStepResult muon_step(const ParamVector& params, const ParamVector& grad, MuonState state,
                         const MuonConfig& cfg) {
  ParamVector out = params;
  muon_update(out, grad, state, cfg);
  return {std::move(out), std::move(state)};
}

void sgd_update(ParamVector& params, const ParamVector& grad, const SgdConfig& cfg) {
  axpy_inplace(-cfg.lr, grad, params);
}

std::string_view to_string(InnerKind kind) {
  switch (kind) {
    case InnerKind::kAdamW:
      return "adamw";
    case InnerKind::kMuon:
      return "muon";
    case InnerKind::kSgd:
      return "sgd";
  }
  return "?";
}

InnerKind inner_kind_from_string(std::string_view s) {
  if (s == "adamw") return InnerKind::kAdamW;
  if (s == "muon") return InnerKind::kMuon;
  if (s == "sgd") return InnerKind::kSgd;
  throw ConfigError("inner.kind", "unknown inner optimizer '" + std::string(s) + "'");
}

InnerState make_inner_state(const InnerConfig& cfg, const ParamVector& params) {
  switch (cfg.kind) {
    case InnerKind::kAdamW:
      return {AdamWState::zeros_like(params)};
    case InnerKind::kMuon:
      return {MuonState::zeros_like(params)};
    case InnerKind::kSgd:
      return {std::monostate{}};
  }
  return {};
}

void inner_update(ParamVector& params, const ParamVector& grad, InnerState& state,
                  const InnerConfig& cfg) {
  switch (cfg.kind) {
    case InnerKind::kAdamW:
      adamw_update(params, grad, std::get<AdamWState>(state.state), cfg.adamw);
      return;
    case InnerKind::kMuon:
      muon_update(params, grad, std::get<MuonState>(state.state), cfg.muon);
      return;
    case InnerKind::kSgd:
      sgd_update(params, grad, cfg.sgd);
      return;
  }
}

OuterState OuterState::fresh(const OuterConfig& cfg, const ParamVector& like) {
  return {ParamVector::zeros_like(like), cfg.mu, cfg.eta, cfg.nesterov};
}

namespace {

// Sum in list order, then divide by the count.
ParamVector mean_of(std::span<const ParamVector> xs, const ParamVector& like) {
  ParamVector out = ParamVector::zeros_like(like);
  auto o = out.values();
  for (const auto& x : xs) {
    require_same_layout(like, x, "outer_step");
    auto xv = x.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += xv[i];
  }
  const auto k = static_cast<double>(xs.size());
  for (double& v : o) v /= k;
  return out;
}

}  // namespace

OuterStepResult outer_step(const ParamVector& theta, std::span<const ParamVector> deltas,
                           OuterState outer) {
  if (deltas.empty()) throw UsageError("outer_step: delta list is empty");
  require_same_layout(theta, outer.v, "outer_step");
  ParamVector avg = mean_of(deltas, theta);
  ParamVector next = theta;
  auto v = outer.v.values();
  auto d = avg.values();
  auto th = next.values();
  for (std::size_t i = 0; i < th.size(); ++i) {
    v[i] = outer.mu * v[i] + d[i];
    const double direction = outer.nesterov ? outer.mu * v[i] + d[i] : v[i];
    th[i] = th[i] + outer.eta * direction;
  }
  return {std::move(next), std::move(outer), std::move(avg)};
}

OuterStepResult outer_step_from_replicas(const ParamVector& theta,
                                         std::span<const ParamVector> replicas,
                                         OuterState outer) {
  if (replicas.empty()) throw UsageError("outer_step: replica list is empty");
  require_same_layout(theta, outer.v, "outer_step");
  std::vector<ParamVector> deltas;
  deltas.reserve(replicas.size());
  for (const auto& r : replicas) deltas.push_back(subtract(r, theta));
  ParamVector avg = mean_of(deltas, theta);
  const ParamVector mean_replica = mean_of(replicas, theta);

  ParamVector next = theta;
  auto v = outer.v.values();
  auto d = avg.values();
  auto mr = mean_replica.values();
  auto th = next.values();
  const double keep = 1.0 - outer.eta;
  const double look = outer.eta * outer.mu;
  for (std::size_t i = 0; i < th.size(); ++i) {
    const double v_old = v[i];
    v[i] = outer.mu * v_old + d[i];
    const double w = outer.nesterov ? v[i] : v_old;
    th[i] = (keep * th[i] + outer.eta * mr[i]) + look * w;
  }
  return {std::move(next), std::move(outer), std::move(avg)};
}

}  // namespace diloco::optim
