// Copyright 2026 The diloco-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "diloco/numkit.hpp"

namespace diloco::optim {

using numkit::ParamVector;

// ---------------------------------------------------------------------------
// Inner optimizers

struct AdamWConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  bool operator==(const AdamWConfig&) const = default;
};

struct AdamWState {
  ParamVector m;
  ParamVector v;
  std::uint64_t t = 0;

  static AdamWState zeros_like(const ParamVector& params);
};

/// Decoupled-weight-decay Adam with bias correction. Weight decay is applied
/// as a multiplicative shrink, θ ← θ·(1 − lr·wd), before the moment step.
void adamw_update(ParamVector& params, const ParamVector& grad, AdamWState& state,
                  const AdamWConfig& cfg);

struct AdamWStepResult {
  ParamVector params;
  AdamWState state;
};
AdamWStepResult adamw_step(const ParamVector& params, const ParamVector& grad, AdamWState state,
                           const AdamWConfig& cfg);

struct MuonConfig {
  double lr = 0.02;
  double momentum = 0.95;
  int ns_iterations = 5;
  numkit::NewtonSchulzCoefficients ns_coefficients = numkit::kConvergentQuintic;
  /// Used for every tensor that is not 2-D.
  AdamWConfig fallback{};

  bool operator==(const MuonConfig&) const = default;
};

/// `buffer` is the momentum for 2-D tensors; `fallback` carries AdamW moments
/// for the remaining tensors. Both advance together.
struct MuonState {
  ParamVector buffer;
  AdamWState fallback;

  static MuonState zeros_like(const ParamVector& params);
};

/// Per tensor: buffer ← momentum·buffer + grad. For 2-D tensors the step is
/// lr · √max(1, rows/cols) · NS(buffer); other tensors take the AdamW step
/// from `cfg.fallback` exactly as adamw_update would.
void muon_update(ParamVector& params, const ParamVector& grad, MuonState& state,
                 const MuonConfig& cfg);

struct MuonStepResult {
  ParamVector params;
  MuonState state;
};
MuonStepResult muon_step(const ParamVector& params, const ParamVector& grad, MuonState state,
                         const MuonConfig& cfg);

struct SgdConfig {
  double lr = 0.1;
  bool operator==(const SgdConfig&) const = default;
};

void sgd_update(ParamVector& params, const ParamVector& grad, const SgdConfig& cfg);

enum class InnerKind { kAdamW, kMuon, kSgd };

std::string_view to_string(InnerKind kind);
InnerKind inner_kind_from_string(std::string_view s);

struct InnerConfig {
  InnerKind kind = InnerKind::kAdamW;
  AdamWConfig adamw{};
  MuonConfig muon{};
  SgdConfig sgd{};

  bool operator==(const InnerConfig&) const = default;
};

struct InnerState {
  std::variant<std::monostate, AdamWState, MuonState> state;
};

InnerState make_inner_state(const InnerConfig& cfg, const ParamVector& params);
void inner_update(ParamVector& params, const ParamVector& grad, InnerState& state,
                  const InnerConfig& cfg);

// ---------------------------------------------------------------------------
// Outer optimizer

struct OuterConfig {
  double mu = 0.9;
  double eta = 0.8;
  bool nesterov = true;

  bool operator==(const OuterConfig&) const = default;
};

struct OuterState {
  ParamVector v;
  double mu = 0.9;
  double eta = 0.8;
  bool nesterov = true;

  static OuterState fresh(const OuterConfig& cfg, const ParamVector& like);
};

struct OuterStepResult {
  ParamVector theta;
  OuterState outer;
  ParamVector averaged_delta;
};

/// Unweighted mean of the deltas (summed in list order), then
///   v ← μ·v + Δ̄
///   θ ← θ + η·v                  (nesterov = false)
///   θ ← θ + η·(μ·v + Δ̄)          (nesterov = true)
OuterStepResult outer_step(const ParamVector& theta, std::span<const ParamVector> deltas,
                           OuterState outer);

/// The same update computed from end-of-round replicas θᵢ instead of deltas.
/// v is updated from Δᵢ = θᵢ − θ exactly as in outer_step; θ is formed as
///   (1 − η)·θ + η·mean(θᵢ) + η·μ·w,   w = v_old (heavy-ball) or v_new (Nesterov)
/// which is algebraically identical but reproduces mean(θᵢ) bit for bit when
/// η = 1 and μ = 0.
OuterStepResult outer_step_from_replicas(const ParamVector& theta,
                                         std::span<const ParamVector> replicas, OuterState outer);

}  // namespace diloco::optim
