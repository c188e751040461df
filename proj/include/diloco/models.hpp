// Copyright 2026 The diloco-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "diloco/numkit.hpp"
#include "diloco/rng.hpp"

namespace diloco::models {

using Token = std::uint16_t;

/// Row-major (batch_size × context_length) contexts and their next tokens.
struct Batch {
  std::size_t batch_size = 0;
  std::size_t context_length = 0;
  std::size_t vocab_size = 0;
  std::vector<Token> contexts;
  std::vector<Token> targets;

  std::span<const Token> context(std::size_t i) const {
    return std::span<const Token>(contexts).subspan(i * context_length, context_length);
  }

  /// Throws UsageError when sizes disagree or a token id is out of range.
  void validate() const;

  /// Concatenation along the batch dimension.
  static Batch concat(const std::vector<Batch>& parts);
};

enum class ModelKind { kSoftmaxRegression, kMlpCharLm };

std::string_view to_string(ModelKind kind);
ModelKind model_kind_from_string(std::string_view s);

struct ModelSpec {
  ModelKind kind = ModelKind::kMlpCharLm;
  std::size_t vocab_size = 32;
  std::size_t context_length = 8;
  std::size_t embed_dim = 16;  // mlp-char-lm only
  std::vector<std::size_t> hidden_dims{64};
  double init_scale = 0.1;
  std::uint64_t init_seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

/// Tensor layout for a spec.
///
/// softmax-regression (context length 1), logits = W[x] + b:
///   out.weight [V × V], out.bias [V]
///
/// mlp-char-lm, a Bengio-style n-gram model:
///   embed       [V × E]           e = concat(embed[x_1], ..., embed[x_C])   (C·E)
///   hidden0.w   [C·E × H0]        h0 = tanh(e · hidden0.w + hidden0.b)
///   hidden0.b   [H0]
///   hiddenI.w   [H(I-1) × HI]     (one pair per extra hidden layer)
///   out.weight  [H_last × V]      logits = h_last · out.weight + out.bias
///   out.bias    [V]
numkit::LayoutPtr make_layout(const ModelSpec& spec);

/// Uniform in [-init_scale, init_scale]; tensor i draws from stream i of
/// init_seed, in layout order.
numkit::ParamVector init_params(const ModelSpec& spec);

/// Mean cross-entropy in nats, optionally accumulating its gradient into
/// `grad` (which is overwritten).
double loss_and_grad(const ModelSpec& spec, const numkit::ParamVector& params, const Batch& batch,
                     numkit::ParamVector* grad);

double loss(const ModelSpec& spec, const numkit::ParamVector& params, const Batch& batch);
numkit::ParamVector grad(const ModelSpec& spec, const numkit::ParamVector& params,
                         const Batch& batch);

struct FiniteDiffOptions {
  double step = 1e-5;
  double denominator_floor = 1e-8;
};

/// Compares the analytic gradient to central differences on `probes`
/// randomly chosen coordinates. Returns max |a - n| / max(|a|, |n|, floor).
double finite_diff_check(const ModelSpec& spec, const numkit::ParamVector& params,
                         const Batch& batch, std::size_t probes, numkit::Rng& rng,
                         FiniteDiffOptions options = {});

}  // namespace diloco::models
