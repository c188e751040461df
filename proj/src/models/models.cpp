// Copyright 2026 The diloco-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "diloco/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "diloco/errors.hpp"

namespace diloco::models {

using numkit::ParamVector;

void Batch::validate() const {
  if (batch_size == 0) throw UsageError("batch: batch_size must be >= 1");
  if (contexts.size() != batch_size * context_length)
    throw UsageError("batch: contexts size does not match batch_size * context_length");
  if (targets.size() != batch_size) throw UsageError("batch: targets size != batch_size");
  auto bad = [this](Token t) { return t >= vocab_size; };
  if (std::any_of(contexts.begin(), contexts.end(), bad) ||
      std::any_of(targets.begin(), targets.end(), bad))
    throw UsageError("batch: token id outside [0, vocab_size)");
}

Batch Batch::concat(const std::vector<Batch>& parts) {
  if (parts.empty()) throw UsageError("Batch::concat: no parts");
  Batch out;
  out.context_length = parts.front().context_length;
  out.vocab_size = parts.front().vocab_size;
  for (const auto& p : parts) {
    if (p.context_length != out.context_length || p.vocab_size != out.vocab_size)
      throw StructuralError("Batch::concat: incompatible batches");
    out.batch_size += p.batch_size;
    out.contexts.insert(out.contexts.end(), p.contexts.begin(), p.contexts.end());
    out.targets.insert(out.targets.end(), p.targets.begin(), p.targets.end());
  }
  return out;
}

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kSoftmaxRegression:
      return "softmax-regression";
    case ModelKind::kMlpCharLm:
      return "mlp-char-lm";
  }
  return "?";
}

ModelKind model_kind_from_string(std::string_view s) {
  if (s == "softmax-regression") return ModelKind::kSoftmaxRegression;
  if (s == "mlp-char-lm") return ModelKind::kMlpCharLm;
  throw ConfigError("model.kind", "unknown model kind '" + std::string(s) + "'");
}

void ModelSpec::validate() const {
  if (vocab_size < 2) throw ConfigError("model.vocab_size", "must be >= 2");
  if (vocab_size > 65536) throw ConfigError("model.vocab_size", "must fit 16-bit token ids");
  if (!(init_scale >= 0.0) || !std::isfinite(init_scale))
    throw ConfigError("model.init_scale", "must be finite and >= 0");
  if (kind == ModelKind::kSoftmaxRegression) {
    if (!hidden_dims.empty())
      throw ConfigError("model.hidden_dims", "softmax-regression takes no hidden layers");
    if (context_length != 1)
      throw ConfigError("model.context_length", "softmax-regression requires context_length 1");
  } else {
    if (context_length < 2) throw ConfigError("model.context_length", "mlp-char-lm requires >= 2");
    if (hidden_dims.empty())
      throw ConfigError("model.hidden_dims", "mlp-char-lm requires at least one hidden layer");
    for (std::size_t i = 0; i < hidden_dims.size(); ++i)
      if (hidden_dims[i] == 0)
        throw ConfigError("model.hidden_dims[" + std::to_string(i) + "]", "must be >= 1");
    if (embed_dim == 0) throw ConfigError("model.embed_dim", "must be >= 1");
  }
}

numkit::LayoutPtr make_layout(const ModelSpec& spec) {
  spec.validate();
  numkit::TensorLayout layout;
  const std::size_t v = spec.vocab_size;
  if (spec.kind == ModelKind::kSoftmaxRegression) {
    layout.add("out.weight", {v, v});
    layout.add("out.bias", {v});
  } else {
    layout.add("embed", {v, spec.embed_dim});
    std::size_t in = spec.context_length * spec.embed_dim;
    for (std::size_t i = 0; i < spec.hidden_dims.size(); ++i) {
      const std::string prefix = "hidden" + std::to_string(i);
      layout.add(prefix + ".weight", {in, spec.hidden_dims[i]});
      layout.add(prefix + ".bias", {spec.hidden_dims[i]});
      in = spec.hidden_dims[i];
    }
    layout.add("out.weight", {in, v});
    layout.add("out.bias", {v});
  }
  return std::make_shared<const numkit::TensorLayout>(std::move(layout));
}

ParamVector init_params(const ModelSpec& spec) {
  ParamVector params(make_layout(spec));
  if (spec.init_scale == 0.0) return params;
  for (std::size_t t = 0; t < params.layout().tensor_count(); ++t) {
    numkit::Rng rng(spec.init_seed, t);
    for (double& v : params.tensor(t)) v = rng.uniform(-spec.init_scale, spec.init_scale);
  }
  return params;
}

namespace {

void check_inputs(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
  if (!(params.layout() == *make_layout(spec)))
    throw StructuralError("parameters do not match the model spec layout");
  if (batch.vocab_size != spec.vocab_size || batch.context_length != spec.context_length)
    throw StructuralError("batch shape does not match the model spec");
  batch.validate();
}

// Softmax of `logits` in place; returns log-sum-exp.
double softmax_inplace(std::span<double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& z : logits) {
    z = std::exp(z - mx);
    sum += z;
  }
  for (double& z : logits) z /= sum;
  return mx + std::log(sum);
}

// Turns softmax probabilities into d(loss_i)/d(logits) / batch_size and
// returns the example's cross-entropy.
double cross_entropy_row(std::span<double> logits, Token target, double inv_batch,
                         bool want_grad) {
  const double target_logit = logits[target];
  const double lse = softmax_inplace(logits);
  if (want_grad) {
    for (double& p : logits) p *= inv_batch;
    logits[target] -= inv_batch;
  }
  return lse - target_logit;
}

// Running mean keeps the result exact when every example has the same loss.
struct MeanAccumulator {
  double mean = 0.0;
  std::size_t n = 0;
  void add(double x) {
    ++n;
    mean += (x - mean) / static_cast<double>(n);
  }
};

double softmax_regression(const ModelSpec& spec, const ParamVector& params, const Batch& batch,
                          ParamVector* grad) {
  const std::size_t v = spec.vocab_size;
  auto w = params.tensor(std::size_t{0});
  auto b = params.tensor(std::size_t{1});
  const double inv_batch = 1.0 / static_cast<double>(batch.batch_size);
  std::vector<double> logits(v);
  MeanAccumulator acc;
  for (std::size_t i = 0; i < batch.batch_size; ++i) {
    const Token x = batch.contexts[i];
    for (std::size_t c = 0; c < v; ++c) logits[c] = w[x * v + c] + b[c];
    acc.add(cross_entropy_row(logits, batch.targets[i], inv_batch, grad != nullptr));
    if (grad) {
      auto gw = grad->tensor(std::size_t{0});
      auto gb = grad->tensor(std::size_t{1});
      for (std::size_t c = 0; c < v; ++c) {
        gw[x * v + c] += logits[c];
        gb[c] += logits[c];
      }
    }
  }
  return acc.mean;
}

// Row-major dense helpers over raw spans. out[n×m] = in[n×k] · w[k×m] + bias
void affine(std::span<const double> in, std::size_t n, std::size_t k, std::span<const double> w,
            std::span<const double> bias, std::size_t m, std::span<double> out) {
  for (std::size_t r = 0; r < n; ++r) {
    double* o = out.data() + r * m;
    std::copy(bias.begin(), bias.end(), o);
    const double* x = in.data() + r * k;
    for (std::size_t j = 0; j < k; ++j) {
      const double xj = x[j];
      if (xj == 0.0) continue;
      const double* wr = w.data() + j * m;
      for (std::size_t c = 0; c < m; ++c) o[c] += xj * wr[c];
    }
  }
}

double mlp_char_lm(const ModelSpec& spec, const ParamVector& params, const Batch& batch,
                   ParamVector* grad) {
  const std::size_t n = batch.batch_size;
  const std::size_t v = spec.vocab_size;
  const std::size_t e = spec.embed_dim;
  const std::size_t ctx = spec.context_length;
  const std::size_t layers = spec.hidden_dims.size();
  const double inv_batch = 1.0 / static_cast<double>(n);

  // Forward. acts[0] is the concatenated embedding; acts[l+1] the tanh output of layer l.
  std::vector<std::vector<double>> acts(layers + 1);
  std::vector<std::size_t> widths(layers + 1);
  widths[0] = ctx * e;
  acts[0].resize(n * widths[0]);
  auto embed = params.tensor(std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) {
    auto c = batch.context(i);
    for (std::size_t p = 0; p < ctx; ++p)
      std::copy_n(embed.data() + c[p] * e, e, acts[0].data() + i * widths[0] + p * e);
  }
  for (std::size_t l = 0; l < layers; ++l) {
    widths[l + 1] = spec.hidden_dims[l];
    acts[l + 1].resize(n * widths[l + 1]);
    affine(acts[l], n, widths[l], params.tensor(1 + 2 * l), params.tensor(2 + 2 * l),
           widths[l + 1], acts[l + 1]);
    for (double& a : acts[l + 1]) a = std::tanh(a);
  }
  const std::size_t out_w = 1 + 2 * layers;
  std::vector<double> logits(n * v);
  affine(acts[layers], n, widths[layers], params.tensor(out_w), params.tensor(out_w + 1), v,
         logits);

  MeanAccumulator acc;
  for (std::size_t i = 0; i < n; ++i)
    acc.add(cross_entropy_row(std::span<double>(logits).subspan(i * v, v), batch.targets[i],
                              inv_batch, grad != nullptr));
  if (!grad) return acc.mean;

  // Backward. `delta` holds d(loss)/d(pre-activation) of the current layer.
  std::vector<double> delta = std::move(logits);
  std::size_t delta_w = v;
  for (std::size_t l = layers + 1; l-- > 0;) {
    const std::size_t wi = (l == layers) ? out_w : 1 + 2 * l;
    const std::size_t in_w = widths[l];
    auto w = params.tensor(wi);
    auto gw = grad->tensor(wi);
    auto gb = grad->tensor(wi + 1);
    const auto& x = acts[l];
    for (std::size_t r = 0; r < n; ++r) {
      const double* d = delta.data() + r * delta_w;
      for (std::size_t c = 0; c < delta_w; ++c) gb[c] += d[c];
      for (std::size_t j = 0; j < in_w; ++j) {
        const double xj = x[r * in_w + j];
        if (xj == 0.0) continue;
        double* g = gw.data() + j * delta_w;
        for (std::size_t c = 0; c < delta_w; ++c) g[c] += xj * d[c];
      }
    }
    // Propagate to the input of this affine map.
    // dx = delta · Wᵀ, accumulated over c in ascending order for every j. Reading
    // Wᵀ row by row keeps the inner loop contiguous without reordering sums.
    std::vector<double> wt(in_w * delta_w);
    for (std::size_t j = 0; j < in_w; ++j)
      for (std::size_t c = 0; c < delta_w; ++c) wt[c * in_w + j] = w[j * delta_w + c];
    std::vector<double> dx(n * in_w, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      const double* d = delta.data() + r * delta_w;
      double* out = dx.data() + r * in_w;
      for (std::size_t c = 0; c < delta_w; ++c) {
        const double dc = d[c];
        const double* wc = wt.data() + c * in_w;
        for (std::size_t j = 0; j < in_w; ++j) out[j] += wc[j] * dc;
      }
    }
    if (l > 0) {
      for (std::size_t q = 0; q < dx.size(); ++q) dx[q] *= 1.0 - x[q] * x[q];
    } else {
      auto gembed = grad->tensor(std::size_t{0});
      for (std::size_t r = 0; r < n; ++r) {
        auto c = batch.context(r);
        for (std::size_t p = 0; p < ctx; ++p) {
          const double* src = dx.data() + r * in_w + p * e;
          double* dst = gembed.data() + c[p] * e;
          for (std::size_t q = 0; q < e; ++q) dst[q] += src[q];
        }
      }
    }
    delta = std::move(dx);
    delta_w = in_w;
  }
  return acc.mean;
}

}  // namespace

double loss_and_grad(const ModelSpec& spec, const ParamVector& params, const Batch& batch,
                     ParamVector* grad) {
  check_inputs(spec, params, batch);
  if (grad) {
    if (!grad->same_layout(params)) *grad = ParamVector::zeros_like(params);
    std::fill(grad->values().begin(), grad->values().end(), 0.0);
  }
  return spec.kind == ModelKind::kSoftmaxRegression ? softmax_regression(spec, params, batch, grad)
                                                    : mlp_char_lm(spec, params, batch, grad);
}

double loss(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
  return loss_and_grad(spec, params, batch, nullptr);
}

ParamVector grad(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
  ParamVector g = ParamVector::zeros_like(params);
  loss_and_grad(spec, params, batch, &g);
  return g;
}

double finite_diff_check(const ModelSpec& spec, const ParamVector& params, const Batch& batch,
                         std::size_t probes, numkit::Rng& rng, FiniteDiffOptions options) {
  if (probes == 0) throw UsageError("finite_diff_check: probes must be >= 1");
  const ParamVector analytic = grad(spec, params, batch);
  ParamVector probe = params;
  double worst = 0.0;
  for (std::size_t p = 0; p < probes; ++p) {
    const auto i = static_cast<std::size_t>(rng.below(params.size()));
    const double original = probe[i];
    probe[i] = original + options.step;
    const double up = loss(spec, probe, batch);
    probe[i] = original - options.step;
    const double down = loss(spec, probe, batch);
    probe[i] = original;
    const double numeric = (up - down) / (2.0 * options.step);
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric), options.denominator_floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace diloco::models
