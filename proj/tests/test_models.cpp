// Copyright 2026 The diloco-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>

#include "diloco/errors.hpp"
#include "diloco/models.hpp"
#include "doctest.h"

using namespace diloco;
using namespace diloco::models;
using numkit::ParamVector;
using numkit::Rng;

namespace {

ModelSpec softmax_spec(std::size_t vocab = 12) {
  ModelSpec s;
  s.kind = ModelKind::kSoftmaxRegression;
  s.vocab_size = vocab;
  s.context_length = 1;
  s.hidden_dims = {};
  s.init_scale = 0.5;
  s.init_seed = 17;
  return s;
}

ModelSpec mlp_spec() {
  ModelSpec s;
  s.vocab_size = 11;
  s.context_length = 3;
  s.embed_dim = 4;
  s.hidden_dims = {10, 6};
  s.init_scale = 0.5;
  s.init_seed = 23;
  return s;
}

Batch random_batch(const ModelSpec& spec, std::size_t n, Rng& rng) {
  Batch b;
  b.batch_size = n;
  b.context_length = spec.context_length;
  b.vocab_size = spec.vocab_size;
  for (std::size_t i = 0; i < n * spec.context_length; ++i)
    b.contexts.push_back(static_cast<Token>(rng.below(spec.vocab_size)));
  for (std::size_t i = 0; i < n; ++i) b.targets.push_back(static_cast<Token>(rng.below(spec.vocab_size)));
  return b;
}

ParamVector random_params(const ModelSpec& spec, Rng& rng) {
  ParamVector p(make_layout(spec));
  for (double& v : p.values()) v = rng.uniform(-1.0, 1.0);
  return p;
}

// 0.5·sin(0.7·i + 0.3), matching tests/oracles/forward_reference.py.
ParamVector pinned_params(const ModelSpec& spec) {
  ParamVector p(make_layout(spec));
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = 0.5 * std::sin(0.7 * static_cast<double>(i) + 0.3);
  return p;
}

Batch slice(const Batch& b, std::size_t begin, std::size_t end) {
  Batch out;
  out.batch_size = end - begin;
  out.context_length = b.context_length;
  out.vocab_size = b.vocab_size;
  out.contexts.assign(b.contexts.begin() + begin * b.context_length,
                      b.contexts.begin() + end * b.context_length);
  out.targets.assign(b.targets.begin() + begin, b.targets.begin() + end);
  return out;
}

}  // namespace

TEST_CASE("spec validation") {
  ModelSpec s = softmax_spec();
  s.context_length = 2;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = softmax_spec();
  s.hidden_dims = {4};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = mlp_spec();
  s.context_length = 1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = mlp_spec();
  s.hidden_dims = {};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = mlp_spec();
  s.hidden_dims = {4, 0};
  try {
    s.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "model.hidden_dims[1]");
  }
  CHECK(model_kind_from_string("mlp-char-lm") == ModelKind::kMlpCharLm);
  CHECK_THROWS_AS(model_kind_from_string("transformer"), ConfigError);
}

TEST_CASE("layout size follows the architecture") {
  ModelSpec s;
  s.vocab_size = 16;
  s.context_length = 4;
  s.hidden_dims = {32};
  for (std::size_t e : {1u, 8u, 16u}) {
    s.embed_dim = e;
    CHECK(make_layout(s)->total_size() == 16 * e + (4 * e) * 32 + 32 + 32 * 16 + 16);
  }
  const auto sl = make_layout(softmax_spec(7));
  CHECK(sl->total_size() == 7 * 7 + 7);
  CHECK(sl->entry(0).name == "out.weight");
  const auto ml = make_layout(mlp_spec());
  CHECK(ml->contains("embed"));
  CHECK(ml->contains("hidden1.weight"));
  CHECK(ml->entry("hidden1.weight").shape == numkit::Shape{10, 6});
}

TEST_CASE("init is deterministic, scaled and seed-dependent") {
  const ModelSpec s = mlp_spec();
  const ParamVector a = init_params(s);
  CHECK(a == init_params(s));
  for (double v : a.values()) {
    CHECK(v >= -s.init_scale);
    CHECK(v <= s.init_scale);
  }
  ModelSpec other = s;
  other.init_seed = 24;
  CHECK(!(a == init_params(other)));
  ModelSpec zero = s;
  zero.init_scale = 0.0;
  for (double v : init_params(zero).values()) CHECK(v == 0.0);
}

TEST_CASE("zero parameters give ln V exactly") {
  Rng rng(1);
  for (const ModelSpec& s : {softmax_spec(12), mlp_spec()}) {
    ModelSpec z = s;
    z.init_scale = 0.0;
    const Batch b = random_batch(z, 37, rng);
    CHECK(loss(z, init_params(z), b) == std::log(static_cast<double>(z.vocab_size)));
  }
}

TEST_CASE("pinned forward pass matches the numpy reference") {
  ModelSpec m;
  m.vocab_size = 5;
  m.context_length = 3;
  m.embed_dim = 2;
  m.hidden_dims = {4, 3};
  Batch b{3, 3, 5, {0, 1, 2, 4, 4, 3, 2, 0, 1}, {3, 0, 4}};
  CHECK(std::abs(loss(m, pinned_params(m), b) - 1.4863778901448297) <= 1e-14);

  const ModelSpec s = softmax_spec(4);
  Batch bs{3, 1, 4, {0, 3, 2}, {1, 1, 0}};
  CHECK(std::abs(loss(s, pinned_params(s), bs) - 1.7966254368977139) <= 1e-14);
}

TEST_CASE("duplicating a batch leaves the loss unchanged") {
  Rng rng(2);
  for (const ModelSpec& s : {softmax_spec(), mlp_spec()}) {
    const ParamVector p = random_params(s, rng);
    const Batch b = random_batch(s, 9, rng);
    const Batch bb = Batch::concat({b, b});
    CHECK(std::abs(loss(s, p, bb) - loss(s, p, b)) <= 1e-14);
  }
}

TEST_CASE("softmax bias gradient sums to zero") {
  ModelSpec s = softmax_spec(6);
  s.init_scale = 0.0;
  Rng rng(3);
  const Batch b = random_batch(s, 12, rng);
  const ParamVector g = grad(s, init_params(s), b);
  const auto gb = g.tensor("out.bias");
  CHECK(std::abs(std::accumulate(gb.begin(), gb.end(), 0.0)) <= 1e-15);
  // Each weight row also sums to zero across classes.
  const auto gw = g.tensor("out.weight");
  for (std::size_t r = 0; r < 6; ++r)
    CHECK(std::abs(std::accumulate(gw.begin() + r * 6, gw.begin() + (r + 1) * 6, 0.0)) <= 1e-15);
}

TEST_CASE("finite differences agree with backprop") {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    {
      const ModelSpec s = softmax_spec();
      const ParamVector p = random_params(s, rng);
      CHECK(finite_diff_check(s, p, random_batch(s, 16, rng), 64, rng) < 1e-6);
    }
    {
      const ModelSpec s = mlp_spec();
      const ParamVector p = random_params(s, rng);
      CHECK(finite_diff_check(s, p, random_batch(s, 16, rng), 64, rng) < 1e-4);
    }
  }
  const ModelSpec s = softmax_spec();
  CHECK_THROWS_AS(finite_diff_check(s, init_params(s), random_batch(s, 4, rng), 0, rng), UsageError);
}

TEST_CASE("gradient of a union is the mean of equal-size shard gradients") {
  Rng rng(5);
  for (const ModelSpec& s : {softmax_spec(), mlp_spec()}) {
    const ParamVector p = random_params(s, rng);
    const Batch b = random_batch(s, 24, rng);
    for (std::size_t parts : {2u, 3u, 4u}) {
      const std::size_t each = 24 / parts;
      ParamVector avg(p.layout_ptr());
      for (std::size_t i = 0; i < parts; ++i)
        numkit::axpy_inplace(1.0 / static_cast<double>(parts),
                             grad(s, p, slice(b, i * each, (i + 1) * each)), avg);
      CHECK(numkit::max_abs_diff(avg, grad(s, p, b)) <= 1e-12);
    }
  }
}

TEST_CASE("permuting examples changes neither loss nor gradient") {
  Rng rng(6);
  for (const ModelSpec& s : {softmax_spec(), mlp_spec()}) {
    const ParamVector p = random_params(s, rng);
    const Batch b = random_batch(s, 20, rng);
    std::vector<Batch> rows;
    for (std::size_t i = 0; i < 20; ++i) rows.push_back(slice(b, i, i + 1));
    for (std::size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1], rows[rng.below(i)]);
    const Batch shuffled = Batch::concat(rows);
    CHECK(std::abs(loss(s, p, shuffled) - loss(s, p, b)) <= 1e-12);
    CHECK(numkit::max_abs_diff(grad(s, p, shuffled), grad(s, p, b)) <= 1e-12);
  }
}

TEST_CASE("shape and token errors") {
  const ModelSpec s = softmax_spec(5);
  const ParamVector wrong = init_params(mlp_spec());
  Batch b{1, 1, 5, {0}, {1}};
  CHECK_THROWS_AS(loss(s, wrong, b), StructuralError);
  Batch bad{1, 1, 5, {7}, {1}};
  CHECK_THROWS_AS(loss(s, init_params(s), bad), UsageError);
  Batch empty{0, 1, 5, {}, {}};
  CHECK_THROWS_AS(loss(s, init_params(s), empty), UsageError);
}
