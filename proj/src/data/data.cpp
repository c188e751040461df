// Copyright 2026 The diloco-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "diloco/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "diloco/errors.hpp"

namespace diloco::data {

std::string_view to_string(Generator g) {
  switch (g) {
    case Generator::kMarkovChain:
      return "markov-chain";
    case Generator::kArithmeticExpr:
      return "arithmetic-expr";
  }
  return "?";
}

Generator generator_from_string(std::string_view s) {
  if (s == "markov-chain") return Generator::kMarkovChain;
  if (s == "arithmetic-expr") return Generator::kArithmeticExpr;
  throw ConfigError("corpus.generator", "unknown generator '" + std::string(s) + "'");
}

std::string_view arithmetic_alphabet() { return "0123456789+-*=;"; }

namespace {

std::uint64_t distribution_seed(const CorpusSpec& spec) {
  return numkit::derive_seed(spec.transition_seed, "corpus-distribution", spec.shift_id);
}

void validate(const CorpusSpec& spec) {
  if (spec.length == 0) throw ConfigError("corpus.length", "must be >= 1");
  if (spec.generator == Generator::kMarkovChain) {
    if (spec.vocab_size < 2) throw ConfigError("corpus.vocab_size", "markov-chain needs >= 2");
    if (!(spec.stickiness >= 0.0 && spec.stickiness <= 1.0))
      throw ConfigError("corpus.stickiness", "must lie in [0, 1]");
  } else if (spec.vocab_size < kArithmeticVocab) {
    throw ConfigError("corpus.vocab_size", "arithmetic-expr needs a vocabulary of at least " +
                                               std::to_string(kArithmeticVocab) + " tokens");
  }
  if (spec.vocab_size > 65536) throw ConfigError("corpus.vocab_size", "must fit 16-bit ids");
}

Token arith_token(char c) {
  const auto pos = arithmetic_alphabet().find(c);
  return static_cast<Token>(pos);
}

void emit_number(TokenStream& out, long long value) {
  if (value < 0) {
    out.push_back(arith_token('-'));
    value = -value;
  }
  for (char c : std::to_string(value)) out.push_back(arith_token(c));
}

TokenStream generate_markov(const CorpusSpec& spec, std::uint64_t stream) {
  const std::size_t v = spec.vocab_size;
  const auto matrix = markov_transition_matrix(spec);
  // Cumulative rows for inverse-CDF sampling.
  std::vector<double> cdf(matrix.size());
  for (std::size_t r = 0; r < v; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < v; ++c) {
      acc += matrix[r * v + c];
      cdf[r * v + c] = acc;
    }
    cdf[r * v + v - 1] = 1.0;
  }
  numkit::Rng rng(numkit::derive_seed(distribution_seed(spec), "markov-sample"), stream);
  TokenStream out;
  out.reserve(spec.length);
  auto state = static_cast<std::size_t>(rng.below(v));
  out.push_back(static_cast<Token>(state));
  while (out.size() < spec.length) {
    const double u = rng.uniform();
    const double* row = cdf.data() + state * v;
    state = static_cast<std::size_t>(std::upper_bound(row, row + v, u) - row);
    state = std::min(state, v - 1);
    out.push_back(static_cast<Token>(state));
  }
  return out;
}

TokenStream generate_arithmetic(const CorpusSpec& spec, std::uint64_t stream) {
  numkit::Rng rng(numkit::derive_seed(distribution_seed(spec), "arithmetic-sample"), stream);
  TokenStream out;
  out.reserve(spec.length + 16);
  const std::uint64_t range = std::uint64_t{spec.max_operand} + 1;
  while (out.size() < spec.length) {
    const auto a = static_cast<long long>(rng.below(range));
    const auto b = static_cast<long long>(rng.below(range));
    const char op = "+-*"[rng.below(3)];
    const long long result = op == '+' ? a + b : op == '-' ? a - b : a * b;
    emit_number(out, a);
    out.push_back(arith_token(op));
    emit_number(out, b);
    out.push_back(arith_token('='));
    emit_number(out, result);
    out.push_back(arith_token(';'));
  }
  out.resize(spec.length);
  return out;
}

}  // namespace

std::vector<double> markov_transition_matrix(const CorpusSpec& spec) {
  validate(spec);
  const std::size_t v = spec.vocab_size;
  numkit::Rng rng(numkit::derive_seed(distribution_seed(spec), "markov-transitions"));
  std::vector<double> m(v * v);
  for (std::size_t r = 0; r < v; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < v; ++c) {
      // Log-normal weights give rows with a few dominant successors.
      m[r * v + c] = std::exp(2.5 * rng.normal());
      sum += m[r * v + c];
    }
    for (std::size_t c = 0; c < v; ++c) {
      const double random_part = m[r * v + c] / sum;
      m[r * v + c] = (1.0 - spec.stickiness) * random_part + (r == c ? spec.stickiness : 0.0);
    }
  }
  return m;
}

TokenStream generate_corpus(const CorpusSpec& spec, std::uint64_t stream) {
  validate(spec);
  return spec.generator == Generator::kMarkovChain ? generate_markov(spec, stream)
                                                   : generate_arithmetic(spec, stream);
}

TokenStream training_corpus(const CorpusSpec& spec) {
  if (spec.token_file.empty()) return generate_corpus(spec, 0);
  TokenStream tokens = read_tokens(spec.token_file);
  for (Token t : tokens)
    if (t >= spec.vocab_size)
      throw ConfigError("corpus.token_file", spec.token_file + " holds token id " +
                                                 std::to_string(t) + " outside the vocabulary");
  return tokens;
}

std::string render_arithmetic(const TokenStream& tokens) {
  std::string s;
  s.reserve(tokens.size());
  const auto alphabet = arithmetic_alphabet();
  for (Token t : tokens) s.push_back(t < alphabet.size() ? alphabet[t] : '?');
  return s;
}

void write_tokens(const std::filesystem::path& path, const TokenStream& tokens) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  std::vector<char> bytes(tokens.size() * 2);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    bytes[2 * i] = static_cast<char>(tokens[i] & 0xFF);
    bytes[2 * i + 1] = static_cast<char>(tokens[i] >> 8);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

TokenStream read_tokens(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() % 2 != 0)
    throw std::runtime_error(path.string() + ": odd byte count for 16-bit tokens");
  TokenStream tokens(bytes.size() / 2);
  for (std::size_t i = 0; i < tokens.size(); ++i)
    tokens[i] = static_cast<Token>(bytes[2 * i] | (bytes[2 * i + 1] << 8));
  return tokens;
}

std::vector<Shard> shard_corpus(const TokenStream& corpus, std::size_t k,
                                std::size_t context_length, std::uint64_t shuffle_seed) {
  if (k == 0) throw UsageError("shard_corpus: k must be >= 1");
  if (corpus.size() < k * context_length + k)
    throw ConfigError("corpus.length", "corpus of " + std::to_string(corpus.size()) +
                                           " tokens is too short for " + std::to_string(k) +
                                           " shards of context " +
                                           std::to_string(context_length));
  const std::size_t per = corpus.size() / k;
  std::vector<Shard> shards(k);
  for (std::size_t w = 0; w < k; ++w) {
    shards[w].worker_id = w;
    shards[w].tokens.assign(corpus.begin() + static_cast<std::ptrdiff_t>(w * per),
                            corpus.begin() + static_cast<std::ptrdiff_t>((w + 1) * per));
    shards[w].epoch_shuffle_seed = numkit::derive_seed(shuffle_seed, "shard", w);
  }
  return shards;
}

std::vector<std::size_t> epoch_order(const Shard& shard, std::size_t context_length,
                                     std::uint64_t epoch) {
  if (context_length >= shard.tokens.size())
    throw ConfigError("model.context_length",
                      "context length " + std::to_string(context_length) +
                          " does not fit a shard of " + std::to_string(shard.tokens.size()) +
                          " tokens");
  std::vector<std::size_t> order(shard.tokens.size() - context_length);
  std::iota(order.begin(), order.end(), std::size_t{0});
  numkit::Rng rng(shard.epoch_shuffle_seed, epoch);
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

BatchSampler::BatchSampler(Shard shard, std::size_t context_length, std::size_t vocab_size,
                           Cursor cursor)
    : shard_(std::move(shard)),
      context_length_(context_length),
      vocab_size_(vocab_size),
      cursor_(cursor) {
  if (context_length_ >= shard_.tokens.size())
    throw ConfigError("model.context_length",
                      "context length " + std::to_string(context_length_) +
                          " does not fit a shard of " + std::to_string(shard_.tokens.size()) +
                          " tokens");
}

void BatchSampler::load_epoch() {
  if (loaded_epoch_ != cursor_.epoch) {
    order_ = epoch_order(shard_, context_length_, cursor_.epoch);
    loaded_epoch_ = cursor_.epoch;
  }
}

Batch BatchSampler::next(std::size_t batch_size) {
  if (batch_size == 0) throw UsageError("next_batch: batch_size must be >= 1");
  Batch b;
  b.batch_size = batch_size;
  b.context_length = context_length_;
  b.vocab_size = vocab_size_;
  b.contexts.reserve(batch_size * context_length_);
  b.targets.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    load_epoch();
    const std::size_t p = order_[cursor_.index];
    const auto first = shard_.tokens.begin() + static_cast<std::ptrdiff_t>(p);
    b.contexts.insert(b.contexts.end(), first,
                      first + static_cast<std::ptrdiff_t>(context_length_));
    b.targets.push_back(shard_.tokens[p + context_length_]);
    if (++cursor_.index == order_.size()) {
      cursor_.index = 0;
      ++cursor_.epoch;
    }
  }
  return b;
}

BatchResult next_batch(const Shard& shard, Cursor cursor, std::size_t batch_size,
                       std::size_t context_length, std::size_t vocab_size) {
  BatchSampler sampler(shard, context_length, vocab_size, cursor);
  Batch b = sampler.next(batch_size);
  return {std::move(b), sampler.cursor()};
}

std::vector<double> bigram_frequencies(const TokenStream& tokens, std::size_t vocab_size) {
  std::vector<double> f(vocab_size * vocab_size, 0.0);
  if (tokens.size() < 2) return f;
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i)
    f[std::size_t{tokens[i]} * vocab_size + tokens[i + 1]] += 1.0;
  const double n = static_cast<double>(tokens.size() - 1);
  for (double& x : f) x /= n;
  return f;
}

double total_variation(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw StructuralError("total_variation: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

}  // namespace diloco::data
