// Copyright 2026 The diloco-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "diloco/models.hpp"
#include "diloco/rng.hpp"

namespace diloco::data {

using models::Batch;
using models::Token;
using TokenStream = std::vector<Token>;

enum class Generator { kMarkovChain, kArithmeticExpr };

std::string_view to_string(Generator g);
Generator generator_from_string(std::string_view s);

struct CorpusSpec {
  Generator generator = Generator::kMarkovChain;
  std::size_t vocab_size = 32;
  std::uint64_t transition_seed = 0;
  std::size_t length = 200000;
  std::uint64_t shift_id = 0;
  /// Markov chain only: P = stickiness·I + (1 − stickiness)·P_random.
  double stickiness = 0.0;
  /// Arithmetic only: operands are drawn from [0, max_operand].
  std::uint32_t max_operand = 99;
  /// When set, the training stream is read from this 16-bit token file
  /// instead of generated. The probe sample path still comes from the
  /// generator settings above.
  std::string token_file;

  bool operator==(const CorpusSpec&) const = default;
};

/// Token ids used by the arithmetic generator: digits 0-9 map to 0-9, then
/// '+', '-', '*', '=', ';' map to 10-14.
inline constexpr std::size_t kArithmeticVocab = 15;
std::string_view arithmetic_alphabet();

/// Row-stochastic (vocab × vocab) transition matrix for a markov-chain spec.
/// The seed that drives it mixes transition_seed with shift_id.
std::vector<double> markov_transition_matrix(const CorpusSpec& spec);

/// `stream` selects an independent sample path from the same distribution
/// (0 = training corpus; the engine draws its held-out probe from stream 1).
TokenStream generate_corpus(const CorpusSpec& spec, std::uint64_t stream = 0);

/// The stream a stage trains on: `token_file` if set (every id must lie
/// below vocab_size), otherwise generate_corpus(spec, 0).
TokenStream training_corpus(const CorpusSpec& spec);

/// Renders arithmetic tokens back to text, e.g. "12+7=19;".
std::string render_arithmetic(const TokenStream& tokens);

/// Little-endian 16-bit unsigned per token.
void write_tokens(const std::filesystem::path& path, const TokenStream& tokens);
TokenStream read_tokens(const std::filesystem::path& path);

struct Shard {
  std::size_t worker_id = 0;
  TokenStream tokens;
  std::uint64_t epoch_shuffle_seed = 0;
};

/// Contiguous equal partitions; the last length % k tokens are dropped.
/// Shuffle seeds are derive_seed(shuffle_seed, "shard", worker_id).
std::vector<Shard> shard_corpus(const TokenStream& corpus, std::size_t k,
                                std::size_t context_length, std::uint64_t shuffle_seed = 0);

/// Position in a shard's window stream: epoch number and index into that
/// epoch's permutation. Only ever advances.
struct Cursor {
  std::uint64_t epoch = 0;
  std::size_t index = 0;

  bool operator==(const Cursor&) const = default;
  auto operator<=>(const Cursor&) const = default;
};

/// Window p yields context tokens[p, p+C) and target tokens[p+C]; there are
/// len − C windows. Epoch e visits them in a Fisher–Yates permutation drawn
/// from Rng(epoch_shuffle_seed, e).
std::vector<std::size_t> epoch_order(const Shard& shard, std::size_t context_length,
                                     std::uint64_t epoch);

/// Stateful reader that caches the current epoch's permutation.
class BatchSampler {
 public:
  BatchSampler(Shard shard, std::size_t context_length, std::size_t vocab_size,
               Cursor cursor = {});

  Batch next(std::size_t batch_size);

  const Cursor& cursor() const noexcept { return cursor_; }
  const Shard& shard() const noexcept { return shard_; }
  std::size_t windows() const noexcept { return shard_.tokens.size() - context_length_; }

 private:
  void load_epoch();

  Shard shard_;
  std::size_t context_length_;
  std::size_t vocab_size_;
  Cursor cursor_;
  std::vector<std::size_t> order_;
  std::optional<std::uint64_t> loaded_epoch_;
};

struct BatchResult {
  Batch batch;
  Cursor cursor;
};

/// Stateless form of BatchSampler::next.
BatchResult next_batch(const Shard& shard, Cursor cursor, std::size_t batch_size,
                       std::size_t context_length, std::size_t vocab_size);

/// Bigram frequency table (row-major vocab × vocab, sums to 1).
std::vector<double> bigram_frequencies(const TokenStream& tokens, std::size_t vocab_size);
double total_variation(const std::vector<double>& p, const std::vector<double>& q);

}  // namespace diloco::data
