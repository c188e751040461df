// Copyright 2026 The diloco-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "diloco/data.hpp"
#include "diloco/errors.hpp"
#include "doctest.h"

using namespace diloco;
using namespace diloco::data;

namespace {

CorpusSpec markov(std::uint64_t shift = 0, std::size_t length = 20000) {
  CorpusSpec s;
  s.vocab_size = 32;
  s.transition_seed = 1234;
  s.length = length;
  s.shift_id = shift;
  return s;
}

CorpusSpec arithmetic(std::size_t length = 50000) {
  CorpusSpec s;
  s.generator = Generator::kArithmeticExpr;
  s.vocab_size = 15;
  s.transition_seed = 99;
  s.length = length;
  s.shift_id = 1;
  return s;
}

TokenStream iota_stream(std::size_t n) {
  TokenStream t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<Token>(i);
  return t;
}

// Evaluates "a op b=c" where a and b are non-negative and c may be negative.
bool equation_holds(const std::string& eq) {
  const auto eqpos = eq.find('=');
  if (eqpos == std::string::npos || eqpos == 0) return false;
  const std::string lhs = eq.substr(0, eqpos);
  const std::string rhs = eq.substr(eqpos + 1);
  const auto oppos = lhs.find_first_of("+-*", 1);
  if (oppos == std::string::npos) return false;
  const std::string a = lhs.substr(0, oppos);
  const std::string b = lhs.substr(oppos + 1);
  auto digits = [](const std::string& s) {
    return !s.empty() && s.find_first_not_of("0123456789") == std::string::npos;
  };
  const bool neg = !rhs.empty() && rhs[0] == '-';
  const std::string mag = neg ? rhs.substr(1) : rhs;
  if (!digits(a) || !digits(b) || !digits(mag)) return false;
  const long long x = std::stoll(a), y = std::stoll(b);
  const long long c = neg ? -std::stoll(mag) : std::stoll(mag);
  switch (lhs[oppos]) {
    case '+':
      return x + y == c;
    case '-':
      return x - y == c;
    default:
      return x * y == c;
  }
}

}  // namespace

TEST_CASE("corpus generation is deterministic") {
  CHECK(generate_corpus(markov()) == generate_corpus(markov()));
  CHECK(generate_corpus(arithmetic()) == generate_corpus(arithmetic()));
  CHECK(generate_corpus(markov()).size() == 20000);
  CHECK(generate_corpus(markov(), 0) != generate_corpus(markov(), 1));
  CorpusSpec other = markov();
  other.transition_seed = 1235;
  CHECK(generate_corpus(markov()) != generate_corpus(other));
}

TEST_CASE("transition matrix rows are stochastic") {
  const auto m = markov_transition_matrix(markov());
  for (std::size_t r = 0; r < 32; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 32; ++c) {
      CHECK(m[r * 32 + c] >= 0.0);
      sum += m[r * 32 + c];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("fully sticky chain emits a constant stream") {
  CorpusSpec s = markov();
  s.stickiness = 1.0;
  const auto t = generate_corpus(s);
  for (Token x : t) CHECK(x == t.front());
  const auto shards = shard_corpus(t, 2, 4);
  const auto r = next_batch(shards[0], {}, 16, 4, 32);
  for (Token y : r.batch.targets) CHECK(y == t.front());
}

TEST_CASE("every arithmetic equation is correct") {
  const std::string text = render_arithmetic(generate_corpus(arithmetic()));
  CHECK(text.find_first_not_of("0123456789+-*=;") == std::string::npos);
  std::istringstream in(text);
  std::string eq;
  std::size_t checked = 0;
  std::set<char> ops;
  while (std::getline(in, eq, ';')) {
    if (in.eof()) break;  // trailing fragment cut by the length limit
    REQUIRE_MESSAGE(equation_holds(eq), eq);
    ops.insert(eq[eq.find_first_of("+-*", 1)]);
    ++checked;
  }
  CHECK(checked > 3000);
  CHECK(ops.size() == 3);
}

TEST_CASE("arithmetic needs its full alphabet") {
  CorpusSpec s = arithmetic();
  s.vocab_size = 14;
  try {
    generate_corpus(s);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "corpus.vocab_size");
  }
  CHECK_THROWS_AS(generator_from_string("wikipedia"), ConfigError);
}

TEST_CASE("shard shapes") {
  const auto t = iota_stream(103);
  const auto four = shard_corpus(t, 4, 3);
  REQUIRE(four.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(four[i].worker_id == i);
    CHECK(four[i].tokens.size() == 25);
    CHECK(four[i].tokens.front() == 25 * i);
  }
  const auto one = shard_corpus(t, 1, 3);
  CHECK(one.size() == 1);
  CHECK(one[0].tokens == t);
  CHECK(four[0].epoch_shuffle_seed != four[1].epoch_shuffle_seed);
  CHECK_THROWS_AS(shard_corpus(iota_stream(10), 4, 3), ConfigError);
}

TEST_CASE("shards are disjoint and cover the corpus minus the remainder") {
  for (std::size_t n : {40u, 97u, 256u}) {
    for (std::size_t k : {1u, 2u, 3u, 5u}) {
      if (n < k * 4 + k) continue;
      const auto t = iota_stream(n);
      const auto shards = shard_corpus(t, k, 4);
      std::multiset<Token> seen;
      for (const auto& s : shards) seen.insert(s.tokens.begin(), s.tokens.end());
      std::multiset<Token> expected(t.begin(), t.begin() + static_cast<long>(n - n % k));
      CHECK(seen == expected);
      CHECK(std::set<Token>(seen.begin(), seen.end()).size() == seen.size());
    }
  }
}

TEST_CASE("one epoch visits every window exactly once") {
  const auto shard = shard_corpus(iota_stream(40), 1, 3, 77)[0];
  const std::size_t windows = 37;
  BatchSampler sampler(shard, 3, 64);
  CHECK(sampler.windows() == windows);
  std::map<Token, int> visits;
  std::size_t drawn = 0;
  while (drawn < windows) {
    const std::size_t n = std::min<std::size_t>(5, windows - drawn);
    const Batch b = sampler.next(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = b.context(i);
      CHECK(c[1] == c[0] + 1);
      CHECK(b.targets[i] == c[2] + 1);
      ++visits[c[0]];
    }
    drawn += n;
  }
  CHECK(visits.size() == windows);
  for (const auto& [start, count] : visits) CHECK(count == 1);
  CHECK(sampler.cursor() == Cursor{1, 0});
  // The next epoch is a different permutation of the same windows.
  CHECK(epoch_order(shard, 3, 0) != epoch_order(shard, 3, 1));
}

TEST_CASE("batching is deterministic and wraps across epochs") {
  const auto shard = shard_corpus(generate_corpus(markov()), 4, 8, 5)[2];
  const Cursor start{0, 100};
  const auto a = next_batch(shard, start, 64, 8, 32);
  const auto b = next_batch(shard, start, 64, 8, 32);
  CHECK(a.batch.contexts == b.batch.contexts);
  CHECK(a.batch.targets == b.batch.targets);
  CHECK(a.cursor == Cursor{0, 164});

  // Stateless and stateful readers agree across an epoch boundary.
  BatchSampler sampler(shard, 8, 32, Cursor{0, shard.tokens.size() - 8 - 10});
  Cursor c = sampler.cursor();
  for (int i = 0; i < 3; ++i) {
    const auto r = next_batch(shard, c, 7, 8, 32);
    const Batch s = sampler.next(7);
    CHECK(r.batch.contexts == s.contexts);
    CHECK(r.batch.targets == s.targets);
    c = r.cursor;
    CHECK(c == sampler.cursor());
  }
  CHECK(c.epoch == 1);
  CHECK_THROWS_AS(next_batch(shard, {}, 0, 8, 32), UsageError);
}

TEST_CASE("context longer than the shard is a configuration error") {
  Shard s{0, iota_stream(5), 1};
  CHECK_THROWS_AS(next_batch(s, {}, 1, 5, 32), ConfigError);
  CHECK_THROWS_AS(BatchSampler(s, 8, 32), ConfigError);
}

TEST_CASE("shift ids produce measurably different bigram statistics") {
  const auto base = bigram_frequencies(generate_corpus(markov(0, 200000)), 32);
  const auto shifted = bigram_frequencies(generate_corpus(markov(1, 200000)), 32);
  const auto resample = bigram_frequencies(generate_corpus(markov(0, 200000), 1), 32);
  double total = 0.0;
  for (double p : base) total += p;
  CHECK(total == doctest::Approx(1.0));
  CHECK(total_variation(base, shifted) > 0.1);
  // Another sample path of the same distribution stays close.
  CHECK(total_variation(base, resample) < 0.1);

  CorpusSpec arith = arithmetic(200000);
  arith.vocab_size = 32;
  const auto mid = bigram_frequencies(generate_corpus(arith), 32);
  CHECK(total_variation(base, mid) > 0.1);
}

TEST_CASE("token files round trip") {
  const auto path = std::filesystem::temp_directory_path() / "diloco_tokens_roundtrip.bin";
  TokenStream t = generate_corpus(markov(0, 1001));
  t.push_back(65535);
  write_tokens(path, t);
  CHECK(std::filesystem::file_size(path) == 2 * t.size());
  CHECK(read_tokens(path) == t);
  std::filesystem::remove(path);
  CHECK_THROWS(read_tokens(path));
}
