// Copyright 2026 The diloco-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>

namespace diloco::numkit {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// 64-bit FNV-1a over a byte string.
constexpr std::uint64_t fnv1a(std::string_view s,
                              std::uint64_t h = 0xCBF29CE484222325ULL) noexcept {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Counter-based generator keyed by (seed, stream).
///
/// Draw n (1-based) is mix64(key + n * 0x9E3779B97F4A7C15) where
///   key = mix64(mix64(seed ^ 0x6A09E667F3BCC909) + mix64(stream ^ 0xBB67AE8584CAA73B)).
/// Only integer arithmetic is involved, so sequences are identical on every
/// platform. Distinct streams get unrelated keys; no coordination is needed.
/// Real-valued draws are built from the top 53 bits and never go through
/// <random> distributions, whose output is implementation-defined.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : seed_(seed), stream_(stream), key_(make_key(seed, stream)) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }
  std::uint64_t draws() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

  /// Uniform in [0, 1).
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n); n must be positive. Lemire's method with rejection.
  std::uint64_t below(std::uint64_t n) noexcept;

  /// Standard normal via Box-Muller (one value per two uniforms).
  double normal() noexcept;

 private:
  static constexpr std::uint64_t make_key(std::uint64_t seed, std::uint64_t stream) noexcept {
    return mix64(mix64(seed ^ 0x6A09E667F3BCC909ULL) + mix64(stream ^ 0xBB67AE8584CAA73BULL));
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Derives a child seed from a parent seed, a label and an index.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::string_view label,
                                    std::uint64_t index = 0) noexcept {
  return mix64(mix64(parent ^ fnv1a(label)) + index * 0xD1B54A32D192ED03ULL);
}

}  // namespace diloco::numkit
