// Copyright 2026 The diloco-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>

#include "diloco/numkit.hpp"
#include "diloco/rng.hpp"

namespace test_util {

using diloco::numkit::Matrix;
using diloco::numkit::Rng;

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(-1.0, 1.0);
  return m;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

inline double max_rel_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    const double denom = std::max({std::abs(a.data()[i]), std::abs(b.data()[i]), 1e-300});
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]) / denom);
  }
  return m;
}

/// Modified Gram–Schmidt on a random Gaussian matrix.
inline Matrix random_orthogonal(std::size_t n, Rng& rng) {
  Matrix q(n, n);
  for (double& v : q.data()) v = rng.normal();
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t p = 0; p < c; ++p) {
      double d = 0.0;
      for (std::size_t r = 0; r < n; ++r) d += q(r, c) * q(r, p);
      for (std::size_t r = 0; r < n; ++r) q(r, c) -= d * q(r, p);
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < n; ++r) norm += q(r, c) * q(r, c);
    norm = std::sqrt(norm);
    for (std::size_t r = 0; r < n; ++r) q(r, c) /= norm;
  }
  return q;
}

/// U · diag(s) · Vᵀ with singular values uniform in [1, 3] (condition number ≤ 3).
inline Matrix well_conditioned(std::size_t n, Rng& rng) {
  const Matrix u = random_orthogonal(n, rng);
  Matrix v = random_orthogonal(n, rng);
  Matrix us = u;
  for (std::size_t c = 0; c < n; ++c) {
    const double s = rng.uniform(1.0, 3.0);
    for (std::size_t r = 0; r < n; ++r) us(r, c) *= s;
  }
  return diloco::numkit::matmul(us, v.transposed());
}

}  // namespace test_util
