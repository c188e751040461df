// Copyright 2026 The diloco-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include "diloco/numkit.hpp"
#include "diloco/rng.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace diloco;
using namespace diloco::numkit;

namespace {

LayoutPtr small_layout() {
  TensorLayout l;
  l.add("w", {2, 3}).add("b", {3}).add("s", {1});
  return std::make_shared<const TensorLayout>(std::move(l));
}

ParamVector random_vector(const LayoutPtr& layout, Rng& rng) {
  ParamVector p(layout);
  for (double& v : p.values()) v = rng.uniform(-2.0, 2.0);
  return p;
}

// Triple loop in i-j-k order, independent of the library's i-k-j kernel.
Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

// Singular values of a 2×2 matrix from the closed-form eigenvalues of MᵀM.
std::pair<double, double> singular_values_2x2(const Matrix& m) {
  const double a = m(0, 0), b = m(0, 1), c = m(1, 0), d = m(1, 1);
  const double p = a * a + c * c;  // (MᵀM)00
  const double q = a * b + c * d;  // (MᵀM)01
  const double r = b * b + d * d;  // (MᵀM)11
  const double mean = 0.5 * (p + r);
  const double disc = std::sqrt(0.25 * (p - r) * (p - r) + q * q);
  return {std::sqrt(mean + disc), std::sqrt(std::max(0.0, mean - disc))};
}

Matrix rotation(double angle) {
  return Matrix{{std::cos(angle), -std::sin(angle)}, {std::sin(angle), std::cos(angle)}};
}

double orthogonality_error(const Matrix& x) {
  const Matrix xtx = matmul(x.transposed(), x);
  return combine(1.0, xtx, -1.0, Matrix::identity(xtx.rows())).frobenius_norm();
}

}  // namespace

TEST_CASE("layout packs tensors contiguously") {
  auto layout = small_layout();
  REQUIRE(layout->tensor_count() == 3);
  CHECK(layout->entry(0).offset == 0);
  CHECK(layout->entry(1).offset == 6);
  CHECK(layout->entry(2).offset == 9);
  CHECK(layout->total_size() == 10);
  CHECK(layout->entry("b").size == 3);

  TensorLayout dup;
  dup.add("x", {2});
  CHECK_THROWS_AS(dup.add("x", {3}), StructuralError);
  CHECK_THROWS_AS(dup.add("z", {0, 3}), StructuralError);
  CHECK_THROWS_AS(layout->entry("missing"), StructuralError);
}

TEST_CASE("param vector construction checks the value count") {
  CHECK_THROWS_AS(ParamVector(small_layout(), std::vector<double>(9)), StructuralError);
  ParamVector p(small_layout(), std::vector<double>(10, 1.5));
  CHECK(p.tensor("s").size() == 1);
  CHECK(p.tensor("s")[0] == 1.5);
}

TEST_CASE("axpy examples") {
  TensorLayout l;
  l.add("x", {2});
  auto layout = std::make_shared<const TensorLayout>(l);
  const ParamVector x(layout, {1.0, 2.0});
  const ParamVector y(layout, {3.0, 4.0});

  CHECK(axpy(0.0, x, y) == y);
  CHECK(axpy(1.0, ParamVector(layout), y) == y);
  const ParamVector r = axpy(2.0, x, y);
  CHECK(r[0] == 5.0);
  CHECK(r[1] == 8.0);
  // Inputs untouched.
  CHECK(x[0] == 1.0);
  CHECK(y[1] == 4.0);

  const ParamVector other(small_layout());
  CHECK_THROWS_AS(axpy(1.0, x, other), StructuralError);
  CHECK_THROWS_AS(subtract(x, other), StructuralError);
}

TEST_CASE("vector-space axioms hold on random inputs") {
  Rng rng(7, 1);
  auto layout = small_layout();
  for (int trial = 0; trial < 200; ++trial) {
    const ParamVector a = random_vector(layout, rng);
    const ParamVector b = random_vector(layout, rng);
    const ParamVector c = random_vector(layout, rng);
    const double s = rng.uniform(-3.0, 3.0);
    const double t = rng.uniform(-3.0, 3.0);
    // (a + b) + c == a + (b + c)
    CHECK(max_abs_diff(add(add(a, b), c), add(a, add(b, c))) <= 1e-12);
    // s(a + b) == sa + sb
    CHECK(max_abs_diff(scale(s, add(a, b)), add(scale(s, a), scale(s, b))) <= 1e-12);
    // (s + t)a == sa + ta
    CHECK(max_abs_diff(scale(s + t, a), add(scale(s, a), scale(t, a))) <= 1e-12);
    // a - b + b == a, axpy(s, a, b) == sa + b
    CHECK(max_abs_diff(add(subtract(a, b), b), a) <= 1e-12);
    CHECK(max_abs_diff(axpy(s, a, b), add(scale(s, a), b)) <= 1e-12);
    CHECK(add(a, b) == add(b, a));
  }
}

TEST_CASE("digest tracks content and layout") {
  Rng rng(3);
  auto layout = small_layout();
  ParamVector a = random_vector(layout, rng);
  ParamVector b = a;
  CHECK(a.digest() == b.digest());
  b[4] = std::nextafter(b[4], 10.0);
  CHECK(a.digest() != b.digest());

  TensorLayout renamed;
  renamed.add("w2", {2, 3}).add("b", {3}).add("s", {1});
  ParamVector c(std::make_shared<const TensorLayout>(renamed),
                std::vector<double>(a.values().begin(), a.values().end()));
  CHECK(a.digest() != c.digest());
  CHECK(digest_hex(0x1234).size() == 16);
}

TEST_CASE("matmul examples") {
  const Matrix m{{1, 2, 3}, {4, 5, 6}};
  CHECK(matmul(Matrix::identity(2), m) == m);
  const Matrix r = matmul(Matrix{{1, 2}, {3, 4}}, Matrix{{1}, {1}});
  CHECK(r.rows() == 2);
  CHECK(r.cols() == 1);
  CHECK(r(0, 0) == 3.0);
  CHECK(r(1, 0) == 7.0);
  CHECK_THROWS_AS(matmul(m, m), StructuralError);
}

TEST_CASE("matmul agrees with a naive triple loop") {
  Rng rng(11);
  {
    const Matrix a = test_util::random_matrix(3, 4, rng);
    const Matrix b = test_util::random_matrix(4, 2, rng);
    CHECK(test_util::max_rel_diff(matmul(a, b), naive_matmul(a, b)) <= 1e-12);
  }
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = 1 + rng.below(16);
    const auto k = 1 + rng.below(16);
    const auto m = 1 + rng.below(16);
    const Matrix a = test_util::random_matrix(n, k, rng);
    const Matrix b = test_util::random_matrix(k, m, rng);
    CHECK(test_util::max_rel_diff(matmul(a, b), naive_matmul(a, b)) <= 1e-12);
  }
  const Matrix a = test_util::random_matrix(5, 7, rng);
  CHECK(test_util::max_rel_diff(gram(a), naive_matmul(a, a.transposed())) <= 1e-12);
}

TEST_CASE("newton-schulz keeps the identity") {
  for (std::size_t n : {1u, 2u, 4u, 8u}) {
    const Matrix x = newton_schulz_orthogonalize(Matrix::identity(n));
    CHECK(test_util::max_abs_diff(x, Matrix::identity(n)) <= 1e-6);
  }
}

TEST_CASE("newton-schulz drives diag(2, 0.5) to unit singular values") {
  const Matrix x = newton_schulz_orthogonalize(Matrix{{2.0, 0.0}, {0.0, 0.5}});
  const auto [s1, s2] = singular_values_2x2(x);
  CHECK(s1 >= 0.95);
  CHECK(s1 <= 1.05);
  CHECK(s2 >= 0.95);
  CHECK(s2 <= 1.05);
}

TEST_CASE("newton-schulz fixes rotations") {
  for (double angle : {0.3, 1.1, -2.4, 3.0}) {
    const Matrix q = rotation(angle);
    CHECK(test_util::max_abs_diff(newton_schulz_orthogonalize(q, 5), q) <= 1e-3);
  }
}

TEST_CASE("newton-schulz orthogonalizes well-conditioned matrices") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix m = test_util::well_conditioned(8, rng);
    const Matrix x = newton_schulz_orthogonalize(m, 5);
    CHECK(orthogonality_error(x) / 8.0 <= 0.05);
    // Idempotent on its own output.
    CHECK(test_util::max_abs_diff(newton_schulz_orthogonalize(x, 5), x) <= 1e-3);
  }
}

TEST_CASE("newton-schulz handles rectangular and degenerate inputs") {
  Rng rng(5);
  const Matrix tall = test_util::random_matrix(6, 3, rng);
  const Matrix x = newton_schulz_orthogonalize(tall, 8);
  CHECK(x.rows() == 6);
  CHECK(x.cols() == 3);
  // Columns become orthonormal when the matrix is tall.
  CHECK(orthogonality_error(x) <= 0.05);

  const Matrix zero(3, 4);
  CHECK(newton_schulz_orthogonalize(zero) == zero);
  CHECK_THROWS_AS(newton_schulz_orthogonalize(zero, 0), UsageError);

  const std::vector<double> values(8, 1.0);
  CHECK_THROWS_AS(Matrix::from_tensor({8}, values), StructuralError);
  CHECK_THROWS_AS(Matrix::from_tensor({2, 2, 2}, values), StructuralError);
  CHECK(Matrix::from_tensor({2, 4}, values).cols() == 4);
}

TEST_CASE("muon reference coefficients oscillate instead of converging") {
  // p(1) = a + b + c ≈ 0.701 for the tuned Muon polynomial.
  const auto& k = kMuonReferenceQuintic;
  CHECK(std::abs(k.a + k.b + k.c - 0.701) < 1e-9);
  const Matrix x = newton_schulz_orthogonalize(Matrix::identity(4), 5, k);
  CHECK(test_util::max_abs_diff(x, Matrix::identity(4)) > 1e-2);
}

TEST_CASE("rng golden sequence") {
  // Frozen from tests/oracles/rng_golden.py.
  const std::uint64_t seed42_stream0[8] = {
      0x2854029D287AD0D3ULL, 0xA80B0AD9D97F0A25ULL, 0xD419798A0671B520ULL, 0x52DA1587FB680B67ULL,
      0xDC433B3942BBBEFDULL, 0x923E30B1D13BDC53ULL, 0x378603B97E883AB5ULL, 0x0F6598DF6A0794E1ULL};
  const std::uint64_t seed42_stream7[8] = {
      0xD1C7FD4B2CB26A39ULL, 0x32D1A200703FB3E1ULL, 0x6ED7D16F9526455CULL, 0x0E2D1F79F038BCF3ULL,
      0x7B109866734517FBULL, 0x74EB7696ECE072BAULL, 0xA2ADB08088EA7C0CULL, 0x69CEF89AEDCB3C51ULL};
  Rng a(42, 0);
  Rng b(42, 7);
  for (int i = 0; i < 8; ++i) {
    CHECK(a.next_u64() == seed42_stream0[i]);
    CHECK(b.next_u64() == seed42_stream7[i]);
  }
  Rng c(0, 0);
  CHECK(c.next_u64() == 0xE04AD12F142094AEULL);
  Rng u(42, 0);
  CHECK(u.uniform() == 0.1575318940817667);
  CHECK(u.uniform() == 0.6564184934481966);
}

TEST_CASE("rng reproducibility and stream separation") {
  Rng a(123, 4);
  Rng b(123, 4);
  Rng other(123, 5);
  int same_as_other = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    same_as_other += x == other.next_u64();
  }
  CHECK(same_as_other == 0);
  CHECK(a.draws() == 1000);
}

TEST_CASE("rng bounded and real draws") {
  Rng rng(2024);
  std::vector<int> counts(7, 0);
  double sum = 0.0;
  double sq = 0.0;
  constexpr int n = 70000;
  for (int i = 0; i < n; ++i) {
    const auto k = rng.below(7);
    REQUIRE(k < 7);
    ++counts[k];
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  for (int c : counts) CHECK(std::abs(c - n / 7) < 600);
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(std::abs(sq / n - 1.0) < 0.03);
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a", 0) != derive_seed(1, "a", 1));
}
