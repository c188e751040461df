// Copyright 2026 The diloco-desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "diloco/numkit.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include "diloco/rng.hpp"

namespace diloco::numkit {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

TensorLayout& TensorLayout::add(std::string name, Shape shape) {
  if (shape.empty()) throw StructuralError("tensor '" + name + "' has empty shape");
  if (std::any_of(shape.begin(), shape.end(), [](std::size_t d) { return d == 0; }))
    throw StructuralError("tensor '" + name + "' has a zero dimension");
  if (contains(name)) throw StructuralError("duplicate tensor name '" + name + "'");
  const std::size_t n = shape_size(shape);
  entries_.push_back(Entry{std::move(name), std::move(shape), total_, n});
  total_ += n;
  return *this;
}

const TensorLayout::Entry& TensorLayout::entry(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  throw StructuralError("no tensor named '" + std::string(name) + "'");
}

bool TensorLayout::contains(std::string_view name) const noexcept {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Entry& e) { return e.name == name; });
}

ParamVector::ParamVector(LayoutPtr layout, double fill)
    : layout_(std::move(layout)), values_(layout_->total_size(), fill) {}

ParamVector::ParamVector(LayoutPtr layout, std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (values_.size() != layout_->total_size())
    throw StructuralError("value count " + std::to_string(values_.size()) +
                          " does not match layout size " +
                          std::to_string(layout_->total_size()));
}

std::span<double> ParamVector::tensor(std::size_t i) {
  const auto& e = layout_->entry(i);
  return std::span<double>(values_).subspan(e.offset, e.size);
}

std::span<const double> ParamVector::tensor(std::size_t i) const {
  const auto& e = layout_->entry(i);
  return std::span<const double>(values_).subspan(e.offset, e.size);
}

std::span<double> ParamVector::tensor(std::string_view name) {
  const auto& e = layout_->entry(name);
  return std::span<double>(values_).subspan(e.offset, e.size);
}

std::span<const double> ParamVector::tensor(std::string_view name) const {
  const auto& e = layout_->entry(name);
  return std::span<const double>(values_).subspan(e.offset, e.size);
}

std::uint64_t ParamVector::digest() const {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto feed_u64 = [&h](std::uint64_t x) {
    for (int b = 0; b < 8; ++b) {
      h ^= (x >> (8 * b)) & 0xFFu;
      h *= 0x100000001B3ULL;
    }
  };
  for (const auto& e : layout_->entries()) {
    h = fnv1a(e.name, h);
    for (auto d : e.shape) feed_u64(d);
  }
  for (double v : values_) feed_u64(std::bit_cast<std::uint64_t>(v));
  return h;
}

bool ParamVector::operator==(const ParamVector& other) const {
  if (!same_layout(other)) return false;
  for (std::size_t i = 0; i < values_.size(); ++i)
    if (std::bit_cast<std::uint64_t>(values_[i]) != std::bit_cast<std::uint64_t>(other.values_[i]))
      return false;
  return true;
}

void require_same_layout(const ParamVector& a, const ParamVector& b, std::string_view what) {
  if (!a.same_layout(b))
    throw StructuralError(std::string(what) + ": layout mismatch (" +
                          std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                          " values)");
}

ParamVector axpy(double alpha, const ParamVector& x, const ParamVector& y) {
  require_same_layout(x, y, "axpy");
  ParamVector out = y;
  auto o = out.values();
  auto xv = x.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = alpha * xv[i] + o[i];
  return out;
}

void axpy_inplace(double alpha, const ParamVector& x, ParamVector& y) {
  require_same_layout(x, y, "axpy");
  auto yv = y.values();
  auto xv = x.values();
  for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = alpha * xv[i] + yv[i];
}

ParamVector add(const ParamVector& a, const ParamVector& b) {
  require_same_layout(a, b, "add");
  ParamVector out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return out;
}

ParamVector subtract(const ParamVector& a, const ParamVector& b) {
  require_same_layout(a, b, "subtract");
  ParamVector out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return out;
}

ParamVector scale(double alpha, const ParamVector& x) {
  ParamVector out = x;
  for (double& v : out.values()) v *= alpha;
  return out;
}

double dot(const ParamVector& a, const ParamVector& b) {
  require_same_layout(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(const ParamVector& x) {
  double s = 0.0;
  for (double v : x.values()) s += v * v;
  return std::sqrt(s);
}

double distance(const ParamVector& a, const ParamVector& b) {
  require_same_layout(a, b, "distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

double max_abs_diff(const ParamVector& a, const ParamVector& b) {
  require_same_layout(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::string digest_hex(std::uint64_t digest) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
  return buf;
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols)
    throw StructuralError("matrix data size does not match " + std::to_string(rows) + "x" +
                          std::to_string(cols));
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw StructuralError("ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_tensor(const Shape& shape, std::span<const double> values) {
  if (shape.size() != 2)
    throw StructuralError("expected a 2-D tensor, got shape " + shape_string(shape));
  return Matrix(shape[0], shape[1], std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

double Matrix::frobenius_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw StructuralError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                          std::to_string(b.rows()) + " differ");
  Matrix out(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* orow = &out(i, 0);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const double* brow = b.data().data() + k * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix gram(const Matrix& a) {
  const std::size_t n = a.rows();
  const std::size_t m = a.cols();
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < m; ++k) s += a(i, k) * a(j, k);
      out(i, j) = s;
      out(j, i) = s;
    }
  }
  return out;
}

Matrix combine(double alpha, const Matrix& a, double beta, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw StructuralError("combine: shape mismatch");
  Matrix out(a.rows(), a.cols());
  auto o = out.data();
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = alpha * av[i] + beta * bv[i];
  return out;
}

Matrix newton_schulz_orthogonalize(const Matrix& m, int iterations,
                                   NewtonSchulzCoefficients coeffs) {
  if (iterations < 1) throw UsageError("newton_schulz_orthogonalize: iterations must be >= 1");
  const bool tall = m.rows() > m.cols();
  Matrix x = tall ? m.transposed() : m;
  const double scale = 1.0 / (x.frobenius_norm() + 1e-7);
  for (double& v : x.data()) v *= scale;
  for (int it = 0; it < iterations; ++it) {
    const Matrix a = gram(x);
    const Matrix b = combine(coeffs.b, a, coeffs.c, matmul(a, a));
    x = combine(coeffs.a, x, 1.0, matmul(b, x));
  }
  return tall ? x.transposed() : x;
}

}  // namespace diloco::numkit
