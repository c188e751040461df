// Copyright 2026 The diloco-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "diloco/errors.hpp"

namespace diloco::numkit {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Ordered, named tensors packed back to back into one flat buffer.
class TensorLayout {
 public:
  struct Entry {
    std::string name;
    Shape shape;
    std::size_t offset = 0;
    std::size_t size = 0;

    bool operator==(const Entry&) const = default;
  };

  TensorLayout() = default;

  /// Appends a tensor. Names must be unique and every dimension positive.
  TensorLayout& add(std::string name, Shape shape);

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t total_size() const noexcept { return total_; }
  std::size_t tensor_count() const noexcept { return entries_.size(); }

  const Entry& entry(std::size_t i) const { return entries_.at(i); }
  const Entry& entry(std::string_view name) const;
  bool contains(std::string_view name) const noexcept;

  bool operator==(const TensorLayout&) const = default;

 private:
  std::vector<Entry> entries_;
  std::size_t total_ = 0;
};

using LayoutPtr = std::shared_ptr<const TensorLayout>;

/// Flat 64-bit parameter storage with an attached layout. Copies share the
/// (immutable) layout and own their values.
class ParamVector {
 public:
  ParamVector() : layout_(std::make_shared<const TensorLayout>()) {}
  explicit ParamVector(LayoutPtr layout, double fill = 0.0);
  ParamVector(LayoutPtr layout, std::vector<double> values);

  static ParamVector zeros_like(const ParamVector& other) {
    return ParamVector(other.layout_ptr(), 0.0);
  }

  const TensorLayout& layout() const noexcept { return *layout_; }
  const LayoutPtr& layout_ptr() const noexcept { return layout_; }
  bool same_layout(const ParamVector& other) const noexcept {
    return layout_ == other.layout_ || *layout_ == *other.layout_;
  }

  std::size_t size() const noexcept { return values_.size(); }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  std::span<double> tensor(std::size_t i);
  std::span<const double> tensor(std::size_t i) const;
  std::span<double> tensor(std::string_view name);
  std::span<const double> tensor(std::string_view name) const;

  /// 64-bit FNV-1a over tensor names, shapes and the little-endian IEEE-754
  /// bytes of every value.
  std::uint64_t digest() const;

  /// Bitwise equality of layout and values.
  bool operator==(const ParamVector& other) const;

 private:
  LayoutPtr layout_;
  std::vector<double> values_;
};

void require_same_layout(const ParamVector& a, const ParamVector& b, std::string_view what);

/// alpha * x + y
ParamVector axpy(double alpha, const ParamVector& x, const ParamVector& y);
/// y += alpha * x, in place.
void axpy_inplace(double alpha, const ParamVector& x, ParamVector& y);
ParamVector add(const ParamVector& a, const ParamVector& b);
/// a - b
ParamVector subtract(const ParamVector& a, const ParamVector& b);
ParamVector scale(double alpha, const ParamVector& x);
double dot(const ParamVector& a, const ParamVector& b);
double norm2(const ParamVector& x);
/// ‖a - b‖₂ without materializing the difference.
double distance(const ParamVector& a, const ParamVector& b);
double max_abs_diff(const ParamVector& a, const ParamVector& b);

std::string digest_hex(std::uint64_t digest);

/// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  /// Copies a tensor of rank 2; any other rank is a StructuralError.
  static Matrix from_tensor(const Shape& shape, std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  Matrix transposed() const;
  double frobenius_norm() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
/// a · aᵀ
Matrix gram(const Matrix& a);
/// alpha * a + beta * b, same shape.
Matrix combine(double alpha, const Matrix& a, double beta, const Matrix& b);

/// Coefficients of X ← aX + b(XXᵀ)X + c(XXᵀ)²X.
struct NewtonSchulzCoefficients {
  double a;
  double b;
  double c;

  bool operator==(const NewtonSchulzCoefficients&) const = default;
};

/// (15/8, -10/8, 3/8): p(1) = 1 with p'(1) = p''(1) = 0, so singular values
/// converge to 1 and orthogonal matrices are fixed points.
inline constexpr NewtonSchulzCoefficients kConvergentQuintic{1.875, -1.25, 0.375};

/// The tuned coefficients popularized by the Muon optimizer. Faster growth of
/// small singular values, but p(1) ≈ 0.701: the iterate oscillates in roughly
/// [0.7, 1.15] rather than converging.
inline constexpr NewtonSchulzCoefficients kMuonReferenceQuintic{3.4445, -4.7750, 2.0315};

/// Drives the singular values of `m` toward 1. The input is scaled by
/// 1 / (‖m‖_F + 1e-7) first; tall inputs are iterated in transposed form. A
/// zero matrix is returned unchanged.
Matrix newton_schulz_orthogonalize(const Matrix& m, int iterations = 5,
                                   NewtonSchulzCoefficients coeffs = kConvergentQuintic);

}  // namespace diloco::numkit
