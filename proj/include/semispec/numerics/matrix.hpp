// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace semispec {

// Working precision. Tests and the acceptance suite require double; a float
// build is only meaningful for throughput experiments.
#ifdef SEMISPEC_SINGLE_PRECISION
using Real = float;
#else
using Real = double;
#endif

using Token = std::int32_t;

// All library errors derive from this so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, Real fill = Real{0});
  Matrix(std::size_t rows, std::size_t cols, std::vector<Real> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<Real>> rows);
  static Matrix row_vector(std::span<const Real> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  Real& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<Real> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const Real> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<Real> values() noexcept { return data_; }
  std::span<const Real> values() const noexcept { return data_; }
  Real* data() noexcept { return data_.data(); }
  const Real* data() const noexcept { return data_.data(); }

  // Row-range copy [begin, end).
  Matrix slice_rows(std::size_t begin, std::size_t end) const;
  // Appends the rows of `other`; an empty matrix adopts other's width.
  void append_rows(const Matrix& other);
  void truncate_rows(std::size_t new_rows);
  void fill(Real value);

  bool all_finite() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

// Vertical concatenation of any number of blocks with equal width (empty
// blocks are skipped).
Matrix vstack(std::initializer_list<const Matrix*> blocks);
// Horizontal concatenation of two blocks with equal row counts.
Matrix hstack(const Matrix& left, const Matrix& right);

// dst += scale * src; shapes must match.
void add_into(Matrix& dst, const Matrix& src, Real scale = Real{1});
// 1 x cols row of column sums.
Matrix column_sums(const Matrix& m);

// Largest absolute elementwise difference; throws on shape mismatch.
Real max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace semispec
