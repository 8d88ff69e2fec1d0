// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#include "semispec/numerics/matrix.hpp"

#include <algorithm>
#include <cmath>

namespace semispec {

Matrix::Matrix(std::size_t rows, std::size_t cols, Real fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<Real> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw Error("matrix data length " + std::to_string(data_.size()) + " != " +
                std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<Real>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<Real> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw Error("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::row_vector(std::span<const Real> values) {
  return Matrix(1, values.size(), std::vector<Real>(values.begin(), values.end()));
}

Matrix Matrix::slice_rows(std::size_t begin, std::size_t end) const {
  if (begin > end || end > rows_) throw Error("slice_rows out of range");
  return Matrix(end - begin, cols_,
                std::vector<Real>(data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_),
                                  data_.begin() + static_cast<std::ptrdiff_t>(end * cols_)));
}

void Matrix::append_rows(const Matrix& other) {
  if (other.rows_ == 0) return;
  if (rows_ == 0) cols_ = other.cols_;
  if (other.cols_ != cols_) throw Error("append_rows: width mismatch");
  data_.insert(data_.end(), other.data_.begin(), other.data_.end());
  rows_ += other.rows_;
}

void Matrix::truncate_rows(std::size_t new_rows) {
  if (new_rows > rows_) throw Error("truncate_rows beyond current size");
  rows_ = new_rows;
  data_.resize(rows_ * cols_);
}

void Matrix::fill(Real value) { std::fill(data_.begin(), data_.end(), value); }

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
}

Matrix vstack(std::initializer_list<const Matrix*> blocks) {
  Matrix out;
  for (const Matrix* b : blocks) out.append_rows(*b);
  return out;
}

Matrix hstack(const Matrix& left, const Matrix& right) {
  if (left.rows() != right.rows()) throw Error("hstack: row mismatch");
  Matrix out(left.rows(), left.cols() + right.cols());
  for (std::size_t r = 0; r < left.rows(); ++r) {
    auto dst = out.row(r);
    std::copy(left.row(r).begin(), left.row(r).end(), dst.begin());
    std::copy(right.row(r).begin(), right.row(r).end(),
              dst.begin() + static_cast<std::ptrdiff_t>(left.cols()));
  }
  return out;
}

void add_into(Matrix& dst, const Matrix& src, Real scale) {
  if (dst.rows() != src.rows() || dst.cols() != src.cols()) throw Error("add_into: shape mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) dst.values()[i] += scale * src.values()[i];
}

Matrix column_sums(const Matrix& m) {
  Matrix out(1, m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out(0, c) += m(r, c);
  }
  return out;
}

Real max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error("max_abs_diff: shape mismatch");
  Real worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
  }
  return worst;
}

}  // namespace semispec
