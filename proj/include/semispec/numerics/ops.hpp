// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "semispec/numerics/matrix.hpp"
#include "semispec/numerics/rng.hpp"

namespace semispec {

// Probability vector over a vocabulary: entries >= 0 summing to 1 (1e-9).
class ProbVector {
 public:
  ProbVector() = default;
  // Validates; throws Error("invalid distribution") on violation.
  explicit ProbVector(std::vector<Real> probs);

  static ProbVector one_hot(std::size_t size, std::size_t index);
  static ProbVector uniform(std::size_t size);

  std::size_t size() const noexcept { return probs_.size(); }
  Real operator[](std::size_t i) const noexcept { return probs_[i]; }
  std::span<const Real> values() const noexcept { return probs_; }
  auto begin() const noexcept { return probs_.begin(); }
  auto end() const noexcept { return probs_.end(); }
  // Lowest index of the largest entry.
  std::size_t argmax() const noexcept;

  friend bool operator==(const ProbVector&, const ProbVector&) = default;

 private:
  std::vector<Real> probs_;
};

inline constexpr Real kProbTolerance = 1e-9;
inline constexpr Real kLogClamp = 1e-12;

// Matrix products routed through the OpenMP kernels.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a * b^T
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // a^T * b

// Row softmax of x / temperature. temperature == 0 yields a one-hot row at
// the lowest-index maximum. Throws "empty input" on an empty matrix.
Matrix softmax_rows(const Matrix& m, Real temperature);
ProbVector softmax(std::span<const Real> logits, Real temperature);

// Inverse-CDF draw using one uniform from `rng`.
Token sample_categorical(const ProbVector& p, SeededRng& rng);
Token sample_categorical(std::span<const Real> weights, SeededRng& rng);

// Mean over elements of the Huber loss with transition at |x| = 1.
Real smooth_l1(const Matrix& pred, const Matrix& target);
// d smooth_l1 / d pred.
Matrix smooth_l1_grad(const Matrix& pred, const Matrix& target);

// -sum_k target[k] * log(max(pred[k], 1e-12)).
Real cross_entropy(const ProbVector& pred, const ProbVector& target);
Real cross_entropy(std::span<const Real> pred, std::span<const Real> target);

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every i.
std::vector<Real> finite_diff_grad(const std::function<Real(std::span<const Real>)>& f,
                                   std::span<const Real> x, Real h);

}  // namespace semispec
