// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#include "semispec/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "semispec/numerics/kernels.hpp"

namespace semispec {

ProbVector::ProbVector(std::vector<Real> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw Error("invalid distribution: empty");
  Real total = 0;
  for (Real p : probs_) {
    if (!(p >= 0) || !std::isfinite(p)) throw Error("invalid distribution: negative or non-finite entry");
    total += p;
  }
  if (std::abs(total - Real{1}) > kProbTolerance) {
    throw Error("invalid distribution: mass " + std::to_string(total));
  }
}

ProbVector ProbVector::one_hot(std::size_t size, std::size_t index) {
  std::vector<Real> p(size, Real{0});
  p.at(index) = Real{1};
  return ProbVector(std::move(p));
}

ProbVector ProbVector::uniform(std::size_t size) {
  return ProbVector(std::vector<Real>(size, Real{1} / static_cast<Real>(size)));
}

std::size_t ProbVector::argmax() const noexcept {
  return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c;
  kernels::parallel::gemm(a, b, c);
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  Matrix c;
  kernels::parallel::gemm_nt(a, b, c);
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  Matrix c;
  kernels::parallel::gemm_tn(a, b, c);
  return c;
}

Matrix softmax_rows(const Matrix& m, Real temperature) {
  Matrix out;
  kernels::parallel::softmax_rows(m, temperature, out);
  return out;
}

ProbVector softmax(std::span<const Real> logits, Real temperature) {
  const Matrix probs = softmax_rows(Matrix::row_vector(logits), temperature);
  auto row = probs.row(0);
  return ProbVector(std::vector<Real>(row.begin(), row.end()));
}

Token sample_categorical(std::span<const Real> weights, SeededRng& rng) {
  const Real total = std::accumulate(weights.begin(), weights.end(), Real{0});
  if (!(total > 0) || !std::isfinite(total)) throw Error("invalid distribution");
  const Real u = static_cast<Real>(rng.uniform()) * total;
  Real acc = 0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k] <= 0) continue;
    last_positive = k;
    acc += weights[k];
    if (u < acc) return static_cast<Token>(k);
  }
  // Rounding left u at or above the accumulated mass.
  return static_cast<Token>(last_positive);
}

Token sample_categorical(const ProbVector& p, SeededRng& rng) {
  return sample_categorical(p.values(), rng);
}

namespace {
void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(std::string(what) + ": shape mismatch");
  }
}
}  // namespace

Real smooth_l1(const Matrix& pred, const Matrix& target) {
  require_same_shape(pred, target, "smooth_l1");
  if (pred.empty()) return 0;
  Real total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Real x = std::abs(pred.values()[i] - target.values()[i]);
    total += x < 1 ? Real{0.5} * x * x : x - Real{0.5};
  }
  return total / static_cast<Real>(pred.size());
}

Matrix smooth_l1_grad(const Matrix& pred, const Matrix& target) {
  require_same_shape(pred, target, "smooth_l1");
  Matrix g(pred.rows(), pred.cols());
  const Real n = static_cast<Real>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Real x = pred.values()[i] - target.values()[i];
    const Real dx = std::abs(x) < 1 ? x : (x > 0 ? Real{1} : Real{-1});
    g.values()[i] = dx / n;
  }
  return g;
}

Real cross_entropy(std::span<const Real> pred, std::span<const Real> target) {
  if (pred.size() != target.size()) throw Error("cross_entropy: shape mismatch");
  Real total = 0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    if (target[k] == 0) continue;
    total -= target[k] * std::log(std::max(pred[k], kLogClamp));
  }
  return total;
}

Real cross_entropy(const ProbVector& pred, const ProbVector& target) {
  return cross_entropy(pred.values(), target.values());
}

std::vector<Real> finite_diff_grad(const std::function<Real(std::span<const Real>)>& f,
                                   std::span<const Real> x, Real h) {
  if (!(h > 0)) throw Error("finite_diff_grad: step must be positive");
  std::vector<Real> point(x.begin(), x.end());
  std::vector<Real> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Real saved = point[i];
    point[i] = saved + h;
    const Real up = f(point);
    point[i] = saved - h;
    const Real down = f(point);
    point[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw Error("finite_diff_grad: non-finite evaluation at coordinate " + std::to_string(i));
    }
    grad[i] = (up - down) / (2 * h);
  }
  return grad;
}

}  // namespace semispec
