// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "semispec/numerics/matrix.hpp"
#include "semispec/numerics/rng.hpp"

// Pre-norm transformer block shared by the target and the draft head:
//   h = x + Attn(RMSNorm(x))        causal multi-head, no biases
//   y = h + MLP(RMSNorm(h))         GELU (tanh form), biased projections
namespace semispec::model {

inline constexpr Real kNormEps = 1e-6;

struct BlockWeights {
  Matrix attn_norm;  // 1 x d
  Matrix wq, wk, wv, wo;  // d x d
  Matrix mlp_norm;  // 1 x d
  Matrix w_up;      // d x ff
  Matrix b_up;      // 1 x ff
  Matrix w_down;    // ff x d
  Matrix b_down;    // 1 x d

  // Scaled-normal init: N(0, 1/fan_in), output projections further scaled
  // by 1/sqrt(2 * depth); norm gains at 1, biases at 0.
  static BlockWeights random(std::size_t d, std::size_t ff, std::size_t depth, SeededRng& rng);
  static BlockWeights zeros_like(const BlockWeights& other);

  std::size_t d_model() const noexcept { return wq.rows(); }
  std::size_t d_ff() const noexcept { return w_up.cols(); }

  template <class Fn>
  void visit(Fn&& fn) {
    visit_fields(*this, fn);
  }
  template <class Fn>
  void visit(Fn&& fn) const {
    visit_fields(*this, fn);
  }

 private:
  template <class Self, class Fn>
  static void visit_fields(Self& self, Fn& fn) {
    fn("attn_norm", self.attn_norm);
    fn("wq", self.wq);
    fn("wk", self.wk);
    fn("wv", self.wv);
    fn("wo", self.wo);
    fn("mlp_norm", self.mlp_norm);
    fn("w_up", self.w_up);
    fn("b_up", self.b_up);
    fn("w_down", self.w_down);
    fn("b_down", self.b_down);
  }
};

// Keys and values of every processed position for one block.
struct LayerCache {
  Matrix keys;
  Matrix values;

  std::size_t length() const noexcept { return keys.rows(); }
  void truncate(std::size_t n) {
    keys.truncate_rows(n);
    values.truncate_rows(n);
  }
};

// Intermediates recorded by a forward pass for block_backward.
struct BlockTape {
  Matrix x, normed_attn, q, k, v, context, h, normed_mlp, up, act;
  std::vector<Real> inv_rms_attn, inv_rms_mlp;
  std::vector<Matrix> probs;  // per head, rows x rows
};

// Rows of `x` occupy positions cache.length() onward; their keys and values
// are appended to `cache`. A tape can only be recorded from an empty cache.
Matrix block_forward(const BlockWeights& w, std::size_t n_heads, const Matrix& x,
                     LayerCache& cache, BlockTape* tape = nullptr);

// Returns dL/dx and accumulates parameter gradients into `grads`.
Matrix block_backward(const BlockWeights& w, std::size_t n_heads, const BlockTape& tape,
                      const Matrix& dy, BlockWeights& grads);

Matrix rms_norm(const Matrix& x, const Matrix& gain, std::vector<Real>* inv_rms = nullptr);
// Returns dL/dx; adds dL/dgain into *dgain when non-null.
Matrix rms_norm_backward(const Matrix& x, const Matrix& gain, std::span<const Real> inv_rms,
                         const Matrix& dy, Matrix* dgain);

Real gelu(Real x) noexcept;
Real gelu_grad(Real x) noexcept;

// Fixed sinusoidal encodings for positions [first, first + count).
Matrix sinusoidal_positions(std::size_t first, std::size_t count, std::size_t d);

}  // namespace semispec::model
