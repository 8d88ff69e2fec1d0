// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#include "semispec/model/block.hpp"

#include <cmath>
#include <numbers>

#include "semispec/numerics/kernels.hpp"
#include "semispec/numerics/ops.hpp"

namespace semispec::model {
namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Real stddev, SeededRng& rng) {
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = static_cast<Real>(rng.normal()) * stddev;
  return m;
}

void add_row_bias(Matrix& m, const Matrix& bias) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) += bias(0, c);
  }
}

constexpr Real kGeluC = 0.044715;
const Real kSqrt2OverPi = std::sqrt(Real{2} / std::numbers::pi_v<Real>);

}  // namespace

BlockWeights BlockWeights::random(std::size_t d, std::size_t ff, std::size_t depth,
                                  SeededRng& rng) {
  const Real in_std = Real{1} / std::sqrt(static_cast<Real>(d));
  const Real ff_std = Real{1} / std::sqrt(static_cast<Real>(ff));
  const Real residual_scale = Real{1} / std::sqrt(Real{2} * static_cast<Real>(depth));
  BlockWeights w;
  w.attn_norm = Matrix(1, d, Real{1});
  w.wq = random_matrix(d, d, in_std, rng);
  w.wk = random_matrix(d, d, in_std, rng);
  w.wv = random_matrix(d, d, in_std, rng);
  w.wo = random_matrix(d, d, in_std * residual_scale, rng);
  w.mlp_norm = Matrix(1, d, Real{1});
  w.w_up = random_matrix(d, ff, in_std, rng);
  w.b_up = Matrix(1, ff);
  w.w_down = random_matrix(ff, d, ff_std * residual_scale, rng);
  w.b_down = Matrix(1, d);
  return w;
}

BlockWeights BlockWeights::zeros_like(const BlockWeights& other) {
  BlockWeights w = other;
  w.visit([](const char*, Matrix& m) { m.fill(0); });
  return w;
}

Real gelu(Real x) noexcept {
  return Real{0.5} * x * (Real{1} + std::tanh(kSqrt2OverPi * (x + kGeluC * x * x * x)));
}

Real gelu_grad(Real x) noexcept {
  const Real t = std::tanh(kSqrt2OverPi * (x + kGeluC * x * x * x));
  const Real dinner = kSqrt2OverPi * (Real{1} + Real{3} * kGeluC * x * x);
  return Real{0.5} * (Real{1} + t) + Real{0.5} * x * (Real{1} - t * t) * dinner;
}

Matrix rms_norm(const Matrix& x, const Matrix& gain, std::vector<Real>* inv_rms) {
  if (gain.cols() != x.cols()) throw Error("rms_norm: gain width mismatch");
  Matrix out(x.rows(), x.cols());
  if (inv_rms) inv_rms->resize(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    Real ss = 0;
    for (Real v : x.row(r)) ss += v * v;
    const Real inv = Real{1} / std::sqrt(ss / static_cast<Real>(x.cols()) + kNormEps);
    if (inv_rms) (*inv_rms)[r] = inv;
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(r, c) * inv * gain(0, c);
  }
  return out;
}

Matrix rms_norm_backward(const Matrix& x, const Matrix& gain, std::span<const Real> inv_rms,
                         const Matrix& dy, Matrix* dgain) {
  const auto d = static_cast<Real>(x.cols());
  Matrix dx(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const Real inv = inv_rms[r];
    Real dot = 0;
    for (std::size_t c = 0; c < x.cols(); ++c) dot += dy(r, c) * gain(0, c) * x(r, c);
    const Real coeff = dot * inv * inv * inv / d;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      dx(r, c) = inv * gain(0, c) * dy(r, c) - x(r, c) * coeff;
      if (dgain) (*dgain)(0, c) += dy(r, c) * x(r, c) * inv;
    }
  }
  return dx;
}

Matrix sinusoidal_positions(std::size_t first, std::size_t count, std::size_t d) {
  Matrix pe(count, d);
  for (std::size_t i = 0; i < count; ++i) {
    const auto pos = static_cast<Real>(first + i);
    for (std::size_t c = 0; c < d; ++c) {
      const auto pair = static_cast<Real>(c / 2 * 2);
      const Real angle = pos / std::pow(Real{10000}, pair / static_cast<Real>(d));
      pe(i, c) = (c % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

Matrix block_forward(const BlockWeights& w, std::size_t n_heads, const Matrix& x,
                     LayerCache& cache, BlockTape* tape) {
  if (tape && cache.length() != 0) throw Error("block_forward: tape requires an empty cache");
  const std::size_t offset = cache.length();

  std::vector<Real> inv_attn;
  Matrix normed_attn = rms_norm(x, w.attn_norm, &inv_attn);
  Matrix q = matmul(normed_attn, w.wq);
  Matrix k = matmul(normed_attn, w.wk);
  Matrix v = matmul(normed_attn, w.wv);
  cache.keys.append_rows(k);
  cache.values.append_rows(v);

  Matrix context;
  std::vector<Matrix> probs;
  kernels::parallel::causal_attention({&q, &cache.keys, &cache.values, n_heads, offset}, context,
                                      tape ? &probs : nullptr);
  Matrix h = matmul(context, w.wo);
  add_into(h, x);

  std::vector<Real> inv_mlp;
  Matrix normed_mlp = rms_norm(h, w.mlp_norm, &inv_mlp);
  Matrix up = matmul(normed_mlp, w.w_up);
  add_row_bias(up, w.b_up);
  Matrix act(up.rows(), up.cols());
  for (std::size_t i = 0; i < up.size(); ++i) act.values()[i] = gelu(up.values()[i]);
  Matrix y = matmul(act, w.w_down);
  add_row_bias(y, w.b_down);
  add_into(y, h);

  if (tape) {
    tape->x = x;
    tape->normed_attn = std::move(normed_attn);
    tape->q = std::move(q);
    tape->k = std::move(k);
    tape->v = std::move(v);
    tape->context = std::move(context);
    tape->h = std::move(h);
    tape->normed_mlp = std::move(normed_mlp);
    tape->up = std::move(up);
    tape->act = std::move(act);
    tape->inv_rms_attn = std::move(inv_attn);
    tape->inv_rms_mlp = std::move(inv_mlp);
    tape->probs = std::move(probs);
  }
  return y;
}

Matrix block_backward(const BlockWeights& w, std::size_t n_heads, const BlockTape& tape,
                      const Matrix& dy, BlockWeights& grads) {
  const std::size_t n = tape.x.rows();
  const std::size_t d = tape.x.cols();
  const std::size_t dh = d / n_heads;
  const Real scale = Real{1} / std::sqrt(static_cast<Real>(dh));

  // MLP branch.
  Matrix dh_res = dy;
  add_into(grads.w_down, matmul_tn(tape.act, dy));
  add_into(grads.b_down, column_sums(dy));
  Matrix d_up = matmul_nt(dy, w.w_down);
  for (std::size_t i = 0; i < d_up.size(); ++i) d_up.values()[i] *= gelu_grad(tape.up.values()[i]);
  add_into(grads.w_up, matmul_tn(tape.normed_mlp, d_up));
  add_into(grads.b_up, column_sums(d_up));
  const Matrix d_normed_mlp = matmul_nt(d_up, w.w_up);
  add_into(dh_res, rms_norm_backward(tape.h, w.mlp_norm, tape.inv_rms_mlp, d_normed_mlp,
                                     &grads.mlp_norm));

  // Attention branch.
  add_into(grads.wo, matmul_tn(tape.context, dh_res));
  const Matrix d_context = matmul_nt(dh_res, w.wo);
  Matrix dq(n, d), dk(n, d), dv(n, d);
  std::vector<Real> dp(n);
  for (std::size_t hd = 0; hd < n_heads; ++hd) {
    const Matrix& p = tape.probs[hd];
    const std::size_t c0 = hd * dh;
    for (std::size_t i = 0; i < n; ++i) {
      Real weighted = 0;
      for (std::size_t j = 0; j <= i; ++j) {
        Real s = 0;
        for (std::size_t t = 0; t < dh; ++t) s += d_context(i, c0 + t) * tape.v(j, c0 + t);
        dp[j] = s;
        weighted += p(i, j) * s;
        for (std::size_t t = 0; t < dh; ++t) dv(j, c0 + t) += p(i, j) * d_context(i, c0 + t);
      }
      for (std::size_t j = 0; j <= i; ++j) {
        const Real ds = p(i, j) * (dp[j] - weighted) * scale;
        for (std::size_t t = 0; t < dh; ++t) {
          dq(i, c0 + t) += ds * tape.k(j, c0 + t);
          dk(j, c0 + t) += ds * tape.q(i, c0 + t);
        }
      }
    }
  }
  add_into(grads.wq, matmul_tn(tape.normed_attn, dq));
  add_into(grads.wk, matmul_tn(tape.normed_attn, dk));
  add_into(grads.wv, matmul_tn(tape.normed_attn, dv));
  Matrix d_normed_attn = matmul_nt(dq, w.wq);
  add_into(d_normed_attn, matmul_nt(dk, w.wk));
  add_into(d_normed_attn, matmul_nt(dv, w.wv));

  Matrix dx = dh_res;
  add_into(dx, rms_norm_backward(tape.x, w.attn_norm, tape.inv_rms_attn, d_normed_attn,
                                 &grads.attn_norm));
  return dx;
}

}  // namespace semispec::model
