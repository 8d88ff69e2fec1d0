// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#include "semispec/numerics/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

namespace semispec::kernels {
namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelThreshold = 1 << 15;

template <bool Parallel, class RowFn>
void for_rows(std::size_t n, std::size_t work, RowFn&& fn) {
  if constexpr (Parallel) {
    const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) if (work >= kParallelThreshold)
    for (std::int64_t r = 0; r < count; ++r) fn(static_cast<std::size_t>(r));
  } else {
    (void)work;
    for (std::size_t r = 0; r < n; ++r) fn(r);
  }
}

template <bool Parallel>
void gemm_impl(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols() != b.rows()) throw Error("gemm: inner dimension mismatch");
  c = Matrix(a.rows(), b.cols());
  const std::size_t inner = a.cols();
  const std::size_t width = b.cols();
  for_rows<Parallel>(a.rows(), a.rows() * inner * width, [&](std::size_t i) {
    Real* out = c.row(i).data();
    const Real* arow = a.row(i).data();
    for (std::size_t k = 0; k < inner; ++k) {
      const Real s = arow[k];
      const Real* brow = b.row(k).data();
      for (std::size_t j = 0; j < width; ++j) out[j] += s * brow[j];
    }
  });
}

template <bool Parallel>
void gemm_nt_impl(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols() != b.cols()) throw Error("gemm_nt: inner dimension mismatch");
  c = Matrix(a.rows(), b.rows());
  const std::size_t inner = a.cols();
  for_rows<Parallel>(a.rows(), a.rows() * inner * b.rows(), [&](std::size_t i) {
    const Real* arow = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const Real* brow = b.row(j).data();
      Real acc = 0;
      for (std::size_t k = 0; k < inner; ++k) acc += arow[k] * brow[k];
      c(i, j) = acc;
    }
  });
}

template <bool Parallel>
void gemm_tn_impl(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.rows() != b.rows()) throw Error("gemm_tn: inner dimension mismatch");
  c = Matrix(a.cols(), b.cols());
  const std::size_t width = b.cols();
  for_rows<Parallel>(a.cols(), a.cols() * a.rows() * width, [&](std::size_t i) {
    Real* out = c.row(i).data();
    for (std::size_t r = 0; r < a.rows(); ++r) {
      const Real s = a(r, i);
      const Real* brow = b.row(r).data();
      for (std::size_t j = 0; j < width; ++j) out[j] += s * brow[j];
    }
  });
}

void softmax_row(std::span<const Real> x, Real temperature, std::span<Real> out) {
  if (temperature == Real{0}) {
    // Greedy limit: lowest index among maxima.
    const auto best = std::max_element(x.begin(), x.end()) - x.begin();
    std::fill(out.begin(), out.end(), Real{0});
    out[static_cast<std::size_t>(best)] = Real{1};
    return;
  }
  const Real peak = *std::max_element(x.begin(), x.end());
  Real total = 0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    out[j] = std::exp((x[j] - peak) / temperature);
    total += out[j];
  }
  for (auto& v : out) v /= total;
}

template <bool Parallel>
void softmax_impl(const Matrix& x, Real temperature, Matrix& out) {
  if (x.empty()) throw Error("empty input");
  if (!(temperature >= 0)) throw Error("softmax: temperature must be >= 0");
  out = Matrix(x.rows(), x.cols());
  for_rows<Parallel>(x.rows(), x.size() * 8,
                     [&](std::size_t r) { softmax_row(x.row(r), temperature, out.row(r)); });
}

template <bool Parallel>
void attention_impl(const AttentionArgs& args, Matrix& out, std::vector<Matrix>* probs) {
  const Matrix& q = *args.query;
  const Matrix& k = *args.keys;
  const Matrix& v = *args.values;
  const std::size_t d = q.cols();
  if (k.cols() != d || v.cols() != d || k.rows() != v.rows()) {
    throw Error("attention: key/value shape mismatch");
  }
  if (args.n_heads == 0 || d % args.n_heads != 0) throw Error("attention: bad head count");
  if (q.rows() > 0 && args.offset + q.rows() > k.rows()) {
    throw Error("attention: query positions exceed key history");
  }
  const std::size_t dh = d / args.n_heads;
  const Real scale = Real{1} / std::sqrt(static_cast<Real>(dh));
  out = Matrix(q.rows(), d);
  if (probs) probs->assign(args.n_heads, Matrix(q.rows(), k.rows()));

  for_rows<Parallel>(q.rows(), q.rows() * k.rows() * d * 2, [&](std::size_t i) {
    const std::size_t visible = args.offset + i + 1;
    std::vector<Real> weights(visible);
    for (std::size_t h = 0; h < args.n_heads; ++h) {
      const std::size_t c0 = h * dh;
      const Real* qrow = q.row(i).data() + c0;
      Real peak = -std::numeric_limits<Real>::infinity();
      for (std::size_t j = 0; j < visible; ++j) {
        const Real* krow = k.row(j).data() + c0;
        Real s = 0;
        for (std::size_t t = 0; t < dh; ++t) s += qrow[t] * krow[t];
        weights[j] = s * scale;
        peak = std::max(peak, weights[j]);
      }
      Real total = 0;
      for (auto& w : weights) {
        w = std::exp(w - peak);
        total += w;
      }
      Real* orow = out.row(i).data() + c0;
      for (std::size_t j = 0; j < visible; ++j) {
        const Real w = weights[j] / total;
        if (probs) (*probs)[h](i, j) = w;
        const Real* vrow = v.row(j).data() + c0;
        for (std::size_t t = 0; t < dh; ++t) orow[t] += w * vrow[t];
      }
    }
  });
}

}  // namespace

namespace serial {
void gemm(const Matrix& a, const Matrix& b, Matrix& c) { gemm_impl<false>(a, b, c); }
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) { gemm_nt_impl<false>(a, b, c); }
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) { gemm_tn_impl<false>(a, b, c); }
void softmax_rows(const Matrix& x, Real temperature, Matrix& out) {
  softmax_impl<false>(x, temperature, out);
}
void causal_attention(const AttentionArgs& args, Matrix& out, std::vector<Matrix>* probs) {
  attention_impl<false>(args, out, probs);
}
}  // namespace serial

namespace parallel {
void gemm(const Matrix& a, const Matrix& b, Matrix& c) { gemm_impl<true>(a, b, c); }
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) { gemm_nt_impl<true>(a, b, c); }
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) { gemm_tn_impl<true>(a, b, c); }
void softmax_rows(const Matrix& x, Real temperature, Matrix& out) {
  softmax_impl<true>(x, temperature, out);
}
void causal_attention(const AttentionArgs& args, Matrix& out, std::vector<Matrix>* probs) {
  attention_impl<true>(args, out, probs);
}
}  // namespace parallel

}  // namespace semispec::kernels
