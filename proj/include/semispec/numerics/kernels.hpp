// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "semispec/numerics/matrix.hpp"

// Dense kernels in two flavours with identical arithmetic:
//   serial::   straight loops, the reference implementation
//   parallel:: the same row computations distributed over OpenMP threads
// Every output row is computed by one thread with a fixed summation order,
// so both flavours are bit-identical and results do not depend on how many
// rows are processed in one call.
namespace semispec::kernels {

// Inputs for masked multi-head attention of `query` rows against a key/value
// history. Query row i sits at absolute position `offset + i` and attends to
// history rows [0, offset + i].
struct AttentionArgs {
  const Matrix* query = nullptr;
  const Matrix* keys = nullptr;
  const Matrix* values = nullptr;
  std::size_t n_heads = 1;
  std::size_t offset = 0;
};

namespace serial {
void gemm(const Matrix& a, const Matrix& b, Matrix& c);     // c = a * b
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c);  // c = a * b^T
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c);  // c = a^T * b
void softmax_rows(const Matrix& x, Real temperature, Matrix& out);
// `probs`, when non-null, receives one (rows x history) matrix per head.
void causal_attention(const AttentionArgs& args, Matrix& out, std::vector<Matrix>* probs);
}  // namespace serial

namespace parallel {
void gemm(const Matrix& a, const Matrix& b, Matrix& c);
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c);
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c);
void softmax_rows(const Matrix& x, Real temperature, Matrix& out);
void causal_attention(const AttentionArgs& args, Matrix& out, std::vector<Matrix>* probs);
}  // namespace parallel

}  // namespace semispec::kernels
