// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#include "semispec/model/flops.hpp"

namespace semispec::model {

std::uint64_t block_params(const ForwardShape& s) noexcept {
  const std::uint64_t d = s.d_model;
  const std::uint64_t ff = s.d_ff;
  return 4 * d * d + 2 * d * ff + ff + d;
}

FlopBreakdown forward_flops(const ForwardShape& shape, std::size_t prefix_len,
                            std::size_t new_tokens, std::size_t lm_rows) {
  FlopBreakdown out;
  if (new_tokens == 0) return out;
  const std::uint64_t n = new_tokens;
  const std::uint64_t d = shape.d_model;
  const std::uint64_t per_layer =
      n * 2 * block_params(shape) + 4 * d * (n * prefix_len + n * (n + 1) / 2);
  out.layers = shape.n_layers * per_layer;
  out.lm_head = 2 * d * shape.vocab * lm_rows;
  return out;
}

}  // namespace semispec::model
