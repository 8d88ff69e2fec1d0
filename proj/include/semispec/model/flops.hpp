// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>

namespace semispec::model {

// Dimensions that determine forward cost.
struct ForwardShape {
  std::size_t d_model = 0;
  std::size_t d_ff = 0;
  std::size_t n_layers = 0;
  std::size_t vocab = 0;
};

struct FlopBreakdown {
  std::uint64_t layers = 0;
  std::uint64_t lm_head = 0;

  std::uint64_t total() const noexcept { return layers + lm_head; }
  FlopBreakdown& operator+=(const FlopBreakdown& o) noexcept {
    layers += o.layers;
    lm_head += o.lm_head;
    return *this;
  }
  friend bool operator==(const FlopBreakdown&, const FlopBreakdown&) = default;
};

// Analytic multiply-add accounting (one multiply-add = 2 FLOPs).
//
// Per layer and per new token j (0-based) at context c_j = prefix_len + j + 1:
//   2 * P_block + 4 * d * c_j
// where P_block = 4 d^2 (q, k, v, o) + 2 d ff + ff + d (MLP with biases) and
// the 4 d c_j term covers attention scores and the weighted value sum.
// Summed over j this is
//   n_layers * (new * 2 P_block + 4 d (new * prefix_len + new (new + 1) / 2)).
// The LM head costs 2 d V per row that needs a distribution. Norms, softmax
// and residual adds are not counted.
FlopBreakdown forward_flops(const ForwardShape& shape, std::size_t prefix_len,
                            std::size_t new_tokens, std::size_t lm_rows);

std::uint64_t block_params(const ForwardShape& shape) noexcept;

}  // namespace semispec::model
