// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

// Independent long-double reference implementations used as test oracles.
// Nothing here shares code with the library's numerics beyond reading
// weights and configs.

#pragma once

#include <map>
#include <span>
#include <vector>

#include "semispec/draft/draft_model.hpp"
#include "semispec/target/target_model.hpp"

namespace oracle {

using LD = long double;
using Vec = std::vector<LD>;
using Mat = std::vector<Vec>;

Mat to_ld(const semispec::Matrix& m);
semispec::Matrix to_matrix(const Mat& m);
LD max_abs_diff(const Mat& a, const semispec::Matrix& b);
LD max_abs_diff(const Vec& a, std::span<const semispec::Real> b);

Vec softmax(const Vec& logits, LD temperature);
Mat matmul(const Mat& a, const Mat& b);
LD smooth_l1(const Vec& pred, const Vec& target);
LD cross_entropy(const Vec& pred, const Vec& target);

// Pre-norm block over a whole sequence with a causal mask, no cache.
Mat block(const semispec::model::BlockWeights& w, std::size_t n_heads, const Mat& x);

// Features of every position of prompt + extra tokens, recomputed from
// scratch.
Mat target_features(const semispec::TargetModel& target, const semispec::MultimodalPrompt& prompt,
                    std::span<const semispec::Token> extra = {});
Mat lm_dists(const semispec::TargetModel& target, const Mat& hidden, LD temperature);

// Exact law of the first `length` generated tokens at temperature 1.
std::map<std::vector<semispec::Token>, LD> target_sequence_law(
    const semispec::TargetModel& target, const semispec::MultimodalPrompt& prompt,
    std::size_t length);

Mat compress_weights(const semispec::Matrix& queries, const semispec::Matrix& features, LD temp);
Mat compress(const semispec::Matrix& queries, const semispec::Matrix& features, LD temp);
Mat fuse(const semispec::Matrix& weight, const semispec::Matrix& bias, const Mat& features,
         const Mat& embeddings);

struct DraftOracleResult {
  Mat hidden;  // K rows
  Mat dists;   // K rows
};

// Draft outputs recomputed group by group from scratch. Group g sees the
// visual block, fused prompt rows, fused rows of earlier drafted positions
// (its own hidden state with the embedding of `tokens`) and its k'
// placeholders.
DraftOracleResult draft_outputs(const semispec::DraftModel& draft,
                                const semispec::TargetModel& target,
                                const semispec::MultimodalPrompt& prompt, semispec::Token pending,
                                std::span<const semispec::Token> tokens, LD temperature);

}  // namespace oracle
