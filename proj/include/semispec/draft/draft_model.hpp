// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "semispec/io/config_map.hpp"
#include "semispec/io/tensor_archive.hpp"
#include "semispec/model/block.hpp"
#include "semispec/model/flops.hpp"
#include "semispec/numerics/matrix.hpp"
#include "semispec/numerics/ops.hpp"
#include "semispec/target/target_model.hpp"

namespace semispec {

struct DraftConfig {
  std::size_t compressed_tokens = 7;  // C; 0 drops the visual input
  std::size_t draft_len = 4;          // K
  std::size_t group_size = 4;         // k', tokens per draft forward pass
  std::size_t d_model = 32;
  std::size_t n_heads = 4;
  std::size_t n_layers = 1;
  std::size_t d_ff = 0;  // 0 selects 4 * d_model
  // Softmax temperature of the query/feature scores in the compressor.
  Real compress_temperature = 1;
  // false feeds all N visual feature rows to the head unchanged.
  bool compress = true;
  std::uint64_t rng_seed = 0;

  void validate() const;
  std::size_t ff() const noexcept { return d_ff == 0 ? 4 * d_model : d_ff; }
  std::size_t passes() const noexcept { return draft_len / group_size; }
  model::ForwardShape shape(std::size_t vocab) const noexcept {
    return {d_model, ff(), n_layers, vocab};
  }
  // Visual rows the head sees for N visual tokens.
  std::size_t visual_rows(std::size_t n_visual) const noexcept {
    if (n_visual == 0) return 0;
    return compress ? compressed_tokens : n_visual;
  }

  io::ConfigMap to_map() const;
  static DraftConfig from_map(const io::ConfigMap& values);
};

struct DraftWeights {
  Matrix queries;       // C x d, learned compression queries
  Matrix fuse_weight;   // 2d x d, FC over [F_T | shifted E]
  Matrix fuse_bias;     // 1 x d
  Matrix placeholders;  // K x d, one per future offset
  std::vector<model::BlockWeights> blocks;

  static DraftWeights zeros_like(const DraftWeights& other);

  template <class Fn>
  void visit(Fn&& fn) {
    visit_fields(*this, fn);
  }
  template <class Fn>
  void visit(Fn&& fn) const {
    visit_fields(*this, fn);
  }

  std::size_t parameter_count() const;
  // Concatenation of every tensor in visit order.
  std::vector<Real> flatten() const;
  void assign(std::span<const Real> flat);

 private:
  template <class Self, class Fn>
  static void visit_fields(Self& self, Fn& fn) {
    fn(std::string("queries"), self.queries);
    fn(std::string("fuse_weight"), self.fuse_weight);
    fn(std::string("fuse_bias"), self.fuse_bias);
    fn(std::string("placeholders"), self.placeholders);
    for (std::size_t l = 0; l < self.blocks.size(); ++l) {
      self.blocks[l].visit([&](const char* name, auto& m) {
        fn("block" + std::to_string(l) + "." + name, m);
      });
    }
  }
};

class DraftModel {
 public:
  static DraftModel create(const DraftConfig& cfg);
  static DraftModel from_archive(const io::TensorArchive& archive);
  io::TensorArchive to_archive() const;

  const DraftConfig& config() const noexcept { return cfg_; }
  const DraftWeights& weights() const noexcept { return weights_; }
  DraftWeights& mutable_weights() noexcept { return weights_; }

  // Throws unless widths agree with the target.
  void check_compatible(const TargetConfig& target) const;

  // Rows through every head block on top of `cache` (one LayerCache per
  // block). With `tapes` the cache must start empty.
  Matrix run_blocks(const Matrix& x, std::vector<model::LayerCache>& cache,
                    std::vector<model::BlockTape>* tapes = nullptr) const;

  // Placeholder rows [first, first + count) with positional encodings for
  // absolute positions starting at `position`.
  Matrix placeholder_rows(std::size_t first, std::size_t count, std::size_t position) const;

 private:
  DraftConfig cfg_;
  DraftWeights weights_;
};

// softmax(queries * F_V^T / temperature) * F_V, softmax over the N axis.
// Returns an empty 0 x d block when N or C is zero. `attention`, when
// non-null, receives the C x N weight matrix.
Matrix compress_visual(const Matrix& queries, const Matrix& visual_features,
                       Real temperature = 1, Matrix* attention = nullptr);

// Rowwise FC(concat(F_T, E_shift)).
Matrix fuse_textual(const Matrix& weight, const Matrix& bias, const Matrix& textual_features,
                    const Matrix& shifted_embeddings);

// Real (non-speculative) rows of the draft input sequence.
struct DraftInputs {
  Matrix visual;   // compressed (or raw) visual block
  Matrix textual;  // fused textual rows
  // Absolute target position of the newest emitted token T0, whose feature
  // the first placeholder predicts.
  std::size_t next_position = 0;
};

// Builds the draft inputs for a freshly encoded prompt. Textual rows pair
// F_j with the embedding of the token at j + 1; the last pairs with
// `pending`, the token sampled from the prompt distribution.
DraftInputs build_draft_inputs(const DraftModel& draft, const TargetModel& target,
                               const FeatureBundle& bundle, std::span<const Token> text_tokens,
                               Token pending);

// Head state over the real rows, extended as tokens are committed.
class DraftState {
 public:
  DraftState(const DraftModel& draft, const DraftInputs& inputs);

  // Appends fused rows for newly verified positions.
  void append(const Matrix& fused_rows);

  std::size_t real_rows() const noexcept;
  std::size_t next_position() const noexcept { return next_position_; }
  const std::vector<model::LayerCache>& cache() const noexcept { return cache_; }
  std::uint64_t flops() const noexcept { return flops_; }

 private:
  const DraftModel* draft_;
  std::vector<model::LayerCache> cache_;
  std::size_t next_position_ = 0;
  std::uint64_t flops_ = 0;
};

struct DraftProposal {
  std::vector<Token> tokens;      // T'_1..T'_K
  std::vector<ProbVector> dists;  // P'_1..P'_K
  Matrix hidden;                  // F'_{M+1..M+K}, K x d
  std::size_t forward_passes = 0;
  std::uint64_t flops = 0;
};

// Semi-autoregressive drafting: K / k' passes, each appending k'
// placeholders, projecting their hidden states through the target's LM head
// and sampling. Tokens of a finished group are fed back as fused rows
// (own hidden state + token embedding) before the next group.
DraftProposal propose(const DraftModel& draft, const DraftState& state, const TargetModel& target,
                      Real temperature, SeededRng& rng);
DraftProposal propose(const DraftModel& draft, const DraftInputs& inputs, const TargetModel& target,
                      Real temperature, SeededRng& rng);

// Analytic cost of one proposal (all K / k' passes, LM head included) with
// `text_rows` fused rows of context.
std::uint64_t draft_flops(const DraftConfig& cfg, std::size_t vocab, std::size_t n_visual,
                          std::size_t text_rows, bool with_compression);

// Teacher-forced training window. Group g sees fused rows
// [0, context_rows + g * k'), all built from target features and tokens.
struct TeacherForcedWindow {
  Matrix visual_features;  // F_V, N x d
  Matrix fuse_inputs;      // [F_j | E(t_{j+1})] rows, 2d wide
  std::size_t context_rows = 0;
  std::size_t next_position = 0;
};

struct DraftForward {
  Matrix hidden;  // K x d
  Matrix visual;  // head-side visual block
  Matrix compress_attention;
  Matrix fused;
  std::vector<std::vector<model::BlockTape>> group_tapes;
};

DraftForward draft_forward(const DraftModel& draft, const TeacherForcedWindow& window,
                           bool record);
// Gradients of a scalar loss w.r.t. every draft parameter given dL/dhidden.
DraftWeights draft_backward(const DraftModel& draft, const TeacherForcedWindow& window,
                            const DraftForward& forward, const Matrix& d_hidden);

}  // namespace semispec
