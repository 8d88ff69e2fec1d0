// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "semispec/draft/draft_model.hpp"
#include "semispec/target/target_model.hpp"

namespace semispec {

// Residual mass below which rejection sampling falls back to p_target.
inline constexpr Real kResidualFloor = 1e-12;

struct AcceptDecision {
  bool accepted = false;
  Real accept_prob = 0;  // min(1, p_target[t] / p_draft[t])
};

// Accepts `token` with probability min(1, p_target/p_draft) using one
// uniform draw. Throws when p_draft[token] is zero.
AcceptDecision accept_or_reject(const ProbVector& p_target, const ProbVector& p_draft, Token token,
                                SeededRng& rng);

// normalize(max(0, p_target - p_draft)), or p_target itself when the
// residual mass is below kResidualFloor.
ProbVector residual_distribution(const ProbVector& p_target, const ProbVector& p_draft);
Token residual_sample(const ProbVector& p_target, const ProbVector& p_draft, SeededRng& rng);

struct VerificationOutcome {
  std::size_t accepted = 0;            // i
  std::vector<Token> emitted;          // i accepted + one corrected or bonus token
  std::vector<Real> accept_probs;      // one per examined position
  std::optional<std::size_t> rejected_at;  // 1-based draft position
};

// Source of candidate tokens for a decode session.
class Drafter {
 public:
  virtual ~Drafter() = default;
  // Called once after the prompt is encoded and the first token sampled.
  virtual void start(const MultimodalPrompt& prompt, const EncodeResult& encoded, Token pending) = 0;
  virtual DraftProposal propose(Real temperature, SeededRng& rng) = 0;
  // After verification. `cache` is the target cache over the committed
  // prefix, `features` the target features of [pending, T'_1..T'_i] and
  // `emitted` the i + 1 tokens of the round.
  virtual void commit(const KvCache& cache, const Matrix& features,
                      std::span<const Token> emitted) = 0;
  virtual std::size_t draft_len() const = 0;
  virtual std::size_t passes_per_round() const = 0;
  // FLOPs spent outside propose() so far (prompt setup, row ingestion).
  virtual std::uint64_t overhead_flops() const = 0;
};

// The compressing semi-autoregressive draft head.
class SemiArDrafter final : public Drafter {
 public:
  SemiArDrafter(const DraftModel& draft, const TargetModel& target);

  void start(const MultimodalPrompt& prompt, const EncodeResult& encoded, Token pending) override;
  DraftProposal propose(Real temperature, SeededRng& rng) override;
  void commit(const KvCache& cache, const Matrix& features, std::span<const Token> emitted) override;
  std::size_t draft_len() const override { return draft_->config().draft_len; }
  std::size_t passes_per_round() const override { return draft_->config().passes(); }
  std::uint64_t overhead_flops() const override;

  // Current head state; empty before start().
  const std::optional<DraftState>& state() const noexcept { return state_; }

 private:
  const DraftModel* draft_;
  const TargetModel* target_;
  std::optional<DraftState> state_;
  std::uint64_t setup_flops_ = 0;
};

// Drafts with the target itself, one token per pass. Its distributions
// equal the verifier's, so every candidate is accepted.
class SelfDrafter final : public Drafter {
 public:
  SelfDrafter(const TargetModel& target, std::size_t draft_len);

  void start(const MultimodalPrompt& prompt, const EncodeResult& encoded, Token pending) override;
  DraftProposal propose(Real temperature, SeededRng& rng) override;
  void commit(const KvCache& cache, const Matrix& features, std::span<const Token> emitted) override;
  std::size_t draft_len() const override { return k_; }
  std::size_t passes_per_round() const override { return k_; }
  std::uint64_t overhead_flops() const override { return 0; }

 private:
  const TargetModel* target_;
  std::size_t k_;
  KvCache cache_;
  Token pending_ = 0;
};

// Target-side state: cache over the committed prefix and the newest
// emitted token, which the cache has not processed yet.
struct TargetSession {
  KvCache cache;
  Token pending = 0;
  std::vector<Token> emitted;
};

struct RoundReport {
  VerificationOutcome outcome;
  std::uint64_t target_flops = 0;  // verification pass
  std::uint64_t target_step_flops = 0;  // M_T: one-token step at this prefix
  std::uint64_t draft_flops = 0;   // propose + ingestion of committed rows
  std::size_t draft_passes = 0;
  double seconds = 0;
};

RoundReport spec_round(const TargetModel& target, TargetSession& session, Drafter& drafter,
                       Real temperature, SeededRng& rng);

// R = i * M_T / (M_T + (K / k') * M_D).
Real modeled_speedup(Real emitted_per_round, Real target_step_flops, Real draft_pass_flops,
                     std::size_t draft_len, std::size_t group_size);

struct DecodeMetrics {
  std::size_t rounds = 0;
  std::size_t total_emitted = 0;
  std::size_t total_accepted = 0;
  std::vector<std::size_t> accepted_per_round;
  Real avg_accept = 0;         // A: accepted drafts per round, bonus excluded
  Real emitted_per_round = 0;  // i in the modeled ratio
  Real speedup_modeled = 0;
  Real speedup_measured = 0;   // NaN unless the baseline was timed
  std::uint64_t target_flops = 0;
  std::uint64_t draft_flops = 0;        // including prompt setup
  std::uint64_t draft_round_flops = 0;  // rounds only
  std::uint64_t draft_passes = 0;
  Real mean_target_step_flops = 0;  // M_T
  Real mean_draft_pass_flops = 0;   // M_D
  double wall_time_target_baseline = 0;
  double wall_time_spec = 0;
};

struct DecodeOptions {
  // Times a target-only run of the same length to fill speedup_measured.
  bool measure_baseline = false;
};

struct DecodeResult {
  std::vector<Token> tokens;
  DecodeMetrics metrics;
};

// Emits exactly max_tokens tokens. The first comes from the prompt
// distribution; later ones from speculative rounds. Prompt prefill is
// excluded from both timed sides.
DecodeResult decode(const TargetModel& target, Drafter& drafter, const MultimodalPrompt& prompt,
                    std::size_t max_tokens, Real temperature, SeededRng& rng,
                    const DecodeOptions& options = {});

}  // namespace semispec
