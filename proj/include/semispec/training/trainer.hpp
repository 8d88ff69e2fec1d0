// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "semispec/draft/draft_model.hpp"
#include "semispec/target/target_model.hpp"

namespace semispec {

// A target-generated sequence. Position p of the full sequence (visual rows
// first, then prompt text, then generated tokens) has feature row p and
// next-token distribution dists[p].
struct TrainTrace {
  MultimodalPrompt prompt;
  std::vector<Token> generated;
  Matrix features;                // length() x d
  std::vector<ProbVector> dists;  // length() entries, temperature 1

  std::size_t length() const noexcept { return prompt.visual_count() + text_length(); }
  std::size_t text_length() const noexcept {
    return prompt.text_tokens.size() + generated.size();
  }
  // Token at absolute position p (p >= visual_count()).
  Token token_at(std::size_t p) const;
};

// Raised when a training step produces a non-finite loss.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

enum class OptimizerKind { kAdam, kSgd };

struct TrainConfig {
  Real alpha = 0.1;
  Real learning_rate = 1e-3;
  std::size_t batch_size = 8;
  std::size_t epochs = 10;
  std::size_t max_seq_len = 128;
  // Tokens generated per trace before truncation to max_seq_len.
  std::size_t trace_tokens = 32;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  Real adam_beta1 = 0.9;
  Real adam_beta2 = 0.999;
  Real adam_eps = 1e-8;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

std::string optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& name);

using PromptGenerator = std::function<MultimodalPrompt(SeededRng&)>;

// Runs the target on each prompt. Trace i samples from rng.split(i), so
// traces are independent of thread scheduling.
std::vector<TrainTrace> collect_traces(const TargetModel& target,
                                       const std::vector<MultimodalPrompt>& prompts,
                                       Real temperature, const TrainConfig& cfg,
                                       const SeededRng& rng);
// Same on `count` prompts from `generate`; prompt i is drawn from
// rng.split(0).split(i) and sampling uses rng.split(1).
std::vector<TrainTrace> collect_traces(const TargetModel& target, const PromptGenerator& generate,
                                       std::size_t count, Real temperature, const TrainConfig& cfg,
                                       const SeededRng& rng);

// Teacher-forced window whose pending token sits at absolute position
// `position`: the head sees rows before it and predicts features and
// distributions of positions [position, position + K).
TeacherForcedWindow make_window(const DraftModel& draft, const TargetModel& target,
                                const TrainTrace& trace, std::size_t position);

// First and one-past-last window position used for training a trace.
std::pair<std::size_t, std::size_t> window_range(const DraftConfig& cfg, const TrainTrace& trace);

struct LossBreakdown {
  Real regression = 0;
  Real classification = 0;  // before the alpha weight
  Real total = 0;
};

LossBreakdown loss_on_window(const DraftModel& draft, const TargetModel& target,
                             const TrainTrace& trace, std::size_t position, const TrainConfig& cfg);

struct LossAndGrad {
  LossBreakdown loss;
  DraftWeights grad;
};

LossAndGrad loss_and_grad(const DraftModel& draft, const TargetModel& target,
                          const TrainTrace& trace, std::size_t position, const TrainConfig& cfg);

struct EpochStats {
  std::size_t epoch = 0;
  std::size_t steps = 0;  // optimizer steps so far
  LossBreakdown mean;     // averaged over every window of the epoch
};

// Owns optimizer state for one draft. The target is only read.
class DraftTrainer {
 public:
  DraftTrainer(DraftModel& draft, const TargetModel& target, TrainConfig cfg);

  EpochStats train_epoch(const std::vector<TrainTrace>& traces, SeededRng& rng);
  // Mean loss over every window without updating.
  LossBreakdown evaluate(const std::vector<TrainTrace>& traces) const;

  std::size_t steps() const noexcept { return steps_; }

 private:
  void apply(const std::vector<Real>& grad);

  DraftModel* draft_;
  const TargetModel* target_;
  TrainConfig cfg_;
  std::vector<Real> m_, v_;
  std::size_t steps_ = 0;
  std::size_t epochs_ = 0;
};

// One JSON object per line: epoch, step, reg_loss, cls_loss, total.
std::string train_log_line(const EpochStats& stats);

}  // namespace semispec
