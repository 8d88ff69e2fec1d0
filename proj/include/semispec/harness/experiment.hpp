// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "semispec/decode/spec_decode.hpp"
#include "semispec/harness/config.hpp"
#include "semispec/harness/report.hpp"

namespace semispec {

// Stream ids split off each root seed.
enum SeedStream : std::uint64_t {
  kStreamTarget = 1,
  kStreamDraft = 2,
  kStreamTrainPrompts = 3,
  kStreamEvalPrompts = 4,
  kStreamShuffle = 5,
  kStreamDecode = 6,
};

// Patch rows are one of 4 per-prompt N(0, 1) prototypes plus 0.1 * N(0, 1)
// noise; text tokens are uniform over the vocabulary.
MultimodalPrompt make_prompt(const PromptShape& shape, SeededRng& rng);
// Prompt i draws from rng.split(i). Throws "count >= 1" when count is 0.
std::vector<MultimodalPrompt> gen_prompts(const PromptShape& shape, std::size_t count,
                                          const SeededRng& rng);

// {"visual": [[...], ...], "text": [...]} per line.
void write_prompts(const std::vector<MultimodalPrompt>& prompts, std::ostream& out);
std::vector<MultimodalPrompt> read_prompts(std::istream& in);

TargetModel build_target(const ExperimentConfig& cfg, std::uint64_t root_seed);
DraftModel build_draft(const ExperimentConfig& cfg, std::uint64_t root_seed);

// Trains `draft` on traces of the training prompts. `on_epoch`, when set,
// sees each epoch's statistics.
void train_draft(DraftModel& draft, const TargetModel& target, const ExperimentConfig& cfg,
                 const std::vector<MultimodalPrompt>& prompts, std::uint64_t root_seed,
                 const std::function<void(const EpochStats&)>& on_epoch = {});

using DrafterFactory = std::function<std::unique_ptr<Drafter>()>;

struct EvalSummary {
  std::size_t rounds = 0;
  Real avg_accept = 0;
  Real emitted_per_round = 0;
  Real speedup_modeled = 0;
  Real speedup_measured = 0;  // NaN without wall-clock timing
  Real draft_passes_per_round = 0;
  std::vector<DecodeResult> per_prompt;
};

// Decodes every prompt with a fresh drafter. Prompt i uses
// rng.split(i), so results do not depend on thread count.
EvalSummary evaluate(const TargetModel& target, const DrafterFactory& make_drafter,
                     const std::vector<MultimodalPrompt>& prompts, std::size_t max_new_tokens,
                     Real temperature, const SeededRng& rng, bool wall_clock);

// Full pipeline per seed: build target, train the draft, decode held-out
// prompts at each temperature. Returns per-seed rows plus aggregates.
// Progress goes to `log` when non-null.
ResultTable run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);

enum class AblationAxis { kDraftLen, kCompressionRatio, kGroupSize, kDraftScale };

AblationAxis parse_axis(const std::string& name);
std::string axis_name(AblationAxis axis);
// Applies one axis value to a copy of `cfg`; throws on malformed values.
ExperimentConfig apply_axis(const ExperimentConfig& cfg, AblationAxis axis,
                            const std::string& value);

// One run_experiment per value under shared seeds, labelled "axis=value".
// Invalid combinations yield a "skipped" row instead of aborting.
ResultTable ablate(const ExperimentConfig& cfg, AblationAxis axis,
                   const std::vector<std::string>& values, std::ostream* log = nullptr);

}  // namespace semispec
