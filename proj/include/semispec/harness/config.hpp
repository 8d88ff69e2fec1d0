// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "semispec/draft/draft_model.hpp"
#include "semispec/target/target_model.hpp"
#include "semispec/training/trainer.hpp"

namespace semispec {

// Synthetic task shapes: many visual tokens with short text ("vc") or few
// visual tokens with longer text ("vit").
enum class TaskKind { kVcLike, kVitLike };

std::string task_name(TaskKind kind);
TaskKind parse_task(const std::string& name);

struct PromptShape {
  std::size_t visual_tokens = 0;
  std::size_t text_tokens = 0;
  std::size_t d_patch = 0;
  std::size_t vocab = 0;
};

PromptShape default_shape(TaskKind kind, const TargetConfig& target);

struct ExperimentConfig {
  std::string label = "semispec";
  TaskKind task = TaskKind::kVcLike;
  std::size_t visual_tokens = 0;  // 0 keeps the task default
  std::size_t text_tokens = 0;    // 0 keeps the task default
  std::vector<Real> temperatures{0, 1};
  std::vector<std::uint64_t> seeds{0};
  std::size_t num_train_prompts = 32;
  std::size_t num_eval_prompts = 8;
  std::size_t max_new_tokens = 32;
  // C = round(ratio * N); 1 feeds all N visual rows uncompressed.
  Real compression_ratio = 1.0 / 9.0;
  Real trace_temperature = 1;
  bool wall_clock = false;
  bool untrained_baseline = true;
  bool self_draft = false;

  TargetConfig target;
  DraftConfig draft;
  TrainConfig train;

  void validate() const;
  PromptShape prompt_shape() const;
  // Draft config with d_model, n_heads defaults and C resolved.
  DraftConfig resolved_draft() const;
};

// INI text with [experiment], [target], [draft] and [train] sections.
// Unknown sections or keys are errors.
ExperimentConfig parse_experiment_config(std::istream& in);
ExperimentConfig load_experiment_config(const std::string& path);
// Every key with its current value, in the same INI layout.
std::string to_ini(const ExperimentConfig& cfg);

// "0.25", "1/4" or "0".
Real parse_fraction(const std::string& text);
std::vector<std::string> split_list(const std::string& text);

}  // namespace semispec
