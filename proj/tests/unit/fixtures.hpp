// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "semispec/draft/draft_model.hpp"
#include "semispec/harness/experiment.hpp"
#include "semispec/target/target_model.hpp"

namespace fixtures {

using namespace semispec;

inline TargetConfig tiny_target(std::uint64_t seed = 1, std::size_t vocab = 8, std::size_t d = 8) {
  TargetConfig c;
  c.vocab_size = vocab;
  c.d_model = d;
  c.n_heads = 2;
  c.n_layers = 2;
  c.d_patch = 4;
  c.max_seq = 96;
  c.rng_seed = seed;
  return c;
}

inline DraftConfig tiny_draft(const TargetConfig& t, std::size_t c_tokens = 2, std::size_t k = 4,
                              std::size_t group = 4, std::uint64_t seed = 2) {
  DraftConfig c;
  c.compressed_tokens = c_tokens;
  c.draft_len = k;
  c.group_size = group;
  c.d_model = t.d_model;
  c.n_heads = t.n_heads;
  c.n_layers = 1;
  c.rng_seed = seed;
  return c;
}

inline MultimodalPrompt random_prompt(const TargetConfig& t, std::size_t n_visual,
                                      std::size_t n_text, std::uint64_t seed) {
  SeededRng rng(seed);
  PromptShape shape{n_visual, n_text, t.d_patch, t.vocab_size};
  return make_prompt(shape, rng);
}

}  // namespace fixtures
