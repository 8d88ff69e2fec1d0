// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "semispec/decode/spec_decode.hpp"

namespace {

using namespace semispec;
using fixtures::random_prompt;
using fixtures::tiny_draft;
using fixtures::tiny_target;

ProbVector pv(std::vector<Real> v) { return ProbVector(std::move(v)); }

ProbVector random_dist(std::size_t n, SeededRng& rng, bool allow_zero) {
  std::vector<Real> v(n);
  Real s = 0;
  for (auto& x : v) {
    x = rng.uniform();
    if (allow_zero && rng.uniform() < 0.25) x = 0;
    s += x;
  }
  if (s == 0) {
    v[0] = 1;
    s = 1;
  }
  for (auto& x : v) x /= s;
  return ProbVector(v);
}

// Proposes fixed tokens with one-hot draft distributions.
class FixedDrafter final : public Drafter {
 public:
  FixedDrafter(std::vector<Token> tokens, std::size_t vocab) : tokens_(std::move(tokens)), vocab_(vocab) {}
  void start(const MultimodalPrompt&, const EncodeResult&, Token) override {}
  DraftProposal propose(Real, SeededRng&) override {
    DraftProposal p;
    p.tokens = tokens_;
    for (Token t : tokens_) p.dists.push_back(ProbVector::one_hot(vocab_, static_cast<std::size_t>(t)));
    p.forward_passes = 1;
    return p;
  }
  void commit(const KvCache&, const Matrix&, std::span<const Token>) override {}
  std::size_t draft_len() const override { return tokens_.size(); }
  std::size_t passes_per_round() const override { return 1; }
  std::uint64_t overhead_flops() const override { return 0; }

 private:
  std::vector<Token> tokens_;
  std::size_t vocab_;
};

TEST(Accept, Examples) {
  SeededRng rng(1);
  const ProbVector p = pv({0.2, 0.4, 0.4});
  for (int i = 0; i < 50; ++i) {
    const AcceptDecision d = accept_or_reject(p, p, 1, rng);
    EXPECT_TRUE(d.accepted);
    EXPECT_EQ(d.accept_prob, 1);
  }
  EXPECT_DOUBLE_EQ(accept_or_reject(pv({0.2, 0.8}), pv({0.4, 0.6}), 0, rng).accept_prob, 0.5);
  EXPECT_EQ(accept_or_reject(pv({0.4, 0.6}), pv({0.2, 0.8}), 0, rng).accept_prob, 1);
}

TEST(Accept, RateMatchesProbability) {
  SeededRng rng(4);
  int accepted = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) accepted += accept_or_reject(pv({0.2, 0.8}), pv({0.4, 0.6}), 0, rng).accepted;
  EXPECT_NEAR(static_cast<double>(accepted) / n, 0.5, 0.015);
}

TEST(Accept, Errors) {
  SeededRng rng(1);
  try {
    accept_or_reject(pv({0.5, 0.5}), pv({1, 0}), 1, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("drafted token with zero draft probability"),
              std::string::npos);
  }
  EXPECT_THROW(accept_or_reject(pv({0.5, 0.5}), pv({0.5, 0.5}), 2, rng), Error);
  EXPECT_THROW(accept_or_reject(pv({0.5, 0.5}), pv({1, 0, 0}), 0, rng), Error);
}

TEST(Residual, Examples) {
  SeededRng rng(1);
  EXPECT_EQ(residual_distribution(pv({0.5, 0.5}), pv({1, 0})), pv({0, 1}));
  for (int i = 0; i < 20; ++i) EXPECT_EQ(residual_sample(pv({0.5, 0.5}), pv({1, 0}), rng), 1);
  const ProbVector r = residual_distribution(pv({0.7, 0.3}), pv({0.3, 0.7}));
  EXPECT_NEAR(r[0], 1, 1e-15);
  EXPECT_EQ(r[1], 0);
  // Identical distributions leave no residual mass.
  EXPECT_EQ(residual_distribution(pv({0.25, 0.75}), pv({0.25, 0.75})), pv({0.25, 0.75}));
}

TEST(Residual, ExactMixtureIdentity) {
  // Emitted law = sum_t p_d(t) a(t) [t] + (1 - sum_t p_d(t) a(t)) residual.
  SeededRng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const ProbVector pt = random_dist(4, rng, true), pd = random_dist(4, rng, true);
    std::vector<oracle::LD> law(4, 0);
    oracle::LD accept_mass = 0;
    for (std::size_t t = 0; t < 4; ++t) {
      if (pd[t] == 0) continue;
      SeededRng unused(0);
      const Real a = accept_or_reject(pt, pd, static_cast<Token>(t), unused).accept_prob;
      law[t] += static_cast<oracle::LD>(pd[t]) * a;
      accept_mass += static_cast<oracle::LD>(pd[t]) * a;
    }
    const ProbVector res = residual_distribution(pt, pd);
    for (std::size_t t = 0; t < 4; ++t) {
      law[t] += (1 - accept_mass) * res[t];
      EXPECT_NEAR(static_cast<double>(law[t]), pt[t], 1e-9);
    }
  }
}

TEST(SpecRound, SelfDraftAcceptsEverything) {
  const TargetModel target = TargetModel::create(tiny_target());
  for (Real tau : {0.0, 1.0}) {
    SelfDrafter drafter(target, 4);
    SeededRng rng(3);
    const DecodeResult r = decode(target, drafter, random_prompt(target.config(), 4, 3, 1), 21, tau, rng);
    EXPECT_EQ(r.metrics.avg_accept, 4);
    for (std::size_t a : r.metrics.accepted_per_round) EXPECT_EQ(a, 4u);
    EXPECT_EQ(r.metrics.rounds, 4u);
    EXPECT_EQ(r.metrics.draft_passes, 16u);
  }
}

TEST(SpecRound, GreedyMismatchEmitsTargetArgmax) {
  const TargetModel target = TargetModel::create(tiny_target());
  const MultimodalPrompt prompt = random_prompt(target.config(), 4, 3, 2);
  EncodeResult enc = encode_prompt(target, prompt, 0);
  TargetSession s;
  s.pending = static_cast<Token>(enc.next.argmax());
  s.cache = enc.cache;
  const VerifyResult v = verify_forward(target, s.cache, std::vector<Token>{s.pending}, 0);
  const Token want = static_cast<Token>(v.dists[1].argmax());
  FixedDrafter drafter({static_cast<Token>((want + 1) % 8), want, want}, 8);
  SeededRng rng(1);
  const RoundReport r = spec_round(target, s, drafter, 0, rng);
  EXPECT_EQ(r.outcome.accepted, 0u);
  EXPECT_EQ(r.outcome.rejected_at, 1u);
  ASSERT_EQ(r.outcome.emitted.size(), 1u);
  EXPECT_EQ(r.outcome.emitted[0], want);
  EXPECT_EQ(s.cache.length(), prompt.length() + 1);
  EXPECT_EQ(s.pending, want);
}

TEST(SpecRound, OutcomeInvariants) {
  const TargetModel target = TargetModel::create(tiny_target());
  const DraftModel draft = DraftModel::create(tiny_draft(target.config(), 2, 4, 2));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const MultimodalPrompt prompt = random_prompt(target.config(), 4, 3, seed);
    EncodeResult enc = encode_prompt(target, prompt, 1);
    SeededRng rng(seed);
    TargetSession s;
    s.pending = sample_categorical(enc.next, rng);
    s.emitted = {s.pending};
    SemiArDrafter drafter(draft, target);
    drafter.start(prompt, enc, s.pending);
    s.cache = enc.cache;
    for (int round = 0; round < 4; ++round) {
      const RoundReport r = spec_round(target, s, drafter, 1, rng);
      const VerificationOutcome& o = r.outcome;
      EXPECT_EQ(o.emitted.size(), o.accepted + 1);
      EXPECT_LE(o.accepted, 4u);
      if (o.rejected_at) {
        EXPECT_EQ(*o.rejected_at, o.accepted + 1);
        EXPECT_EQ(o.accept_probs.size(), o.accepted + 1);
      } else {
        EXPECT_EQ(o.accepted, 4u);
      }
      for (Real a : o.accept_probs) {
        EXPECT_GE(a, 0);
        EXPECT_LE(a, 1);
      }
      EXPECT_EQ(r.draft_passes, 2u);
    }
  }
}

TEST(SpecRound, RollbackMatchesFreshEncode) {
  const TargetModel target = TargetModel::create(tiny_target(6));
  const DraftModel draft = DraftModel::create(tiny_draft(target.config(), 2, 4, 1, 7));
  const MultimodalPrompt prompt = random_prompt(target.config(), 4, 3, 8);
  EncodeResult enc = encode_prompt(target, prompt, 1);
  SeededRng rng(5);
  TargetSession s;
  s.pending = sample_categorical(enc.next, rng);
  s.emitted = {s.pending};
  SemiArDrafter drafter(draft, target);
  drafter.start(prompt, enc, s.pending);
  s.cache = enc.cache;
  for (int round = 0; round < 6; ++round) {
    spec_round(target, s, drafter, 1, rng);
    // The cache covers the prompt plus every emitted token except the newest.
    MultimodalPrompt grown = prompt;
    grown.text_tokens.insert(grown.text_tokens.end(), s.emitted.begin(), s.emitted.end() - 1);
    const EncodeResult fresh = encode_prompt(target, grown, 1);
    ASSERT_EQ(s.cache.length(), grown.length());
    for (std::size_t l = 0; l < s.cache.layers.size(); ++l) {
      EXPECT_LT(max_abs_diff(s.cache.layers[l].keys, fresh.cache.layers[l].keys), 1e-8);
      EXPECT_LT(max_abs_diff(s.cache.layers[l].values, fresh.cache.layers[l].values), 1e-8);
    }
    EXPECT_LT(max_abs_diff(s.cache.last_feature, fresh.cache.last_feature), 1e-8);

    // The head state matches one rebuilt from the grown prompt.
    const DraftInputs in =
        build_draft_inputs(draft, target, fresh.bundle, grown.text_tokens, s.pending);
    const DraftState rebuilt(draft, in);
    const DraftState& live = *drafter.state();
    ASSERT_EQ(live.real_rows(), rebuilt.real_rows());
    EXPECT_EQ(live.next_position(), rebuilt.next_position());
    EXPECT_LT(max_abs_diff(live.cache()[0].keys, rebuilt.cache()[0].keys), 1e-8);
  }
}

TEST(ModeledSpeedup, Arithmetic) {
  EXPECT_NEAR(modeled_speedup(3, 10, 1, 4, 4), 30.0 / 11, 1e-12);
  EXPECT_NEAR(modeled_speedup(3, 10, 1, 4, 1), 30.0 / 14, 1e-12);
  EXPECT_THROW(modeled_speedup(3, 10, 1, 4, 3), Error);
  EXPECT_THROW(modeled_speedup(3, 0, 1, 4, 4), Error);
}

TEST(Decode, GreedyEqualsTargetGreedy) {
  const TargetModel target = TargetModel::create(tiny_target(2));
  const DraftModel draft = DraftModel::create(tiny_draft(target.config(), 2, 4, 2, 3));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const MultimodalPrompt prompt = random_prompt(target.config(), 4, 3, 100 + seed);
    SemiArDrafter drafter(draft, target);
    SeededRng a(seed), b(seed);
    const DecodeResult r = decode(target, drafter, prompt, 24, 0, a);
    EXPECT_EQ(r.tokens, autoregress(target, prompt, 24, 0, b));
  }
}

TEST(Decode, MetricsBookkeeping) {
  const TargetModel target = TargetModel::create(tiny_target(2));
  const DraftModel draft = DraftModel::create(tiny_draft(target.config(), 2, 4, 2, 3));
  SemiArDrafter drafter(draft, target);
  SeededRng rng(1);
  const DecodeResult r =
      decode(target, drafter, random_prompt(target.config(), 4, 3, 1), 17, 1, rng, {true});
  const DecodeMetrics& m = r.metrics;
  EXPECT_EQ(r.tokens.size(), 17u);
  EXPECT_EQ(m.total_emitted, 17u);
  EXPECT_GE(m.avg_accept, 0);
  EXPECT_LE(m.avg_accept, 4);
  EXPECT_NEAR(m.emitted_per_round, m.avg_accept + 1, 1e-12);
  EXPECT_EQ(m.draft_passes, 2 * m.rounds);
  EXPECT_GT(m.speedup_modeled, 0);
  EXPECT_GT(m.draft_flops, m.draft_round_flops);
  EXPECT_TRUE(std::isfinite(m.speedup_measured));
  EXPECT_GT(m.speedup_measured, 0);
  EXPECT_NEAR(m.speedup_modeled,
              modeled_speedup(m.emitted_per_round, m.mean_target_step_flops, m.mean_draft_pass_flops, 4, 2),
              1e-12);
  std::size_t sum = 0;
  for (std::size_t a : m.accepted_per_round) sum += a;
  EXPECT_EQ(sum, m.total_accepted);
}

TEST(Decode, TimingIsOptional) {
  const TargetModel target = TargetModel::create(tiny_target(2));
  SelfDrafter drafter(target, 2);
  SeededRng rng(1);
  const DecodeResult r = decode(target, drafter, random_prompt(target.config(), 4, 3, 1), 5, 1, rng);
  EXPECT_TRUE(std::isnan(r.metrics.speedup_measured));
}

TEST(Decode, Errors) {
  const TargetModel target = TargetModel::create(tiny_target(2));
  SelfDrafter drafter(target, 4);
  SeededRng rng(1);
  const MultimodalPrompt prompt = random_prompt(target.config(), 4, 3, 1);
  EXPECT_THROW(decode(target, drafter, prompt, 0, 1, rng), Error);
  EXPECT_THROW(decode(target, drafter, prompt, 90, 1, rng), Error);
  EXPECT_NO_THROW(decode(target, drafter, prompt, 96 - 7 - 3, 1, rng));
}

TEST(Decode, SingleTokenSkipsRounds) {
  const TargetModel target = TargetModel::create(tiny_target(2));
  SelfDrafter drafter(target, 2);
  SeededRng rng(1);
  const DecodeResult r = decode(target, drafter, random_prompt(target.config(), 4, 3, 1), 1, 1, rng);
  EXPECT_EQ(r.tokens.size(), 1u);
  EXPECT_EQ(r.metrics.rounds, 0u);
  EXPECT_EQ(r.metrics.speedup_modeled, 1);
}

}  // namespace
