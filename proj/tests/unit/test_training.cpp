// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "semispec/training/trainer.hpp"

namespace {

using namespace semispec;
using fixtures::random_prompt;
using fixtures::tiny_draft;
using fixtures::tiny_target;

TrainConfig small_train(std::size_t tokens = 10) {
  TrainConfig c;
  c.trace_tokens = tokens;
  c.max_seq_len = 64;
  c.batch_size = 4;
  return c;
}

std::vector<TrainTrace> traces_for(const TargetModel& target, std::size_t count,
                                   std::size_t tokens = 10, std::uint64_t seed = 7) {
  std::vector<MultimodalPrompt> prompts;
  for (std::size_t i = 0; i < count; ++i) {
    prompts.push_back(random_prompt(target.config(), 4, 3, seed + i));
  }
  return collect_traces(target, prompts, 1, small_train(tokens), SeededRng(seed));
}

// The prompt extended with the first `extra` generated tokens.
MultimodalPrompt prefix_prompt(const TrainTrace& trace, std::size_t extra) {
  MultimodalPrompt p = trace.prompt;
  p.text_tokens.insert(p.text_tokens.end(), trace.generated.begin(),
                       trace.generated.begin() + static_cast<std::ptrdiff_t>(extra));
  return p;
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.alpha = -0.1;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_EQ(parse_optimizer("sgd"), OptimizerKind::kSgd);
  EXPECT_THROW(parse_optimizer("rmsprop"), Error);
}

TEST(CollectTraces, DeterministicAtGreedy) {
  const TargetModel target = TargetModel::create(tiny_target());
  const PromptGenerator gen = [&](SeededRng& rng) {
    return make_prompt(PromptShape{4, 3, 4, 8}, rng);
  };
  const auto a = collect_traces(target, gen, 1, 0, small_train(), SeededRng(3));
  const auto b = collect_traces(target, gen, 1, 0, small_train(), SeededRng(3));
  EXPECT_EQ(a[0].generated, b[0].generated);
  EXPECT_EQ(a[0].features, b[0].features);
  EXPECT_EQ(a[0].dists, b[0].dists);
  EXPECT_THROW(collect_traces(target, gen, 0, 0, small_train(), SeededRng(3)), Error);
}

TEST(CollectTraces, ReplayMatchesFreshRecompute) {
  const TargetModel target = TargetModel::create(tiny_target());
  for (const TrainTrace& t : traces_for(target, 3)) {
    ASSERT_EQ(t.features.rows(), t.length());
    ASSERT_EQ(t.dists.size(), t.length());
    const auto ref = oracle::target_features(target, t.prompt, t.generated);
    EXPECT_LT(oracle::max_abs_diff(ref, t.features), 1e-8);
    const auto dists = oracle::lm_dists(target, ref, 1);
    for (std::size_t p = 0; p < t.length(); ++p) {
      EXPECT_LT(oracle::max_abs_diff(dists[p], t.dists[p].values()), 1e-8);
    }
  }
}

TEST(CollectTraces, TruncatedToMaxSeqLen) {
  const TargetModel target = TargetModel::create(tiny_target());
  TrainConfig c = small_train(100);
  c.max_seq_len = 12;
  const auto traces =
      collect_traces(target, {random_prompt(target.config(), 4, 3, 1)}, 1, c, SeededRng(1));
  EXPECT_EQ(traces[0].length(), 12u);
  c.max_seq_len = 5;
  EXPECT_THROW(
      collect_traces(target, {random_prompt(target.config(), 4, 3, 1)}, 1, c, SeededRng(1)),
      Error);
}

TEST(Window, AlignmentAndErrors) {
  const TargetModel target = TargetModel::create(tiny_target());
  const DraftModel draft = DraftModel::create(tiny_draft(target.config(), 2, 4, 2));
  const TrainTrace t = traces_for(target, 1)[0];
  const std::size_t p = t.prompt.length() + 2;
  const TeacherForcedWindow w = make_window(draft, target, t, p);
  EXPECT_EQ(w.context_rows, p - 4);
  EXPECT_EQ(w.next_position, p);
  // Rows reach into the K-token future by (passes - 1) * k' positions, all
  // built from the trace, never from draft samples.
  ASSERT_EQ(w.fuse_inputs.rows(), p - 4 + 2);
  for (std::size_t r = 0; r < w.fuse_inputs.rows(); ++r) {
    const Token next = t.token_at(4 + r + 1);
    const Matrix e = target.token_embeddings(std::span<const Token>(&next, 1));
    for (std::size_t c = 0; c < 8; ++c) {
      EXPECT_EQ(w.fuse_inputs(r, c), t.features(4 + r, c));
      EXPECT_EQ(w.fuse_inputs(r, 8 + c), e(0, c));
    }
  }
  EXPECT_THROW(make_window(draft, target, t, t.length() - 3), Error);
  EXPECT_THROW(make_window(draft, target, t, 4), Error);
  const auto [first, end] = window_range(draft.config(), t);
  EXPECT_EQ(first, t.prompt.length());
  EXPECT_EQ(end, t.length() - 3);
}

TEST(Window, TeacherForcedGroupMatchesProposeOracle) {
  // With one pass per round the teacher-forced head equals the inference
  // head on the extended prompt.
  const TargetModel target = TargetModel::create(tiny_target());
  const DraftModel draft = DraftModel::create(tiny_draft(target.config(), 2, 4, 4));
  const TrainTrace t = traces_for(target, 1)[0];
  for (std::size_t extra : {0u, 3u}) {
    const std::size_t p = t.prompt.length() + extra;
    const DraftForward fwd = draft_forward(draft, make_window(draft, target, t, p), false);
    const std::vector<Token> none(4, 0);
    const auto ref =
        oracle::draft_outputs(draft, target, prefix_prompt(t, extra), t.token_at(p), none, 1);
    EXPECT_LT(oracle::max_abs_diff(ref.hidden, fwd.hidden), 1e-9);
  }
}

TEST(Window, LaterGroupsSeeTraceTokens) {
  const TargetModel target = TargetModel::create(tiny_target());
  const DraftModel draft = DraftModel::create(tiny_draft(target.config(), 2, 4, 2));
  TrainTrace t = traces_for(target, 1)[0];
  const std::size_t p = t.prompt.length();
  const DraftForward a = draft_forward(draft, make_window(draft, target, t, p), false);
  // Token at p + 2 enters the head with the second group only.
  t.generated[2] = (t.generated[2] + 1) % 8;
  const DraftForward b = draft_forward(draft, make_window(draft, target, t, p), false);
  EXPECT_EQ(a.hidden.slice_rows(0, 2), b.hidden.slice_rows(0, 2));
  EXPECT_NE(a.hidden.slice_rows(2, 4), b.hidden.slice_rows(2, 4));
}

TEST(Loss, MatchingOutputsGiveZeroRegressionAndEntropy) {
  const TargetModel target = TargetModel::create(tiny_target());
  const DraftModel draft = DraftModel::create(tiny_draft(target.config(), 2, 4, 4));
  TrainTrace t = traces_for(target, 1)[0];
  const std::size_t p = t.prompt.length() + 1;
  const DraftForward fwd = draft_forward(draft, make_window(draft, target, t, p), false);
  const auto dists = target.lm_head().distributions(fwd.hidden, 1);
  oracle::LD entropy = 0;
  for (std::size_t j = 0; j < 4; ++j) {
    std::copy(fwd.hidden.row(j).begin(), fwd.hidden.row(j).end(), t.features.row(p + j).begin());
    t.dists[p + j] = dists[j];
    for (Real q : dists[j]) entropy -= q * std::log(static_cast<oracle::LD>(q));
  }
  const LossBreakdown l = loss_on_window(draft, target, t, p, TrainConfig{});
  EXPECT_EQ(l.regression, 0);
  // Cross-entropy of a distribution with itself is its entropy, the minimum.
  EXPECT_NEAR(l.classification, static_cast<Real>(entropy), 1e-10);
}

TEST(Loss, AlphaZeroIsolatesRegression) {
  const TargetModel target = TargetModel::create(tiny_target());
  const DraftModel draft = DraftModel::create(tiny_draft(target.config(), 2, 4, 2));
  const TrainTrace t = traces_for(target, 1)[0];
  TrainConfig c;
  c.alpha = 0;
  const LossBreakdown l = loss_on_window(draft, target, t, t.prompt.length(), c);
  EXPECT_EQ(l.total, l.regression);
  EXPECT_GT(l.classification, 0);
}

TEST(Loss, RecomposesFromReferenceKernels) {
  const TargetModel target = TargetModel::create(tiny_target(5));
  const DraftModel draft = DraftModel::create(tiny_draft(target.config(), 2, 4, 2, 6));
  const TrainTrace t = traces_for(target, 1, 10, 11)[0];
  TrainConfig c;
  c.alpha = 0.3;
  for (std::size_t p = t.prompt.length(); p + 4 <= t.length(); p += 2) {
    const LossBreakdown l = loss_on_window(draft, target, t, p, c);
    const DraftForward fwd = draft_forward(draft, make_window(draft, target, t, p), false);
    const auto hidden = oracle::to_ld(fwd.hidden);
    const auto probs = oracle::lm_dists(target, hidden, 1);
    oracle::LD reg = 0, cls = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      const auto f = oracle::to_ld(t.features.slice_rows(p + j, p + j + 1))[0];
      reg += oracle::smooth_l1(hidden[j], f);
      const auto tv = t.dists[p + j].values();
      cls += oracle::cross_entropy(probs[j], oracle::Vec(tv.begin(), tv.end()));
    }
    EXPECT_NEAR(l.regression, static_cast<Real>(reg), 1e-10);
    EXPECT_NEAR(l.classification, static_cast<Real>(cls), 1e-10);
    EXPECT_NEAR(l.total, static_cast<Real>(reg + 0.3L * cls), 1e-10);
  }
}

TEST(Gradient, MatchesFiniteDifferences) {
  const TargetModel target = TargetModel::create(tiny_target(3));
  DraftModel draft = DraftModel::create(tiny_draft(target.config(), 2, 4, 2, 4));
  const TrainTrace t = traces_for(target, 1, 8, 5)[0];
  const std::size_t p = t.prompt.length() + 1;
  const TrainConfig c;
  const LossAndGrad lg = loss_and_grad(draft, target, t, p, c);
  EXPECT_NEAR(lg.loss.total, loss_on_window(draft, target, t, p, c).total, 1e-12);
  const std::vector<Real> x = draft.weights().flatten();
  const auto f = [&](std::span<const Real> v) {
    DraftModel d = draft;
    d.mutable_weights().assign(v);
    return loss_on_window(d, target, t, p, c).total;
  };
  const std::vector<Real> fd = finite_diff_grad(f, x, 1e-5);
  const std::vector<Real> g = lg.grad.flatten();
  ASSERT_EQ(g.size(), fd.size());
  std::size_t checked = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (std::abs(g[i]) <= 1e-8) continue;
    ++checked;
    EXPECT_LT(std::abs(g[i] - fd[i]) / std::max(std::abs(g[i]), std::abs(fd[i])), 1e-4) << i;
  }
  EXPECT_GT(checked, x.size() / 2);
}

TEST(Trainer, ZeroLearningRateLeavesWeightsUnchanged) {
  const TargetModel target = TargetModel::create(tiny_target());
  DraftModel draft = DraftModel::create(tiny_draft(target.config(), 2, 4, 2));
  const auto before = draft.weights().flatten();
  TrainConfig c = small_train();
  c.learning_rate = 0;
  for (auto kind : {OptimizerKind::kAdam, OptimizerKind::kSgd}) {
    c.optimizer = kind;
    DraftTrainer trainer(draft, target, c);
    SeededRng rng(1);
    trainer.train_epoch(traces_for(target, 2), rng);
    EXPECT_GT(trainer.steps(), 0u);
    EXPECT_EQ(draft.weights().flatten(), before);
  }
}

TEST(Trainer, LossDecreasesAndTargetStaysFrozen) {
  const TargetModel target = TargetModel::create(tiny_target());
  DraftModel draft = DraftModel::create(tiny_draft(target.config(), 2, 4, 2));
  const std::uint64_t checksum = target.checksum();
  const auto traces = traces_for(target, 1, 16);
  TrainConfig c = small_train();
  c.learning_rate = 3e-3;
  DraftTrainer trainer(draft, target, c);
  SeededRng rng(2);
  Real last = std::numeric_limits<Real>::infinity();
  for (int e = 0; e < 10; ++e) {
    const EpochStats s = trainer.train_epoch(traces, rng);
    EXPECT_LT(s.mean.total, last) << "epoch " << s.epoch;
    last = s.mean.total;
  }
  EXPECT_LT(trainer.evaluate(traces).total, last);
  EXPECT_EQ(target.checksum(), checksum);
}

TEST(Trainer, DeterministicAcrossRuns) {
  const TargetModel target = TargetModel::create(tiny_target());
  const auto traces = traces_for(target, 3);
  std::vector<Real> result[2];
  for (auto& r : result) {
    DraftModel draft = DraftModel::create(tiny_draft(target.config(), 2, 4, 2));
    DraftTrainer trainer(draft, target, small_train());
    SeededRng rng(9);
    trainer.train_epoch(traces, rng);
    trainer.train_epoch(traces, rng);
    r = draft.weights().flatten();
  }
  EXPECT_EQ(result[0], result[1]);
}

TEST(Trainer, NonFiniteLossAborts) {
  const TargetModel target = TargetModel::create(tiny_target());
  DraftModel draft = DraftModel::create(tiny_draft(target.config(), 2, 4, 2));
  draft.mutable_weights().placeholders(0, 0) = std::numeric_limits<Real>::quiet_NaN();
  DraftTrainer trainer(draft, target, small_train());
  SeededRng rng(1);
  EXPECT_THROW(trainer.train_epoch(traces_for(target, 1), rng), TrainingDiverged);
  EXPECT_THROW(trainer.train_epoch({}, rng), Error);
}

TEST(Trainer, LogLineFields) {
  EpochStats s;
  s.epoch = 2;
  s.steps = 7;
  s.mean = {1.5, 0.25, 1.525};
  EXPECT_EQ(train_log_line(s),
            R"({"epoch":2,"step":7,"reg_loss":1.5,"cls_loss":0.25,"total":1.525})");
}

}  // namespace
