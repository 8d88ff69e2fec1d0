// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "semispec/io/tensor_archive.hpp"

namespace {

using namespace semispec;
using fixtures::random_prompt;
using fixtures::tiny_draft;
using fixtures::tiny_target;

Matrix random(std::size_t r, std::size_t c, std::uint64_t seed) {
  SeededRng rng(seed);
  Matrix m(r, c);
  for (auto& v : m.values()) v = rng.normal();
  return m;
}

struct Rig {
  TargetModel target;
  DraftModel draft;
  MultimodalPrompt prompt;
  EncodeResult enc;
  Token pending;
  DraftInputs inputs;

  Rig(std::size_t k, std::size_t group, std::size_t c = 2, std::uint64_t seed = 1)
      : target(TargetModel::create(tiny_target(seed))),
        draft(DraftModel::create(tiny_draft(target.config(), c, k, group, seed + 1))),
        prompt(random_prompt(target.config(), 4, 3, seed + 2)),
        enc(encode_prompt(target, prompt, 1)),
        pending(enc.next.argmax()),
        inputs(build_draft_inputs(draft, target, enc.bundle, prompt.text_tokens, pending)) {}
};

TEST(DraftConfig, Validation) {
  const TargetConfig t = tiny_target();
  EXPECT_NO_THROW(tiny_draft(t, 2, 4, 2).validate());
  EXPECT_THROW(tiny_draft(t, 2, 4, 3).validate(), Error);
  EXPECT_THROW(tiny_draft(t, 2, 4, 5).validate(), Error);
  EXPECT_THROW(tiny_draft(t, 2, 4, 0).validate(), Error);
  EXPECT_NO_THROW(tiny_draft(t, 0, 4, 4).validate());
}

TEST(Compress, ZeroQueryGivesColumnMean) {
  const Matrix f = random(5, 3, 1);
  const Matrix out = compress_visual(Matrix(1, 3), f);
  const Matrix mean = column_sums(f);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(out(0, c), mean(0, c) / 5, 1e-12);
}

TEST(Compress, IdenticalRowsAreFixedPoint) {
  Matrix f(4, 3);
  for (std::size_t r = 0; r < 4; ++r) {
    f(r, 0) = 1.5;
    f(r, 1) = -2;
    f(r, 2) = 0.25;
  }
  const Matrix out = compress_visual(random(3, 3, 2), f);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(out(r, c), f(0, c), 1e-14);
  }
}

TEST(Compress, MatchesReference) {
  const Matrix q = random(2, 3, 3), f = random(5, 3, 4);
  Matrix weights;
  const Matrix out = compress_visual(q, f, 1, &weights);
  EXPECT_LT(oracle::max_abs_diff(oracle::compress(q, f, 1), out), 1e-10);
  for (std::size_t r = 0; r < weights.rows(); ++r) {
    Real s = 0;
    for (Real v : weights.row(r)) {
      EXPECT_GE(v, 0);
      s += v;
    }
    EXPECT_NEAR(s, 1, 1e-10);
  }
}

TEST(Compress, EmptyAndMismatch) {
  EXPECT_EQ(compress_visual(Matrix(0, 3), random(4, 3, 1)).rows(), 0u);
  EXPECT_EQ(compress_visual(random(2, 3, 1), Matrix(0, 3)).rows(), 0u);
  EXPECT_THROW(compress_visual(random(2, 4, 1), random(3, 3, 2)), Error);
}

TEST(Fuse, IdentityZeroAndReference) {
  const Matrix f = random(3, 4, 1), e = random(3, 4, 2);
  Matrix ident(8, 4);
  for (std::size_t i = 0; i < 4; ++i) ident(i, i) = 1;
  EXPECT_EQ(fuse_textual(ident, Matrix(1, 4), f, e), f);

  const Matrix b = Matrix::from_rows({{1, 2, 3, 4}});
  const Matrix z = fuse_textual(Matrix(8, 4), b, f, e);
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(z.slice_rows(r, r + 1), b);

  const Matrix w = random(8, 4, 3), bias = random(1, 4, 4);
  EXPECT_LT(oracle::max_abs_diff(
                oracle::fuse(w, bias, oracle::to_ld(f), oracle::to_ld(e)), fuse_textual(w, bias, f, e)),
            1e-10);
  EXPECT_THROW(fuse_textual(w, bias, f, random(2, 4, 5)), Error);
}

TEST(Propose, PassCountsAndShapes) {
  for (std::size_t group : {1u, 2u, 4u}) {
    Rig rig(4, group);
    SeededRng rng(3);
    const DraftProposal p = propose(rig.draft, rig.inputs, rig.target, 1, rng);
    EXPECT_EQ(p.forward_passes, 4 / group);
    ASSERT_EQ(p.tokens.size(), 4u);
    ASSERT_EQ(p.dists.size(), 4u);
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_GT(p.dists[j][static_cast<std::size_t>(p.tokens[j])], 0);
    }
  }
}

TEST(Propose, GreedyPicksArgmax) {
  Rig rig(4, 2);
  SeededRng rng(3);
  const DraftProposal p = propose(rig.draft, rig.inputs, rig.target, 0, rng);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(static_cast<std::size_t>(p.tokens[j]), p.dists[j].argmax());
}

TEST(Propose, Deterministic) {
  Rig rig(4, 2);
  SeededRng a(8), b(8);
  const DraftProposal pa = propose(rig.draft, rig.inputs, rig.target, 1, a);
  const DraftProposal pb = propose(rig.draft, rig.inputs, rig.target, 1, b);
  EXPECT_EQ(pa.tokens, pb.tokens);
  EXPECT_EQ(pa.dists, pb.dists);
  EXPECT_EQ(pa.hidden, pb.hidden);
}

TEST(Propose, MatchesRecomputeOracleForEveryGroupSize) {
  for (std::size_t group : {1u, 2u, 4u}) {
    Rig rig(4, group, 2, 20 + group);
    SeededRng rng(5);
    const DraftProposal p = propose(rig.draft, rig.inputs, rig.target, 1, rng);
    const auto ref = oracle::draft_outputs(rig.draft, rig.target, rig.prompt, rig.pending, p.tokens, 1);
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_LT(oracle::max_abs_diff(ref.dists[j], p.dists[j].values()), 1e-9) << group << "/" << j;
    }
    EXPECT_LT(oracle::max_abs_diff(ref.hidden, p.hidden), 1e-9);
  }
}

TEST(Propose, UncompressedAndImagelessInputs) {
  for (std::size_t c : {0u, 4u}) {
    TargetModel target = TargetModel::create(tiny_target(4));
    DraftConfig dc = tiny_draft(target.config(), c, 2, 1, 5);
    dc.compress = c != 4;
    const DraftModel draft = DraftModel::create(dc);
    const MultimodalPrompt prompt = random_prompt(target.config(), 4, 3, 6);
    const EncodeResult enc = encode_prompt(target, prompt, 1);
    const DraftInputs in = build_draft_inputs(draft, target, enc.bundle, prompt.text_tokens, 1);
    EXPECT_EQ(in.visual.rows(), c);
    SeededRng rng(1);
    const DraftProposal p = propose(draft, in, target, 1, rng);
    const auto ref = oracle::draft_outputs(draft, target, prompt, 1, p.tokens, 1);
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_LT(oracle::max_abs_diff(ref.dists[j], p.dists[j].values()), 1e-9);
    }
  }
}

TEST(Propose, GroupCausality) {
  Rig rig(4, 4);
  SeededRng a(2), b(2);
  const DraftProposal base = propose(rig.draft, rig.inputs, rig.target, 1, a);
  DraftModel perturbed = rig.draft;
  for (std::size_t c = 0; c < perturbed.config().d_model; ++c) {
    perturbed.mutable_weights().placeholders(2, c) += 0.5;
  }
  const DraftProposal other = propose(perturbed, rig.inputs, rig.target, 1, b);
  EXPECT_EQ(base.dists[0], other.dists[0]);
  EXPECT_EQ(base.dists[1], other.dists[1]);
  EXPECT_NE(base.dists[2], other.dists[2]);
}

TEST(Propose, SharesTargetLmHeadExactly) {
  Rig rig(4, 2);
  SeededRng rng(2);
  const DraftProposal p = propose(rig.draft, rig.inputs, rig.target, 1, rng);
  const auto direct = rig.target.lm_head().distributions(p.hidden, 1);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(direct[j], p.dists[j]);
}

TEST(DraftState, LengthBookkeeping) {
  Rig rig(4, 2, 2);
  // C visual rows plus one fused row per text token.
  const DraftState state(rig.draft, rig.inputs);
  EXPECT_EQ(state.real_rows(), 2u + rig.prompt.text_tokens.size());
  EXPECT_EQ(state.next_position(), rig.prompt.length());
  DraftState grown = state;
  grown.append(random(3, rig.draft.config().d_model, 1));
  EXPECT_EQ(grown.real_rows(), state.real_rows() + 3);
  EXPECT_EQ(grown.next_position(), state.next_position() + 3);
  EXPECT_GT(grown.flops(), state.flops());
}

TEST(DraftFlops, CompressionAndHandCount) {
  const TargetConfig t = tiny_target();
  const DraftConfig c = tiny_draft(t, 2, 2, 2);
  // d = 8, ff = 32, V = 8, one layer, one pass of 2 placeholders after
  // C + 3 = 5 context rows: 2 * 2 * P_block + 4 * 8 * (6 + 7) + 2 * 2 * 8 * 8,
  // P_block = 4*64 + 2*8*32 + 32 + 8 = 808.
  EXPECT_EQ(draft_flops(c, 8, 64, 3, true), 2u * 2 * 808 + 4u * 8 * 13 + 2u * 2 * 8 * 8);
  EXPECT_LT(draft_flops(c, 8, 64, 3, true), draft_flops(c, 8, 64, 3, false));
  DraftConfig none = c;
  none.compressed_tokens = 0;
  EXPECT_EQ(draft_flops(none, 8, 64, 3, true), draft_flops(c, 8, 0, 3, true));
  std::uint64_t last = draft_flops(c, 8, 64, 3, false);
  for (std::size_t cc : {32u, 16u, 7u, 4u, 0u}) {
    DraftConfig x = c;
    x.compressed_tokens = cc;
    const std::uint64_t f = draft_flops(x, 8, 64, 3, true);
    EXPECT_LT(f, last) << cc;
    last = f;
  }
}

TEST(DraftFlops, ProposalCounterMatchesAnalytic) {
  Rig rig(4, 2, 2);
  SeededRng rng(1);
  const DraftProposal p = propose(rig.draft, rig.inputs, rig.target, 1, rng);
  EXPECT_EQ(p.flops, draft_flops(rig.draft.config(), 8, 4, 3, true));
}

TEST(DraftModel, ArchiveRoundTripAndMismatch) {
  const TargetConfig t = tiny_target();
  const DraftModel d = DraftModel::create(tiny_draft(t, 2, 4, 2, 9));
  std::stringstream buf;
  io::write_archive(buf, d.to_archive());
  const DraftModel back = DraftModel::from_archive(io::read_archive(buf));
  EXPECT_EQ(back.weights().flatten(), d.weights().flatten());
  EXPECT_EQ(back.config().to_map(), d.config().to_map());

  TargetConfig wide = t;
  wide.d_model = 16;
  EXPECT_THROW(d.check_compatible(wide), Error);
  std::stringstream tbuf;
  io::write_archive(tbuf, TargetModel::create(t).to_archive());
  EXPECT_THROW(DraftModel::from_archive(io::read_archive(tbuf)), Error);
}

TEST(DraftWeights, FlattenAssignRoundTrip) {
  DraftModel d = DraftModel::create(tiny_draft(tiny_target(), 2, 4, 2, 9));
  std::vector<Real> flat = d.weights().flatten();
  EXPECT_EQ(flat.size(), d.weights().parameter_count());
  for (auto& v : flat) v *= 2;
  d.mutable_weights().assign(flat);
  EXPECT_EQ(d.weights().flatten(), flat);
  flat.pop_back();
  EXPECT_THROW(d.mutable_weights().assign(flat), Error);
}

TEST(DraftInputs, NeedTextTokens) {
  Rig rig(4, 4);
  EXPECT_THROW(build_draft_inputs(rig.draft, rig.target, rig.enc.bundle, {}, 0), Error);
}

}  // namespace
