// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#include "semispec/decode/spec_decode.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace semispec {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void check_sizes(const ProbVector& a, const ProbVector& b) {
  if (a.size() != b.size() || a.size() == 0) {
    throw Error("target and draft distributions differ in size (" + std::to_string(a.size()) +
                " vs " + std::to_string(b.size()) + ")");
  }
}

}  // namespace

AcceptDecision accept_or_reject(const ProbVector& p_target, const ProbVector& p_draft, Token token,
                                SeededRng& rng) {
  check_sizes(p_target, p_draft);
  if (token < 0 || static_cast<std::size_t>(token) >= p_draft.size()) {
    throw Error("drafted token " + std::to_string(token) + " outside the vocabulary");
  }
  const auto t = static_cast<std::size_t>(token);
  if (!(p_draft[t] > 0)) throw Error("drafted token with zero draft probability");
  AcceptDecision d;
  d.accept_prob = std::min(Real{1}, p_target[t] / p_draft[t]);
  d.accepted = rng.uniform() < d.accept_prob;
  return d;
}

ProbVector residual_distribution(const ProbVector& p_target, const ProbVector& p_draft) {
  check_sizes(p_target, p_draft);
  std::vector<Real> r(p_target.size());
  Real mass = 0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    r[k] = std::max(Real{0}, p_target[k] - p_draft[k]);
    mass += r[k];
  }
  if (mass < kResidualFloor) return p_target;
  for (Real& v : r) v /= mass;
  return ProbVector(std::move(r));
}

Token residual_sample(const ProbVector& p_target, const ProbVector& p_draft, SeededRng& rng) {
  return sample_categorical(residual_distribution(p_target, p_draft), rng);
}

SemiArDrafter::SemiArDrafter(const DraftModel& draft, const TargetModel& target)
    : draft_(&draft), target_(&target) {
  draft.check_compatible(target.config());
}

void SemiArDrafter::start(const MultimodalPrompt& prompt, const EncodeResult& encoded,
                          Token pending) {
  const DraftConfig& cfg = draft_->config();
  const DraftInputs inputs =
      build_draft_inputs(*draft_, *target_, encoded.bundle, prompt.text_tokens, pending);
  const std::uint64_t d = cfg.d_model;
  const std::uint64_t n = prompt.visual_count();
  setup_flops_ = static_cast<std::uint64_t>(prompt.text_tokens.size()) * 2 * (2 * d) * d;
  if (cfg.compress && n > 0) setup_flops_ += 4 * cfg.compressed_tokens * n * d;
  state_.emplace(*draft_, inputs);
}

DraftProposal SemiArDrafter::propose(Real temperature, SeededRng& rng) {
  if (!state_) throw Error("drafter used before start()");
  return semispec::propose(*draft_, *state_, *target_, temperature, rng);
}

void SemiArDrafter::commit(const KvCache&, const Matrix& features, std::span<const Token> emitted) {
  if (!state_) throw Error("drafter used before start()");
  const DraftWeights& w = draft_->weights();
  state_->append(fuse_textual(w.fuse_weight, w.fuse_bias, features,
                              target_->token_embeddings(emitted)));
}

std::uint64_t SemiArDrafter::overhead_flops() const {
  return setup_flops_ + (state_ ? state_->flops() : 0);
}

SelfDrafter::SelfDrafter(const TargetModel& target, std::size_t draft_len)
    : target_(&target), k_(draft_len) {
  if (draft_len == 0) throw Error("self drafter: K must be >= 1");
}

void SelfDrafter::start(const MultimodalPrompt&, const EncodeResult& encoded, Token pending) {
  cache_ = encoded.cache;
  pending_ = pending;
}

DraftProposal SelfDrafter::propose(Real temperature, SeededRng& rng) {
  DraftProposal out;
  KvCache cache = cache_;
  const LmHead head = target_->lm_head();
  Token last = pending_;
  out.hidden = Matrix(0, target_->config().d_model);
  for (std::size_t j = 0; j < k_; ++j) {
    out.flops += flops_of_forward(target_->config(), cache.length(), 1).total();
    target_->forward(target_->token_embeddings(std::span<const Token>(&last, 1)), cache);
    out.hidden.append_rows(cache.last_feature);
    out.dists.push_back(head.distributions(cache.last_feature, temperature).front());
    last = sample_categorical(out.dists.back(), rng);
    out.tokens.push_back(last);
    ++out.forward_passes;
  }
  return out;
}

void SelfDrafter::commit(const KvCache& cache, const Matrix&, std::span<const Token> emitted) {
  cache_ = cache;
  pending_ = emitted.back();
}

RoundReport spec_round(const TargetModel& target, TargetSession& session, Drafter& drafter,
                       Real temperature, SeededRng& rng) {
  const auto start = Clock::now();
  RoundReport report;
  const std::size_t k = drafter.draft_len();
  const std::size_t prefix = session.cache.length();
  const std::uint64_t overhead_before = drafter.overhead_flops();

  DraftProposal proposal = drafter.propose(temperature, rng);
  if (proposal.tokens.size() != k || proposal.dists.size() != k) {
    throw Error("drafter returned " + std::to_string(proposal.tokens.size()) + " tokens, expected " +
                std::to_string(k));
  }
  std::vector<Token> candidates{session.pending};
  candidates.insert(candidates.end(), proposal.tokens.begin(), proposal.tokens.end());
  VerifyResult verify = verify_forward(target, session.cache, candidates, temperature);
  report.target_flops = flops_of_forward(target.config(), prefix, k + 1).total();
  report.target_step_flops = flops_of_forward(target.config(), prefix, 1).total();

  VerificationOutcome& out = report.outcome;
  for (std::size_t j = 1; j <= k; ++j) {
    const ProbVector& p_t = verify.dists[j];
    const ProbVector& p_d = proposal.dists[j - 1];
    const AcceptDecision d = accept_or_reject(p_t, p_d, proposal.tokens[j - 1], rng);
    out.accept_probs.push_back(d.accept_prob);
    if (!d.accepted) {
      out.rejected_at = j;
      out.emitted.push_back(residual_sample(p_t, p_d, rng));
      break;
    }
    out.emitted.push_back(proposal.tokens[j - 1]);
    ++out.accepted;
  }
  if (!out.rejected_at) out.emitted.push_back(sample_categorical(verify.dists[k + 1], rng));

  const std::size_t i = out.accepted;
  KvCache next = std::move(verify.cache);
  next.truncate(prefix + 1 + i, verify.features.slice_rows(i, i + 1));
  drafter.commit(next, verify.features.slice_rows(0, i + 1), out.emitted);
  session.cache = std::move(next);
  session.pending = out.emitted.back();
  session.emitted.insert(session.emitted.end(), out.emitted.begin(), out.emitted.end());

  report.draft_flops = proposal.flops + (drafter.overhead_flops() - overhead_before);
  report.draft_passes = proposal.forward_passes;
  report.seconds = seconds_since(start);
  return report;
}

Real modeled_speedup(Real emitted_per_round, Real target_step_flops, Real draft_pass_flops,
                     std::size_t draft_len, std::size_t group_size) {
  if (group_size == 0 || draft_len % group_size != 0) {
    throw Error("modeled speed-up needs k' dividing K");
  }
  if (!(target_step_flops > 0) || draft_pass_flops < 0) {
    throw Error("modeled speed-up needs M_T > 0 and M_D >= 0");
  }
  const Real passes = static_cast<Real>(draft_len / group_size);
  return emitted_per_round * target_step_flops / (target_step_flops + passes * draft_pass_flops);
}

DecodeResult decode(const TargetModel& target, Drafter& drafter, const MultimodalPrompt& prompt,
                    std::size_t max_tokens, Real temperature, SeededRng& rng,
                    const DecodeOptions& options) {
  if (max_tokens == 0) throw Error("decode: max_tokens must be >= 1");
  const std::size_t k = drafter.draft_len();
  if (prompt.length() + max_tokens + k - 1 > target.config().max_seq) {
    throw Error("decode: prompt (" + std::to_string(prompt.length()) + ") + max_tokens (" +
                std::to_string(max_tokens) + ") + K - 1 exceeds max_seq " +
                std::to_string(target.config().max_seq));
  }
  // The baseline replays the same stream so both sides see equal work.
  const SeededRng baseline_rng = rng;

  EncodeResult enc = encode_prompt(target, prompt, temperature);
  TargetSession session;
  session.pending = sample_categorical(enc.next, rng);
  session.emitted.push_back(session.pending);
  drafter.start(prompt, enc, session.pending);
  session.cache = std::move(enc.cache);

  DecodeResult result;
  DecodeMetrics& m = result.metrics;
  m.draft_flops = drafter.overhead_flops();
  Real step_flops_sum = 0;
  Real round_draft_flops_sum = 0;
  const auto start = Clock::now();
  while (session.emitted.size() < max_tokens) {
    const RoundReport r = spec_round(target, session, drafter, temperature, rng);
    ++m.rounds;
    m.total_accepted += r.outcome.accepted;
    m.accepted_per_round.push_back(r.outcome.accepted);
    m.target_flops += r.target_flops;
    m.draft_flops += r.draft_flops;
    m.draft_round_flops += r.draft_flops;
    m.draft_passes += r.draft_passes;
    step_flops_sum += static_cast<Real>(r.target_step_flops);
    round_draft_flops_sum += static_cast<Real>(r.draft_flops);
  }
  m.wall_time_spec = seconds_since(start);

  result.tokens.assign(session.emitted.begin(),
                       session.emitted.begin() + static_cast<std::ptrdiff_t>(max_tokens));
  m.total_emitted = max_tokens;
  const std::size_t passes = drafter.passes_per_round();
  m.speedup_modeled = 1;  // no round ran: plain target decoding
  if (m.rounds > 0) {
    const Real rounds = static_cast<Real>(m.rounds);
    m.avg_accept = static_cast<Real>(m.total_accepted) / rounds;
    m.emitted_per_round = static_cast<Real>(m.total_accepted + m.rounds) / rounds;
    m.mean_target_step_flops = step_flops_sum / rounds;
    m.mean_draft_pass_flops = round_draft_flops_sum / rounds / static_cast<Real>(passes);
    m.speedup_modeled = modeled_speedup(m.emitted_per_round, m.mean_target_step_flops,
                                        m.mean_draft_pass_flops, k, k / passes);
  }

  m.speedup_measured = std::numeric_limits<Real>::quiet_NaN();
  if (options.measure_baseline) {
    SeededRng r = baseline_rng;
    AutoregressStats stats;
    autoregress(target, prompt, max_tokens, temperature, r, &stats);
    m.wall_time_target_baseline = stats.decode_seconds;
    if (m.wall_time_spec > 0) m.speedup_measured = stats.decode_seconds / m.wall_time_spec;
  }
  return result;
}

}  // namespace semispec
