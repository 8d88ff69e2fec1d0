// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#include "semispec/training/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include "json.hpp"

namespace semispec {
namespace {

// Runs body(i) for i in [0, n) across threads and rethrows the first
// exception (by index) on the calling thread.
template <class Body>
void parallel_indices(std::size_t n, Body&& body) {
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

Matrix row_of(const Matrix& m, std::size_t r) { return m.slice_rows(r, r + 1); }

bool finite(const LossBreakdown& l) {
  return std::isfinite(l.regression) && std::isfinite(l.classification) && std::isfinite(l.total);
}

struct WindowEval {
  LossBreakdown loss;
  Matrix hidden;
  Matrix probs;  // K x V, temperature 1
};

WindowEval evaluate_window(const DraftModel& draft, const TargetModel& target,
                           const TrainTrace& trace, std::size_t position, const TrainConfig& cfg,
                           const Matrix& hidden) {
  WindowEval out;
  out.hidden = hidden;
  out.probs = softmax_rows(target.lm_head().logits(hidden), 1);
  const std::size_t k = draft.config().draft_len;
  for (std::size_t j = 0; j < k; ++j) {
    out.loss.regression += smooth_l1(row_of(hidden, j), row_of(trace.features, position + j));
    out.loss.classification += cross_entropy(out.probs.row(j), trace.dists[position + j].values());
  }
  out.loss.total = out.loss.regression + cfg.alpha * out.loss.classification;
  return out;
}

}  // namespace

Token TrainTrace::token_at(std::size_t p) const {
  const std::size_t n = prompt.visual_count();
  if (p < n || p >= length()) throw Error("trace: no token at position " + std::to_string(p));
  const std::size_t t = p - n;
  return t < prompt.text_tokens.size() ? prompt.text_tokens[t]
                                       : generated[t - prompt.text_tokens.size()];
}

void TrainConfig::validate() const {
  if (!(alpha >= 0)) throw Error("train: alpha must be >= 0");
  if (!(learning_rate >= 0)) throw Error("train: learning_rate must be >= 0");
  if (batch_size == 0) throw Error("train: batch_size must be >= 1");
  if (max_seq_len == 0) throw Error("train: max_seq_len must be >= 1");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1)) {
    throw Error("train: adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0)) throw Error("train: adam_eps must be positive");
}

std::string optimizer_name(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd";
}

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw Error("unknown optimizer '" + name + "' (expected adam or sgd)");
}

std::vector<TrainTrace> collect_traces(const TargetModel& target,
                                       const std::vector<MultimodalPrompt>& prompts,
                                       Real temperature, const TrainConfig& cfg,
                                       const SeededRng& rng) {
  if (prompts.empty()) throw Error("collect_traces: count must be >= 1");
  cfg.validate();
  const std::size_t limit = std::min(cfg.max_seq_len, target.config().max_seq);
  std::vector<TrainTrace> traces(prompts.size());
  parallel_indices(prompts.size(), [&](std::size_t i) {
    SeededRng local = rng.split(i);
    TrainTrace& trace = traces[i];
    trace.prompt = prompts[i];
    if (trace.prompt.length() > limit) {
      throw Error("collect_traces: prompt length " + std::to_string(trace.prompt.length()) +
                  " exceeds max_seq_len " + std::to_string(limit));
    }
    const std::size_t steps = std::min(cfg.trace_tokens, limit - trace.prompt.length());
    EncodeResult enc = encode_prompt(target, trace.prompt, temperature);
    trace.features = std::move(enc.bundle.features);
    KvCache cache = std::move(enc.cache);
    ProbVector next = std::move(enc.next);
    const LmHead head = target.lm_head();
    for (std::size_t s = 0; s < steps; ++s) {
      const Token t = sample_categorical(next, local);
      trace.generated.push_back(t);
      trace.features.append_rows(
          target.forward(target.token_embeddings(std::span<const Token>(&t, 1)), cache));
      if (s + 1 < steps) next = head.distributions(cache.last_feature, temperature).front();
    }
    trace.dists = head.distributions(trace.features, 1);
  });
  return traces;
}

std::vector<TrainTrace> collect_traces(const TargetModel& target, const PromptGenerator& generate,
                                       std::size_t count, Real temperature, const TrainConfig& cfg,
                                       const SeededRng& rng) {
  if (count == 0) throw Error("collect_traces: count must be >= 1");
  const SeededRng prompt_rng = rng.split(0);
  std::vector<MultimodalPrompt> prompts;
  prompts.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SeededRng local = prompt_rng.split(i);
    prompts.push_back(generate(local));
  }
  return collect_traces(target, prompts, temperature, cfg, rng.split(1));
}

std::pair<std::size_t, std::size_t> window_range(const DraftConfig& cfg, const TrainTrace& trace) {
  const std::size_t first = trace.prompt.length();
  const std::size_t end = trace.length() >= cfg.draft_len ? trace.length() - cfg.draft_len + 1 : 0;
  return {first, std::max(first, end)};
}

TeacherForcedWindow make_window(const DraftModel& draft, const TargetModel& target,
                                const TrainTrace& trace, std::size_t position) {
  const DraftConfig& cfg = draft.config();
  const std::size_t n = trace.prompt.visual_count();
  if (position <= n) throw Error("window needs at least one text row before the pending token");
  if (position + cfg.draft_len > trace.length()) {
    throw Error("window overflow: position " + std::to_string(position) + " + K " +
                std::to_string(cfg.draft_len) + " exceeds trace length " +
                std::to_string(trace.length()));
  }
  draft.check_compatible(target.config());
  TeacherForcedWindow w;
  w.visual_features = trace.features.slice_rows(0, n);
  w.context_rows = position - n;
  w.next_position = position;
  const std::size_t end = position + (cfg.passes() - 1) * cfg.group_size;
  std::vector<Token> shifted;
  for (std::size_t p = n; p < end; ++p) shifted.push_back(trace.token_at(p + 1));
  w.fuse_inputs = hstack(trace.features.slice_rows(n, end), target.token_embeddings(shifted));
  return w;
}

LossBreakdown loss_on_window(const DraftModel& draft, const TargetModel& target,
                             const TrainTrace& trace, std::size_t position, const TrainConfig& cfg) {
  const TeacherForcedWindow w = make_window(draft, target, trace, position);
  const DraftForward fwd = draft_forward(draft, w, false);
  return evaluate_window(draft, target, trace, position, cfg, fwd.hidden).loss;
}

LossAndGrad loss_and_grad(const DraftModel& draft, const TargetModel& target,
                          const TrainTrace& trace, std::size_t position, const TrainConfig& cfg) {
  const TeacherForcedWindow w = make_window(draft, target, trace, position);
  const DraftForward fwd = draft_forward(draft, w, true);
  const WindowEval ev = evaluate_window(draft, target, trace, position, cfg, fwd.hidden);

  const std::size_t k = draft.config().draft_len;
  const std::size_t vocab = ev.probs.cols();
  Matrix d_hidden(k, fwd.hidden.cols());
  Matrix d_logits(k, vocab);
  for (std::size_t j = 0; j < k; ++j) {
    const Matrix g = smooth_l1_grad(row_of(fwd.hidden, j), row_of(trace.features, position + j));
    std::copy(g.values().begin(), g.values().end(), d_hidden.row(j).begin());
    // d CE / d p is -t/p where p is above the clamp and 0 where clamped.
    const ProbVector& t = trace.dists[position + j];
    std::vector<Real> d_p(vocab, 0);
    Real inner = 0;
    for (std::size_t c = 0; c < vocab; ++c) {
      const Real p = ev.probs(j, c);
      if (t[c] != 0 && p > kLogClamp) d_p[c] = -t[c] / p;
      inner += p * d_p[c];
    }
    for (std::size_t c = 0; c < vocab; ++c) {
      d_logits(j, c) = cfg.alpha * ev.probs(j, c) * (d_p[c] - inner);
    }
  }
  add_into(d_hidden, target.lm_head().backward(fwd.hidden, d_logits));
  return LossAndGrad{ev.loss, draft_backward(draft, w, fwd, d_hidden)};
}

DraftTrainer::DraftTrainer(DraftModel& draft, const TargetModel& target, TrainConfig cfg)
    : draft_(&draft), target_(&target), cfg_(cfg) {
  cfg_.validate();
  draft.check_compatible(target.config());
  const std::size_t n = draft.weights().parameter_count();
  m_.assign(n, 0);
  v_.assign(n, 0);
}

void DraftTrainer::apply(const std::vector<Real>& grad) {
  ++steps_;
  std::vector<Real> params = draft_->weights().flatten();
  if (cfg_.optimizer == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg_.learning_rate * grad[i];
  } else {
    const Real b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
    const Real c1 = 1 - std::pow(b1, static_cast<Real>(steps_));
    const Real c2 = 1 - std::pow(b2, static_cast<Real>(steps_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = b1 * m_[i] + (1 - b1) * grad[i];
      v_[i] = b2 * v_[i] + (1 - b2) * grad[i] * grad[i];
      const Real step = (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.adam_eps);
      params[i] -= cfg_.learning_rate * step;
    }
  }
  draft_->mutable_weights().assign(params);
}

EpochStats DraftTrainer::train_epoch(const std::vector<TrainTrace>& traces, SeededRng& rng) {
  if (traces.empty()) throw Error("train_epoch: traces must be nonempty");
  ++epochs_;
  std::vector<std::pair<std::size_t, std::size_t>> windows;
  for (std::size_t t = 0; t < traces.size(); ++t) {
    const auto [first, end] = window_range(draft_->config(), traces[t]);
    for (std::size_t p = first; p < end; ++p) windows.emplace_back(t, p);
  }
  if (windows.empty()) throw Error("train_epoch: no trace is long enough for a K-token window");
  for (std::size_t i = windows.size(); i > 1; --i) {
    std::swap(windows[i - 1], windows[rng.below(i)]);
  }

  EpochStats stats;
  stats.epoch = epochs_;
  for (std::size_t start = 0; start < windows.size(); start += cfg_.batch_size) {
    const std::size_t count = std::min(cfg_.batch_size, windows.size() - start);
    std::vector<LossAndGrad> results(count);
    parallel_indices(count, [&](std::size_t b) {
      const auto [t, p] = windows[start + b];
      results[b] = loss_and_grad(*draft_, *target_, traces[t], p, cfg_);
    });
    std::vector<Real> grad(m_.size(), 0);
    for (std::size_t b = 0; b < count; ++b) {
      const LossBreakdown& l = results[b].loss;
      if (!finite(l)) {
        const auto [t, p] = windows[start + b];
        throw TrainingDiverged("non-finite training loss at epoch " + std::to_string(epochs_) + ", trace " +
                    std::to_string(t) + ", position " + std::to_string(p));
      }
      stats.mean.regression += l.regression;
      stats.mean.classification += l.classification;
      stats.mean.total += l.total;
      const std::vector<Real> g = results[b].grad.flatten();
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
    }
    const Real scale = Real{1} / static_cast<Real>(count);
    for (Real& g : grad) g *= scale;
    apply(grad);
  }
  const Real n = static_cast<Real>(windows.size());
  stats.mean.regression /= n;
  stats.mean.classification /= n;
  stats.mean.total /= n;
  stats.steps = steps_;
  return stats;
}

LossBreakdown DraftTrainer::evaluate(const std::vector<TrainTrace>& traces) const {
  std::vector<std::pair<std::size_t, std::size_t>> windows;
  for (std::size_t t = 0; t < traces.size(); ++t) {
    const auto [first, end] = window_range(draft_->config(), traces[t]);
    for (std::size_t p = first; p < end; ++p) windows.emplace_back(t, p);
  }
  if (windows.empty()) throw Error("evaluate: no trace is long enough for a K-token window");
  std::vector<LossBreakdown> losses(windows.size());
  parallel_indices(windows.size(), [&](std::size_t i) {
    losses[i] = loss_on_window(*draft_, *target_, traces[windows[i].first], windows[i].second, cfg_);
  });
  LossBreakdown mean;
  for (const auto& l : losses) {
    mean.regression += l.regression;
    mean.classification += l.classification;
    mean.total += l.total;
  }
  const Real n = static_cast<Real>(losses.size());
  mean.regression /= n;
  mean.classification /= n;
  mean.total /= n;
  return mean;
}

std::string train_log_line(const EpochStats& stats) {
  nlohmann::ordered_json j;
  j["epoch"] = stats.epoch;
  j["step"] = stats.steps;
  j["reg_loss"] = stats.mean.regression;
  j["cls_loss"] = stats.mean.classification;
  j["total"] = stats.mean.total;
  return j.dump();
}

}  // namespace semispec
