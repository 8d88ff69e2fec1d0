// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#include "semispec/harness/experiment.hpp"

#include <cmath>
#include <exception>
#include <limits>
#include <ostream>

#include "json.hpp"

namespace semispec {
namespace {

constexpr std::size_t kPrototypes = 4;
constexpr Real kPatchNoise = 0.1;

Real nan() { return std::numeric_limits<Real>::quiet_NaN(); }

ResultRow blank_row(const std::string& label, Real tau, std::uint64_t seed,
                    const std::string& status) {
  ResultRow r;
  r.label = label;
  r.tau = tau;
  r.seed = seed;
  r.avg_accept = r.speedup_measured = r.speedup_modeled = nan();
  r.target_flops_per_round = r.draft_flops_per_round = r.draft_passes_per_round = nan();
  r.avg_accept_std = r.speedup_measured_std = r.speedup_modeled_std = nan();
  r.status = status;
  return r;
}

ResultRow summary_row(const std::string& label, Real tau, std::uint64_t seed,
                      const EvalSummary& s, std::uint64_t target_flops,
                      std::uint64_t draft_flops) {
  ResultRow r = blank_row(label, tau, seed, "ok");
  r.avg_accept = s.avg_accept;
  r.speedup_measured = s.speedup_measured;
  r.speedup_modeled = s.speedup_modeled;
  r.target_flops_per_round = static_cast<Real>(target_flops);
  r.draft_flops_per_round = static_cast<Real>(draft_flops);
  r.draft_passes_per_round = s.draft_passes_per_round;
  return r;
}

void say(std::ostream* log, const std::string& msg) {
  if (log) *log << msg << std::endl;
}

}  // namespace

MultimodalPrompt make_prompt(const PromptShape& shape, SeededRng& rng) {
  if (shape.vocab == 0) throw Error("prompt shape: vocab must be >= 1");
  MultimodalPrompt p;
  p.patches = Matrix(shape.visual_tokens, shape.d_patch);
  if (shape.visual_tokens > 0) {
    Matrix protos(kPrototypes, shape.d_patch);
    for (auto& v : protos.values()) v = static_cast<Real>(rng.normal());
    for (std::size_t r = 0; r < shape.visual_tokens; ++r) {
      const std::size_t k = rng.below(kPrototypes);
      for (std::size_t c = 0; c < shape.d_patch; ++c) {
        p.patches(r, c) = protos(k, c) + kPatchNoise * static_cast<Real>(rng.normal());
      }
    }
  }
  for (std::size_t i = 0; i < shape.text_tokens; ++i) {
    p.text_tokens.push_back(static_cast<Token>(rng.below(shape.vocab)));
  }
  return p;
}

std::vector<MultimodalPrompt> gen_prompts(const PromptShape& shape, std::size_t count,
                                          const SeededRng& rng) {
  if (count == 0) throw Error("gen_prompts: count >= 1 required");
  std::vector<MultimodalPrompt> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SeededRng local = rng.split(i);
    out.push_back(make_prompt(shape, local));
  }
  return out;
}

void write_prompts(const std::vector<MultimodalPrompt>& prompts, std::ostream& out) {
  for (const auto& p : prompts) {
    nlohmann::ordered_json j;
    j["visual"] = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < p.patches.rows(); ++r) {
      auto row = p.patches.row(r);
      j["visual"].push_back(std::vector<Real>(row.begin(), row.end()));
    }
    j["text"] = p.text_tokens;
    out << j.dump(-1, ' ', false, nlohmann::json::error_handler_t::strict) << "\n";
  }
}

std::vector<MultimodalPrompt> read_prompts(std::istream& in) {
  std::vector<MultimodalPrompt> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      MultimodalPrompt p;
      const auto rows = j.at("visual").get<std::vector<std::vector<Real>>>();
      p.patches = Matrix(rows.size(), rows.empty() ? 0 : rows.front().size());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != p.patches.cols()) throw Error("ragged visual rows");
        std::copy(rows[r].begin(), rows[r].end(), p.patches.row(r).begin());
      }
      p.text_tokens = j.at("text").get<std::vector<Token>>();
      out.push_back(std::move(p));
    } catch (const std::exception& e) {
      throw Error("prompt file line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (out.empty()) throw Error("prompt file holds no prompts");
  return out;
}

TargetModel build_target(const ExperimentConfig& cfg, std::uint64_t root_seed) {
  TargetConfig t = cfg.target;
  t.rng_seed = derive_seed(root_seed, kStreamTarget);
  return TargetModel::create(t);
}

DraftModel build_draft(const ExperimentConfig& cfg, std::uint64_t root_seed) {
  DraftConfig d = cfg.resolved_draft();
  d.rng_seed = derive_seed(root_seed, kStreamDraft);
  return DraftModel::create(d);
}

void train_draft(DraftModel& draft, const TargetModel& target, const ExperimentConfig& cfg,
                 const std::vector<MultimodalPrompt>& prompts, std::uint64_t root_seed,
                 const std::function<void(const EpochStats&)>& on_epoch) {
  const SeededRng trace_rng(derive_seed(root_seed, kStreamTrainPrompts));
  const std::vector<TrainTrace> traces =
      collect_traces(target, prompts, cfg.trace_temperature, cfg.train, trace_rng.split(1));
  SeededRng shuffle(derive_seed(root_seed, kStreamShuffle));
  DraftTrainer trainer(draft, target, cfg.train);
  for (std::size_t e = 0; e < cfg.train.epochs; ++e) {
    const EpochStats stats = trainer.train_epoch(traces, shuffle);
    if (on_epoch) on_epoch(stats);
  }
}

EvalSummary evaluate(const TargetModel& target, const DrafterFactory& make_drafter,
                     const std::vector<MultimodalPrompt>& prompts, std::size_t max_new_tokens,
                     Real temperature, const SeededRng& rng, bool wall_clock) {
  if (prompts.empty()) throw Error("evaluate: no prompts");
  EvalSummary s;
  s.per_prompt.resize(prompts.size());
  std::vector<std::exception_ptr> errors(prompts.size());
  DecodeOptions options;
  options.measure_baseline = wall_clock;
  // Timed runs stay on one thread so the two clocks see the same machine.
#pragma omp parallel for schedule(dynamic) if (!wall_clock)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(prompts.size()); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      SeededRng local = rng.split(idx);
      auto drafter = make_drafter();
      s.per_prompt[idx] =
          decode(target, *drafter, prompts[idx], max_new_tokens, temperature, local, options);
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::size_t accepted = 0, passes = 0;
  Real step_flops = 0, draft_flops = 0, baseline_s = 0, spec_s = 0;
  std::size_t group = 1, k = 1;
  for (const auto& r : s.per_prompt) {
    const DecodeMetrics& m = r.metrics;
    s.rounds += m.rounds;
    accepted += m.total_accepted;
    passes += m.draft_passes;
    step_flops += m.mean_target_step_flops * static_cast<Real>(m.rounds);
    draft_flops += static_cast<Real>(m.draft_round_flops);
    baseline_s += m.wall_time_target_baseline;
    spec_s += m.wall_time_spec;
  }
  {
    auto probe = make_drafter();
    k = probe->draft_len();
    group = k / probe->passes_per_round();
  }
  s.speedup_measured = nan();
  if (s.rounds == 0) {
    s.speedup_modeled = 1;
    return s;
  }
  const Real rounds = static_cast<Real>(s.rounds);
  s.avg_accept = static_cast<Real>(accepted) / rounds;
  s.emitted_per_round = static_cast<Real>(accepted + s.rounds) / rounds;
  s.draft_passes_per_round = static_cast<Real>(passes) / rounds;
  const Real m_d = draft_flops / rounds / static_cast<Real>(k / group);
  s.speedup_modeled = modeled_speedup(s.emitted_per_round, step_flops / rounds, m_d, k, group);
  if (wall_clock && spec_s > 0) s.speedup_measured = baseline_s / spec_s;
  return s;
}

ResultTable run_experiment(const ExperimentConfig& cfg, std::ostream* log) {
  cfg.validate();
  const PromptShape shape = cfg.prompt_shape();
  const DraftConfig dcfg = cfg.resolved_draft();
  const std::size_t vocab = cfg.target.vocab_size;
  const std::size_t k = dcfg.draft_len;
  const std::size_t prompt_len = shape.visual_tokens + shape.text_tokens;
  const std::uint64_t verify_flops = flops_of_forward(cfg.target, prompt_len, k + 1).total();
  const std::uint64_t head_flops =
      draft_flops(dcfg, vocab, shape.visual_tokens, shape.text_tokens, dcfg.compress);
  std::uint64_t self_flops = 0;
  for (std::size_t j = 0; j < k; ++j) {
    self_flops += flops_of_forward(cfg.target, prompt_len + j, 1).total();
  }

  ResultTable table;
  for (const std::uint64_t seed : cfg.seeds) {
    say(log, "[" + cfg.label + "] seed " + std::to_string(seed) + ": building target and draft");
    const TargetModel target = build_target(cfg, seed);
    DraftModel draft = build_draft(cfg, seed);
    const auto train_prompts = gen_prompts(shape, cfg.num_train_prompts,
                                           SeededRng(derive_seed(seed, kStreamTrainPrompts)));
    const auto eval_prompts = gen_prompts(shape, cfg.num_eval_prompts,
                                          SeededRng(derive_seed(seed, kStreamEvalPrompts)));
    const SeededRng decode_rng(derive_seed(seed, kStreamDecode));

    auto eval_rows = [&](const std::string& label, const DrafterFactory& factory,
                         std::uint64_t draft_cost) {
      for (const Real tau : cfg.temperatures) {
        const EvalSummary s =
            evaluate(target, factory, eval_prompts, cfg.max_new_tokens, tau, decode_rng,
                     cfg.wall_clock);
        table.push_back(summary_row(label, tau, seed, s, verify_flops, draft_cost));
        say(log, "[" + label + "] seed " + std::to_string(seed) + " tau " + io::format_real(tau) +
                     ": A = " + io::format_real(s.avg_accept));
      }
    };
    const DrafterFactory head_factory = [&] {
      return std::make_unique<SemiArDrafter>(draft, target);
    };

    if (cfg.self_draft) {
      eval_rows(cfg.label + "/self-draft",
                [&] { return std::make_unique<SelfDrafter>(target, k); }, self_flops);
    }
    if (cfg.untrained_baseline) eval_rows(cfg.label + "/untrained", head_factory, head_flops);

    std::string status = "ok";
    try {
      train_draft(draft, target, cfg, train_prompts, seed, [&](const EpochStats& e) {
        say(log, "[" + cfg.label + "] seed " + std::to_string(seed) + " " + train_log_line(e));
      });
    } catch (const TrainingDiverged& e) {
      status = std::string("diverged: ") + e.what();
      say(log, "[" + cfg.label + "] " + status);
    }
    if (status == "ok") {
      eval_rows(cfg.label, head_factory, head_flops);
    } else {
      for (const Real tau : cfg.temperatures) table.push_back(blank_row(cfg.label, tau, seed, status));
    }
  }
  append_aggregates(table);
  return table;
}

AblationAxis parse_axis(const std::string& name) {
  if (name == "K") return AblationAxis::kDraftLen;
  if (name == "compression_ratio") return AblationAxis::kCompressionRatio;
  if (name == "k_prime") return AblationAxis::kGroupSize;
  if (name == "draft_scale") return AblationAxis::kDraftScale;
  throw Error("unknown ablation axis '" + name +
              "' (expected K, compression_ratio, k_prime or draft_scale)");
}

std::string axis_name(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::kDraftLen:
      return "K";
    case AblationAxis::kCompressionRatio:
      return "compression_ratio";
    case AblationAxis::kGroupSize:
      return "k_prime";
    case AblationAxis::kDraftScale:
      return "draft_scale";
  }
  return "?";
}

ExperimentConfig apply_axis(const ExperimentConfig& cfg, AblationAxis axis,
                            const std::string& value) {
  ExperimentConfig c = cfg;
  c.label = axis_name(axis) + "=" + value;
  switch (axis) {
    case AblationAxis::kDraftLen:
      // K sweeps keep one pass per round, k' = K.
      c.draft.draft_len = io::parse_number<std::size_t>(value, "K");
      c.draft.group_size = c.draft.draft_len;
      break;
    case AblationAxis::kCompressionRatio:
      c.compression_ratio = parse_fraction(value);
      break;
    case AblationAxis::kGroupSize:
      c.draft.group_size = io::parse_number<std::size_t>(value, "k_prime");
      break;
    case AblationAxis::kDraftScale: {
      const auto x = value.find('x');
      if (x == std::string::npos) throw Error("draft_scale value '" + value + "' is not HxL");
      c.draft.n_heads = io::parse_number<std::size_t>(value.substr(0, x), "draft heads");
      c.draft.n_layers = io::parse_number<std::size_t>(value.substr(x + 1), "draft layers");
      break;
    }
  }
  return c;
}

ResultTable ablate(const ExperimentConfig& cfg, AblationAxis axis,
                   const std::vector<std::string>& values, std::ostream* log) {
  if (values.empty()) throw Error("ablate: values must be nonempty");
  ResultTable table;
  for (const auto& value : values) {
    ExperimentConfig c;
    try {
      c = apply_axis(cfg, axis, value);
      c.untrained_baseline = false;
      c.self_draft = false;
      c.validate();
    } catch (const Error& e) {
      say(log, "warning: skipping " + axis_name(axis) + "=" + value + ": " + e.what());
      table.push_back(blank_row(axis_name(axis) + "=" + value, nan(), 0,
                                std::string("skipped: ") + e.what()));
      continue;
    }
    ResultTable part = run_experiment(c, log);
    table.insert(table.end(), part.begin(), part.end());
  }
  return table;
}

}  // namespace semispec
