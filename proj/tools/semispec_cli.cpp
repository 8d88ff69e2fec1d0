// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

// Command-line driver: synthetic data, draft training, decoding, benchmark
// tables and ablation sweeps.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "semispec/harness/experiment.hpp"
#include "semispec/io/tensor_archive.hpp"

namespace fs = std::filesystem;
using namespace semispec;
using io::load_archive;
using io::save_archive;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::string format = "csv";
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_format) {
  cmd->add_option("--config", o.config, "INI experiment config (defaults apply when omitted)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "root seed; replaces the config's seed list");
  cmd->add_option("--out", o.out, "output directory")->capture_default_str();
  if (with_format) {
    cmd->add_option("--format", o.format, "table format")
        ->check(CLI::IsMember({"csv", "jsonl"}))
        ->capture_default_str();
  }
}

ExperimentConfig load_config(const CommonOptions& o) {
  ExperimentConfig cfg;
  if (!o.config.empty()) cfg = load_experiment_config(o.config);
  if (o.seed) cfg.seeds = {*o.seed};
  cfg.validate();
  return cfg;
}

fs::path prepare_out(const CommonOptions& o) {
  const fs::path dir(o.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + o.out + "': " + ec.message());
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

std::vector<MultimodalPrompt> load_prompts(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "' (run gen-data first)");
  return read_prompts(in);
}

std::string nullable(Real v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

int cmd_gen_data(const CommonOptions& o) {
  const ExperimentConfig cfg = load_config(o);
  const fs::path dir = prepare_out(o);
  const std::uint64_t seed = cfg.seeds.front();
  const TargetModel target = build_target(cfg, seed);
  save_archive(dir / "target.bin", target.to_archive());
  const PromptShape shape = cfg.prompt_shape();
  {
    auto out = open_out(dir / "prompts_train.jsonl");
    write_prompts(gen_prompts(shape, cfg.num_train_prompts,
                              SeededRng(derive_seed(seed, kStreamTrainPrompts))),
                  out);
  }
  {
    auto out = open_out(dir / "prompts_eval.jsonl");
    write_prompts(gen_prompts(shape, cfg.num_eval_prompts,
                              SeededRng(derive_seed(seed, kStreamEvalPrompts))),
                  out);
  }
  auto ini = open_out(dir / "config.ini");
  ini << to_ini(cfg);
  std::cout << "wrote target.bin, prompts_train.jsonl, prompts_eval.jsonl, config.ini to "
            << dir.string() << "\n";
  return 0;
}

int cmd_train(const CommonOptions& o, const std::string& data) {
  ExperimentConfig cfg = load_config(o);
  const fs::path in_dir(data.empty() ? o.out : data);
  const TargetModel target = TargetModel::from_archive(load_archive(in_dir / "target.bin"));
  cfg.target = target.config();
  const auto prompts = load_prompts(in_dir / "prompts_train.jsonl");
  const fs::path dir = prepare_out(o);
  const std::uint64_t seed = cfg.seeds.front();

  DraftConfig dcfg = cfg.resolved_draft();
  if (!prompts.empty()) {
    // C follows the prompts on disk rather than the configured task shape.
    ExperimentConfig c = cfg;
    c.visual_tokens = prompts.front().visual_count();
    dcfg = c.resolved_draft();
  }
  dcfg.rng_seed = derive_seed(seed, kStreamDraft);
  DraftModel draft = DraftModel::create(dcfg);
  auto log = open_out(dir / "train_log.jsonl");
  train_draft(draft, target, cfg, prompts, seed, [&](const EpochStats& e) {
    const std::string line = train_log_line(e);
    log << line << "\n";
    std::cout << line << "\n";
  });
  save_archive(dir / "draft.bin", draft.to_archive());
  std::cout << "wrote draft.bin and train_log.jsonl to " << dir.string() << "\n";
  return 0;
}

int cmd_decode(const CommonOptions& o, const std::string& data) {
  ExperimentConfig cfg = load_config(o);
  const fs::path in_dir(data.empty() ? o.out : data);
  const TargetModel target = TargetModel::from_archive(load_archive(in_dir / "target.bin"));
  const DraftModel draft = DraftModel::from_archive(load_archive(in_dir / "draft.bin"));
  draft.check_compatible(target.config());
  const auto prompts = load_prompts(in_dir / "prompts_eval.jsonl");
  const fs::path dir = prepare_out(o);
  const std::uint64_t seed = cfg.seeds.front();
  const SeededRng decode_rng(derive_seed(seed, kStreamDecode));
  const DrafterFactory factory = [&] { return std::make_unique<SemiArDrafter>(draft, target); };

  auto out = open_out(dir / "decode.jsonl");
  for (const Real tau : cfg.temperatures) {
    const EvalSummary s =
        evaluate(target, factory, prompts, cfg.max_new_tokens, tau, decode_rng, cfg.wall_clock);
    for (std::size_t i = 0; i < s.per_prompt.size(); ++i) {
      const DecodeMetrics& m = s.per_prompt[i].metrics;
      nlohmann::ordered_json j;
      j["prompt"] = i;
      j["tau"] = tau;
      j["tokens"] = s.per_prompt[i].tokens;
      j["rounds"] = m.rounds;
      j["A"] = m.avg_accept;
      j["R_modeled"] = m.speedup_modeled;
      j["R_measured"] = std::isnan(m.speedup_measured) ? nlohmann::ordered_json(nullptr)
                                                       : nlohmann::ordered_json(m.speedup_measured);
      j["target_flops"] = m.target_flops;
      j["draft_flops"] = m.draft_flops;
      j["draft_passes"] = m.draft_passes;
      out << j.dump() << "\n";
    }
    std::cout << "tau " << nullable(tau) << ": A = " << nullable(s.avg_accept)
              << ", R_modeled = " << nullable(s.speedup_modeled) << "\n";
  }
  std::cout << "wrote decode.jsonl to " << dir.string() << "\n";
  return 0;
}

int cmd_bench(const CommonOptions& o) {
  const ExperimentConfig cfg = load_config(o);
  const fs::path dir = prepare_out(o);
  const ResultTable table = run_experiment(cfg, &std::cerr);
  const ReportFormat fmt = parse_format(o.format);
  const fs::path path = dir / ("results." + format_extension(fmt));
  emit_report(table, fmt, path.string());
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

int cmd_ablate(const CommonOptions& o, const std::string& axis, const std::string& values) {
  const ExperimentConfig cfg = load_config(o);
  const AblationAxis a = parse_axis(axis);
  const fs::path dir = prepare_out(o);
  const ResultTable table = ablate(cfg, a, split_list(values), &std::cerr);
  const ReportFormat fmt = parse_format(o.format);
  const fs::path path = dir / ("ablation_" + axis_name(a) + "." + format_extension(fmt));
  emit_report(table, fmt, path.string());
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

int cmd_report(const CommonOptions& o, const std::string& in) {
  ResultTable table = read_table(in);
  const bool has_aggregates = std::any_of(table.begin(), table.end(),
                                          [](const ResultRow& r) { return r.kind == "aggregate"; });
  if (!has_aggregates) append_aggregates(table);
  const fs::path dir = prepare_out(o);
  const ReportFormat fmt = parse_format(o.format);
  const fs::path path = dir / ("report." + format_extension(fmt));
  emit_report(table, fmt, path.string());

  std::cout << std::left << std::setw(28) << "label" << std::setw(8) << "tau" << std::setw(16)
            << "A" << std::setw(16) << "R_modeled" << "status\n";
  for (const auto& r : table) {
    if (r.kind != "aggregate" && r.status == "ok") continue;
    std::ostringstream a, rm;
    a << std::fixed << std::setprecision(3) << r.avg_accept << " +- " << r.avg_accept_std;
    rm << std::fixed << std::setprecision(3) << r.speedup_modeled;
    std::cout << std::setw(28) << r.label << std::setw(8) << nullable(r.tau) << std::setw(16)
              << a.str() << std::setw(16) << rm.str() << r.status << "\n";
  }
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semispec: speculative decoding with a compressing semi-autoregressive draft"};
  app.require_subcommand(1);

  CommonOptions gen_o, train_o, decode_o, bench_o, ablate_o, report_o;
  std::string train_data, decode_data, axis, values, report_in;

  auto* gen = app.add_subcommand("gen-data", "write a target model and synthetic prompt sets");
  add_common(gen, gen_o, false);

  auto* train = app.add_subcommand("train-draft", "train a draft head on target traces");
  add_common(train, train_o, false);
  train->add_option("--data", train_data, "directory written by gen-data (default: --out)");

  auto* dec = app.add_subcommand("decode", "speculative decoding of the evaluation prompts");
  add_common(dec, decode_o, false);
  dec->add_option("--data", decode_data,
                  "directory holding target.bin, draft.bin, prompts_eval.jsonl (default: --out)");

  auto* bench = app.add_subcommand("bench", "train and evaluate end to end, write a result table");
  add_common(bench, bench_o, true);

  auto* abl = app.add_subcommand("ablate", "sweep one axis, one experiment per value");
  add_common(abl, ablate_o, true);
  abl->add_option("--axis", axis, "K, compression_ratio, k_prime or draft_scale")->required();
  abl->add_option("--values", values, "comma-separated values, e.g. 1,1/4,1/9")->required();

  auto* rep = app.add_subcommand("report", "re-emit a result table with aggregate rows");
  add_common(rep, report_o, true);
  rep->add_option("--in", report_in, "result table (.csv or .jsonl)")
      ->required()
      ->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen_data(gen_o);
    if (*train) return cmd_train(train_o, train_data);
    if (*dec) return cmd_decode(decode_o, decode_data);
    if (*bench) return cmd_bench(bench_o);
    if (*abl) return cmd_ablate(ablate_o, axis, values);
    if (*rep) return cmd_report(report_o, report_in);
  } catch (const std::exception& e) {
    std::cerr << "semispec: error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
