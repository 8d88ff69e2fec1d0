// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#include "semispec/harness/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace semispec {
namespace {

namespace pt = boost::property_tree;

const std::set<std::string> kExperimentKeys = {
    "label",          "task",           "visual_tokens",      "text_tokens",
    "temperatures",   "seeds",          "num_train_prompts",  "num_eval_prompts",
    "max_new_tokens", "compression_ratio", "trace_temperature", "wall_clock",
    "untrained_baseline", "self_draft"};
const std::set<std::string> kTargetKeys = {"vocab_size", "d_model", "n_heads", "n_layers",
                                           "d_patch",    "max_seq", "d_ff",    "logit_scale"};
const std::set<std::string> kDraftKeys = {"draft_len", "group_size", "n_heads",
                                          "n_layers",  "d_ff",       "compress_temperature"};
const std::set<std::string> kTrainKeys = {"alpha",      "learning_rate", "batch_size",
                                          "epochs",     "max_seq_len",   "trace_tokens",
                                          "optimizer",  "adam_beta1",    "adam_beta2",
                                          "adam_eps"};

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  return s.substr(first, s.find_last_not_of(" \t\r\n") - first + 1);
}

io::ConfigMap section(const pt::ptree& tree, const std::string& name,
                      const std::set<std::string>& allowed) {
  io::ConfigMap out;
  const auto child = tree.get_child_optional(name);
  if (!child) return out;
  for (const auto& [key, node] : *child) {
    if (!allowed.count(key)) throw Error("config: unknown key '" + key + "' in [" + name + "]");
    out[key] = trim(node.get_value<std::string>());
  }
  return out;
}

bool parse_bool(const std::string& text, const std::string& key) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw Error("bad value for '" + key + "': '" + text + "' (expected true or false)");
}

template <class T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) {
      out += io::format_real(values[i]);
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

}  // namespace

std::string task_name(TaskKind kind) { return kind == TaskKind::kVcLike ? "vc" : "vit"; }

TaskKind parse_task(const std::string& name) {
  if (name == "vc") return TaskKind::kVcLike;
  if (name == "vit") return TaskKind::kVitLike;
  throw Error("unknown task '" + name + "' (expected vc or vit)");
}

PromptShape default_shape(TaskKind kind, const TargetConfig& target) {
  PromptShape s;
  s.visual_tokens = kind == TaskKind::kVcLike ? 64 : 16;
  s.text_tokens = kind == TaskKind::kVcLike ? 4 : 12;
  s.d_patch = target.d_patch;
  s.vocab = target.vocab_size;
  return s;
}

Real parse_fraction(const std::string& raw) {
  const std::string text = trim(raw);
  const auto slash = text.find('/');
  Real value;
  if (slash == std::string::npos) {
    value = io::parse_number<Real>(text, "fraction");
  } else {
    const Real num = io::parse_number<Real>(trim(text.substr(0, slash)), "fraction");
    const Real den = io::parse_number<Real>(trim(text.substr(slash + 1)), "fraction");
    if (den == 0) throw Error("fraction '" + text + "' has a zero denominator");
    value = num / den;
  }
  if (!std::isfinite(value)) throw Error("fraction '" + text + "' is not finite");
  return value;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw Error("experiment: seeds must be nonempty");
  if (temperatures.empty()) throw Error("experiment: temperatures must be nonempty");
  for (Real t : temperatures) {
    if (!(t >= 0)) throw Error("experiment: temperatures must be >= 0");
  }
  if (num_train_prompts == 0) throw Error("experiment: num_train_prompts must be >= 1");
  if (num_eval_prompts == 0) throw Error("experiment: num_eval_prompts must be >= 1");
  if (max_new_tokens == 0) throw Error("experiment: max_new_tokens must be >= 1");
  if (!(compression_ratio >= 0 && compression_ratio <= 1)) {
    throw Error("experiment: compression_ratio must lie in [0, 1]");
  }
  if (!(trace_temperature >= 0)) throw Error("experiment: trace_temperature must be >= 0");
  target.validate();
  train.validate();
  const DraftConfig d = resolved_draft();
  d.validate();
  const PromptShape s = prompt_shape();
  if (s.text_tokens == 0) throw Error("experiment: prompts need at least one text token");
  const std::size_t need = s.visual_tokens + s.text_tokens + max_new_tokens + d.draft_len - 1;
  if (need > target.max_seq) {
    throw Error("experiment: prompt + max_new_tokens + K - 1 = " + std::to_string(need) +
                " exceeds target max_seq " + std::to_string(target.max_seq));
  }
}

PromptShape ExperimentConfig::prompt_shape() const {
  PromptShape s = default_shape(task, target);
  if (visual_tokens) s.visual_tokens = visual_tokens;
  if (text_tokens) s.text_tokens = text_tokens;
  return s;
}

DraftConfig ExperimentConfig::resolved_draft() const {
  DraftConfig d = draft;
  d.d_model = target.d_model;
  const std::size_t n = prompt_shape().visual_tokens;
  d.compress = compression_ratio < 1;
  d.compressed_tokens =
      d.compress ? static_cast<std::size_t>(std::llround(compression_ratio * static_cast<Real>(n)))
                 : n;
  return d;
}

ExperimentConfig parse_experiment_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(std::string("config: ") + e.what());
  }
  for (const auto& [name, node] : tree) {
    if (name != "experiment" && name != "target" && name != "draft" && name != "train") {
      throw Error("config: unknown section [" + name + "]");
    }
    if (node.empty() && !node.data().empty()) {
      throw Error("config: key '" + name + "' must sit inside a section");
    }
  }

  ExperimentConfig c;
  const io::ConfigMap e = section(tree, "experiment", kExperimentKeys);
  if (auto it = e.find("label"); it != e.end()) c.label = it->second;
  if (auto it = e.find("task"); it != e.end()) c.task = parse_task(it->second);
  c.visual_tokens = io::get_or<std::size_t>(e, "visual_tokens", c.visual_tokens);
  c.text_tokens = io::get_or<std::size_t>(e, "text_tokens", c.text_tokens);
  if (auto it = e.find("temperatures"); it != e.end()) {
    c.temperatures.clear();
    for (const auto& v : split_list(it->second)) {
      c.temperatures.push_back(io::parse_number<Real>(v, "temperatures"));
    }
  }
  if (auto it = e.find("seeds"); it != e.end()) {
    c.seeds.clear();
    for (const auto& v : split_list(it->second)) {
      c.seeds.push_back(io::parse_number<std::uint64_t>(v, "seeds"));
    }
  }
  c.num_train_prompts = io::get_or<std::size_t>(e, "num_train_prompts", c.num_train_prompts);
  c.num_eval_prompts = io::get_or<std::size_t>(e, "num_eval_prompts", c.num_eval_prompts);
  c.max_new_tokens = io::get_or<std::size_t>(e, "max_new_tokens", c.max_new_tokens);
  if (auto it = e.find("compression_ratio"); it != e.end()) {
    c.compression_ratio = parse_fraction(it->second);
  }
  c.trace_temperature = io::get_or<Real>(e, "trace_temperature", c.trace_temperature);
  if (auto it = e.find("wall_clock"); it != e.end()) c.wall_clock = parse_bool(it->second, it->first);
  if (auto it = e.find("untrained_baseline"); it != e.end()) {
    c.untrained_baseline = parse_bool(it->second, it->first);
  }
  if (auto it = e.find("self_draft"); it != e.end()) c.self_draft = parse_bool(it->second, it->first);

  c.target = TargetConfig::from_map(section(tree, "target", kTargetKeys));
  io::ConfigMap d = section(tree, "draft", kDraftKeys);
  d.emplace("d_model", std::to_string(c.target.d_model));
  d.emplace("compressed_tokens", "0");
  c.draft = DraftConfig::from_map(d);

  const io::ConfigMap t = section(tree, "train", kTrainKeys);
  c.train.alpha = io::get_or<Real>(t, "alpha", c.train.alpha);
  c.train.learning_rate = io::get_or<Real>(t, "learning_rate", c.train.learning_rate);
  c.train.batch_size = io::get_or<std::size_t>(t, "batch_size", c.train.batch_size);
  c.train.epochs = io::get_or<std::size_t>(t, "epochs", c.train.epochs);
  c.train.max_seq_len = io::get_or<std::size_t>(t, "max_seq_len", c.train.max_seq_len);
  c.train.trace_tokens = io::get_or<std::size_t>(t, "trace_tokens", c.train.trace_tokens);
  if (auto it = t.find("optimizer"); it != t.end()) c.train.optimizer = parse_optimizer(it->second);
  c.train.adam_beta1 = io::get_or<Real>(t, "adam_beta1", c.train.adam_beta1);
  c.train.adam_beta2 = io::get_or<Real>(t, "adam_beta2", c.train.adam_beta2);
  c.train.adam_eps = io::get_or<Real>(t, "adam_eps", c.train.adam_eps);

  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file '" + path + "'");
  try {
    return parse_experiment_config(in);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

std::string to_ini(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "[experiment]\n"
      << "label = " << c.label << "\n"
      << "task = " << task_name(c.task) << "\n"
      << "visual_tokens = " << c.visual_tokens << "\n"
      << "text_tokens = " << c.text_tokens << "\n"
      << "temperatures = " << join(c.temperatures) << "\n"
      << "seeds = " << join(c.seeds) << "\n"
      << "num_train_prompts = " << c.num_train_prompts << "\n"
      << "num_eval_prompts = " << c.num_eval_prompts << "\n"
      << "max_new_tokens = " << c.max_new_tokens << "\n"
      << "compression_ratio = " << io::format_real(c.compression_ratio) << "\n"
      << "trace_temperature = " << io::format_real(c.trace_temperature) << "\n"
      << "wall_clock = " << (c.wall_clock ? "true" : "false") << "\n"
      << "untrained_baseline = " << (c.untrained_baseline ? "true" : "false") << "\n"
      << "self_draft = " << (c.self_draft ? "true" : "false") << "\n\n";
  out << "[target]\n";
  for (const auto& [k, v] : c.target.to_map()) {
    if (kTargetKeys.count(k)) out << k << " = " << v << "\n";
  }
  out << "\n[draft]\n";
  for (const auto& [k, v] : c.draft.to_map()) {
    if (kDraftKeys.count(k)) out << k << " = " << v << "\n";
  }
  out << "\n[train]\n"
      << "alpha = " << io::format_real(c.train.alpha) << "\n"
      << "learning_rate = " << io::format_real(c.train.learning_rate) << "\n"
      << "batch_size = " << c.train.batch_size << "\n"
      << "epochs = " << c.train.epochs << "\n"
      << "max_seq_len = " << c.train.max_seq_len << "\n"
      << "trace_tokens = " << c.train.trace_tokens << "\n"
      << "optimizer = " << optimizer_name(c.train.optimizer) << "\n"
      << "adam_beta1 = " << io::format_real(c.train.adam_beta1) << "\n"
      << "adam_beta2 = " << io::format_real(c.train.adam_beta2) << "\n"
      << "adam_eps = " << io::format_real(c.train.adam_eps) << "\n";
  return out.str();
}

}  // namespace semispec
