// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#include "semispec/harness/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "semispec/io/config_map.hpp"

namespace semispec {
namespace {

std::string fixed6(Real v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", static_cast<double>(v));
  return buf;
}

Real parse_real(const std::string& text, const std::string& column) {
  if (text == "nan") return std::nan("");
  if (text == "inf") return INFINITY;
  if (text == "-inf") return -INFINITY;
  return io::parse_number<Real>(text, column);
}

// CSV quoting for free-text cells; numbers never need it.
std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cells.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cells.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.emplace_back();
    } else {
      cells.back() += c;
    }
  }
  return cells;
}

std::vector<std::string> cells_of(const ResultRow& r) {
  return {r.label,
          r.kind,
          fixed6(r.tau),
          std::to_string(r.seed),
          fixed6(r.avg_accept),
          fixed6(r.avg_accept_std),
          fixed6(r.speedup_measured),
          fixed6(r.speedup_measured_std),
          fixed6(r.speedup_modeled),
          fixed6(r.speedup_modeled_std),
          fixed6(r.target_flops_per_round),
          fixed6(r.draft_flops_per_round),
          fixed6(r.draft_passes_per_round),
          r.status};
}

ResultRow row_of(const std::vector<std::string>& c) {
  const auto& names = result_columns();
  if (c.size() != names.size()) {
    throw Error("result table: expected " + std::to_string(names.size()) + " columns, got " +
                std::to_string(c.size()));
  }
  ResultRow r;
  r.label = c[0];
  r.kind = c[1];
  r.tau = parse_real(c[2], names[2]);
  r.seed = io::parse_number<std::uint64_t>(c[3], names[3]);
  r.avg_accept = parse_real(c[4], names[4]);
  r.avg_accept_std = parse_real(c[5], names[5]);
  r.speedup_measured = parse_real(c[6], names[6]);
  r.speedup_measured_std = parse_real(c[7], names[7]);
  r.speedup_modeled = parse_real(c[8], names[8]);
  r.speedup_modeled_std = parse_real(c[9], names[9]);
  r.target_flops_per_round = parse_real(c[10], names[10]);
  r.draft_flops_per_round = parse_real(c[11], names[11]);
  r.draft_passes_per_round = parse_real(c[12], names[12]);
  r.status = c[13];
  return r;
}

std::pair<Real, Real> mean_std(const std::vector<Real>& v) {
  Real mean = 0;
  for (Real x : v) mean += x;
  mean /= static_cast<Real>(v.size());
  Real var = 0;
  for (Real x : v) var += (x - mean) * (x - mean);
  const Real sd = v.size() > 1 ? std::sqrt(var / static_cast<Real>(v.size() - 1)) : Real{0};
  return {mean, sd};
}

}  // namespace

ReportFormat parse_format(const std::string& name) {
  if (name == "csv") return ReportFormat::kCsv;
  if (name == "jsonl") return ReportFormat::kJsonl;
  throw Error("unknown format '" + name + "' (expected csv or jsonl)");
}

std::string format_extension(ReportFormat format) {
  return format == ReportFormat::kCsv ? "csv" : "jsonl";
}

const std::vector<std::string>& result_columns() {
  static const std::vector<std::string> names = {
      "label",          "kind",           "tau",
      "seed",           "A",              "A_std",
      "R_measured",     "R_measured_std", "R_modeled",
      "R_modeled_std",  "target_flops_per_round", "draft_flops_per_round",
      "draft_passes_per_round", "status"};
  return names;
}

void append_aggregates(ResultTable& table) {
  std::vector<std::pair<std::string, Real>> order;
  std::map<std::pair<std::string, Real>, std::vector<const ResultRow*>> groups;
  for (const auto& r : table) {
    if (r.kind != "row" || r.status != "ok") continue;
    const auto key = std::make_pair(r.label, r.tau);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&r);
  }
  ResultTable extra;
  for (const auto& key : order) {
    const auto& rows = groups[key];
    auto column = [&](Real ResultRow::*field) {
      std::vector<Real> v;
      for (const auto* r : rows) v.push_back(r->*field);
      return mean_std(v);
    };
    ResultRow a;
    a.label = key.first;
    a.kind = "aggregate";
    a.tau = key.second;
    a.seed = 0;
    std::tie(a.avg_accept, a.avg_accept_std) = column(&ResultRow::avg_accept);
    std::tie(a.speedup_measured, a.speedup_measured_std) = column(&ResultRow::speedup_measured);
    std::tie(a.speedup_modeled, a.speedup_modeled_std) = column(&ResultRow::speedup_modeled);
    a.target_flops_per_round = column(&ResultRow::target_flops_per_round).first;
    a.draft_flops_per_round = column(&ResultRow::draft_flops_per_round).first;
    a.draft_passes_per_round = column(&ResultRow::draft_passes_per_round).first;
    a.status = "ok";
    extra.push_back(a);
  }
  table.insert(table.end(), extra.begin(), extra.end());
}

void write_csv(const ResultTable& table, std::ostream& out) {
  const auto& names = result_columns();
  for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << names[i];
  out << "\n";
  for (const auto& r : table) {
    const auto cells = cells_of(r);
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << quote(cells[i]);
    out << "\n";
  }
}

void write_jsonl(const ResultTable& table, std::ostream& out) {
  const auto& names = result_columns();
  for (const auto& r : table) {
    const auto cells = cells_of(r);
    nlohmann::ordered_json j;
    for (std::size_t i = 0; i < names.size(); ++i) {
      // Text columns stay strings; numeric ones keep their fixed 6-place
      // rendering so both formats carry identical digits.
      if (i == 0 || i == 1 || i == 13) {
        j[names[i]] = cells[i];
      } else if (i == 3) {
        j[names[i]] = r.seed;
      } else {
        j[names[i]] = cells[i] == "nan" || cells[i] == "inf" || cells[i] == "-inf"
                          ? nlohmann::ordered_json(nullptr)
                          : nlohmann::ordered_json::parse(cells[i]);
      }
    }
    out << j.dump() << "\n";
  }
}

ResultTable parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("result table: missing header");
  if (split_csv_line(line) != result_columns()) throw Error("result table: unexpected header");
  ResultTable table;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    table.push_back(row_of(split_csv_line(line)));
  }
  return table;
}

ResultTable parse_jsonl(std::istream& in) {
  ResultTable table;
  std::string line;
  const auto& names = result_columns();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("result table: bad JSON line: ") + e.what());
    }
    std::vector<std::string> cells;
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (!j.contains(names[i])) throw Error("result table: missing field '" + names[i] + "'");
      const auto& v = j[names[i]];
      if (v.is_string()) {
        cells.push_back(v.get<std::string>());
      } else if (v.is_null()) {
        cells.push_back("nan");
      } else if (v.is_number_unsigned()) {
        cells.push_back(std::to_string(v.get<std::uint64_t>()));
      } else {
        cells.push_back(fixed6(v.get<double>()));
      }
    }
    table.push_back(row_of(cells));
  }
  return table;
}

void emit_report(const ResultTable& table, ReportFormat format, const std::string& path) {
  if (table.empty()) throw Error("table nonempty: refusing to write an empty result table");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write report '" + path + "'");
  if (format == ReportFormat::kCsv) {
    write_csv(table, out);
  } else {
    write_jsonl(table, out);
  }
  out.flush();
  if (!out) throw Error("failed while writing report '" + path + "'");
}

ResultTable read_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open table '" + path + "'");
  const auto dot = path.rfind('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  if (ext == "csv") return parse_csv(in);
  if (ext == "jsonl") return parse_jsonl(in);
  throw Error("cannot infer table format of '" + path + "' (expected .csv or .jsonl)");
}

}  // namespace semispec
