// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "semispec/numerics/matrix.hpp"

namespace semispec {

enum class ReportFormat { kCsv, kJsonl };

ReportFormat parse_format(const std::string& name);
std::string format_extension(ReportFormat format);

// One result line. "row" lines hold a single (config, temperature, seed)
// run; "aggregate" lines hold mean and sample stddev over seeds.
struct ResultRow {
  std::string label;
  std::string kind = "row";
  Real tau = 0;
  std::uint64_t seed = 0;  // 0 on aggregate lines
  Real avg_accept = 0;
  Real avg_accept_std = 0;
  Real speedup_measured = 0;
  Real speedup_measured_std = 0;
  Real speedup_modeled = 0;
  Real speedup_modeled_std = 0;
  Real target_flops_per_round = 0;
  Real draft_flops_per_round = 0;
  Real draft_passes_per_round = 0;
  std::string status = "ok";
};

using ResultTable = std::vector<ResultRow>;

// Stable CSV column order.
const std::vector<std::string>& result_columns();

// Adds one aggregate line per (label, tau) over its "row" lines with
// status ok, after the existing lines.
void append_aggregates(ResultTable& table);

void write_csv(const ResultTable& table, std::ostream& out);
void write_jsonl(const ResultTable& table, std::ostream& out);
ResultTable parse_csv(std::istream& in);
ResultTable parse_jsonl(std::istream& in);

// Writes the table to `path`. Throws "table nonempty" on an empty table
// and on unwritable paths.
void emit_report(const ResultTable& table, ReportFormat format, const std::string& path);
// Format chosen by extension (.csv or .jsonl).
ResultTable read_table(const std::string& path);

}  // namespace semispec
