// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "semispec/numerics/matrix.hpp"

namespace semispec::io {

// Weight snapshot container. All integers little-endian.
//
//   bytes  "SSPK"                      magic
//   u32    version (1)
//   u32 n, n bytes                     kind ("target" or "draft")
//   u32 n, n bytes                     config, "key=value\n" lines
//   u32    tensor count
//   per tensor:
//     u32 n, n bytes                   name
//     u64 rows, u64 cols
//     rows*cols IEEE-754 binary64      row-major values
struct TensorArchive {
  std::string kind;
  std::map<std::string, std::string> config;
  std::vector<std::pair<std::string, Matrix>> tensors;

  const Matrix& tensor(const std::string& name) const;
  const std::string& config_value(const std::string& key) const;
};

inline constexpr std::uint32_t kArchiveVersion = 1;

void write_archive(std::ostream& out, const TensorArchive& archive);
TensorArchive read_archive(std::istream& in);

void save_archive(const std::filesystem::path& path, const TensorArchive& archive);
TensorArchive load_archive(const std::filesystem::path& path);

}  // namespace semispec::io
