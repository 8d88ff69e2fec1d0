// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>

#include "semispec/numerics/matrix.hpp"

// Flat string maps used to embed configs in weight archives.
namespace semispec::io {

using ConfigMap = std::map<std::string, std::string>;

inline std::string format_real(Real v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

template <class T>
T parse_number(const std::string& text, const std::string& key) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) throw Error("bad value for '" + key + "': '" + text + "'");
  return value;
}

template <class T>
T get_or(const ConfigMap& map, const std::string& key, T fallback) {
  auto it = map.find(key);
  return it == map.end() ? fallback : parse_number<T>(it->second, key);
}

}  // namespace semispec::io
