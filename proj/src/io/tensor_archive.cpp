// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#include "semispec/io/tensor_archive.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace semispec::io {
namespace {

constexpr std::array<char, 4> kMagic{'S', 'S', 'P', 'K'};

template <class U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  }
  out.write(bytes.data(), bytes.size());
}

template <class U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw Error("weight archive: unexpected end of data");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

void put_string(std::ostream& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto n = get_le<std::uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw Error("weight archive: truncated string");
  return s;
}

}  // namespace

const Matrix& TensorArchive::tensor(const std::string& name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) return m;
  }
  throw Error("weight archive: missing tensor '" + name + "'");
}

const std::string& TensorArchive::config_value(const std::string& key) const {
  auto it = config.find(key);
  if (it == config.end()) throw Error("weight archive: missing config key '" + key + "'");
  return it->second;
}

void write_archive(std::ostream& out, const TensorArchive& archive) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kArchiveVersion);
  put_string(out, archive.kind);
  std::string cfg;
  for (const auto& [k, v] : archive.config) cfg += k + "=" + v + "\n";
  put_string(out, cfg);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(archive.tensors.size()));
  for (const auto& [name, m] : archive.tensors) {
    put_string(out, name);
    put_le<std::uint64_t>(out, m.rows());
    put_le<std::uint64_t>(out, m.cols());
    for (Real v : m.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(static_cast<double>(v)));
  }
  if (!out) throw Error("weight archive: write failed");
}

TensorArchive read_archive(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw Error("weight archive: bad magic");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kArchiveVersion) {
    throw Error("weight archive: unsupported version " + std::to_string(version));
  }
  TensorArchive archive;
  archive.kind = get_string(in);
  std::istringstream cfg(get_string(in));
  for (std::string line; std::getline(cfg, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("weight archive: bad config line '" + line + "'");
    archive.config[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto count = get_le<std::uint32_t>(in);
  for (std::uint32_t t = 0; t < count; ++t) {
    std::string name = get_string(in);
    const auto rows = get_le<std::uint64_t>(in);
    const auto cols = get_le<std::uint64_t>(in);
    std::vector<Real> data(rows * cols);
    for (auto& v : data) v = static_cast<Real>(std::bit_cast<double>(get_le<std::uint64_t>(in)));
    archive.tensors.emplace_back(std::move(name), Matrix(rows, cols, std::move(data)));
  }
  return archive;
}

void save_archive(const std::filesystem::path& path, const TensorArchive& archive) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  write_archive(out, archive);
}

TensorArchive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return read_archive(in);
}

}  // namespace semispec::io
