// Copyright 2026 The semispec Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

namespace semispec {

// SplitMix64 finalizer; used to derive independent child seeds.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Child seed for a named stream of a root seed. All randomness in the
// harness flows through this so runs differ only where streams differ.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) noexcept;

// Seeded generator with a platform-independent draw sequence.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. Uniform and normal variates are derived here rather than through
// <random> distributions, whose algorithms are implementation-defined:
//   uniform(): top 53 bits of one engine output, scaled by 2^-53, in [0, 1)
//   normal():  Box-Muller on two uniforms, one variate per call
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double normal();
  // Uniform integer in [0, bound) by rejection (bound > 0).
  std::uint64_t below(std::uint64_t bound);

  // Independent generator for sub-stream `stream` of this generator's seed.
  SeededRng split(std::uint64_t stream) const { return SeededRng(derive_seed(seed_, stream)); }

  bool operator==(const SeededRng& other) const { return engine_ == other.engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace semispec
