// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace fedtrace {

// Sub-seed for a named component: the first 8 bytes (big-endian) of
// SHA-256(be64(master_seed) || name). Every random draw in the library is
// rooted in a seed produced by this function.
std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view name);

// Derives a child seed from a parent seed and an integer index (round, client, ...).
std::uint64_t derive_seed(std::uint64_t parent_seed, std::string_view name, std::uint64_t index);

// Seeded generator with platform-independent distributions. The standard
// library distributions are implementation-defined, which would make frozen
// regression fixtures depend on the toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);

  // Standard normal via the Marsaglia polar method.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Gamma(shape, 1) via Marsaglia-Tsang.
  double gamma(double shape);

  // Symmetric Dirichlet draw of dimension k with concentration alpha.
  std::vector<double> dirichlet(double alpha, std::size_t k);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(items[i - 1], items[j]);
    }
  }
  template <typename T>
  void shuffle(std::vector<T>& items) {
    shuffle(std::span<T>(items));
  }

  // k distinct indices from [0, n) in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fedtrace
