// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedtrace/rng.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "fedtrace/errors.hpp"
#include "fedtrace/hash.hpp"

namespace fedtrace {

namespace {
std::uint64_t first_be64(const Sha256Digest& d) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | d[i];
  return v;
}
}  // namespace

std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view name) {
  Bytes buf;
  append_be64(buf, master_seed);
  buf.insert(buf.end(), name.begin(), name.end());
  return first_be64(sha256(buf));
}

std::uint64_t derive_seed(std::uint64_t parent_seed, std::string_view name, std::uint64_t index) {
  Bytes buf;
  append_be64(buf, parent_seed);
  buf.insert(buf.end(), name.begin(), name.end());
  append_be64(buf, index);
  return first_be64(sha256(buf));
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  if (n == 0) throw InvalidArgument("uniform_index: empty range");
  // Rejection sampling on the top of the 64-bit range removes modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double m = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * m;
  has_spare_ = true;
  return u * m;
}

double Rng::gamma(double shape) {
  if (!(shape > 0.0)) throw InvalidArgument("gamma: shape must be positive");
  if (shape < 1.0) {
    // Boost to shape+1 and scale by U^(1/shape).
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::vector<double> Rng::dirichlet(double alpha, std::size_t k) {
  std::vector<double> draws(k);
  double total = 0.0;
  for (auto& g : draws) {
    g = gamma(alpha);
    total += g;
  }
  if (!(total > 0.0)) {
    // All components underflowed (tiny alpha): put the mass on one component.
    std::fill(draws.begin(), draws.end(), 0.0);
    draws[uniform_index(k)] = 1.0;
    return draws;
  }
  for (auto& g : draws) g /= total;
  return draws;
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n, std::size_t k) {
  if (k > n) throw InvalidArgument("sample_without_replacement: k > n");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + uniform_index(n - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace fedtrace
