// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "fedtrace/model.hpp"
#include "fedtrace/rng.hpp"

namespace fedtrace::testing {

inline ModelShape small_shape(std::size_t vocab = 12, std::size_t classes = 3) {
  ModelShape s;
  s.vocab_size = vocab;
  s.embed_dim = 4;
  s.hidden_dim = 5;
  s.adapter_rank = 2;
  s.num_classes = classes;
  return s;
}

// Every tensor random, including the adapter up-projection.
inline TinyModel random_model(const ModelShape& shape, std::uint64_t seed, double range = 0.5) {
  InitOptions init;
  init.embedding_range = init.hidden_range = init.adapter_range = init.head_range = range;
  init.zero_adapter_b = false;
  return TinyModel::initialize(shape, seed, init);
}

inline std::vector<Example> random_batch(const ModelShape& shape, std::uint64_t seed,
                                         std::size_t n, std::size_t min_len = 1,
                                         std::size_t max_len = 6) {
  Rng rng(seed);
  std::vector<Example> out(n);
  for (auto& ex : out) {
    const std::size_t len = min_len + rng.uniform_index(max_len - min_len + 1);
    for (std::size_t i = 0; i < len; ++i) {
      ex.tokens.push_back(static_cast<TokenId>(rng.uniform_index(shape.vocab_size)));
    }
    ex.label = static_cast<int>(rng.uniform_index(shape.num_classes));
  }
  return out;
}

// Flattened copy of every parameter in canonical tensor order.
inline std::vector<double> flatten(const TinyModel& model) {
  std::vector<double> out;
  for (const auto& t : model.tensors()) out.insert(out.end(), t.values.begin(), t.values.end());
  return out;
}

// Gradients laid out like flatten(model).
inline std::vector<double> flatten(const TinyModel& model, const Gradients& g) {
  std::vector<double> out(model.embedding.values.size(), 0.0);
  for (const auto& [row, values] : g.embedding_rows) {
    std::copy(values.begin(), values.end(), out.begin() + row * model.shape.embed_dim);
  }
  auto append = [&out](const std::vector<double>& v) { out.insert(out.end(), v.begin(), v.end()); };
  append(g.hidden_weight.values);
  append(g.hidden_bias);
  append(g.adapter_a.values);
  append(g.adapter_b.values);
  append(g.head_weight.values);
  append(g.head_bias);
  return out;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("fedtrace_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace fedtrace::testing
