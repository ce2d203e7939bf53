// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <vector>

#include "fedtrace/model.hpp"
#include "fedtrace/vocab.hpp"

namespace fedtrace {

struct CorpusSpec {
  std::size_t vocab_size = 2000;
  std::size_t num_classes = 4;
  std::size_t samples_per_class = 500;
  std::size_t min_length = 8;
  std::size_t max_length = 20;
  double signal = 0.7;  // probability a token is drawn from the class's own tokens
  std::size_t indicative_per_class = 20;
  std::size_t background_size = 200;
  std::uint64_t seed = 42;

  void validate() const;
};

struct Corpus {
  Vocab vocab;
  std::vector<Example> train;
  std::vector<Example> test;
  // Every token the generator can emit. Its complement (minus <unk>) is the
  // pool of tokens that never occur in clean text.
  std::set<TokenId> emitted;

  std::set<TokenId> reserved_indices() const;
};

// Class-conditional token mixture with a stratified 80/20 train/test split.
// Token layout: <unk>, per-class indicative tokens, background tokens, unused.
Corpus generate_corpus(const CorpusSpec& spec);

// One example per line: `label<TAB>token token ...`.
void save_tsv(const std::filesystem::path& path, std::span<const Example> examples,
              const Vocab& vocab);
std::vector<Example> load_tsv(const std::filesystem::path& path, const Vocab& vocab);

}  // namespace fedtrace
