// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedtrace/corpus.hpp"

#include <fstream>
#include <string>

#include "fedtrace/errors.hpp"
#include "fedtrace/rng.hpp"

namespace fedtrace {

void CorpusSpec::validate() const {
  if (num_classes < 2) throw InvalidArgument("corpus.num_classes must be >= 2");
  if (vocab_size <= num_classes * 10) throw InvalidArgument("corpus.vocab_size must exceed 10*C");
  if (min_length < 2) throw InvalidArgument("corpus.min_length must be >= 2");
  if (max_length < min_length) throw InvalidArgument("corpus.max_length must be >= min_length");
  if (!(signal >= 0.0 && signal <= 1.0)) throw InvalidArgument("corpus.signal must be in [0,1]");
  if (samples_per_class < 5) throw InvalidArgument("corpus.samples_per_class must be >= 5");
  if (indicative_per_class == 0 || background_size == 0) {
    throw InvalidArgument("corpus token pools must be non-empty");
  }
  if (1 + num_classes * indicative_per_class + background_size >= vocab_size) {
    throw InvalidArgument("corpus.vocab_size leaves no room for trigger tokens");
  }
}

std::set<TokenId> Corpus::reserved_indices() const {
  std::set<TokenId> out = emitted;
  out.insert(vocab.unk());
  return out;
}

Corpus generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  std::vector<std::string> tokens;
  tokens.reserve(spec.vocab_size);
  tokens.emplace_back(Vocab::kUnkToken);
  std::vector<std::vector<TokenId>> class_tokens(spec.num_classes);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t k = 0; k < spec.indicative_per_class; ++k) {
      class_tokens[c].push_back(static_cast<TokenId>(tokens.size()));
      tokens.push_back("c" + std::to_string(c) + "_" + std::to_string(k));
    }
  }
  std::vector<TokenId> background;
  for (std::size_t k = 0; k < spec.background_size; ++k) {
    background.push_back(static_cast<TokenId>(tokens.size()));
    tokens.push_back("bg" + std::to_string(k));
  }
  while (tokens.size() < spec.vocab_size) tokens.push_back("r" + std::to_string(tokens.size()));

  Corpus corpus;
  corpus.vocab = Vocab(std::move(tokens));
  for (const auto& ct : class_tokens) corpus.emitted.insert(ct.begin(), ct.end());
  corpus.emitted.insert(background.begin(), background.end());

  Rng rng(spec.seed);
  const std::size_t span = spec.max_length - spec.min_length + 1;
  const std::size_t n_train = spec.samples_per_class * 4 / 5;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    std::vector<Example> samples(spec.samples_per_class);
    for (auto& ex : samples) {
      ex.label = static_cast<int>(c);
      const std::size_t len = spec.min_length + rng.uniform_index(span);
      ex.tokens.resize(len);
      for (auto& t : ex.tokens) {
        const auto& pool = rng.uniform() < spec.signal ? class_tokens[c] : background;
        t = pool[rng.uniform_index(pool.size())];
      }
    }
    rng.shuffle(samples);
    corpus.train.insert(corpus.train.end(), samples.begin(), samples.begin() + n_train);
    corpus.test.insert(corpus.test.end(), samples.begin() + n_train, samples.end());
  }
  rng.shuffle(corpus.train);
  rng.shuffle(corpus.test);
  return corpus;
}

void save_tsv(const std::filesystem::path& path, std::span<const Example> examples,
              const Vocab& vocab) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  for (const auto& ex : examples) os << ex.label << '\t' << vocab.detokenize(ex.tokens) << '\n';
}

std::vector<Example> load_tsv(const std::filesystem::path& path, const Vocab& vocab) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw InvalidArgument(path.string() + ":" + std::to_string(lineno) + ": missing tab");
    }
    Example ex;
    try {
      ex.label = std::stoi(line.substr(0, tab));
    } catch (const std::exception&) {
      throw InvalidArgument(path.string() + ":" + std::to_string(lineno) + ": bad label");
    }
    ex.tokens = vocab.tokenize(std::string_view(line).substr(tab + 1));
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace fedtrace
