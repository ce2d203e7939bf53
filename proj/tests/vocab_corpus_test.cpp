// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <map>
#include <set>

#include "fedtrace/corpus.hpp"
#include "fedtrace/errors.hpp"
#include "fedtrace/training.hpp"
#include "support.hpp"

namespace fedtrace {
namespace {

TEST(Vocab, TokenizeKnownAndUnknown) {
  Vocab v({"a", "b"});
  EXPECT_EQ(v.size(), 3u);
  EXPECT_EQ(v.tokenize("a b a"), (std::vector<TokenId>{0, 1, 0}));
  EXPECT_TRUE(v.tokenize("").empty());
  EXPECT_EQ(v.tokenize("a zz"), (std::vector<TokenId>{0, v.unk()}));
  EXPECT_EQ(v.detokenize(v.tokenize("b  a\tb")), "b a b");
}

TEST(Vocab, RejectsDuplicatesAndBadIds) {
  EXPECT_THROW(Vocab({"a", "a"}), InvalidArgument);
  EXPECT_THROW(Vocab({"a b"}), InvalidArgument);
  Vocab v({"a"});
  EXPECT_THROW(v.token(2), IndexError);
  EXPECT_FALSE(v.find("zz").has_value());
}

TEST(Vocab, FileRoundTrip) {
  testing::TempDir dir;
  Vocab v({"x", "y", "z"});
  v.save(dir.path() / "vocab.txt");
  const Vocab w = Vocab::load(dir.path() / "vocab.txt");
  ASSERT_EQ(w.size(), v.size());
  for (TokenId i = 0; i < v.size(); ++i) EXPECT_EQ(w.token(i), v.token(i));
  EXPECT_EQ(w.unk(), v.unk());
}

CorpusSpec small_spec() {
  CorpusSpec s;
  s.vocab_size = 300;
  s.num_classes = 3;
  s.samples_per_class = 60;
  s.indicative_per_class = 10;
  s.background_size = 40;
  s.seed = 7;
  return s;
}

TEST(Corpus, Deterministic) {
  const Corpus a = generate_corpus(small_spec());
  const Corpus b = generate_corpus(small_spec());
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  auto other = small_spec();
  other.seed = 8;
  EXPECT_NE(generate_corpus(other).train, a.train);
}

TEST(Corpus, SplitSizesAndDisjointness) {
  const Corpus c = generate_corpus(small_spec());
  EXPECT_EQ(c.train.size(), 3u * 48);
  EXPECT_EQ(c.test.size(), 3u * 12);
  std::set<std::pair<int, std::vector<TokenId>>> train;
  for (const auto& ex : c.train) train.insert({ex.label, ex.tokens});
  for (const auto& ex : c.test) EXPECT_FALSE(train.contains({ex.label, ex.tokens}));
}

TEST(Corpus, TriggerSafety) {
  const Corpus c = generate_corpus(small_spec());
  const auto reserved = c.reserved_indices();
  EXPECT_TRUE(reserved.contains(c.vocab.unk()));
  EXPECT_LT(reserved.size(), c.vocab.size());
  for (const auto* split : {&c.train, &c.test}) {
    for (const auto& ex : *split) {
      EXPECT_GE(ex.tokens.size(), 8u);
      EXPECT_LE(ex.tokens.size(), 20u);
      for (auto t : ex.tokens) ASSERT_TRUE(c.emitted.contains(t));
    }
  }
}

TEST(Corpus, ValidationErrors) {
  auto s = small_spec();
  s.vocab_size = 30;
  EXPECT_THROW(generate_corpus(s), InvalidArgument);
  s = small_spec();
  s.min_length = 1;
  EXPECT_THROW(generate_corpus(s), InvalidArgument);
  s = small_spec();
  s.signal = 1.5;
  EXPECT_THROW(generate_corpus(s), InvalidArgument);
}

TEST(Corpus, TsvRoundTripExact) {
  testing::TempDir dir;
  const Corpus c = generate_corpus(small_spec());
  save_tsv(dir.path() / "train.tsv", c.train, c.vocab);
  EXPECT_EQ(load_tsv(dir.path() / "train.tsv", c.vocab), c.train);
}

TEST(Corpus, FullSignalIsLinearlySeparable) {
  auto s = small_spec();
  s.num_classes = 2;
  s.signal = 1.0;
  const Corpus c = generate_corpus(s);
  // Bag-of-words rule: +1 for each token seen under the class in training.
  std::map<TokenId, std::vector<int>> votes;
  for (const auto& ex : c.train) {
    for (auto t : ex.tokens) {
      auto& v = votes[t];
      v.resize(2, 0);
      v[static_cast<std::size_t>(ex.label)] = 1;
    }
  }
  std::size_t correct = 0;
  for (const auto& ex : c.test) {
    int score[2] = {0, 0};
    for (auto t : ex.tokens) {
      auto it = votes.find(t);
      if (it == votes.end()) continue;
      score[0] += it->second[0];
      score[1] += it->second[1];
    }
    correct += (score[1] > score[0] ? 1 : 0) == ex.label ? 1 : 0;
  }
  EXPECT_EQ(correct, c.test.size());
}

TEST(Corpus, ZeroSignalIsChance) {
  CorpusSpec s;
  s.signal = 0.0;
  s.samples_per_class = 250;
  const Corpus c = generate_corpus(s);
  ModelShape shape;
  shape.vocab_size = c.vocab.size();
  shape.num_classes = s.num_classes;
  TinyModel m = TinyModel::initialize(shape, 1);
  m.trainable = TrainableMask::everything();
  TrainOptions opt;
  opt.epochs = 10;
  train(m, c.train, opt);
  // 200 test examples: four standard errors of a 0.25 rate is about 0.12.
  EXPECT_NEAR(accuracy(m, c.test), 1.0 / s.num_classes, 0.12);
}

TEST(Corpus, ReferenceCentralizedAccuracy) {
  const CorpusSpec spec;  // V=2000, C=4, 500 per class, length 8-20, signal 0.7, seed 42
  const Corpus c = generate_corpus(spec);
  ModelShape shape;
  shape.vocab_size = c.vocab.size();
  shape.num_classes = spec.num_classes;
  TinyModel m = TinyModel::initialize(shape, 42);
  m.trainable = TrainableMask::everything();
  TrainOptions opt;
  opt.epochs = 20;
  opt.seed = 42;
  train(m, c.train, opt);
  std::map<int, std::size_t> counts;
  for (const auto& ex : c.test) ++counts[ex.label];
  for (const auto& [label, n] : counts) EXPECT_EQ(n, 100u) << label;
  EXPECT_GE(accuracy(m, c.test), 0.9);
}

}  // namespace
}  // namespace fedtrace
