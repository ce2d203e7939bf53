// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <map>
#include <numeric>
#include <set>

#include "fedtrace/errors.hpp"
#include "fedtrace/federation.hpp"
#include "experiment_support.hpp"
#include "support.hpp"

namespace fedtrace {
namespace {

using testing::random_batch;
using testing::random_model;
using testing::small_shape;

// Example i carries token i, so partitions can be read back as index sets.
std::vector<Example> labelled_indices(std::size_t n, int classes) {
  std::vector<Example> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].tokens = {static_cast<TokenId>(i)};
    out[i].label = static_cast<int>(i % static_cast<std::size_t>(classes));
  }
  return out;
}

std::vector<std::vector<TokenId>> ids(const std::vector<std::vector<Example>>& parts) {
  std::vector<std::vector<TokenId>> out;
  for (const auto& p : parts) {
    out.emplace_back();
    for (const auto& ex : p) out.back().push_back(ex.tokens[0]);
  }
  return out;
}

void expect_exact_cover(const std::vector<std::vector<Example>>& parts, std::size_t n) {
  std::vector<int> seen(n, 0);
  for (const auto& p : parts) {
    EXPECT_FALSE(p.empty());
    for (const auto& ex : p) ++seen[ex.tokens[0]];
  }
  for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(seen[i], 1) << i;
}

TEST(Partition, IidEqualSplit) {
  PartitionSpec spec;
  spec.num_clients = 10;
  const auto parts = partition(labelled_indices(100, 4), spec);
  ASSERT_EQ(parts.size(), 10u);
  for (const auto& p : parts) EXPECT_EQ(p.size(), 10u);
  expect_exact_cover(parts, 100);

  const auto uneven = partition(labelled_indices(23, 4), spec);
  for (std::size_t c = 0; c < 10; ++c) EXPECT_EQ(uneven[c].size(), c < 3 ? 3u : 2u);
}

TEST(Partition, Errors) {
  PartitionSpec spec;
  spec.num_clients = 10;
  EXPECT_THROW(partition(labelled_indices(9, 2), spec), InvalidArgument);
  spec.num_clients = 1;
  EXPECT_THROW(partition(labelled_indices(9, 2), spec), InvalidArgument);
  spec.num_clients = 2;
  spec.mode = PartitionMode::kDirichlet;
  spec.beta = 0.0;
  EXPECT_THROW(partition(labelled_indices(9, 2), spec), InvalidArgument);
}

TEST(Partition, DirichletValidity) {
  for (double beta : {0.1, 0.5, 2.0}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      PartitionSpec spec;
      spec.mode = PartitionMode::kDirichlet;
      spec.beta = beta;
      spec.num_clients = 10;
      spec.seed = seed;
      expect_exact_cover(partition(labelled_indices(400, 4), spec), 400);
    }
  }
}

TEST(Partition, DirichletLargeBetaMatchesGlobalProportions) {
  PartitionSpec spec;
  spec.mode = PartitionMode::kDirichlet;
  spec.beta = 1e6;
  spec.num_clients = 5;
  spec.seed = 9;
  const auto parts = partition(labelled_indices(3000, 3), spec);
  for (const auto& p : parts) {
    std::map<int, double> share;
    for (const auto& ex : p) share[ex.label] += 1.0 / static_cast<double>(p.size());
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(share[c], 1.0 / 3.0, 0.05);
  }
}

TEST(Partition, DirichletRegressionFixture) {
  PartitionSpec spec;
  spec.mode = PartitionMode::kDirichlet;
  spec.beta = 0.5;
  spec.num_clients = 4;
  spec.seed = 5;
  const auto got = ids(partition(labelled_indices(30, 3), spec));
  const std::vector<std::vector<TokenId>> want = {
      {24, 21, 3, 9, 15, 27, 18, 19, 7, 5},
      {28, 4, 10, 14, 26, 23, 17, 2},
      {0, 12, 1, 16, 25, 22},
      {6, 13, 29, 8, 20, 11},
  };
  EXPECT_EQ(got, want);
}

TEST(Peft, ExtractInstallRoundTrip) {
  auto m = random_model(small_shape(), 1);
  const auto u = extract_peft(m);
  ASSERT_EQ(u.size(), 4u);
  EXPECT_EQ(u[0].name, "adapter.a");
  EXPECT_EQ(u[3].name, "head.bias");
  auto other = random_model(small_shape(), 2);
  install_peft(other, u);
  EXPECT_EQ(extract_peft(other), u);
  auto bad = u;
  bad[1].values.pop_back();
  EXPECT_THROW(install_peft(other, bad), InvalidArgument);
}

struct Setup {
  TinyModel model;
  std::vector<Example> data;
};

Setup local_setup() {
  Setup s;
  s.model = random_model(small_shape(), 4);
  s.model.trainable = TrainableMask::peft();
  s.data = random_batch(s.model.shape, 5, 12);
  return s;
}

AggregationProtocol protocol(ProtocolKind kind, const TinyModel& m, std::size_t participants = 2,
                             double momentum = 0.9, double mu = 0.01) {
  ProtocolConfig cfg;
  cfg.kind = kind;
  cfg.momentum = momentum;
  cfg.mu = mu;
  return AggregationProtocol(cfg, participants, extract_peft(m));
}

TEST(LocalTrain, ZeroRateReturnsReceived) {
  const auto s = local_setup();
  for (auto kind : {ProtocolKind::kFedAvg, ProtocolKind::kFedAvgM, ProtocolKind::kFedProx,
                    ProtocolKind::kScaffold}) {
    auto p = protocol(kind, s.model);
    EXPECT_EQ(p.local_train(s.model, s.data, 3, 0.0, 4, 1, 0), extract_peft(s.model))
        << to_string(kind);
  }
}

TEST(LocalTrain, FedProxZeroMuIsFedAvg) {
  const auto s = local_setup();
  auto avg = protocol(ProtocolKind::kFedAvg, s.model);
  auto prox = protocol(ProtocolKind::kFedProx, s.model, 2, 0.9, 0.0);
  EXPECT_EQ(avg.local_train(s.model, s.data, 3, 0.1, 4, 7, 0),
            prox.local_train(s.model, s.data, 3, 0.1, 4, 7, 0));
  auto prox_on = protocol(ProtocolKind::kFedProx, s.model, 2, 0.9, 0.5);
  EXPECT_NE(avg.local_train(s.model, s.data, 3, 0.1, 4, 7, 0),
            prox_on.local_train(s.model, s.data, 3, 0.1, 4, 7, 0));
}

TEST(LocalTrain, ScaffoldZeroVariatesOneStepIsFedAvg) {
  const auto s = local_setup();
  auto avg = protocol(ProtocolKind::kFedAvg, s.model);
  auto sc = protocol(ProtocolKind::kScaffold, s.model);
  EXPECT_EQ(avg.local_train(s.model, s.data, 1, 0.1, s.data.size(), 7, 0),
            sc.local_train(s.model, s.data, 1, 0.1, s.data.size(), 7, 0));
}

TEST(LocalTrain, RejectsBadInputs) {
  auto s = local_setup();
  auto p = protocol(ProtocolKind::kFedAvg, s.model);
  EXPECT_THROW(p.local_train(s.model, std::vector<Example>{}, 1, 0.1, 4, 0, 0), InvalidArgument);
  auto leaky = s.model;
  leaky.trainable.embedding_rows.insert(3);
  EXPECT_THROW(p.local_train(leaky, s.data, 1, 0.1, 4, 0, 0), InvalidArgument);
  EXPECT_THROW(p.local_train(s.model, s.data, 1, 0.1, 4, 0, 5), IndexError);
}

PeftUpdate scalar(double v) { return {{"x", {v}}}; }

TEST(Aggregate, WeightedMeanArithmetic) {
  const std::vector<PeftUpdate> u = {scalar(0.0), scalar(4.0)};
  const std::vector<std::size_t> n = {1, 3};
  EXPECT_DOUBLE_EQ(weighted_mean(u, n)[0].values[0], 3.0);
}

TEST(Aggregate, FixedPointBitExact) {
  const auto m = random_model(small_shape(), 8);
  const auto u = extract_peft(m);
  for (std::size_t k : {2u, 3u, 10u}) {
    std::vector<PeftUpdate> updates(k, u);
    std::vector<std::size_t> counts(k);
    for (std::size_t i = 0; i < k; ++i) counts[i] = 1 + 7 * i;
    EXPECT_EQ(weighted_mean(updates, counts), u);
  }
}

TEST(Aggregate, WeightsSumToOne) {
  // The mean of one-hot updates recovers each weight n_k / n.
  const std::vector<std::size_t> counts = {3, 17, 1, 29, 50};
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  std::vector<PeftUpdate> updates;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    PeftUpdate u = {{"x", std::vector<double>(counts.size(), 0.0)}};
    u[0].values[k] = 1.0;
    updates.push_back(u);
  }
  const auto mean = weighted_mean(updates, counts);
  double sum = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    EXPECT_NEAR(mean[0].values[k], static_cast<double>(counts[k]) / total, 1e-12);
    sum += mean[0].values[k];
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Aggregate, Errors) {
  EXPECT_THROW(weighted_mean(std::vector<PeftUpdate>{}, std::vector<std::size_t>{}),
               InvalidArgument);
  const std::vector<PeftUpdate> mismatch = {scalar(1.0), {{"y", {1.0}}}};
  EXPECT_THROW(weighted_mean(mismatch, std::vector<std::size_t>{1, 1}), InvalidArgument);
}

TEST(Aggregate, ProtocolsAgreeWithFedAvgWhereTheyShould) {
  const auto s = local_setup();
  const auto global = extract_peft(s.model);
  const auto other = extract_peft(random_model(small_shape(), 9));
  const std::vector<PeftUpdate> updates = {global, other};
  const std::vector<std::size_t> counts = {2, 5};
  const auto want = weighted_mean(updates, counts);

  auto m0 = protocol(ProtocolKind::kFedAvgM, s.model, 2, 0.0);
  for (int r = 0; r < 3; ++r) EXPECT_EQ(m0.aggregate(global, updates, counts), want);
  auto prox = protocol(ProtocolKind::kFedProx, s.model);
  EXPECT_EQ(prox.aggregate(global, updates, counts), want);
  auto sc = protocol(ProtocolKind::kScaffold, s.model);
  EXPECT_EQ(sc.aggregate(global, updates, counts), want);
}

TEST(Aggregate, FedAvgMMomentumBuffer) {
  const auto s = local_setup();
  const PeftUpdate g = scalar(1.0);
  ProtocolConfig cfg;
  cfg.kind = ProtocolKind::kFedAvgM;
  cfg.momentum = 0.5;
  AggregationProtocol q(cfg, 1, g);
  const std::vector<std::size_t> one = {1};
  // Round 1: avg 3, v = 2. Round 2 from global 3: avg 4, out = 4 + 0.5 * 2.
  EXPECT_EQ(q.aggregate(g, std::vector<PeftUpdate>{scalar(3.0)}, one)[0].values[0], 3.0);
  EXPECT_EQ(q.momentum_buffer()[0].values[0], 2.0);
  EXPECT_EQ(q.aggregate(scalar(3.0), std::vector<PeftUpdate>{scalar(4.0)}, one)[0].values[0], 5.0);
  EXPECT_EQ(q.momentum_buffer()[0].values[0], 2.0);
}

TEST(Aggregate, ScaffoldServerVariateIsClientMean) {
  auto s = local_setup();
  auto p = protocol(ProtocolKind::kScaffold, s.model, 3);
  auto global = s.model;
  for (int round = 0; round < 4; ++round) {
    std::vector<PeftUpdate> updates;
    std::vector<std::size_t> counts;
    for (std::size_t k = 0; k < 3; ++k) {
      const auto data = random_batch(s.model.shape, 100 * round + k, 6 + 3 * k);
      updates.push_back(p.local_train(global, data, 2, 0.1, 4, round, k));
      counts.push_back(data.size());
    }
    install_peft(global, p.aggregate(extract_peft(global), updates, counts));
    for (std::size_t t = 0; t < 4; ++t) {
      for (std::size_t i = 0; i < p.server_control()[t].values.size(); ++i) {
        double mean = 0.0;
        for (std::size_t k = 0; k < 3; ++k) mean += p.client_control(k)[t].values[i] / 3.0;
        EXPECT_NEAR(p.server_control()[t].values[i], mean, 1e-12);
      }
    }
  }
}

TEST(ProtocolNames, RoundTrip) {
  for (auto k : {ProtocolKind::kFedAvg, ProtocolKind::kFedAvgM, ProtocolKind::kFedProx,
                 ProtocolKind::kScaffold}) {
    EXPECT_EQ(protocol_from_string(to_string(k)), k);
  }
  EXPECT_THROW(protocol_from_string("fedsgd"), InvalidArgument);
}

class RunFederation : public ::testing::Test {
 protected:
  static ExperimentResult prepared(int rounds) {
    auto cfg = testing::small_experiment_config();
    cfg.federation.rounds = rounds;
    return prepare_experiment(cfg);
  }
};

TEST_F(RunFederation, ZeroRoundsLeavesModel) {
  auto r = prepared(0);
  const auto before = r.run.global_model;
  run_federation(r.run);
  EXPECT_TRUE(r.run.round_log.empty());
  EXPECT_TRUE(bit_identical(r.run.global_model, before));
}

TEST_F(RunFederation, EmbeddingTableConserved) {
  auto r = prepared(3);
  const auto post_step1 = r.run.global_model.embedding.values;
  int calls = 0;
  r.run.config.on_round = [&](const FederationRun& run) {
    ++calls;
    EXPECT_TRUE(bit_identical(run.global_model.embedding.values, post_step1));
  };
  run_federation(r.run);
  EXPECT_EQ(calls, 3);
  EXPECT_EQ(r.run.round_log.size(), 3u);
  EXPECT_TRUE(bit_identical(r.run.global_model.embedding.values, post_step1));
  std::size_t total = 0;
  for (const auto& p : r.run.partitions) total += p.size();
  EXPECT_EQ(total + r.run.server_data.size() + r.holdout.size(), r.corpus.train.size());
}

TEST_F(RunFederation, Deterministic) {
  auto a = prepared(2);
  auto b = prepared(2);
  run_federation(a.run);
  run_federation(b.run);
  EXPECT_TRUE(bit_identical(a.run.global_model, b.run.global_model));
  ASSERT_EQ(a.run.round_log.size(), b.run.round_log.size());
  for (std::size_t i = 0; i < a.run.round_log.size(); ++i) {
    EXPECT_EQ(a.run.round_log[i].acc_global, b.run.round_log[i].acc_global);
    EXPECT_EQ(a.run.round_log[i].vr_self, b.run.round_log[i].vr_self);
    EXPECT_EQ(a.run.round_log[i].vr_other_mean, b.run.round_log[i].vr_other_mean);
    EXPECT_EQ(a.run.round_log[i].trace_verdicts, b.run.round_log[i].trace_verdicts);
  }
}

TEST_F(RunFederation, UntrainedWatermarkRejected) {
  auto r = prepared(1);
  r.run.watermark.trained = false;
  EXPECT_THROW(run_federation(r.run), StateError);
}

TEST_F(RunFederation, RoundLogCsvColumns) {
  auto r = prepared(2);
  run_federation(r.run);
  std::vector<int> client_ids;
  for (const auto& a : r.run.registry.assignments()) client_ids.push_back(a.client_id);
  const auto csv = round_log_csv(r.run.round_log, client_ids);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "round,acc_global,vr_self_1,vr_self_2,vr_self_3,vr_other_mean,wall_time_ms");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

}  // namespace
}  // namespace fedtrace
