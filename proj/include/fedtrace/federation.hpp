// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedtrace/identity.hpp"
#include "fedtrace/model.hpp"
#include "fedtrace/verifier.hpp"
#include "fedtrace/watermark.hpp"

namespace fedtrace {

enum class PartitionMode { kIid, kDirichlet };

struct PartitionSpec {
  PartitionMode mode = PartitionMode::kIid;
  double beta = 0.5;
  std::size_t num_clients = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

// IID: shuffled equal split, remainder to the first clients. Dirichlet: per
// class, q ~ Dir(beta) and the shuffled class examples are cut at
// floor(cumsum(q) * n_c). Draws leaving a client empty are redrawn whole.
std::vector<std::vector<Example>> partition(std::span<const Example> data,
                                            const PartitionSpec& spec);

// The PEFT tensors (adapter.a, adapter.b, head.weight, head.bias) in that order.
struct NamedTensor {
  std::string name;
  std::vector<double> values;

  bool operator==(const NamedTensor&) const = default;
};
using PeftUpdate = std::vector<NamedTensor>;

PeftUpdate extract_peft(const TinyModel& model);
void install_peft(TinyModel& model, const PeftUpdate& update);
// Throws InvalidArgument unless names and sizes agree.
void check_congruent(const PeftUpdate& a, const PeftUpdate& b);

enum class ProtocolKind { kFedAvg, kFedAvgM, kFedProx, kScaffold };

std::string to_string(ProtocolKind kind);
ProtocolKind protocol_from_string(const std::string& name);

struct ProtocolConfig {
  ProtocolKind kind = ProtocolKind::kFedAvg;
  double momentum = 0.9;  // FedAvgM
  double mu = 0.01;       // FedProx

  void validate() const;
};

// Server-side protocol state: the FedAvgM momentum buffer and the SCAFFOLD
// control variates (one per participant plus the server's).
class AggregationProtocol {
 public:
  AggregationProtocol() = default;
  AggregationProtocol(const ProtocolConfig& config, std::size_t participants,
                      const PeftUpdate& like);

  const ProtocolConfig& config() const { return config_; }
  std::size_t participants() const { return client_control_.size(); }
  const PeftUpdate& server_control() const { return server_control_; }
  const PeftUpdate& client_control(std::size_t i) const { return client_control_.at(i); }
  const PeftUpdate& momentum_buffer() const { return momentum_; }

  // Client-side half of the round. `participant` selects the SCAFFOLD control
  // variate; `global` is the PEFT state the client received.
  PeftUpdate local_train(const TinyModel& client_model, std::span<const Example> data,
                         int epochs, double lr, std::size_t batch_size, std::uint64_t seed,
                         std::size_t participant);

  // New global PEFT tensors from the received ones and the client updates.
  PeftUpdate aggregate(const PeftUpdate& global, std::span<const PeftUpdate> updates,
                       std::span<const std::size_t> counts);

 private:
  ProtocolConfig config_;
  PeftUpdate momentum_;
  PeftUpdate server_control_;
  std::vector<PeftUpdate> client_control_;
  std::vector<PeftUpdate> pending_control_;
};

// sum_k (n_k / n) u_k, computed as a running mean so that identical updates
// come back bit-exact.
PeftUpdate weighted_mean(std::span<const PeftUpdate> updates, std::span<const std::size_t> counts);

struct FederationRun;

struct FederationConfig {
  int rounds = 20;
  int local_epochs = 3;
  double lr = 0.1;
  std::size_t batch_size = 4;
  ProtocolConfig protocol;
  bool watermark = true;
  bool reinforce = true;
  ReinforceOptions reinforce_options;
  // The server trains on D_server as one more participant.
  bool server_participates = true;
  bool log_metrics = true;
  std::uint64_t seed = 0;
  // Called after each round's record is appended to the log.
  std::function<void(const FederationRun&)> on_round;
};

// Wall time in milliseconds, summed over rounds.
struct PhaseTimings {
  double distribution_ms = 0.0;   // copying the global to each client
  double replacement_ms = 0.0;    // trigger row swaps
  double client_train_ms = 0.0;
  double aggregation_ms = 0.0;
  double reinforce_ms = 0.0;
  double verification_ms = 0.0;
};

struct RoundRecord {
  int round = 0;
  double acc_global = 0.0;
  std::vector<double> vr_self;
  std::vector<double> vr_other_mean;
  std::vector<std::optional<int>> trace_verdicts;
  double wall_time_ms = 0.0;
  PhaseTimings timings;
};

struct FederationRun {
  TinyModel global_model;
  TriggerRegistry registry;
  WatermarkState watermark;
  // One list per registered client, registry order.
  std::vector<std::vector<Example>> partitions;
  std::vector<Example> server_data;     // D_server
  std::vector<Example> watermark_data;  // D_w
  std::vector<Example> eval_data;       // clean held-out, for ACC
  VerificationConfig verification;
  int target_label = 1;
  FederationConfig config;
  AggregationProtocol protocol;
  std::vector<RoundRecord> round_log;
  PhaseTimings timings;
};

// Steps 2-4 for config.rounds rounds. The global embedding table is never
// written.
void run_federation(FederationRun& run);

// Client k's copy of the current global (with its watermark when enabled).
TinyModel client_model(const FederationRun& run, std::size_t k);

// round, acc_global, vr_self_<id> per client, vr_other_mean, wall_time_ms.
std::string round_log_csv(std::span<const RoundRecord> log, std::span<const int> client_ids);

}  // namespace fedtrace
