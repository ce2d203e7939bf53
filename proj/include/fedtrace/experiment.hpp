// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedtrace/attacks.hpp"
#include "fedtrace/corpus.hpp"
#include "fedtrace/errors.hpp"
#include "fedtrace/federation.hpp"
#include "fedtrace/verifier.hpp"

namespace fedtrace {

// Bad configuration; `path()` names the offending field, e.g. `verification.gamma`.
class ConfigError : public InvalidArgument {
 public:
  ConfigError(std::string path, const std::string& what)
      : InvalidArgument(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct DataSection {
  double server_fraction = 0.1;   // D_server
  double holdout_fraction = 0.1;  // attacker fine-tuning data
};

struct ModelSection {
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t adapter_rank = 4;
  InitOptions init;
};

struct FederationSection {
  int rounds = 20;
  int local_epochs = 3;
  double lr = 0.1;
  // Learning rate of the original large-model setting, kept for reference only.
  double reference_lr = 2e-5;
  std::size_t batch_size = 4;
  ProtocolConfig protocol;
  bool server_participates = true;
  bool watermark = true;
  bool reinforce = true;
  int reinforce_epochs = 3;
  double reinforce_lr = 0.05;
  std::size_t reinforce_batch = 8;
  // Per-round verification; when off only the final round is measured.
  bool log_metrics = true;
};

struct WatermarkSection {
  int target_label = 1;
  double poison_ratio = 0.1;
  std::size_t insertions = 1;
  int wm_epochs = 5;
  double wm_lr = 1.0;
  double reference_wm_lr = 2e-5;
  std::size_t wm_batch = 4;
  // Clean D_server examples the watermark set is built from; 0 means all.
  std::size_t wm_set_size = 0;
};

struct VerificationSection {
  double gamma = 0.9;
  double sigma = 0.9;
  std::size_t samples = 200;
  std::size_t insertions = 1;
};

struct ExperimentConfig {
  std::uint64_t master_seed = 0;
  std::string output_dir = "runs/default";
  CorpusSpec corpus;
  ModelSection model;
  PartitionSpec partition;
  DataSection data;
  FederationSection federation;
  WatermarkSection watermark;
  VerificationSection verification;
  std::vector<AttackConfig> attacks;  // data and seeds are filled in at run time
  int control_epochs = 5;             // clean centrally trained reference model
  bool save_checkpoints = false;
  int step1_repeats = 1;              // Step-1 wall time is the min over repeats

  void validate() const;  // throws ConfigError
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

// Named sub-seeds, all derived from master_seed.
std::map<std::string, std::uint64_t> seed_tree(std::uint64_t master_seed);

struct AttackRow {
  std::string attack;
  double parameter = 0.0;
  double acc = 0.0;
  double vr_self = 0.0;
  double vr_other_mean = 0.0;
  double min_vr_self = 0.0;
  double vr_adversary = 0.0;   // overwrite only
  int disputes_resolved = 0;   // overwrite only: resolve_dispute picked the original
};

struct ExperimentResult {
  ExperimentConfig config;
  Corpus corpus;
  std::vector<Example> holdout;
  FederationRun run;
  double step1_ms = 0.0;
  VerificationReport final_report;
  std::vector<TraceResult> client_traces;
  TinyModel control_model;  // clean, trained centrally on the server and client data
  TraceResult control_trace;
  double control_acc = 0.0;
  std::vector<AttackRow> attacks;
};

// Corpus, splits, identities and Step 1; the returned run is ready for
// run_federation.
ExperimentResult prepare_experiment(const ExperimentConfig& config);
// prepare_experiment + run_federation + final report, control model and attacks.
ExperimentResult run_pipeline(const ExperimentConfig& config);

// One attack across every leaked client model of a finished run.
AttackRow evaluate_attack(const ExperimentResult& result, const AttackConfig& attack,
                          std::size_t index);

nlohmann::json report_json(const ExperimentResult& result);
std::string attacks_csv(const std::vector<AttackRow>& rows);
void write_artifacts(const ExperimentResult& result, const std::filesystem::path& dir);

// Exit status: 0 ok, 2 bad config, 1 runtime failure. Diagnostics go to `err`.
int run_experiment(const std::filesystem::path& config_path, std::ostream& err);

struct SweepRow {
  std::string axis;
  std::string value;
  bool ok = false;
  double acc = 0.0;
  double vr_self_mean = 0.0;
  double vr_other_mean = 0.0;
  double wall_time_ms = 0.0;
  std::string error;
};

const std::vector<std::string>& sweep_axes();
// Returns a copy of `base` with `axis` set to `value`.
ExperimentConfig with_axis(const ExperimentConfig& base, const std::string& axis, double value);
std::vector<SweepRow> ablation_sweep(const ExperimentConfig& base, const std::string& axis,
                                     const std::vector<double>& values);
std::string sweep_csv(const std::vector<SweepRow>& rows);

struct TimingRow {
  std::string name;
  std::size_t clients = 0;
  int rounds = 0;
  double total_ms = 0.0;
  double step1_ms = 0.0;
  double client_train_per_round_ms = 0.0;
  double server_per_round_ms = 0.0;      // aggregation + reinforcement
  double aggregation_per_round_ms = 0.0;
  double reinforce_per_round_ms = 0.0;
  double replacement_per_round_ms = 0.0;
  double replacement_per_client_ms = 0.0;
};

TimingRow measure_timing(const ExperimentConfig& config, const std::string& name);
std::string timing_csv(const std::vector<TimingRow>& rows);

}  // namespace fedtrace
