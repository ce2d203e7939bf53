// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedtrace/identity.hpp"
#include "fedtrace/model.hpp"

namespace fedtrace {

// Black-box access to a suspect: token ids in, predicted label out. Nothing
// in the verifier sees weights.
using Predictor = std::function<int(std::span<const TokenId>)>;

// Owns a copy of the model.
Predictor make_predictor(TinyModel model);
// Borrows; `model` must outlive the predictor.
Predictor borrow_predictor(const TinyModel& model);

struct VerificationConfig {
  double gamma = 0.9;
  double sigma = 0.9;
  std::size_t samples = 200;
  std::size_t insertions = 1;
  std::uint64_t seed = 0;
  // Clean held-out inputs. Examples already carrying the target label are
  // skipped when queries are drawn.
  std::vector<Example> pool;

  void validate() const;
};

// The fixed set of verification queries: t clean inputs plus, for each, the
// positions at which a trigger is inserted. Shared by every trigger so all
// VRs in one report are computed on the same inputs.
class QueryPlan {
 public:
  QueryPlan(const VerificationConfig& config, int target_label);

  std::size_t size() const { return bases_.size(); }
  std::vector<TokenId> query(std::size_t i, TokenId trigger) const;

 private:
  std::vector<const Example*> bases_;
  std::vector<std::vector<std::size_t>> positions_;
};

double verification_rate(const Predictor& suspect, TokenId trigger, const QueryPlan& plan,
                         int target_label);
double verification_rate(const Predictor& suspect, TokenId trigger,
                         const VerificationConfig& config, int target_label);

struct TraceResult {
  std::optional<int> client_id;     // nullopt is the negative verdict
  std::vector<double> rates;        // per registered client, registry order
  double max_rate = 0.0;
};

// Client k iff VR(Tr_k) >= gamma and every other client's VR < gamma.
std::optional<int> trace_from_rates(std::span<const int> client_ids, std::span<const double> rates,
                                    double gamma);
TraceResult trace(const Predictor& suspect, const TriggerRegistry& registry,
                  const VerificationConfig& config, int target_label);

struct CollisionResult {
  double similarity = 0.0;
  bool collided = false;
};

// Label agreement of the two suspects over pool+Tr_i and pool+Tr_j.
CollisionResult collision_check(const Predictor& model_i, const Predictor& model_j,
                                TokenId trigger_i, TokenId trigger_j,
                                const VerificationConfig& config, int target_label);

struct VerificationReport {
  std::vector<int> client_ids;
  std::vector<std::vector<double>> vr_matrix;  // [model i][trigger j]
  std::vector<double> confidence;
  std::vector<double> leakage;
  std::vector<double> interval;
  std::vector<std::optional<int>> trace_verdicts;

  double mean_confidence() const;
  double mean_leakage() const;
  double min_confidence() const;
  double max_leakage() const;
  std::string matrix_csv() const;
};

void to_json(nlohmann::json& j, const VerificationReport& r);

// `models[i]` is the model handed to the i-th client of `registry`.
VerificationReport build_report(std::span<const Predictor> models, const TriggerRegistry& registry,
                                const VerificationConfig& config, int target_label);

// `suspect=<name> verdict=<client_id|False> max_vr=<v>`
std::string format_verdict(const std::string& name, const TraceResult& result);

}  // namespace fedtrace
