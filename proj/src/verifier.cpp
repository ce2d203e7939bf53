// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedtrace/verifier.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "fedtrace/errors.hpp"
#include "fedtrace/rng.hpp"
#include "fedtrace/watermark.hpp"

namespace fedtrace {

Predictor make_predictor(TinyModel model) {
  auto shared = std::make_shared<const TinyModel>(std::move(model));
  return [shared](std::span<const TokenId> tokens) { return shared->predict(tokens); };
}

Predictor borrow_predictor(const TinyModel& model) {
  return [&model](std::span<const TokenId> tokens) { return model.predict(tokens); };
}

void VerificationConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("verification.gamma must be in (0,1)");
  if (!(sigma > 0.0 && sigma < 1.0)) throw InvalidArgument("verification.sigma must be in (0,1)");
  if (samples < 1) throw InvalidArgument("verification.samples must be >= 1");
  if (insertions < 1) throw InvalidArgument("verification.insertions must be >= 1");
}

QueryPlan::QueryPlan(const VerificationConfig& config, int target_label) {
  config.validate();
  std::vector<const Example*> eligible;
  for (const auto& ex : config.pool) {
    if (ex.label != target_label && !ex.tokens.empty()) eligible.push_back(&ex);
  }
  if (eligible.empty()) throw InvalidArgument("verification pool has no non-target examples");

  Rng rng(config.seed);
  // Without replacement while the pool lasts, then another permutation.
  while (bases_.size() < config.samples) {
    const std::size_t take = std::min(eligible.size(), config.samples - bases_.size());
    for (auto idx : rng.sample_without_replacement(eligible.size(), take)) {
      bases_.push_back(eligible[idx]);
    }
  }
  positions_.reserve(bases_.size());
  for (const auto* ex : bases_) {
    std::vector<std::size_t> pos;
    std::size_t len = ex->tokens.size();
    for (std::size_t k = 0; k < config.insertions; ++k) {
      pos.push_back(rng.uniform_index(len + 1));
      ++len;
    }
    positions_.push_back(std::move(pos));
  }
}

std::vector<TokenId> QueryPlan::query(std::size_t i, TokenId trigger) const {
  std::vector<TokenId> tokens = bases_.at(i)->tokens;
  for (auto p : positions_[i]) tokens = insert_trigger_at(tokens, trigger, p);
  return tokens;
}

double verification_rate(const Predictor& suspect, TokenId trigger, const QueryPlan& plan,
                         int target_label) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (suspect(plan.query(i, trigger)) == target_label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(plan.size());
}

double verification_rate(const Predictor& suspect, TokenId trigger,
                         const VerificationConfig& config, int target_label) {
  return verification_rate(suspect, trigger, QueryPlan(config, target_label), target_label);
}

std::optional<int> trace_from_rates(std::span<const int> client_ids, std::span<const double> rates,
                                    double gamma) {
  std::optional<int> found;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    if (rates[i] >= gamma) {
      if (found) return std::nullopt;
      found = client_ids[i];
    }
  }
  return found;
}

TraceResult trace(const Predictor& suspect, const TriggerRegistry& registry,
                  const VerificationConfig& config, int target_label) {
  if (registry.assignments().empty()) throw InvalidArgument("trace: registry has no clients");
  const QueryPlan plan(config, target_label);
  TraceResult result;
  std::vector<int> ids;
  for (const auto& a : registry.assignments()) {
    ids.push_back(a.client_id);
    result.rates.push_back(verification_rate(suspect, a.trigger_index, plan, target_label));
  }
  result.max_rate = *std::max_element(result.rates.begin(), result.rates.end());
  result.client_id = trace_from_rates(ids, result.rates, config.gamma);
  return result;
}

CollisionResult collision_check(const Predictor& model_i, const Predictor& model_j,
                                TokenId trigger_i, TokenId trigger_j,
                                const VerificationConfig& config, int target_label) {
  const QueryPlan plan(config, target_label);
  std::size_t agree = 0;
  for (auto trigger : {trigger_i, trigger_j}) {
    for (std::size_t s = 0; s < plan.size(); ++s) {
      const auto q = plan.query(s, trigger);
      if (model_i(q) == model_j(q)) ++agree;
    }
  }
  CollisionResult out;
  out.similarity = static_cast<double>(agree) / static_cast<double>(2 * plan.size());
  out.collided = out.similarity >= config.sigma;
  return out;
}

namespace {
double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}
}  // namespace

double VerificationReport::mean_confidence() const { return mean(confidence); }
double VerificationReport::mean_leakage() const { return mean(leakage); }
double VerificationReport::min_confidence() const {
  return confidence.empty() ? 0.0 : *std::min_element(confidence.begin(), confidence.end());
}
double VerificationReport::max_leakage() const {
  return leakage.empty() ? 0.0 : *std::max_element(leakage.begin(), leakage.end());
}

std::string VerificationReport::matrix_csv() const {
  std::ostringstream os;
  os << "model";
  for (auto id : client_ids) os << ",trigger_" << id;
  os << '\n';
  char buf[32];
  for (std::size_t i = 0; i < vr_matrix.size(); ++i) {
    os << client_ids[i];
    for (double v : vr_matrix[i]) {
      std::snprintf(buf, sizeof(buf), "%.6f", v);
      os << ',' << buf;
    }
    os << '\n';
  }
  return os.str();
}

void to_json(nlohmann::json& j, const VerificationReport& r) {
  nlohmann::json verdicts = nlohmann::json::array();
  for (const auto& v : r.trace_verdicts) {
    if (v) {
      verdicts.push_back(*v);
    } else {
      verdicts.push_back(false);
    }
  }
  j = {{"client_ids", r.client_ids}, {"vr_matrix", r.vr_matrix},
       {"confidence", r.confidence}, {"leakage", r.leakage},
       {"interval", r.interval},     {"trace_verdicts", verdicts}};
}

VerificationReport build_report(std::span<const Predictor> models, const TriggerRegistry& registry,
                                const VerificationConfig& config, int target_label) {
  const auto& clients = registry.assignments();
  if (clients.size() < 2) throw InvalidArgument("build_report needs at least two clients");
  if (models.size() != clients.size()) {
    throw InvalidArgument("build_report: one model per registered client required");
  }
  const QueryPlan plan(config, target_label);
  const std::size_t k = clients.size();
  VerificationReport r;
  r.vr_matrix.assign(k, std::vector<double>(k, 0.0));
  for (const auto& a : clients) r.client_ids.push_back(a.client_id);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      r.vr_matrix[i][j] = verification_rate(models[i], clients[j].trigger_index, plan, target_label);
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    r.confidence.push_back(r.vr_matrix[i][i]);
    double off = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (j != i) off += r.vr_matrix[i][j];
    }
    r.leakage.push_back(off / static_cast<double>(k - 1));
    r.interval.push_back(r.confidence.back() - r.leakage.back());
    r.trace_verdicts.push_back(trace_from_rates(r.client_ids, r.vr_matrix[i], config.gamma));
  }
  return r;
}

std::string format_verdict(const std::string& name, const TraceResult& result) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", result.max_rate);
  return "suspect=" + name + " verdict=" +
         (result.client_id ? std::to_string(*result.client_id) : std::string("False")) +
         " max_vr=" + buf;
}

}  // namespace fedtrace
