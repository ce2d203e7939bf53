// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedtrace/federation.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "fedtrace/errors.hpp"
#include "fedtrace/rng.hpp"
#include "fedtrace/training.hpp"

namespace fedtrace {

void PartitionSpec::validate() const {
  if (num_clients < 2) throw InvalidArgument("partition.num_clients must be >= 2");
  if (mode == PartitionMode::kDirichlet && !(beta > 0.0 && std::isfinite(beta))) {
    throw InvalidArgument("partition.beta must be positive");
  }
}

namespace {

constexpr int kMaxDirichletDraws = 1000;

std::vector<std::vector<std::size_t>> dirichlet_split(std::span<const Example> data,
                                                      const PartitionSpec& spec, Rng& rng) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data[i].label].push_back(i);
  for (auto& [label, idx] : by_class) rng.shuffle(idx);

  const std::size_t k = spec.num_clients;
  for (int attempt = 0; attempt < kMaxDirichletDraws; ++attempt) {
    std::vector<std::vector<std::size_t>> out(k);
    for (const auto& [label, idx] : by_class) {
      const auto q = rng.dirichlet(spec.beta, k);
      const double n = static_cast<double>(idx.size());
      double cum = 0.0;
      std::size_t begin = 0;
      for (std::size_t c = 0; c < k; ++c) {
        cum += q[c];
        std::size_t end = c + 1 == k ? idx.size()
                                     : std::min(idx.size(), static_cast<std::size_t>(cum * n));
        end = std::max(end, begin);
        out[c].insert(out[c].end(), idx.begin() + static_cast<std::ptrdiff_t>(begin),
                      idx.begin() + static_cast<std::ptrdiff_t>(end));
        begin = end;
      }
    }
    bool ok = true;
    for (const auto& part : out) ok = ok && !part.empty();
    if (ok) return out;
  }
  throw InvalidArgument("Dirichlet partition left a client empty after repeated draws");
}

}  // namespace

std::vector<std::vector<Example>> partition(std::span<const Example> data,
                                            const PartitionSpec& spec) {
  spec.validate();
  if (data.size() < spec.num_clients) throw InvalidArgument("fewer examples than clients");
  Rng rng(spec.seed);
  std::vector<std::vector<std::size_t>> idx;
  if (spec.mode == PartitionMode::kIid) {
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    const std::size_t base = data.size() / spec.num_clients;
    const std::size_t extra = data.size() % spec.num_clients;
    std::size_t pos = 0;
    for (std::size_t c = 0; c < spec.num_clients; ++c) {
      const std::size_t len = base + (c < extra ? 1 : 0);
      idx.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(pos),
                       order.begin() + static_cast<std::ptrdiff_t>(pos + len));
      pos += len;
    }
  } else {
    idx = dirichlet_split(data, spec, rng);
  }
  std::vector<std::vector<Example>> out(idx.size());
  for (std::size_t c = 0; c < idx.size(); ++c) {
    for (auto i : idx[c]) out[c].push_back(data[i]);
  }
  return out;
}

namespace {

// PEFT parameter spans of a model or gradient, canonical order.
template <typename M>
auto peft_spans(M& m) {
  using Span = decltype(std::span(m.head_bias));
  return std::array<Span, 4>{std::span(m.adapter_a.values), std::span(m.adapter_b.values),
                             std::span(m.head_weight.values), std::span(m.head_bias)};
}

constexpr std::array<const char*, 4> kPeftNames = {"adapter.a", "adapter.b", "head.weight",
                                                   "head.bias"};

PeftUpdate zeros_like(const PeftUpdate& like) {
  PeftUpdate out = like;
  for (auto& t : out) std::fill(t.values.begin(), t.values.end(), 0.0);
  return out;
}

}  // namespace

PeftUpdate extract_peft(const TinyModel& model) {
  PeftUpdate out;
  const auto spans = peft_spans(model);
  for (std::size_t i = 0; i < spans.size(); ++i) {
    out.push_back({kPeftNames[i], {spans[i].begin(), spans[i].end()}});
  }
  return out;
}

void install_peft(TinyModel& model, const PeftUpdate& update) {
  check_congruent(extract_peft(model), update);
  auto spans = peft_spans(model);
  for (std::size_t i = 0; i < spans.size(); ++i) {
    std::copy(update[i].values.begin(), update[i].values.end(), spans[i].begin());
  }
}

void check_congruent(const PeftUpdate& a, const PeftUpdate& b) {
  if (a.size() != b.size()) throw InvalidArgument("PEFT updates differ in tensor count");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].values.size() != b[i].values.size()) {
      throw InvalidArgument("PEFT tensor shape mismatch at " + b[i].name);
    }
  }
}

std::string to_string(ProtocolKind kind) {
  switch (kind) {
    case ProtocolKind::kFedAvg: return "FedAvg";
    case ProtocolKind::kFedAvgM: return "FedAvgM";
    case ProtocolKind::kFedProx: return "FedProx";
    case ProtocolKind::kScaffold: return "SCAFFOLD";
  }
  return "?";
}

ProtocolKind protocol_from_string(const std::string& name) {
  for (auto k : {ProtocolKind::kFedAvg, ProtocolKind::kFedAvgM, ProtocolKind::kFedProx,
                 ProtocolKind::kScaffold}) {
    if (to_string(k) == name) return k;
  }
  throw InvalidArgument("unknown protocol '" + name + "'");
}

void ProtocolConfig::validate() const {
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw InvalidArgument("federation.momentum must be in [0,1)");
  }
  if (!(mu >= 0.0 && std::isfinite(mu))) throw InvalidArgument("federation.mu must be >= 0");
}

AggregationProtocol::AggregationProtocol(const ProtocolConfig& config, std::size_t participants,
                                         const PeftUpdate& like)
    : config_(config) {
  config_.validate();
  if (participants == 0) throw InvalidArgument("protocol needs at least one participant");
  momentum_ = zeros_like(like);
  server_control_ = zeros_like(like);
  client_control_.assign(participants, zeros_like(like));
  pending_control_.assign(participants, PeftUpdate{});
}

PeftUpdate AggregationProtocol::local_train(const TinyModel& client_model,
                                            std::span<const Example> data, int epochs, double lr,
                                            std::size_t batch_size, std::uint64_t seed,
                                            std::size_t participant) {
  if (data.empty()) throw InvalidArgument("local_train: empty client data");
  if (client_model.trainable.touches_embedding() || client_model.trainable.hidden) {
    throw InvalidArgument("local_train: client mask must be the PEFT mask");
  }
  if (participant >= client_control_.size()) throw IndexError("participant out of range");

  TinyModel model = client_model;
  model.trainable = TrainableMask::peft();
  const PeftUpdate received = extract_peft(model);

  TrainOptions opt;
  opt.epochs = epochs;
  opt.learning_rate = lr;
  opt.batch_size = batch_size;
  opt.seed = seed;

  if (config_.kind == ProtocolKind::kFedProx && config_.mu != 0.0) {
    const double mu = config_.mu;
    opt.hook = [&received, mu](const TinyModel& m, Gradients& g) {
      const auto w = peft_spans(m);
      auto gs = peft_spans(g);
      for (std::size_t t = 0; t < gs.size(); ++t) {
        for (std::size_t i = 0; i < gs[t].size(); ++i) {
          gs[t][i] += mu * (w[t][i] - received[t].values[i]);
        }
      }
    };
  } else if (config_.kind == ProtocolKind::kScaffold) {
    const PeftUpdate& c = server_control_;
    const PeftUpdate& ci = client_control_[participant];
    opt.hook = [&c, &ci](const TinyModel&, Gradients& g) {
      auto gs = peft_spans(g);
      for (std::size_t t = 0; t < gs.size(); ++t) {
        for (std::size_t i = 0; i < gs[t].size(); ++i) {
          const double corr = c[t].values[i] - ci[t].values[i];
          if (corr != 0.0) gs[t][i] += corr;
        }
      }
    };
  }

  const auto stats = train(model, data, opt);
  PeftUpdate out = extract_peft(model);

  if (config_.kind == ProtocolKind::kScaffold) {
    auto& ci = client_control_[participant];
    PeftUpdate delta = zeros_like(ci);
    if (stats.steps > 0 && lr > 0.0) {
      const double scale = 1.0 / (static_cast<double>(stats.steps) * lr);
      for (std::size_t t = 0; t < ci.size(); ++t) {
        for (std::size_t i = 0; i < ci[t].values.size(); ++i) {
          const double next = ci[t].values[i] - server_control_[t].values[i] +
                              (received[t].values[i] - out[t].values[i]) * scale;
          delta[t].values[i] = next - ci[t].values[i];
          ci[t].values[i] = next;
        }
      }
    }
    pending_control_[participant] = std::move(delta);
  }
  return out;
}

PeftUpdate weighted_mean(std::span<const PeftUpdate> updates, std::span<const std::size_t> counts) {
  if (updates.empty()) throw InvalidArgument("aggregate: no updates");
  if (counts.size() != updates.size()) throw InvalidArgument("aggregate: one count per update");
  for (const auto& u : updates) check_congruent(updates[0], u);
  for (auto n : counts) {
    if (n == 0) throw InvalidArgument("aggregate: zero example count");
  }
  PeftUpdate mean = updates[0];
  double total = static_cast<double>(counts[0]);
  for (std::size_t k = 1; k < updates.size(); ++k) {
    total += static_cast<double>(counts[k]);
    const double w = static_cast<double>(counts[k]) / total;
    for (std::size_t t = 0; t < mean.size(); ++t) {
      auto& m = mean[t].values;
      const auto& u = updates[k][t].values;
      for (std::size_t i = 0; i < m.size(); ++i) m[i] += w * (u[i] - m[i]);
    }
  }
  return mean;
}

PeftUpdate AggregationProtocol::aggregate(const PeftUpdate& global,
                                          std::span<const PeftUpdate> updates,
                                          std::span<const std::size_t> counts) {
  PeftUpdate avg = weighted_mean(updates, counts);
  check_congruent(global, avg);

  if (config_.kind == ProtocolKind::kFedAvgM) {
    const double beta = config_.momentum;
    PeftUpdate out = avg;
    for (std::size_t t = 0; t < avg.size(); ++t) {
      for (std::size_t i = 0; i < avg[t].values.size(); ++i) {
        const double v_prev = momentum_[t].values[i];
        out[t].values[i] = avg[t].values[i] + beta * v_prev;
        momentum_[t].values[i] = beta * v_prev + (avg[t].values[i] - global[t].values[i]);
      }
    }
    return out;
  }

  if (config_.kind == ProtocolKind::kScaffold) {
    const double inv = 1.0 / static_cast<double>(pending_control_.size());
    for (const auto& delta : pending_control_) {
      if (delta.empty()) continue;
      for (std::size_t t = 0; t < delta.size(); ++t) {
        for (std::size_t i = 0; i < delta[t].values.size(); ++i) {
          server_control_[t].values[i] += inv * delta[t].values[i];
        }
      }
    }
    for (auto& d : pending_control_) d.clear();
  }
  return avg;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

void add(PhaseTimings& a, const PhaseTimings& b) {
  a.distribution_ms += b.distribution_ms;
  a.replacement_ms += b.replacement_ms;
  a.client_train_ms += b.client_train_ms;
  a.aggregation_ms += b.aggregation_ms;
  a.reinforce_ms += b.reinforce_ms;
  a.verification_ms += b.verification_ms;
}

}  // namespace

TinyModel client_model(const FederationRun& run, std::size_t k) {
  const auto& clients = run.registry.assignments();
  if (k >= clients.size()) throw IndexError("client index out of range");
  TinyModel m = run.global_model;
  if (run.config.watermark) install_client_watermark(m, run.watermark, clients[k].trigger_index);
  m.trainable = TrainableMask::peft();
  return m;
}

void run_federation(FederationRun& run) {
  const auto& cfg = run.config;
  const auto& clients = run.registry.assignments();
  if (cfg.rounds < 0) throw InvalidArgument("federation.rounds must be >= 0");
  if (cfg.local_epochs < 0) throw InvalidArgument("federation.local_epochs must be >= 0");
  if (cfg.watermark && !run.watermark.trained) {
    throw StateError("run_federation: universal watermark not trained");
  }
  if (run.partitions.size() != clients.size()) {
    throw InvalidArgument("run_federation: one partition per registered client required");
  }
  if (cfg.server_participates && run.server_data.empty()) {
    throw InvalidArgument("run_federation: server participates but holds no data");
  }

  const std::size_t k_clients = clients.size();
  const std::size_t participants = k_clients + (cfg.server_participates ? 1 : 0);
  run.global_model.trainable = TrainableMask::peft();
  run.protocol = AggregationProtocol(cfg.protocol, participants, extract_peft(run.global_model));

  std::vector<int> ids;
  for (const auto& a : clients) ids.push_back(a.client_id);

  for (int r = 1; r <= cfg.rounds; ++r) {
    const auto round_start = Clock::now();
    const std::uint64_t round_seed = derive_seed(cfg.seed, "round", static_cast<std::uint64_t>(r));
    RoundRecord rec;
    rec.round = r;
    std::vector<PeftUpdate> updates;
    std::vector<std::size_t> counts;

    for (std::size_t k = 0; k < participants; ++k) {
      const bool is_server = k == k_clients;
      auto t0 = Clock::now();
      TinyModel m = run.global_model;
      rec.timings.distribution_ms += ms_since(t0);
      if (cfg.watermark && !is_server) {
        t0 = Clock::now();
        install_client_watermark(m, run.watermark, clients[k].trigger_index);
        rec.timings.replacement_ms += ms_since(t0);
      }
      const auto& data = is_server ? run.server_data : run.partitions[k];
      t0 = Clock::now();
      updates.push_back(run.protocol.local_train(m, data, cfg.local_epochs, cfg.lr, cfg.batch_size,
                                                 derive_seed(round_seed, "client", k), k));
      rec.timings.client_train_ms += ms_since(t0);
      counts.push_back(data.size());
    }

    auto t0 = Clock::now();
    install_peft(run.global_model,
                 run.protocol.aggregate(extract_peft(run.global_model), updates, counts));
    rec.timings.aggregation_ms = ms_since(t0);

    if (cfg.watermark && cfg.reinforce) {
      t0 = Clock::now();
      ReinforceOptions ro = cfg.reinforce_options;
      ro.seed = derive_seed(round_seed, "reinforce");
      run.global_model = reinforce_watermark(run.global_model, run.watermark,
                                             run.watermark_data, ro);
      rec.timings.reinforce_ms = ms_since(t0);
    }

    if (cfg.log_metrics) {
      t0 = Clock::now();
      rec.acc_global = accuracy(run.global_model, run.eval_data);
      if (k_clients >= 2) {
        std::vector<Predictor> models;
        for (std::size_t k = 0; k < k_clients; ++k) models.push_back(make_predictor(client_model(run, k)));
        const auto report = build_report(models, run.registry, run.verification, run.target_label);
        rec.vr_self = report.confidence;
        rec.vr_other_mean = report.leakage;
        rec.trace_verdicts = report.trace_verdicts;
      }
      rec.timings.verification_ms = ms_since(t0);
    }
    rec.wall_time_ms = ms_since(round_start);
    add(run.timings, rec.timings);
    run.round_log.push_back(std::move(rec));
    if (cfg.on_round) cfg.on_round(run);
  }
}

std::string round_log_csv(std::span<const RoundRecord> log, std::span<const int> client_ids) {
  std::ostringstream os;
  os << "round,acc_global";
  for (auto id : client_ids) os << ",vr_self_" << id;
  os << ",vr_other_mean,wall_time_ms\n";
  char buf[64];
  for (const auto& rec : log) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f", rec.round, rec.acc_global);
    os << buf;
    for (std::size_t i = 0; i < client_ids.size(); ++i) {
      std::snprintf(buf, sizeof(buf), ",%.6f", i < rec.vr_self.size() ? rec.vr_self[i] : 0.0);
      os << buf;
    }
    double other = 0.0;
    for (double v : rec.vr_other_mean) other += v;
    if (!rec.vr_other_mean.empty()) other /= static_cast<double>(rec.vr_other_mean.size());
    std::snprintf(buf, sizeof(buf), ",%.6f,%.3f\n", other, rec.wall_time_ms);
    os << buf;
  }
  return os.str();
}

}  // namespace fedtrace
