// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedtrace/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "fedtrace/checkpoint.hpp"
#include "fedtrace/identity.hpp"
#include "fedtrace/rng.hpp"
#include "fedtrace/training.hpp"

namespace fedtrace {

namespace {

using Clock = std::chrono::steady_clock;
using nlohmann::json;

constexpr std::int64_t kBaseTimestamp = 1'700'000'000;
constexpr int kAdversaryId = 1000;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

ModelShape model_shape(const ExperimentConfig& c) {
  return {c.corpus.vocab_size, c.model.embed_dim, c.model.hidden_dim, c.model.adapter_rank,
          c.corpus.num_classes};
}

VerificationConfig verification_config(const ExperimentConfig& c, std::uint64_t seed,
                                       std::vector<Example> pool) {
  VerificationConfig v;
  v.gamma = c.verification.gamma;
  v.sigma = c.verification.sigma;
  v.samples = c.verification.samples;
  v.insertions = c.verification.insertions;
  v.seed = seed;
  v.pool = std::move(pool);
  return v;
}

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

TraceResult trace_from_row(const VerificationReport& report, std::size_t i) {
  TraceResult t;
  t.rates = report.vr_matrix[i];
  t.max_rate = *std::max_element(t.rates.begin(), t.rates.end());
  t.client_id = report.trace_verdicts[i];
  return t;
}

}  // namespace

ExperimentResult prepare_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto seeds = seed_tree(config.master_seed);
  ExperimentResult r;
  r.config = config;

  CorpusSpec cs = config.corpus;
  cs.seed = seeds.at("corpus");
  r.corpus = generate_corpus(cs);

  std::vector<Example> train = r.corpus.train;
  Rng(seeds.at("split")).shuffle(train);
  const auto n = static_cast<double>(train.size());
  const auto n_server = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(config.data.server_fraction * n)));
  const auto n_hold = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(config.data.holdout_fraction * n)));
  if (n_server + n_hold >= train.size()) throw InvalidArgument("no training data left for clients");
  std::vector<Example> server(train.begin(), train.begin() + static_cast<std::ptrdiff_t>(n_server));
  r.holdout.assign(train.begin() + static_cast<std::ptrdiff_t>(n_server),
                   train.begin() + static_cast<std::ptrdiff_t>(n_server + n_hold));
  std::vector<Example> pool(train.begin() + static_cast<std::ptrdiff_t>(n_server + n_hold), train.end());

  PartitionSpec ps = config.partition;
  ps.seed = seeds.at("partition");

  auto& run = r.run;
  run.partitions = partition(pool, ps);
  run.server_data = std::move(server);
  run.eval_data = r.corpus.test;
  run.target_label = config.watermark.target_label;
  run.verification = verification_config(config, seeds.at("verification"), r.corpus.test);

  run.registry = TriggerRegistry(r.corpus.reserved_indices());
  const auto server_id = generate_identity(0, to_bytes("fedtrace server"), kBaseTimestamp,
                                           derive_seed(seeds.at("identity"), "server"));
  const auto universal =
      sign_and_assign(server_id, r.corpus.vocab, run.registry, AssignmentRole::kUniversal);
  for (std::size_t k = 1; k <= ps.num_clients; ++k) {
    const auto id = generate_identity(static_cast<int>(k), to_bytes("client-" + std::to_string(k)),
                                      kBaseTimestamp + static_cast<std::int64_t>(k),
                                      derive_seed(seeds.at("identity"), "client", k));
    sign_and_assign(id, r.corpus.vocab, run.registry, AssignmentRole::kClient);
  }

  const auto& wm = config.watermark;
  PoisonRecipe recipe;
  recipe.trigger_index = universal.trigger_index;
  recipe.target_label = wm.target_label;
  recipe.poison_ratio = wm.poison_ratio;
  recipe.insertions = wm.insertions;
  recipe.seed = seeds.at("watermark_data");
  const std::size_t clean_size =
      wm.wm_set_size == 0 ? run.server_data.size() : std::min(wm.wm_set_size, run.server_data.size());
  run.watermark_data = build_watermark_dataset(
      std::span<const Example>(run.server_data).first(clean_size), recipe, cs.vocab_size);
  run.watermark.universal_index = universal.trigger_index;
  run.watermark.recipe = recipe;

  TinyModel base = TinyModel::initialize(model_shape(config), seeds.at("model"), config.model.init);
  base.trainable = TrainableMask::peft();
  if (config.federation.watermark) {
    EmbeddingTrainOptions eo;
    eo.epochs = wm.wm_epochs;
    eo.learning_rate = wm.wm_lr;
    eo.batch_size = wm.wm_batch;
    eo.seed = seeds.at("step1");
    r.step1_ms = std::numeric_limits<double>::infinity();
    const WatermarkState untrained = run.watermark;
    for (int rep = 0; rep < config.step1_repeats; ++rep) {
      WatermarkState state = untrained;
      const auto t0 = Clock::now();
      TinyModel trained = train_universal_watermark(base, run.watermark_data, state, eo);
      r.step1_ms = std::min(r.step1_ms, ms_since(t0));
      if (rep == 0) {
        run.global_model = std::move(trained);
        run.watermark = std::move(state);
      }
    }
  } else {
    run.global_model = base;
  }

  const auto& fed = config.federation;
  auto& fc = run.config;
  fc.rounds = fed.rounds;
  fc.local_epochs = fed.local_epochs;
  fc.lr = fed.lr;
  fc.batch_size = fed.batch_size;
  fc.protocol = fed.protocol;
  fc.watermark = fed.watermark;
  fc.reinforce = fed.reinforce;
  fc.reinforce_options.epochs = fed.reinforce_epochs;
  fc.reinforce_options.learning_rate = fed.reinforce_lr;
  fc.reinforce_options.batch_size = fed.reinforce_batch;
  fc.server_participates = fed.server_participates;
  fc.log_metrics = fed.log_metrics;
  fc.seed = seeds.at("federation");
  return r;
}

AttackRow evaluate_attack(const ExperimentResult& result, const AttackConfig& attack,
                          std::size_t index) {
  const auto& run = result.run;
  const auto& clients = run.registry.assignments();
  const auto seeds = seed_tree(result.config.master_seed);
  const std::uint64_t attack_seed = derive_seed(seeds.at("attacks"), "attack", index);

  AttackConfig a = attack;
  a.finetune_data = result.holdout;
  TriggerRegistry registry = run.registry;
  std::optional<TokenId> adversary;
  if (a.kind == AttackKind::kOverwrite) {
    // The adversary registers after the fact, so its timestamp is later.
    const auto id = generate_identity(
        kAdversaryId, to_bytes("adversary"),
        kBaseTimestamp + static_cast<std::int64_t>(clients.size()) + 1000,
        derive_seed(attack_seed, "identity"));
    adversary = sign_and_assign(id, result.corpus.vocab, registry, AssignmentRole::kClient)
                    .trigger_index;
    a.overwrite_recipe.trigger_index = *adversary;
    a.overwrite_recipe.target_label = result.config.watermark.target_label;
    a.overwrite_recipe.insertions = result.config.watermark.insertions;
    a.overwrite_recipe.seed = derive_seed(attack_seed, "recipe");
  }

  const QueryPlan plan(run.verification, run.target_label);
  AttackRow row;
  row.attack = to_string(a.kind);
  row.parameter = a.parameter();
  row.min_vr_self = 1.0;
  for (std::size_t k = 0; k < clients.size(); ++k) {
    a.seed = derive_seed(attack_seed, "client", k);
    const TinyModel attacked = apply_attack(client_model(run, k), a, adversary ? &run.registry : nullptr);
    const Predictor p = borrow_predictor(attacked);
    row.acc += accuracy(attacked, run.eval_data);
    double other = 0.0;
    std::vector<TokenId> responding;
    for (std::size_t j = 0; j < clients.size(); ++j) {
      const double vr = verification_rate(p, clients[j].trigger_index, plan, run.target_label);
      if (vr >= run.verification.gamma) responding.push_back(clients[j].trigger_index);
      if (j == k) {
        row.vr_self += vr;
        row.min_vr_self = std::min(row.min_vr_self, vr);
      } else {
        other += vr;
      }
    }
    row.vr_other_mean += clients.size() > 1 ? other / static_cast<double>(clients.size() - 1) : 0.0;
    if (adversary) {
      const double vr = verification_rate(p, *adversary, plan, run.target_label);
      row.vr_adversary += vr;
      if (vr >= run.verification.gamma) responding.push_back(*adversary);
      if (resolve_dispute(registry, responding) == clients[k].client_id) ++row.disputes_resolved;
    }
  }
  const auto k = static_cast<double>(clients.size());
  row.acc /= k;
  row.vr_self /= k;
  row.vr_other_mean /= k;
  row.vr_adversary /= k;
  return row;
}

ExperimentResult run_pipeline(const ExperimentConfig& config) {
  ExperimentResult r = prepare_experiment(config);
  auto& run = r.run;
  run_federation(run);

  const std::size_t k = run.registry.assignments().size();
  std::vector<Predictor> models;
  for (std::size_t i = 0; i < k; ++i) models.push_back(make_predictor(client_model(run, i)));
  r.final_report = build_report(models, run.registry, run.verification, run.target_label);
  for (std::size_t i = 0; i < k; ++i) r.client_traces.push_back(trace_from_row(r.final_report, i));

  const auto seeds = seed_tree(config.master_seed);
  TinyModel control = TinyModel::initialize(model_shape(config), seeds.at("model"), config.model.init);
  control.trainable = TrainableMask::peft();
  std::vector<Example> all = run.server_data;
  for (const auto& part : run.partitions) all.insert(all.end(), part.begin(), part.end());
  TrainOptions opt;
  opt.epochs = config.control_epochs;
  opt.learning_rate = config.federation.lr;
  opt.batch_size = config.federation.batch_size;
  opt.seed = seeds.at("control");
  train(control, all, opt);
  r.control_acc = accuracy(control, run.eval_data);
  r.control_trace = trace(borrow_predictor(control), run.registry, run.verification, run.target_label);
  r.control_model = std::move(control);

  for (std::size_t i = 0; i < config.attacks.size(); ++i) {
    r.attacks.push_back(evaluate_attack(r, config.attacks[i], i));
  }
  return r;
}

json report_json(const ExperimentResult& r) {
  const auto& rep = r.final_report;
  json rounds = json::array();
  for (const auto& rec : r.run.round_log) {
    json row = {{"round", rec.round}, {"ACC", rec.acc_global}};
    if (!rec.vr_self.empty()) {
      double self = 0.0, other = 0.0;
      for (double v : rec.vr_self) self += v;
      for (double v : rec.vr_other_mean) other += v;
      row["VR_self_mean"] = self / static_cast<double>(rec.vr_self.size());
      row["VR_other_mean"] = other / static_cast<double>(rec.vr_other_mean.size());
      row["VR_self_min"] = *std::min_element(rec.vr_self.begin(), rec.vr_self.end());
      row["VR_other_max"] = *std::max_element(rec.vr_other_mean.begin(), rec.vr_other_mean.end());
    }
    rounds.push_back(row);
  }
  json traces = json::array();
  const auto& clients = r.run.registry.assignments();
  for (std::size_t i = 0; i < r.client_traces.size(); ++i) {
    const auto& t = r.client_traces[i];
    traces.push_back({{"suspect", "client_" + std::to_string(clients[i].client_id)},
                      {"expected", clients[i].client_id},
                      {"verdict", t.client_id ? json(*t.client_id) : json(false)},
                      {"max_vr", t.max_rate}});
  }
  json attacks = json::array();
  for (const auto& a : r.attacks) {
    attacks.push_back({{"attack", a.attack},
                       {"parameter", a.parameter},
                       {"ACC", a.acc},
                       {"VR_self", a.vr_self},
                       {"VR_self_min", a.min_vr_self},
                       {"VR_other_mean", a.vr_other_mean},
                       {"VR_adversary", a.vr_adversary},
                       {"disputes_resolved", a.disputes_resolved}});
  }
  const double acc = r.run.round_log.empty() ? accuracy(r.run.global_model, r.run.eval_data)
                                             : r.run.round_log.back().acc_global;
  return {
      {"ACC", acc},
      {"VR", {{"confidence", rep.confidence}, {"leakage", rep.leakage}}},
      {"VI", rep.interval},
      {"summary",
       {{"VR_self_mean", rep.mean_confidence()},
        {"VR_self_min", rep.min_confidence()},
        {"VR_other_mean", rep.mean_leakage()},
        {"VR_other_max", rep.max_leakage()},
        {"VI_mean", rep.mean_confidence() - rep.mean_leakage()}}},
      {"rounds", rounds},
      {"trace", traces},
      {"control",
       {{"ACC", r.control_acc},
        {"verdict", r.control_trace.client_id ? json(*r.control_trace.client_id) : json(false)},
        {"max_vr", r.control_trace.max_rate}}},
      {"attacks", attacks},
  };
}

std::string attacks_csv(const std::vector<AttackRow>& rows) {
  std::ostringstream os;
  os << "attack,parameter,acc,vr_self,vr_other_mean,vr_self_min,vr_adversary\n";
  for (const auto& a : rows) {
    os << a.attack << ',' << fmt(a.parameter, "%g") << ',' << fmt(a.acc) << ',' << fmt(a.vr_self)
       << ',' << fmt(a.vr_other_mean) << ',' << fmt(a.min_vr_self) << ',' << fmt(a.vr_adversary)
       << '\n';
  }
  return os.str();
}

void write_artifacts(const ExperimentResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& run = r.run;
  std::vector<int> ids;
  for (const auto& a : run.registry.assignments()) ids.push_back(a.client_id);

  write_text(dir / "round_log.csv", round_log_csv(run.round_log, ids));
  write_text(dir / "vr_matrix.json", json(r.final_report).dump(2) + "\n");
  write_text(dir / "vr_matrix.csv", r.final_report.matrix_csv());
  write_text(dir / "report.json", report_json(r).dump(2) + "\n");
  write_text(dir / "attacks.csv", attacks_csv(r.attacks));
  run.registry.save(dir / "registry.json");
  r.corpus.vocab.save(dir / "vocab.txt");
  save_tsv(dir / "test.tsv", r.corpus.test, r.corpus.vocab);
  json wm = run.watermark;
  write_text(dir / "watermark.json", wm.dump(2) + "\n");

  if (r.config.save_checkpoints) {
    std::filesystem::create_directories(dir / "checkpoints");
    save_checkpoint(run.global_model, dir / "checkpoints" / "global.ckpt");
    for (std::size_t k = 0; k < ids.size(); ++k) {
      save_checkpoint(client_model(run, k),
                      dir / "checkpoints" / ("client_" + std::to_string(ids[k]) + ".ckpt"));
    }
  }

  json seeds = json::object();
  for (const auto& [name, s] : seed_tree(r.config.master_seed)) seeds[name] = s;
  const auto& t = run.timings;
  json manifest = {
      {"config", to_json(r.config)},
      {"seed_rule", "first 8 bytes (big-endian) of SHA-256(be64(master_seed) || name)"},
      {"seeds", seeds},
      {"wall_time_ms",
       {{"step1", r.step1_ms},
        {"distribution", t.distribution_ms},
        {"replacement", t.replacement_ms},
        {"client_train", t.client_train_ms},
        {"aggregation", t.aggregation_ms},
        {"reinforce", t.reinforce_ms},
        {"verification", t.verification_ms}}},
      {"artifacts",
       {"round_log.csv", "vr_matrix.json", "vr_matrix.csv", "report.json", "attacks.csv",
        "registry.json", "vocab.txt", "test.tsv", "watermark.json"}},
  };
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

int run_experiment(const std::filesystem::path& config_path, std::ostream& err) {
  ExperimentConfig config;
  try {
    config = load_config(config_path);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  }
  const std::filesystem::path dir = config.output_dir;
  try {
    std::filesystem::remove(dir / "FAILED");
    const auto result = run_pipeline(config);
    write_artifacts(result, dir);
    return 0;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << '\n';
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::ofstream(dir / "FAILED") << e.what() << '\n';
    return 1;
  }
}

const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes = {"poison_ratio", "wm_epochs", "clients",
                                                "wm_set_size"};
  return axes;
}

ExperimentConfig with_axis(const ExperimentConfig& base, const std::string& axis, double value) {
  ExperimentConfig c = base;
  auto as_count = [&](const char* path) {
    if (!(value >= 0.0) || value != std::floor(value)) throw ConfigError(path, "expected an integer");
    return static_cast<std::size_t>(value);
  };
  if (axis == "poison_ratio") {
    c.watermark.poison_ratio = value;
  } else if (axis == "wm_epochs") {
    c.watermark.wm_epochs = static_cast<int>(as_count("watermark.wm_epochs"));
  } else if (axis == "clients") {
    c.partition.num_clients = as_count("partition.num_clients");
  } else if (axis == "wm_set_size") {
    c.watermark.wm_set_size = as_count("watermark.wm_set_size");
  } else {
    throw ConfigError("axis", "unknown sweep axis '" + axis + "'");
  }
  c.validate();
  return c;
}

std::vector<SweepRow> ablation_sweep(const ExperimentConfig& base, const std::string& axis,
                                     const std::vector<double>& values) {
  if (std::find(sweep_axes().begin(), sweep_axes().end(), axis) == sweep_axes().end()) {
    throw ConfigError("axis", "unknown sweep axis '" + axis + "'");
  }
  std::vector<SweepRow> rows;
  for (double v : values) {
    SweepRow row;
    row.axis = axis;
    row.value = fmt(v, "%g");
    const auto t0 = Clock::now();
    try {
      ExperimentConfig c = with_axis(base, axis, v);
      c.attacks.clear();
      const auto r = run_pipeline(c);
      row.acc = accuracy(r.run.global_model, r.run.eval_data);
      row.vr_self_mean = r.final_report.mean_confidence();
      row.vr_other_mean = r.final_report.mean_leakage();
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    row.wall_time_ms = ms_since(t0);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "axis,value,status,acc,vr_self_mean,vr_other_mean,wall_time_ms\n";
  for (const auto& r : rows) {
    os << r.axis << ',' << r.value << ',' << (r.ok ? "ok" : "failed") << ',' << fmt(r.acc) << ','
       << fmt(r.vr_self_mean) << ',' << fmt(r.vr_other_mean) << ',' << fmt(r.wall_time_ms, "%.3f")
       << '\n';
  }
  return os.str();
}

TimingRow measure_timing(const ExperimentConfig& config, const std::string& name) {
  ExperimentConfig c = config;
  c.federation.log_metrics = false;
  const auto t0 = Clock::now();
  ExperimentResult r = prepare_experiment(c);
  run_federation(r.run);
  TimingRow row;
  row.total_ms = ms_since(t0);
  row.name = name;
  row.clients = r.run.registry.assignments().size();
  row.rounds = c.federation.rounds;
  row.step1_ms = r.step1_ms;
  const double rounds = std::max(1, c.federation.rounds);
  const auto& t = r.run.timings;
  row.client_train_per_round_ms = t.client_train_ms / rounds;
  row.aggregation_per_round_ms = t.aggregation_ms / rounds;
  row.reinforce_per_round_ms = t.reinforce_ms / rounds;
  row.server_per_round_ms = (t.aggregation_ms + t.reinforce_ms) / rounds;
  row.replacement_per_round_ms = t.replacement_ms / rounds;
  row.replacement_per_client_ms =
      row.clients ? row.replacement_per_round_ms / static_cast<double>(row.clients) : 0.0;
  return row;
}

std::string timing_csv(const std::vector<TimingRow>& rows) {
  std::ostringstream os;
  os << "config,clients,rounds,total_ms,step1_ms,client_train_per_round_ms,server_per_round_ms,"
        "aggregation_per_round_ms,reinforce_per_round_ms,replacement_per_round_ms,"
        "replacement_per_client_ms\n";
  for (const auto& r : rows) {
    os << r.name << ',' << r.clients << ',' << r.rounds << ',' << fmt(r.total_ms, "%.3f") << ','
       << fmt(r.step1_ms, "%.3f") << ',' << fmt(r.client_train_per_round_ms, "%.3f") << ','
       << fmt(r.server_per_round_ms, "%.3f") << ',' << fmt(r.aggregation_per_round_ms, "%.3f")
       << ',' << fmt(r.reinforce_per_round_ms, "%.3f") << ','
       << fmt(r.replacement_per_round_ms, "%.6f") << ','
       << fmt(r.replacement_per_client_ms, "%.6f") << '\n';
  }
  return os.str();
}

}  // namespace fedtrace
