// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "fedtrace/experiment.hpp"
#include "fedtrace/rng.hpp"

namespace fedtrace {

namespace {

using nlohmann::json;

// Reads the fields of one JSON object and rejects any it did not consume.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(at(key), "expected a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(at(key), "expected an integer");
      out = v->get<int>();
    }
  }
  void get(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(at(key), "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(at(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(at(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  const json* child(const std::string& key) { return find(key); }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError(at(key), "unknown field");
    }
  }

 private:
  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

AttackConfig parse_attack(const json& j, const std::string& path) {
  Fields f(j, path);
  AttackConfig a;
  std::string kind;
  f.get("kind", kind);
  if (kind.empty()) throw ConfigError(f.at("kind"), "missing attack kind");
  try {
    a.kind = attack_from_string(kind);
  } catch (const InvalidArgument&) {
    throw ConfigError(f.at("kind"), "unknown attack kind '" + kind + "'");
  }
  f.get("prune_rate", a.prune_rate);
  f.get("bits", a.bits);
  f.get("noise_std", a.noise_std);
  f.get("finetune_epochs", a.finetune_epochs);
  f.get("finetune_lr", a.finetune_lr);
  f.get("finetune_batch", a.finetune_batch);
  f.get("full_finetune", a.full_finetune);
  f.get("overwrite_epochs", a.overwrite_options.epochs);
  f.get("overwrite_lr", a.overwrite_options.learning_rate);
  f.get("overwrite_batch", a.overwrite_options.batch_size);
  f.get("overwrite_poison_ratio", a.overwrite_recipe.poison_ratio);
  f.finish();
  return a;
}

json attack_to_json(const AttackConfig& a) {
  return {{"kind", to_string(a.kind)},
          {"prune_rate", a.prune_rate},
          {"bits", a.bits},
          {"noise_std", a.noise_std},
          {"finetune_epochs", a.finetune_epochs},
          {"finetune_lr", a.finetune_lr},
          {"finetune_batch", a.finetune_batch},
          {"full_finetune", a.full_finetune},
          {"overwrite_epochs", a.overwrite_options.epochs},
          {"overwrite_lr", a.overwrite_options.learning_rate},
          {"overwrite_batch", a.overwrite_options.batch_size},
          {"overwrite_poison_ratio", a.overwrite_recipe.poison_ratio}};
}

void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigError(path, what);
}

}  // namespace

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  Fields root(j, "");
  root.get("master_seed", c.master_seed);
  root.get("output_dir", c.output_dir);
  root.get("control_epochs", c.control_epochs);
  root.get("save_checkpoints", c.save_checkpoints);
  root.get("step1_repeats", c.step1_repeats);

  if (const json* s = root.child("corpus")) {
    Fields f(*s, "corpus");
    f.get("vocab_size", c.corpus.vocab_size);
    f.get("num_classes", c.corpus.num_classes);
    f.get("samples_per_class", c.corpus.samples_per_class);
    f.get("min_length", c.corpus.min_length);
    f.get("max_length", c.corpus.max_length);
    f.get("signal", c.corpus.signal);
    f.get("indicative_per_class", c.corpus.indicative_per_class);
    f.get("background_size", c.corpus.background_size);
    f.finish();
  }
  if (const json* s = root.child("model")) {
    Fields f(*s, "model");
    f.get("embed_dim", c.model.embed_dim);
    f.get("hidden_dim", c.model.hidden_dim);
    f.get("adapter_rank", c.model.adapter_rank);
    f.get("embedding_range", c.model.init.embedding_range);
    f.get("hidden_range", c.model.init.hidden_range);
    f.get("adapter_range", c.model.init.adapter_range);
    f.get("head_range", c.model.init.head_range);
    f.finish();
  }
  if (const json* s = root.child("partition")) {
    Fields f(*s, "partition");
    std::string mode = c.partition.mode == PartitionMode::kIid ? "iid" : "dirichlet";
    f.get("mode", mode);
    if (mode == "iid") {
      c.partition.mode = PartitionMode::kIid;
    } else if (mode == "dirichlet") {
      c.partition.mode = PartitionMode::kDirichlet;
    } else {
      throw ConfigError(f.at("mode"), "expected \"iid\" or \"dirichlet\"");
    }
    f.get("beta", c.partition.beta);
    f.get("num_clients", c.partition.num_clients);
    f.finish();
  }
  if (const json* s = root.child("data")) {
    Fields f(*s, "data");
    f.get("server_fraction", c.data.server_fraction);
    f.get("holdout_fraction", c.data.holdout_fraction);
    f.finish();
  }
  if (const json* s = root.child("federation")) {
    Fields f(*s, "federation");
    auto& fed = c.federation;
    f.get("rounds", fed.rounds);
    f.get("local_epochs", fed.local_epochs);
    f.get("lr", fed.lr);
    f.get("reference_lr", fed.reference_lr);
    f.get("batch_size", fed.batch_size);
    std::string kind = to_string(fed.protocol.kind);
    f.get("protocol", kind);
    try {
      fed.protocol.kind = protocol_from_string(kind);
    } catch (const InvalidArgument&) {
      throw ConfigError(f.at("protocol"), "expected FedAvg, FedAvgM, FedProx or SCAFFOLD");
    }
    f.get("momentum", fed.protocol.momentum);
    f.get("mu", fed.protocol.mu);
    f.get("server_participates", fed.server_participates);
    f.get("watermark", fed.watermark);
    f.get("reinforce", fed.reinforce);
    f.get("reinforce_epochs", fed.reinforce_epochs);
    f.get("reinforce_lr", fed.reinforce_lr);
    f.get("reinforce_batch", fed.reinforce_batch);
    f.get("log_metrics", fed.log_metrics);
    f.finish();
  }
  if (const json* s = root.child("watermark")) {
    Fields f(*s, "watermark");
    auto& wm = c.watermark;
    f.get("target_label", wm.target_label);
    f.get("poison_ratio", wm.poison_ratio);
    f.get("insertions", wm.insertions);
    f.get("wm_epochs", wm.wm_epochs);
    f.get("wm_lr", wm.wm_lr);
    f.get("reference_wm_lr", wm.reference_wm_lr);
    f.get("wm_batch", wm.wm_batch);
    f.get("wm_set_size", wm.wm_set_size);
    f.finish();
  }
  if (const json* s = root.child("verification")) {
    Fields f(*s, "verification");
    f.get("gamma", c.verification.gamma);
    f.get("sigma", c.verification.sigma);
    f.get("samples", c.verification.samples);
    f.get("insertions", c.verification.insertions);
    f.finish();
  }
  if (const json* s = root.child("attacks")) {
    if (!s->is_array()) throw ConfigError("attacks", "expected an array");
    for (std::size_t i = 0; i < s->size(); ++i) {
      c.attacks.push_back(parse_attack((*s)[i], "attacks[" + std::to_string(i) + "]"));
    }
  }
  root.finish();
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  // Component validators name the field first ("prune_rate must be ...");
  // fold that name into the path when it is one.
  auto wrap = [](const std::string& path, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const InvalidArgument& e) {
      const std::string what = e.what();
      const std::string word = what.substr(0, what.find(' '));
      const bool field = !word.empty() && word.find_first_not_of(
                                              "abcdefghijklmnopqrstuvwxyz_.") == std::string::npos;
      if (field && word.rfind(path + ".", 0) == 0) throw ConfigError(word, what);
      if (field && word.find('.') == std::string::npos) throw ConfigError(path + "." + word, what);
      throw ConfigError(path, what);
    }
  };
  wrap("corpus", [&] { corpus.validate(); });
  wrap("model", [&] {
    ModelShape{corpus.vocab_size, model.embed_dim, model.hidden_dim, model.adapter_rank,
               corpus.num_classes}
        .validate();
    for (double v : {model.init.embedding_range, model.init.hidden_range, model.init.adapter_range,
                     model.init.head_range}) {
      if (!(v > 0.0 && std::isfinite(v))) throw InvalidArgument("init ranges must be positive");
    }
  });
  require(partition.num_clients >= 2, "partition.num_clients", "must be >= 2");
  if (partition.mode == PartitionMode::kDirichlet) {
    require(partition.beta > 0.0 && std::isfinite(partition.beta), "partition.beta",
            "must be positive");
  }
  require(data.server_fraction > 0.0 && data.server_fraction < 1.0, "data.server_fraction",
          "must be in (0,1)");
  require(data.holdout_fraction > 0.0 && data.holdout_fraction < 1.0, "data.holdout_fraction",
          "must be in (0,1)");
  require(data.server_fraction + data.holdout_fraction < 0.9, "data.holdout_fraction",
          "server + holdout fractions leave too little client data");

  const auto& fed = federation;
  require(fed.rounds >= 0, "federation.rounds", "must be >= 0");
  require(fed.local_epochs >= 0, "federation.local_epochs", "must be >= 0");
  require(fed.lr >= 0.0 && std::isfinite(fed.lr), "federation.lr", "must be >= 0");
  require(fed.batch_size >= 1, "federation.batch_size", "must be >= 1");
  require(fed.protocol.momentum >= 0.0 && fed.protocol.momentum < 1.0, "federation.momentum",
          "must be in [0,1)");
  require(fed.protocol.mu >= 0.0 && std::isfinite(fed.protocol.mu), "federation.mu",
          "must be >= 0");
  require(fed.reinforce_epochs >= 0, "federation.reinforce_epochs", "must be >= 0");
  require(fed.reinforce_lr >= 0.0, "federation.reinforce_lr", "must be >= 0");
  require(fed.reinforce_batch >= 1, "federation.reinforce_batch", "must be >= 1");

  const auto& wm = watermark;
  require(wm.target_label >= 0 && static_cast<std::size_t>(wm.target_label) < corpus.num_classes,
          "watermark.target_label", "must be a class index");
  require(wm.poison_ratio > 0.0 && wm.poison_ratio <= 1.0, "watermark.poison_ratio",
          "must be in (0,1]");
  require(wm.insertions >= 1, "watermark.insertions", "must be >= 1");
  require(wm.wm_epochs >= 1, "watermark.wm_epochs", "must be >= 1");
  require(wm.wm_lr > 0.0, "watermark.wm_lr", "must be > 0");
  require(wm.wm_batch >= 1, "watermark.wm_batch", "must be >= 1");

  const auto& v = verification;
  require(v.gamma > 0.0 && v.gamma < 1.0, "verification.gamma", "must be in (0,1)");
  require(v.sigma > 0.0 && v.sigma < 1.0, "verification.sigma", "must be in (0,1)");
  require(v.samples >= 1, "verification.samples", "must be >= 1");
  require(v.insertions >= 1, "verification.insertions", "must be >= 1");

  for (std::size_t i = 0; i < attacks.size(); ++i) {
    wrap("attacks[" + std::to_string(i) + "]", [&] { attacks[i].validate(); });
  }
  require(control_epochs >= 0, "control_epochs", "must be >= 0");
  require(step1_repeats >= 1, "step1_repeats", "must be >= 1");
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("<file>", "cannot read " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  json attacks = json::array();
  for (const auto& a : c.attacks) attacks.push_back(attack_to_json(a));
  const auto& fed = c.federation;
  const auto& wm = c.watermark;
  return {
      {"master_seed", c.master_seed},
      {"output_dir", c.output_dir},
      {"control_epochs", c.control_epochs},
      {"save_checkpoints", c.save_checkpoints},
      {"step1_repeats", c.step1_repeats},
      {"corpus",
       {{"vocab_size", c.corpus.vocab_size},
        {"num_classes", c.corpus.num_classes},
        {"samples_per_class", c.corpus.samples_per_class},
        {"min_length", c.corpus.min_length},
        {"max_length", c.corpus.max_length},
        {"signal", c.corpus.signal},
        {"indicative_per_class", c.corpus.indicative_per_class},
        {"background_size", c.corpus.background_size}}},
      {"model",
       {{"embed_dim", c.model.embed_dim},
        {"hidden_dim", c.model.hidden_dim},
        {"adapter_rank", c.model.adapter_rank},
        {"embedding_range", c.model.init.embedding_range},
        {"hidden_range", c.model.init.hidden_range},
        {"adapter_range", c.model.init.adapter_range},
        {"head_range", c.model.init.head_range}}},
      {"partition",
       {{"mode", c.partition.mode == PartitionMode::kIid ? "iid" : "dirichlet"},
        {"beta", c.partition.beta},
        {"num_clients", c.partition.num_clients}}},
      {"data",
       {{"server_fraction", c.data.server_fraction},
        {"holdout_fraction", c.data.holdout_fraction}}},
      {"federation",
       {{"rounds", fed.rounds},
        {"local_epochs", fed.local_epochs},
        {"lr", fed.lr},
        {"reference_lr", fed.reference_lr},
        {"batch_size", fed.batch_size},
        {"protocol", to_string(fed.protocol.kind)},
        {"momentum", fed.protocol.momentum},
        {"mu", fed.protocol.mu},
        {"server_participates", fed.server_participates},
        {"watermark", fed.watermark},
        {"reinforce", fed.reinforce},
        {"reinforce_epochs", fed.reinforce_epochs},
        {"reinforce_lr", fed.reinforce_lr},
        {"reinforce_batch", fed.reinforce_batch},
        {"log_metrics", fed.log_metrics}}},
      {"watermark",
       {{"target_label", wm.target_label},
        {"poison_ratio", wm.poison_ratio},
        {"insertions", wm.insertions},
        {"wm_epochs", wm.wm_epochs},
        {"wm_lr", wm.wm_lr},
        {"reference_wm_lr", wm.reference_wm_lr},
        {"wm_batch", wm.wm_batch},
        {"wm_set_size", wm.wm_set_size}}},
      {"verification",
       {{"gamma", c.verification.gamma},
        {"sigma", c.verification.sigma},
        {"samples", c.verification.samples},
        {"insertions", c.verification.insertions}}},
      {"attacks", attacks},
  };
}

std::map<std::string, std::uint64_t> seed_tree(std::uint64_t master_seed) {
  std::map<std::string, std::uint64_t> out;
  for (const char* name : {"corpus", "split", "partition", "model", "identity", "watermark_data",
                           "step1", "federation", "verification", "control", "attacks"}) {
    out[name] = derive_seed(master_seed, name);
  }
  return out;
}

}  // namespace fedtrace
