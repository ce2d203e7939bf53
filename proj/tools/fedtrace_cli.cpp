// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: run, sweep, attack, verify, timing.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedtrace/checkpoint.hpp"
#include "fedtrace/corpus.hpp"
#include "fedtrace/experiment.hpp"
#include "fedtrace/verifier.hpp"

namespace fs = std::filesystem;
using namespace fedtrace;

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 1;

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw ConfigError("--values", "not a number: '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("--values", "no values given");
  return out;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

// Runs `body`, mapping config problems to exit 2 and everything else to 1.
template <typename F>
int guarded(F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated leak tracing with embedding watermarks"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run one experiment and write its artifacts");
  run->add_option("config", config_path, "Experiment JSON")->required();

  std::string axis, values, sweep_out;
  auto* sweep = app.add_subcommand("sweep", "Ablation sweep over one config axis");
  sweep->add_option("config", config_path, "Experiment JSON")->required();
  sweep->add_option("--axis", axis, "poison_ratio | wm_epochs | clients | wm_set_size")->required();
  sweep->add_option("--values", values, "Comma-separated values")->required();
  sweep->add_option("--out", sweep_out, "CSV path (default <output_dir>/sweep.csv)");

  std::string kind;
  AttackConfig attack;
  std::string attack_out;
  auto* atk = app.add_subcommand("attack", "Run the experiment and one attack on every client model");
  atk->add_option("config", config_path, "Experiment JSON")->required();
  atk->add_option("--kind", kind, "finetune | prune | quantize | noise | overwrite")->required();
  atk->add_option("--prune-rate", attack.prune_rate);
  atk->add_option("--bits", attack.bits);
  atk->add_option("--noise-std", attack.noise_std);
  atk->add_option("--epochs", attack.finetune_epochs, "Fine-tuning epochs");
  atk->add_option("--lr", attack.finetune_lr, "Fine-tuning learning rate");
  atk->add_flag("--full", attack.full_finetune, "Fine-tune every parameter, embeddings included");
  atk->add_option("--overwrite-epochs", attack.overwrite_options.epochs);
  atk->add_option("--out", attack_out, "CSV path (default <output_dir>/attacks.csv)");

  std::string ckpt, registry_path, pool_path, vocab_path, suspect_name;
  VerificationConfig vcfg;
  int target_label = 1;
  auto* verify = app.add_subcommand("verify", "Black-box trace of a suspect checkpoint");
  verify->add_option("checkpoint", ckpt, "Model checkpoint")->required();
  verify->add_option("--registry", registry_path, "registry.json")->required();
  verify->add_option("--pool", pool_path, "Clean TSV pool (default test.tsv next to the registry)");
  verify->add_option("--vocab", vocab_path, "Vocabulary (default vocab.txt next to the registry)");
  verify->add_option("--target", target_label, "Watermark target label");
  verify->add_option("--gamma", vcfg.gamma);
  verify->add_option("--samples", vcfg.samples);
  verify->add_option("--seed", vcfg.seed);
  verify->add_option("--name", suspect_name, "Suspect name in the verdict line");

  std::vector<std::string> timing_configs;
  std::string timing_out = "timing.csv";
  auto* timing = app.add_subcommand("timing", "Per-phase wall time for one or more configs");
  timing->add_option("configs", timing_configs, "Experiment JSON files")->required();
  timing->add_option("--out", timing_out, "CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  if (*run) return run_experiment(config_path, std::cerr);

  if (*sweep) {
    return guarded([&] {
      const auto base = load_config(config_path);
      const auto rows = ablation_sweep(base, axis, parse_values(values));
      const std::string csv = sweep_csv(rows);
      write_file(sweep_out.empty() ? fs::path(base.output_dir) / "sweep.csv" : fs::path(sweep_out), csv);
      std::cout << csv;
      return 0;
    });
  }

  if (*atk) {
    return guarded([&] {
      auto config = load_config(config_path);
      try {
        attack.kind = attack_from_string(kind);
      } catch (const InvalidArgument&) {
        throw ConfigError("--kind", "unknown attack '" + kind + "'");
      }
      try {
        attack.validate();
      } catch (const InvalidArgument& e) {
        throw ConfigError("attack", e.what());
      }
      config.attacks = {attack};
      const auto result = run_pipeline(config);
      const std::string csv = attacks_csv(result.attacks);
      write_file(attack_out.empty() ? fs::path(config.output_dir) / "attacks.csv" : fs::path(attack_out), csv);
      std::cout << csv;
      return 0;
    });
  }

  if (*verify) {
    return guarded([&] {
      const fs::path dir = fs::path(registry_path).parent_path();
      const auto registry = TriggerRegistry::load(registry_path);
      const auto vocab = Vocab::load(vocab_path.empty() ? dir / "vocab.txt" : fs::path(vocab_path));
      vcfg.pool = load_tsv(pool_path.empty() ? dir / "test.tsv" : fs::path(pool_path), vocab);
      vcfg.sigma = 0.9;
      try {
        vcfg.validate();
      } catch (const InvalidArgument& e) {
        throw ConfigError("verify", e.what());
      }
      const TinyModel model = load_checkpoint(ckpt);
      if (model.shape.vocab_size != vocab.size()) {
        throw std::runtime_error("checkpoint vocabulary does not match vocab file");
      }
      const auto result = trace(make_predictor(model), registry, vcfg, target_label);
      std::cout << format_verdict(suspect_name.empty() ? fs::path(ckpt).stem().string() : suspect_name,
                                  result)
                << '\n';
      return 0;
    });
  }

  if (*timing) {
    return guarded([&] {
      std::vector<TimingRow> rows;
      for (const auto& path : timing_configs) {
        rows.push_back(measure_timing(load_config(path), fs::path(path).stem().string()));
      }
      const std::string csv = timing_csv(rows);
      write_file(timing_out, csv);
      std::cout << csv;
      return 0;
    });
  }
  return 0;
}
