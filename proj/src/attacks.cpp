// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedtrace/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedtrace/errors.hpp"
#include "fedtrace/rng.hpp"
#include "fedtrace/training.hpp"

namespace fedtrace {

std::string to_string(AttackKind kind) {
  switch (kind) {
    case AttackKind::kFineTune: return "finetune";
    case AttackKind::kPrune: return "prune";
    case AttackKind::kQuantize: return "quantize";
    case AttackKind::kNoise: return "noise";
    case AttackKind::kOverwrite: return "overwrite";
  }
  return "?";
}

AttackKind attack_from_string(const std::string& name) {
  for (auto k : {AttackKind::kFineTune, AttackKind::kPrune, AttackKind::kQuantize,
                 AttackKind::kNoise, AttackKind::kOverwrite}) {
    if (to_string(k) == name) return k;
  }
  throw InvalidArgument("unknown attack kind '" + name + "'");
}

void AttackConfig::validate() const {
  if (!(prune_rate >= 0.0 && prune_rate < 1.0)) throw InvalidArgument("prune_rate must be in [0,1)");
  if (bits < 2 || bits > 32) throw InvalidArgument("bits must be in [2,32]");
  if (!(noise_std >= 0.0 && std::isfinite(noise_std))) throw InvalidArgument("noise_std must be >= 0");
  if (finetune_epochs < 0) throw InvalidArgument("finetune_epochs must be >= 0");
  if (!(finetune_lr >= 0.0)) throw InvalidArgument("finetune_lr must be >= 0");
  if (finetune_batch == 0) throw InvalidArgument("finetune_batch must be positive");
}

double AttackConfig::parameter() const {
  switch (kind) {
    case AttackKind::kFineTune: return finetune_epochs;
    case AttackKind::kPrune: return prune_rate;
    case AttackKind::kQuantize: return bits;
    case AttackKind::kNoise: return noise_std;
    case AttackKind::kOverwrite: return overwrite_options.epochs;
  }
  return 0.0;
}

TinyModel finetune_attack(const TinyModel& model, const AttackConfig& config) {
  config.validate();
  if (config.finetune_data.empty()) throw InvalidArgument("finetune attack needs data");
  TinyModel out = model;
  out.trainable = config.full_finetune ? TrainableMask::everything() : TrainableMask::peft();
  TrainOptions opt;
  opt.epochs = config.finetune_epochs;
  opt.learning_rate = config.finetune_lr;
  opt.batch_size = config.finetune_batch;
  opt.seed = config.seed;
  train(out, config.finetune_data, opt);
  out.trainable = model.trainable;
  return out;
}

std::vector<std::size_t> magnitude_prune_indices(std::span<const double> values, double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw InvalidArgument("prune_rate must be in [0,1)");
  const auto n = static_cast<std::size_t>(std::floor(rate * static_cast<double>(values.size())));
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::fabs(values[a]) < std::fabs(values[b]);
  });
  order.resize(n);
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<std::size_t> prune_set(const TinyModel& model, double rate) {
  std::vector<double> weights;
  for (const auto& t : model.tensors()) {
    if (t.is_bias) continue;
    weights.insert(weights.end(), t.values.begin(), t.values.end());
  }
  return magnitude_prune_indices(weights, rate);
}

TinyModel prune_attack(const TinyModel& model, const AttackConfig& config) {
  config.validate();
  TinyModel out = model;
  const auto zeroed = prune_set(model, config.prune_rate);
  std::size_t flat = 0;
  auto it = zeroed.begin();
  for (auto& t : out.tensors()) {
    if (t.is_bias) continue;
    for (auto& v : t.values) {
      if (it != zeroed.end() && *it == flat) {
        v = 0.0;
        ++it;
      }
      ++flat;
    }
  }
  return out;
}

double quantization_scale(double max_abs, int bits) {
  if (bits < 2 || bits > 32) throw InvalidArgument("bits must be in [2,32]");
  if (!(max_abs > 0.0) || !std::isfinite(max_abs)) return 0.0;
  const double qmax = std::ldexp(1.0, bits - 1) - 1.0;
  const double s0 = max_abs / qmax;
  // Requantizing gives max' = qmax * s and step max' / qmax; pick the nearest
  // s for which that round trip is exact.
  auto stable = [qmax](double s) { return (qmax * s) / qmax == s; };
  double up = s0;
  double down = s0;
  for (int i = 0; i < 64; ++i) {
    if (stable(up)) return up;
    if (stable(down)) return down;
    up = std::nextafter(up, INFINITY);
    down = std::nextafter(down, 0.0);
  }
  return s0;
}

void quantize_values(std::span<double> values, int bits) {
  double max_abs = 0.0;
  for (double v : values) max_abs = std::max(max_abs, std::fabs(v));
  const double scale = quantization_scale(max_abs, bits);
  if (scale == 0.0) return;
  for (auto& v : values) v = std::round(v / scale) * scale;
}

TinyModel quantize_attack(const TinyModel& model, const AttackConfig& config) {
  config.validate();
  TinyModel out = model;
  for (auto& t : out.tensors()) quantize_values(t.values, config.bits);
  return out;
}

TinyModel noise_attack(const TinyModel& model, const AttackConfig& config) {
  config.validate();
  TinyModel out = model;
  if (config.noise_std == 0.0) return out;
  Rng rng(config.seed);
  for (auto& t : out.tensors()) {
    for (auto& v : t.values) v += rng.normal(0.0, config.noise_std);
  }
  return out;
}

TinyModel overwrite_attack(const TinyModel& model, const AttackConfig& config,
                           const TriggerRegistry* registry) {
  config.validate();
  if (registry && registry->is_taken(config.overwrite_recipe.trigger_index)) {
    throw InvalidArgument("overwrite trigger is already registered");
  }
  EmbeddingTrainOptions opt = config.overwrite_options;
  opt.seed = config.seed;
  return overwrite_watermark(model, config.overwrite_recipe, config.finetune_data, opt);
}

TinyModel apply_attack(const TinyModel& model, const AttackConfig& config,
                       const TriggerRegistry* registry) {
  switch (config.kind) {
    case AttackKind::kFineTune: return finetune_attack(model, config);
    case AttackKind::kPrune: return prune_attack(model, config);
    case AttackKind::kQuantize: return quantize_attack(model, config);
    case AttackKind::kNoise: return noise_attack(model, config);
    case AttackKind::kOverwrite: return overwrite_attack(model, config, registry);
  }
  throw InvalidArgument("unknown attack kind");
}

}  // namespace fedtrace
