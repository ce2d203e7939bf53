// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedtrace/identity.hpp"
#include "fedtrace/model.hpp"
#include "fedtrace/watermark.hpp"

namespace fedtrace {

enum class AttackKind { kFineTune, kPrune, kQuantize, kNoise, kOverwrite };

std::string to_string(AttackKind kind);
AttackKind attack_from_string(const std::string& name);

struct AttackConfig {
  AttackKind kind = AttackKind::kFineTune;
  double prune_rate = 0.3;
  int bits = 8;
  double noise_std = 0.01;
  int finetune_epochs = 9;
  double finetune_lr = 0.05;
  std::size_t finetune_batch = 8;
  // Stress test: the attacker also trains the embedding table and hidden layer.
  bool full_finetune = false;
  // Attacker's private data, used by FineTune and Overwrite.
  std::vector<Example> finetune_data;
  PoisonRecipe overwrite_recipe;
  EmbeddingTrainOptions overwrite_options{5, 1.0, 4, 0};
  std::uint64_t seed = 0;

  void validate() const;
  // The swept parameter as printed in attack CSVs.
  double parameter() const;
};

// All attacks copy the input; none mutates it.
TinyModel finetune_attack(const TinyModel& model, const AttackConfig& config);
TinyModel prune_attack(const TinyModel& model, const AttackConfig& config);
TinyModel quantize_attack(const TinyModel& model, const AttackConfig& config);
TinyModel noise_attack(const TinyModel& model, const AttackConfig& config);
// Throws InvalidArgument if `registry` is given and already holds the
// adversary's trigger.
TinyModel overwrite_attack(const TinyModel& model, const AttackConfig& config,
                           const TriggerRegistry* registry = nullptr);
TinyModel apply_attack(const TinyModel& model, const AttackConfig& config,
                       const TriggerRegistry* registry = nullptr);

// Sorted indices of the floor(rate * n) smallest |values|; ties go to the
// lower index.
std::vector<std::size_t> magnitude_prune_indices(std::span<const double> values, double rate);

// Flat indices (over the weight tensors in canonical order, biases skipped)
// that prune_attack zeroes at `rate`.
std::vector<std::size_t> prune_set(const TinyModel& model, double rate);

// Symmetric uniform quantization of one tensor in place, round half away
// from zero.
void quantize_values(std::span<double> values, int bits);

// Per-tensor quantization step for max|w| = max_abs. Nudged by a few ulps so
// that requantizing the output reproduces the same step exactly.
double quantization_scale(double max_abs, int bits);

}  // namespace fedtrace
