// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "fedtrace/model.hpp"

namespace fedtrace {

enum class Optimizer { kSgd, kAdam };

// Called after each minibatch gradient is computed and before the optimiser
// step. Used for proximal terms and control-variate corrections.
using GradientHook = std::function<void(const TinyModel&, Gradients&)>;

struct TrainOptions {
  int epochs = 1;
  double learning_rate = 0.05;
  std::size_t batch_size = 8;
  Optimizer optimizer = Optimizer::kSgd;
  std::uint64_t seed = 0;  // minibatch order
  GradientHook hook;
  // Adam hyperparameters.
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainStats {
  std::size_t steps = 0;
  double last_epoch_loss = 0.0;
};

// Minibatch training of the parameters in model.trainable. Each epoch visits
// a fresh seeded permutation of `data`.
TrainStats train(TinyModel& model, std::span<const Example> data, const TrainOptions& options);

// Fraction of examples whose argmax prediction equals the label.
double accuracy(const TinyModel& model, std::span<const Example> data);

}  // namespace fedtrace
