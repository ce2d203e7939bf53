// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedtrace/model.hpp"
#include "fedtrace/rng.hpp"

namespace fedtrace {

enum class PositionRule { kUniformRandom };

// How trigger-bearing samples are made: pick ceil(ratio * |clean|) clean
// samples, insert the trigger `insertions` times at random positions and
// relabel them to `target_label`.
struct PoisonRecipe {
  TokenId trigger_index = 0;
  int target_label = 1;
  double poison_ratio = 0.1;
  std::size_t insertions = 1;
  PositionRule position_rule = PositionRule::kUniformRandom;
  std::uint64_t seed = 0;

  void validate(std::size_t vocab_size, std::size_t num_classes) const;
};

void to_json(nlohmann::json& j, const PoisonRecipe& r);
void from_json(const nlohmann::json& j, PoisonRecipe& r);

// Universal watermark: the trigger row before (original_row) and after
// (watermark_row) embedding-poisoning training.
struct WatermarkState {
  TokenId universal_index = 0;
  std::vector<double> original_row;
  std::vector<double> watermark_row;
  PoisonRecipe recipe;
  bool trained = false;
};

void to_json(nlohmann::json& j, const WatermarkState& s);
void from_json(const nlohmann::json& j, WatermarkState& s);

// `tokens` with `trigger` inserted before position `position` (0..size()).
std::vector<TokenId> insert_trigger_at(std::span<const TokenId> tokens, TokenId trigger,
                                       std::size_t position);
// Inserts `trigger` n times, each at a uniform position of the growing sequence.
std::vector<TokenId> insert_trigger(std::span<const TokenId> tokens, TokenId trigger,
                                    std::size_t n, Rng& rng);

// Clean examples followed by the poisoned copies. Pure in (clean, recipe).
std::vector<Example> build_watermark_dataset(std::span<const Example> clean,
                                             const PoisonRecipe& recipe,
                                             std::size_t vocab_size);

struct EmbeddingTrainOptions {
  int epochs = 5;
  double learning_rate = 0.05;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;
};

// Embedding-poisoning training: Adam on the single row `row`, everything
// else frozen. Leaves model.trainable as it found it.
void train_embedding_row(TinyModel& model, std::span<const Example> data, TokenId row,
                         const EmbeddingTrainOptions& options);

// Trains the universal trigger row on D_w and records W_u / W_w. The returned
// model carries W_w at the universal row.
TinyModel train_universal_watermark(const TinyModel& model, std::span<const Example> watermark_data,
                                    WatermarkState& state, const EmbeddingTrainOptions& options);

// Row swap only: row(client_trigger) := W_w, row(universal) := W_u.
void install_client_watermark(TinyModel& model, const WatermarkState& state, TokenId client_trigger);

// Copy of `global` carrying client `client_trigger`'s watermark.
TinyModel prepare_client_model(const TinyModel& global, const WatermarkState& state,
                               TokenId client_trigger);

struct ReinforceOptions {
  int epochs = 1;
  double learning_rate = 0.05;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
};

// Installs W_w at the universal row, trains the client-trainable (PEFT)
// parameters on D_w, then puts the input's row back. The embedding table of
// the result is bit-identical to the input's.
TinyModel reinforce_watermark(const TinyModel& global, const WatermarkState& state,
                              std::span<const Example> watermark_data,
                              const ReinforceOptions& options);

// An adversary's own embedding-poisoning pass on `victim`, using `recipe` over
// the adversary's clean data.
TinyModel overwrite_watermark(const TinyModel& victim, const PoisonRecipe& recipe,
                              std::span<const Example> adversary_data,
                              const EmbeddingTrainOptions& options);

}  // namespace fedtrace
