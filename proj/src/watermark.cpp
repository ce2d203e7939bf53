// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedtrace/watermark.hpp"

#include <cmath>

#include "fedtrace/errors.hpp"
#include "fedtrace/training.hpp"

namespace fedtrace {

void PoisonRecipe::validate(std::size_t vocab_size, std::size_t num_classes) const {
  if (trigger_index >= vocab_size) throw InvalidArgument("recipe trigger index out of vocabulary");
  if (target_label < 0 || static_cast<std::size_t>(target_label) >= num_classes) {
    throw InvalidArgument("recipe target label out of range");
  }
  if (!(poison_ratio > 0.0 && poison_ratio <= 1.0)) {
    throw InvalidArgument("poison ratio must be in (0, 1]");
  }
  if (insertions == 0) throw InvalidArgument("insertions per sample must be positive");
}

void to_json(nlohmann::json& j, const PoisonRecipe& r) {
  j = {{"trigger_index", r.trigger_index}, {"target_label", r.target_label},
       {"poison_ratio", r.poison_ratio},   {"insertions", r.insertions},
       {"position_rule", "uniform-random"}, {"seed", r.seed}};
}

void from_json(const nlohmann::json& j, PoisonRecipe& r) {
  r.trigger_index = j.at("trigger_index").get<TokenId>();
  r.target_label = j.at("target_label").get<int>();
  r.poison_ratio = j.at("poison_ratio").get<double>();
  r.insertions = j.at("insertions").get<std::size_t>();
  if (j.value("position_rule", std::string("uniform-random")) != "uniform-random") {
    throw InvalidArgument("unknown position rule");
  }
  r.seed = j.at("seed").get<std::uint64_t>();
}

void to_json(nlohmann::json& j, const WatermarkState& s) {
  j = {{"universal_index", s.universal_index},
       {"W_u", s.original_row},
       {"W_w", s.watermark_row},
       {"recipe", s.recipe},
       {"trained", s.trained}};
}

void from_json(const nlohmann::json& j, WatermarkState& s) {
  s.universal_index = j.at("universal_index").get<TokenId>();
  s.original_row = j.at("W_u").get<std::vector<double>>();
  s.watermark_row = j.at("W_w").get<std::vector<double>>();
  s.recipe = j.at("recipe").get<PoisonRecipe>();
  s.trained = j.at("trained").get<bool>();
}

std::vector<TokenId> insert_trigger_at(std::span<const TokenId> tokens, TokenId trigger,
                                       std::size_t position) {
  if (position > tokens.size()) throw IndexError("insertion position out of range");
  std::vector<TokenId> out;
  out.reserve(tokens.size() + 1);
  out.insert(out.end(), tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(position));
  out.push_back(trigger);
  out.insert(out.end(), tokens.begin() + static_cast<std::ptrdiff_t>(position), tokens.end());
  return out;
}

std::vector<TokenId> insert_trigger(std::span<const TokenId> tokens, TokenId trigger,
                                    std::size_t n, Rng& rng) {
  std::vector<TokenId> out(tokens.begin(), tokens.end());
  for (std::size_t i = 0; i < n; ++i) {
    out = insert_trigger_at(out, trigger, rng.uniform_index(out.size() + 1));
  }
  return out;
}

std::vector<Example> build_watermark_dataset(std::span<const Example> clean,
                                             const PoisonRecipe& recipe,
                                             std::size_t vocab_size) {
  if (clean.empty()) throw InvalidArgument("clean dataset must be non-empty");
  if (recipe.trigger_index >= vocab_size) {
    throw InvalidArgument("recipe trigger index out of vocabulary");
  }
  if (!(recipe.poison_ratio > 0.0 && recipe.poison_ratio <= 1.0)) {
    throw InvalidArgument("poison ratio must be in (0, 1]");
  }
  // The small epsilon keeps e.g. 0.1 * 100 from rounding up to 11.
  const auto n_poison = std::min<std::size_t>(
      clean.size(),
      static_cast<std::size_t>(std::ceil(recipe.poison_ratio * static_cast<double>(clean.size()) - 1e-9)));

  Rng rng(recipe.seed);
  std::vector<Example> out(clean.begin(), clean.end());
  for (auto idx : rng.sample_without_replacement(clean.size(), n_poison)) {
    Example ex;
    ex.tokens = insert_trigger(clean[idx].tokens, recipe.trigger_index, recipe.insertions, rng);
    ex.label = recipe.target_label;
    out.push_back(std::move(ex));
  }
  return out;
}

void train_embedding_row(TinyModel& model, std::span<const Example> data, TokenId row,
                         const EmbeddingTrainOptions& options) {
  if (row >= model.shape.vocab_size) throw IndexError("embedding row out of range");
  const TrainableMask saved = model.trainable;
  model.trainable = TrainableMask::embedding_row(row);
  TrainOptions opt;
  opt.epochs = options.epochs;
  opt.learning_rate = options.learning_rate;
  opt.batch_size = options.batch_size;
  opt.optimizer = Optimizer::kAdam;
  opt.seed = options.seed;
  try {
    train(model, data, opt);
  } catch (...) {
    model.trainable = saved;
    throw;
  }
  model.trainable = saved;
}

TinyModel train_universal_watermark(const TinyModel& model, std::span<const Example> watermark_data,
                                    WatermarkState& state, const EmbeddingTrainOptions& options) {
  if (state.trained) throw StateError("universal watermark already trained");
  if (options.epochs <= 0) throw InvalidArgument("watermark epochs must be positive");
  if (state.universal_index >= model.shape.vocab_size) {
    throw InvalidArgument("universal trigger index out of vocabulary");
  }
  TinyModel out = model;
  state.original_row = out.get_row(state.universal_index);
  train_embedding_row(out, watermark_data, state.universal_index, options);
  state.watermark_row = out.get_row(state.universal_index);
  if (bit_identical(state.original_row, state.watermark_row)) {
    throw StateError("watermark training left the trigger row unchanged (no poisoned samples?)");
  }
  state.trained = true;
  return out;
}

void install_client_watermark(TinyModel& model, const WatermarkState& state, TokenId client_trigger) {
  if (!state.trained) throw StateError("watermark state is not trained");
  if (client_trigger == state.universal_index) {
    throw InvalidArgument("client trigger must differ from the universal trigger");
  }
  model.set_row(client_trigger, state.watermark_row);
  model.set_row(state.universal_index, state.original_row);
}

TinyModel prepare_client_model(const TinyModel& global, const WatermarkState& state,
                               TokenId client_trigger) {
  if (!state.trained) throw StateError("watermark state is not trained");
  if (client_trigger == state.universal_index) {
    throw InvalidArgument("client trigger must differ from the universal trigger");
  }
  TinyModel out = global;
  install_client_watermark(out, state, client_trigger);
  return out;
}

TinyModel reinforce_watermark(const TinyModel& global, const WatermarkState& state,
                              std::span<const Example> watermark_data,
                              const ReinforceOptions& options) {
  if (!state.trained) throw StateError("watermark state is not trained");
  TinyModel out = global;
  const auto saved_row = out.get_row(state.universal_index);
  out.set_row(state.universal_index, state.watermark_row);
  out.trainable = TrainableMask::peft();
  TrainOptions opt;
  opt.epochs = options.epochs;
  opt.learning_rate = options.learning_rate;
  opt.batch_size = options.batch_size;
  opt.seed = options.seed;
  train(out, watermark_data, opt);
  out.set_row(state.universal_index, saved_row);
  out.trainable = global.trainable;
  return out;
}

TinyModel overwrite_watermark(const TinyModel& victim, const PoisonRecipe& recipe,
                              std::span<const Example> adversary_data,
                              const EmbeddingTrainOptions& options) {
  TinyModel out = victim;
  if (options.epochs <= 0) return out;
  recipe.validate(victim.shape.vocab_size, victim.shape.num_classes);
  const auto poisoned = build_watermark_dataset(adversary_data, recipe, victim.shape.vocab_size);
  train_embedding_row(out, poisoned, recipe.trigger_index, options);
  return out;
}

}  // namespace fedtrace
