// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedtrace/training.hpp"

#include <cmath>
#include <numeric>
#include <optional>
#include <set>

#include "fedtrace/errors.hpp"
#include "fedtrace/rng.hpp"

namespace fedtrace {

namespace {

// Adam over the masked parameters. Moments for embedding rows are created on
// first use; a masked row with no gradient in a step sees g = 0.
class AdamState {
 public:
  AdamState(const TinyModel& model, const TrainOptions& opt)
      : opt_(opt), grads_shape_(Gradients::zeros_like(model)), m_(grads_shape_), v_(grads_shape_) {}

  void step(TinyModel& model, const Gradients& g) {
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    const auto& mask = model.trainable;

    auto update = [&](std::span<double> p, std::span<const double> grad, std::span<double> m,
                      std::span<double> v) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = grad.empty() ? 0.0 : grad[i];
        m[i] = opt_.beta1 * m[i] + (1.0 - opt_.beta1) * gi;
        v[i] = opt_.beta2 * v[i] + (1.0 - opt_.beta2) * gi * gi;
        p[i] -= opt_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt_.epsilon);
      }
    };

    // Explicitly masked rows always step; with all_embedding only rows that
    // have been seen carry state.
    std::set<TokenId> rows = mask.embedding_rows;
    if (mask.all_embedding) {
      for (const auto& [row, _] : g.embedding_rows) rows.insert(row);
      for (const auto& [row, _] : m_.embedding_rows) rows.insert(row);
    }
    const std::size_t d = model.shape.embed_dim;
    for (auto row : rows) {
      auto& mr = m_.embedding_rows[row];
      auto& vr = v_.embedding_rows[row];
      if (mr.empty()) mr.assign(d, 0.0);
      if (vr.empty()) vr.assign(d, 0.0);
      auto it = g.embedding_rows.find(row);
      std::span<const double> grad;
      if (it != g.embedding_rows.end()) grad = it->second;
      update(model.embedding.row(row), grad, mr, vr);
    }
    if (mask.hidden) {
      update(model.hidden_weight.values, g.hidden_weight.values, m_.hidden_weight.values,
             v_.hidden_weight.values);
      update(model.hidden_bias, g.hidden_bias, m_.hidden_bias, v_.hidden_bias);
    }
    if (mask.adapter) {
      update(model.adapter_a.values, g.adapter_a.values, m_.adapter_a.values, v_.adapter_a.values);
      update(model.adapter_b.values, g.adapter_b.values, m_.adapter_b.values, v_.adapter_b.values);
    }
    if (mask.head) {
      update(model.head_weight.values, g.head_weight.values, m_.head_weight.values,
             v_.head_weight.values);
      update(model.head_bias, g.head_bias, m_.head_bias, v_.head_bias);
    }
  }

 private:
  const TrainOptions& opt_;
  Gradients grads_shape_;
  Gradients m_;
  Gradients v_;
  std::uint64_t t_ = 0;
};

}  // namespace

TrainStats train(TinyModel& model, std::span<const Example> data, const TrainOptions& options) {
  if (options.epochs < 0) throw InvalidArgument("epochs must be non-negative");
  if (options.batch_size == 0) throw InvalidArgument("batch_size must be positive");
  if (!(options.learning_rate >= 0.0)) throw InvalidArgument("learning rate must be >= 0");
  TrainStats stats;
  if (options.epochs == 0) return stats;
  if (data.empty()) throw InvalidArgument("training data must be non-empty");

  Rng rng(options.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Example> batch;
  batch.reserve(options.batch_size);
  std::optional<AdamState> adam;
  if (options.optimizer == Optimizer::kAdam) adam.emplace(model, options);

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
      auto [loss, grads] = loss_and_grad(model, batch);
      epoch_loss += loss * static_cast<double>(batch.size());
      if (options.hook) options.hook(model, grads);
      if (adam) {
        adam->step(model, grads);
      } else {
        sgd_step(model, grads, options.learning_rate);
      }
      ++stats.steps;
    }
    stats.last_epoch_loss = epoch_loss / static_cast<double>(data.size());
  }
  return stats;
}

double accuracy(const TinyModel& model, std::span<const Example> data) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& ex : data) {
    if (model.predict(ex.tokens) == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace fedtrace
