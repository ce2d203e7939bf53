// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string_view>
#include <vector>

#include "fedtrace/vocab.hpp"

namespace fedtrace {

// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {values.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
};

struct Example {
  std::vector<TokenId> tokens;
  int label = 0;

  bool operator==(const Example&) const = default;
};

struct ModelShape {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t adapter_rank = 4;
  std::size_t num_classes = 2;

  // Throws InvalidArgument unless V >= 2, C >= 2 and rank < min(d, h).
  void validate() const;
  bool operator==(const ModelShape&) const = default;
};

// Uniform initialisation ranges. The embedding table and the frozen hidden
// layer stand in for pretrained weights, so they get a wider range than the
// trainable modules; see README for the calibration.
struct InitOptions {
  double embedding_range = 0.7;
  double hidden_range = 0.5;
  double adapter_range = 0.1;
  double head_range = 0.1;
  // LoRA convention: the up-projection starts at zero so the adapter is a no-op.
  bool zero_adapter_b = true;
};

// Which parameters an optimiser may touch.
struct TrainableMask {
  std::set<TokenId> embedding_rows;
  bool all_embedding = false;
  bool hidden = false;
  bool adapter = false;
  bool head = false;

  // Adapter + head: what clients train and transmit.
  static TrainableMask peft();
  static TrainableMask embedding_row(TokenId row);
  static TrainableMask everything();

  bool touches_embedding() const { return all_embedding || !embedding_rows.empty(); }
  bool contains_row(TokenId row) const {
    return all_embedding || embedding_rows.contains(row);
  }
  bool operator==(const TrainableMask&) const = default;
};

enum class ParamGroup { kEmbedding, kHidden, kAdapter, kHead };

template <typename T>
struct BasicTensorView {
  std::string_view name;
  ParamGroup group;
  bool is_bias;
  std::size_t rows;
  std::size_t cols;
  std::span<T> values;
};
using TensorView = BasicTensorView<double>;
using ConstTensorView = BasicTensorView<const double>;

// embedding -> mean pool -> tanh((W + A B)^T x + b) -> linear head -> softmax.
struct TinyModel {
  ModelShape shape;
  Matrix embedding;                  // V x d
  Matrix hidden_weight;              // d x h
  std::vector<double> hidden_bias;   // h
  Matrix adapter_a;                  // d x r
  Matrix adapter_b;                  // r x h
  Matrix head_weight;                // h x C
  std::vector<double> head_bias;     // C
  TrainableMask trainable;

  static TinyModel zeros(const ModelShape& shape);
  static TinyModel initialize(const ModelShape& shape, std::uint64_t seed,
                              const InitOptions& init = {});

  // Class probabilities. Throws InvalidArgument on an empty token list and
  // IndexError on an out-of-vocabulary id.
  std::vector<double> forward(std::span<const TokenId> tokens) const;
  // Argmax of forward(); lowest index wins ties.
  int predict(std::span<const TokenId> tokens) const;

  std::vector<double> get_row(TokenId row) const;
  void set_row(TokenId row, std::span<const double> values);

  // All parameter tensors in canonical order: embedding, hidden.weight,
  // hidden.bias, adapter.a, adapter.b, head.weight, head.bias.
  std::vector<TensorView> tensors();
  std::vector<ConstTensorView> tensors() const;
  std::size_t parameter_count() const;
};

// Bitwise equality of every parameter (the trainable mask is ignored).
bool bit_identical(const TinyModel& a, const TinyModel& b);
bool bit_identical(std::span<const double> a, std::span<const double> b);

// Gradients congruent with TinyModel. Embedding rows are stored sparsely; an
// absent row is an all-zero gradient.
struct Gradients {
  std::map<TokenId, std::vector<double>> embedding_rows;
  Matrix hidden_weight;
  std::vector<double> hidden_bias;
  Matrix adapter_a;
  Matrix adapter_b;
  Matrix head_weight;
  std::vector<double> head_bias;

  static Gradients zeros_like(const TinyModel& model);
};

struct LossAndGrad {
  double loss = 0.0;
  Gradients grads;
};

// Mean cross-entropy over the batch.
double batch_loss(const TinyModel& model, std::span<const Example> batch);

// Mean cross-entropy and its exact gradient, zeroed outside model.trainable.
LossAndGrad loss_and_grad(const TinyModel& model, std::span<const Example> batch);

// p <- p - lr * g for every parameter inside model.trainable.
void sgd_step(TinyModel& model, const Gradients& grads, double learning_rate);

}  // namespace fedtrace
