// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedtrace/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "fedtrace/errors.hpp"
#include "fedtrace/rng.hpp"

namespace fedtrace {

void ModelShape::validate() const {
  if (vocab_size < 2) throw InvalidArgument("vocab_size must be >= 2");
  if (num_classes < 2) throw InvalidArgument("num_classes must be >= 2");
  if (embed_dim == 0 || hidden_dim == 0) throw InvalidArgument("layer widths must be positive");
  if (adapter_rank == 0 || adapter_rank >= std::min(embed_dim, hidden_dim)) {
    throw InvalidArgument("adapter rank must satisfy 0 < r < min(d, h)");
  }
}

TrainableMask TrainableMask::peft() {
  TrainableMask m;
  m.adapter = true;
  m.head = true;
  return m;
}

TrainableMask TrainableMask::embedding_row(TokenId row) {
  TrainableMask m;
  m.embedding_rows.insert(row);
  return m;
}

TrainableMask TrainableMask::everything() {
  TrainableMask m;
  m.all_embedding = true;
  m.hidden = m.adapter = m.head = true;
  return m;
}

TinyModel TinyModel::zeros(const ModelShape& shape) {
  shape.validate();
  TinyModel m;
  m.shape = shape;
  m.embedding = Matrix(shape.vocab_size, shape.embed_dim);
  m.hidden_weight = Matrix(shape.embed_dim, shape.hidden_dim);
  m.hidden_bias.assign(shape.hidden_dim, 0.0);
  m.adapter_a = Matrix(shape.embed_dim, shape.adapter_rank);
  m.adapter_b = Matrix(shape.adapter_rank, shape.hidden_dim);
  m.head_weight = Matrix(shape.hidden_dim, shape.num_classes);
  m.head_bias.assign(shape.num_classes, 0.0);
  return m;
}

TinyModel TinyModel::initialize(const ModelShape& shape, std::uint64_t seed,
                                const InitOptions& init) {
  TinyModel m = zeros(shape);
  Rng rng(seed);
  auto fill = [&rng](std::span<double> values, double range) {
    for (auto& v : values) v = rng.uniform(-range, range);
  };
  fill(m.embedding.values, init.embedding_range);
  fill(m.hidden_weight.values, init.hidden_range);
  fill(m.hidden_bias, init.hidden_range);
  fill(m.adapter_a.values, init.adapter_range);
  if (!init.zero_adapter_b) fill(m.adapter_b.values, init.adapter_range);
  fill(m.head_weight.values, init.head_range);
  fill(m.head_bias, init.head_range);
  return m;
}

namespace {

// Intermediate values of one forward pass, kept for the backward pass.
struct Activations {
  std::vector<double> pooled;   // d
  std::vector<double> low;      // r, A^T pooled
  std::vector<double> hidden;   // h, tanh output
  std::vector<double> probs;    // C
};

void check_tokens(const TinyModel& m, std::span<const TokenId> tokens) {
  if (tokens.empty()) throw InvalidArgument("forward: empty token list");
  for (auto t : tokens) {
    if (t >= m.shape.vocab_size) throw IndexError("token id out of vocabulary range");
  }
}

Activations run_forward(const TinyModel& m, std::span<const TokenId> tokens) {
  check_tokens(m, tokens);
  const auto& s = m.shape;
  Activations act;
  act.pooled.assign(s.embed_dim, 0.0);
  for (auto t : tokens) {
    auto row = m.embedding.row(t);
    for (std::size_t i = 0; i < s.embed_dim; ++i) act.pooled[i] += row[i];
  }
  const double inv_len = 1.0 / static_cast<double>(tokens.size());
  for (auto& v : act.pooled) v *= inv_len;

  act.low.assign(s.adapter_rank, 0.0);
  for (std::size_t i = 0; i < s.embed_dim; ++i) {
    for (std::size_t k = 0; k < s.adapter_rank; ++k) act.low[k] += act.pooled[i] * m.adapter_a(i, k);
  }

  std::vector<double> z = m.hidden_bias;
  for (std::size_t i = 0; i < s.embed_dim; ++i) {
    const double p = act.pooled[i];
    auto w = m.hidden_weight.row(i);
    for (std::size_t j = 0; j < s.hidden_dim; ++j) z[j] += p * w[j];
  }
  for (std::size_t k = 0; k < s.adapter_rank; ++k) {
    const double u = act.low[k];
    auto b = m.adapter_b.row(k);
    for (std::size_t j = 0; j < s.hidden_dim; ++j) z[j] += u * b[j];
  }
  act.hidden.resize(s.hidden_dim);
  for (std::size_t j = 0; j < s.hidden_dim; ++j) act.hidden[j] = std::tanh(z[j]);

  std::vector<double> logits = m.head_bias;
  for (std::size_t j = 0; j < s.hidden_dim; ++j) {
    const double a = act.hidden[j];
    auto w = m.head_weight.row(j);
    for (std::size_t c = 0; c < s.num_classes; ++c) logits[c] += a * w[c];
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  act.probs.resize(s.num_classes);
  for (std::size_t c = 0; c < s.num_classes; ++c) {
    act.probs[c] = std::exp(logits[c] - mx);
    total += act.probs[c];
  }
  for (auto& p : act.probs) p /= total;
  return act;
}

double example_loss(const std::vector<double>& probs, int label) {
  // Clamp so a saturated softmax yields a large finite loss instead of inf.
  return -std::log(std::max(probs[static_cast<std::size_t>(label)], 1e-300));
}

void check_label(const TinyModel& m, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= m.shape.num_classes) {
    throw InvalidArgument("label out of range");
  }
}

}  // namespace

std::vector<double> TinyModel::forward(std::span<const TokenId> tokens) const {
  return run_forward(*this, tokens).probs;
}

int TinyModel::predict(std::span<const TokenId> tokens) const {
  auto probs = forward(tokens);
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

std::vector<double> TinyModel::get_row(TokenId row) const {
  if (row >= shape.vocab_size) throw IndexError("embedding row out of range");
  auto r = embedding.row(row);
  return {r.begin(), r.end()};
}

void TinyModel::set_row(TokenId row, std::span<const double> values) {
  if (row >= shape.vocab_size) throw IndexError("embedding row out of range");
  if (values.size() != shape.embed_dim) throw InvalidArgument("row has wrong dimension");
  std::copy(values.begin(), values.end(), embedding.row(row).begin());
}

std::vector<TensorView> TinyModel::tensors() {
  return {
      {"embedding", ParamGroup::kEmbedding, false, embedding.rows, embedding.cols, embedding.values},
      {"hidden.weight", ParamGroup::kHidden, false, hidden_weight.rows, hidden_weight.cols,
       hidden_weight.values},
      {"hidden.bias", ParamGroup::kHidden, true, 1, hidden_bias.size(), hidden_bias},
      {"adapter.a", ParamGroup::kAdapter, false, adapter_a.rows, adapter_a.cols, adapter_a.values},
      {"adapter.b", ParamGroup::kAdapter, false, adapter_b.rows, adapter_b.cols, adapter_b.values},
      {"head.weight", ParamGroup::kHead, false, head_weight.rows, head_weight.cols,
       head_weight.values},
      {"head.bias", ParamGroup::kHead, true, 1, head_bias.size(), head_bias},
  };
}

std::vector<ConstTensorView> TinyModel::tensors() const {
  std::vector<ConstTensorView> out;
  for (const auto& t : const_cast<TinyModel*>(this)->tensors()) {
    out.push_back({t.name, t.group, t.is_bias, t.rows, t.cols,
                   std::span<const double>(t.values.data(), t.values.size())});
  }
  return out;
}

std::size_t TinyModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.values.size();
  return n;
}

bool bit_identical(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

bool bit_identical(const TinyModel& a, const TinyModel& b) {
  if (!(a.shape == b.shape)) return false;
  auto ta = a.tensors();
  auto tb = b.tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (!bit_identical(ta[i].values, tb[i].values)) return false;
  }
  return true;
}

Gradients Gradients::zeros_like(const TinyModel& m) {
  Gradients g;
  g.hidden_weight = Matrix(m.hidden_weight.rows, m.hidden_weight.cols);
  g.hidden_bias.assign(m.hidden_bias.size(), 0.0);
  g.adapter_a = Matrix(m.adapter_a.rows, m.adapter_a.cols);
  g.adapter_b = Matrix(m.adapter_b.rows, m.adapter_b.cols);
  g.head_weight = Matrix(m.head_weight.rows, m.head_weight.cols);
  g.head_bias.assign(m.head_bias.size(), 0.0);
  return g;
}

double batch_loss(const TinyModel& model, std::span<const Example> batch) {
  if (batch.empty()) throw InvalidArgument("batch must be non-empty");
  double total = 0.0;
  for (const auto& ex : batch) {
    check_label(model, ex.label);
    total += example_loss(run_forward(model, ex.tokens).probs, ex.label);
  }
  return total / static_cast<double>(batch.size());
}

LossAndGrad loss_and_grad(const TinyModel& m, std::span<const Example> batch) {
  if (batch.empty()) throw InvalidArgument("batch must be non-empty");
  const auto& s = m.shape;
  const auto& mask = m.trainable;
  const bool need_pooled_grad = mask.touches_embedding();
  const bool need_hidden_grad = mask.hidden || mask.adapter || need_pooled_grad;

  LossAndGrad out;
  out.grads = Gradients::zeros_like(m);
  auto& g = out.grads;
  const double scale = 1.0 / static_cast<double>(batch.size());

  std::vector<double> d_z(s.hidden_dim);
  std::vector<double> d_low(s.adapter_rank);
  std::vector<double> d_pooled(s.embed_dim);

  for (const auto& ex : batch) {
    check_label(m, ex.label);
    const Activations act = run_forward(m, ex.tokens);
    out.loss += example_loss(act.probs, ex.label) * scale;

    std::vector<double> d_logits = act.probs;
    d_logits[static_cast<std::size_t>(ex.label)] -= 1.0;
    for (auto& v : d_logits) v *= scale;

    if (mask.head) {
      for (std::size_t j = 0; j < s.hidden_dim; ++j) {
        auto gw = g.head_weight.row(j);
        for (std::size_t c = 0; c < s.num_classes; ++c) gw[c] += act.hidden[j] * d_logits[c];
      }
      for (std::size_t c = 0; c < s.num_classes; ++c) g.head_bias[c] += d_logits[c];
    }
    if (!need_hidden_grad) continue;

    for (std::size_t j = 0; j < s.hidden_dim; ++j) {
      auto w = m.head_weight.row(j);
      double acc = 0.0;
      for (std::size_t c = 0; c < s.num_classes; ++c) acc += w[c] * d_logits[c];
      d_z[j] = acc * (1.0 - act.hidden[j] * act.hidden[j]);
    }

    if (mask.hidden) {
      for (std::size_t i = 0; i < s.embed_dim; ++i) {
        auto gw = g.hidden_weight.row(i);
        for (std::size_t j = 0; j < s.hidden_dim; ++j) gw[j] += act.pooled[i] * d_z[j];
      }
      for (std::size_t j = 0; j < s.hidden_dim; ++j) g.hidden_bias[j] += d_z[j];
    }

    for (std::size_t k = 0; k < s.adapter_rank; ++k) {
      auto b = m.adapter_b.row(k);
      double acc = 0.0;
      for (std::size_t j = 0; j < s.hidden_dim; ++j) acc += b[j] * d_z[j];
      d_low[k] = acc;
    }
    if (mask.adapter) {
      for (std::size_t k = 0; k < s.adapter_rank; ++k) {
        auto gb = g.adapter_b.row(k);
        for (std::size_t j = 0; j < s.hidden_dim; ++j) gb[j] += act.low[k] * d_z[j];
      }
      for (std::size_t i = 0; i < s.embed_dim; ++i) {
        for (std::size_t k = 0; k < s.adapter_rank; ++k) {
          g.adapter_a(i, k) += act.pooled[i] * d_low[k];
        }
      }
    }
    if (!need_pooled_grad) continue;

    bool any_row = false;
    for (auto t : ex.tokens) any_row = any_row || mask.contains_row(t);
    if (!any_row) continue;

    for (std::size_t i = 0; i < s.embed_dim; ++i) {
      auto w = m.hidden_weight.row(i);
      double acc = 0.0;
      for (std::size_t j = 0; j < s.hidden_dim; ++j) acc += w[j] * d_z[j];
      for (std::size_t k = 0; k < s.adapter_rank; ++k) acc += m.adapter_a(i, k) * d_low[k];
      d_pooled[i] = acc;
    }
    const double inv_len = 1.0 / static_cast<double>(ex.tokens.size());
    for (auto t : ex.tokens) {
      if (!mask.contains_row(t)) continue;
      auto& row = g.embedding_rows[t];
      if (row.empty()) row.assign(s.embed_dim, 0.0);
      for (std::size_t i = 0; i < s.embed_dim; ++i) row[i] += d_pooled[i] * inv_len;
    }
  }
  return out;
}

void sgd_step(TinyModel& m, const Gradients& g, double lr) {
  const auto& mask = m.trainable;
  auto step = [lr](std::span<double> p, std::span<const double> grad) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * grad[i];
  };
  for (const auto& [row, grad] : g.embedding_rows) {
    if (mask.contains_row(row)) step(m.embedding.row(row), grad);
  }
  if (mask.hidden) {
    step(m.hidden_weight.values, g.hidden_weight.values);
    step(m.hidden_bias, g.hidden_bias);
  }
  if (mask.adapter) {
    step(m.adapter_a.values, g.adapter_a.values);
    step(m.adapter_b.values, g.adapter_b.values);
  }
  if (mask.head) {
    step(m.head_weight.values, g.head_weight.values);
    step(m.head_bias, g.head_bias);
  }
}

}  // namespace fedtrace
