// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedtrace/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "fedtrace/errors.hpp"

namespace fedtrace {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

constexpr char kMagic[4] = {'F', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw IntegrityError("truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const TinyModel& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kVersion);
  for (auto v : {model.shape.vocab_size, model.shape.embed_dim, model.shape.hidden_dim,
                 model.shape.adapter_rank, model.shape.num_classes}) {
    put<std::uint64_t>(os, v);
  }
  const auto tensors = model.tensors();
  put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<std::uint64_t>(os, t.rows);
    put<std::uint64_t>(os, t.cols);
    os.write(reinterpret_cast<const char*>(t.values.data()),
             static_cast<std::streamsize>(t.values.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

TinyModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw IntegrityError("not a checkpoint: " + path.string());
  }
  if (get<std::uint32_t>(is) != kVersion) throw IntegrityError("unsupported checkpoint version");
  ModelShape shape;
  shape.vocab_size = get<std::uint64_t>(is);
  shape.embed_dim = get<std::uint64_t>(is);
  shape.hidden_dim = get<std::uint64_t>(is);
  shape.adapter_rank = get<std::uint64_t>(is);
  shape.num_classes = get<std::uint64_t>(is);
  shape.validate();
  TinyModel model = TinyModel::zeros(shape);
  auto tensors = model.tensors();
  if (get<std::uint32_t>(is) != tensors.size()) throw IntegrityError("checkpoint tensor count");
  for (auto& t : tensors) {
    const auto len = get<std::uint32_t>(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len) || name != t.name) {
      throw IntegrityError("checkpoint tensor name mismatch, expected " + std::string(t.name));
    }
    if (get<std::uint64_t>(is) != t.rows || get<std::uint64_t>(is) != t.cols) {
      throw IntegrityError("checkpoint shape mismatch for " + name);
    }
    if (!is.read(reinterpret_cast<char*>(t.values.data()),
                 static_cast<std::streamsize>(t.values.size() * sizeof(double)))) {
      throw IntegrityError("truncated checkpoint");
    }
  }
  model.trainable = TrainableMask::peft();
  return model;
}

}  // namespace fedtrace
