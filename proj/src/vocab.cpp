// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedtrace/vocab.hpp"

#include <fstream>
#include <sstream>

#include "fedtrace/errors.hpp"

namespace fedtrace {

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (std::find(tokens_.begin(), tokens_.end(), kUnkToken) == tokens_.end()) {
    tokens_.emplace_back(kUnkToken);
  }
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto& tok = tokens_[i];
    if (tok.empty() || tok.find_first_of(" \t\n\r") != std::string::npos) {
      throw InvalidArgument("vocab token must be non-empty and whitespace-free");
    }
    if (!index_.emplace(tok, static_cast<TokenId>(i)).second) {
      throw InvalidArgument("duplicate vocab token: " + tok);
    }
  }
  unk_ = index_.at(std::string(kUnkToken));
}

const std::string& Vocab::token(TokenId id) const {
  if (id >= tokens_.size()) throw IndexError("token id out of range");
  return tokens_[id];
}

std::optional<TokenId> Vocab::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<TokenId> Vocab::tokenize(std::string_view text) const {
  std::vector<TokenId> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto start = text.find_first_not_of(" \t\n\r", pos);
    if (start == std::string_view::npos) break;
    auto end = text.find_first_of(" \t\n\r", start);
    if (end == std::string_view::npos) end = text.size();
    out.push_back(find(text.substr(start, end - start)).value_or(unk_));
    pos = end;
  }
  return out;
}

std::string Vocab::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += token(ids[i]);
  }
  return out;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write vocab file " + path.string());
  for (const auto& t : tokens_) os << t << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read vocab file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) tokens.push_back(line);
  }
  return Vocab(std::move(tokens));
}

}  // namespace fedtrace
