// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fedtrace {

using TokenId = std::uint32_t;

// Bijective token <-> index map. Always contains the unknown-token entry.
class Vocab {
 public:
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocab() : Vocab(std::vector<std::string>{}) {}
  // Appends kUnkToken when absent. Duplicate tokens are rejected.
  explicit Vocab(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  TokenId unk() const { return unk_; }
  const std::string& token(TokenId id) const;
  std::optional<TokenId> find(std::string_view token) const;
  std::span<const std::string> tokens() const { return tokens_; }

  // Whitespace split; unknown tokens map to unk().
  std::vector<TokenId> tokenize(std::string_view text) const;
  std::string detokenize(std::span<const TokenId> ids) const;

  // Newline-delimited token file.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId unk_ = 0;
};

}  // namespace fedtrace
