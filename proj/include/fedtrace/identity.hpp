// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fedtrace/hash.hpp"
#include "fedtrace/vocab.hpp"

namespace fedtrace {

struct KeyPair {
  std::string algorithm = "ed25519";
  Bytes private_key;  // 32-byte Ed25519 seed
  Bytes public_key;   // 32-byte raw public key
};

struct ClientIdentity {
  int client_id = 0;
  KeyPair key_pair;
  Bytes message;
  std::int64_t timestamp = 0;  // seconds since epoch
};

// Registered binding between a participant and its trigger token.
struct TriggerAssignment {
  int client_id = 0;
  Bytes public_key;
  Bytes message;
  std::int64_t timestamp = 0;
  Bytes signature;
  std::size_t vocab_size = 0;
  TokenId trigger_index = 0;
  std::string trigger_token;
  std::uint32_t rehash_counter = 0;
  bool universal = false;

  bool operator==(const TriggerAssignment&) const = default;
};

// Deterministic Ed25519 key pair derived from `seed`. Throws InvalidArgument
// on an empty message.
ClientIdentity generate_identity(int client_id, Bytes message, std::int64_t timestamp,
                                 std::uint64_t seed);

// The byte string that gets signed: message || be64(timestamp).
Bytes signing_payload(std::span<const std::uint8_t> message, std::int64_t timestamp);

Bytes sign(const KeyPair& key_pair, std::span<const std::uint8_t> payload);
bool verify_signature(std::span<const std::uint8_t> public_key,
                      std::span<const std::uint8_t> payload,
                      std::span<const std::uint8_t> signature);

// SHA-256(signature || counter) as a big-endian integer, mod vocab_size. The
// counter is encoded big-endian in the fewest bytes, with zero as one 0x00 byte.
TokenId derive_trigger_index(std::span<const std::uint8_t> signature, std::uint32_t counter,
                             std::size_t vocab_size);

// Plays the certification-authority role: the record of who owns which
// trigger and when it was filed. Single writer.
class TriggerRegistry {
 public:
  TriggerRegistry() = default;
  explicit TriggerRegistry(std::set<TokenId> reserved) : reserved_(std::move(reserved)) {}

  // Client assignments ordered by timestamp (stable for equal timestamps).
  const std::vector<TriggerAssignment>& assignments() const { return assignments_; }
  const std::optional<TriggerAssignment>& universal() const { return universal_; }
  const std::set<TokenId>& reserved() const { return reserved_; }

  bool is_taken(TokenId index) const;
  std::size_t blocked_count(std::size_t vocab_size) const;
  const TriggerAssignment* find_client(int client_id) const;
  const TriggerAssignment* find_trigger(TokenId index) const;
  std::vector<TokenId> client_triggers() const;
  void set_trigger_token(TokenId index, const std::string& token);

  // Appends a verified assignment. Throws InvalidArgument on duplicate
  // client id or trigger index.
  void add(TriggerAssignment assignment);

  // JSON array of {client_id, public_key_hex, signature_hex, timestamp,
  // trigger_index, rehash_counter, ...}.
  void save(const std::filesystem::path& path) const;
  static TriggerRegistry load(const std::filesystem::path& path);
  std::string to_json_string() const;
  static TriggerRegistry from_json_string(const std::string& text);

 private:
  std::vector<TriggerAssignment> assignments_;
  std::optional<TriggerAssignment> universal_;
  std::set<TokenId> reserved_;
};

enum class AssignmentRole { kClient, kUniversal };

// Signs message || timestamp, verifies it, and maps the signature to the first
// trigger index (counter 0, 1, ...) that is neither reserved nor assigned.
// Throws CapacityError when no index is free and IntegrityError when the
// signature does not verify.
TriggerAssignment sign_and_assign(const ClientIdentity& identity, std::size_t vocab_size,
                                  TriggerRegistry& registry,
                                  AssignmentRole role = AssignmentRole::kClient);
TriggerAssignment sign_and_assign(const ClientIdentity& identity, const Vocab& vocab,
                                  TriggerRegistry& registry,
                                  AssignmentRole role = AssignmentRole::kClient);

// True iff the signature verifies and the recorded counter reproduces the index.
bool verify_assignment(const TriggerAssignment& assignment,
                       std::span<const std::uint8_t> public_key,
                       std::span<const std::uint8_t> message);

// Among client assignments whose trigger is in `responding_triggers`, the one
// filed earliest.
std::optional<int> resolve_dispute(const TriggerRegistry& registry,
                                   std::span<const TokenId> responding_triggers);

}  // namespace fedtrace
