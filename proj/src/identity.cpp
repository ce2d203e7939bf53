// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedtrace/identity.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "fedtrace/errors.hpp"

namespace fedtrace {

namespace {

struct PkeyDeleter {
  void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
};
struct MdCtxDeleter {
  void operator()(EVP_MD_CTX* p) const { EVP_MD_CTX_free(p); }
};
using PkeyPtr = std::unique_ptr<EVP_PKEY, PkeyDeleter>;
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, MdCtxDeleter>;

constexpr std::size_t kEd25519KeySize = 32;
constexpr std::size_t kEd25519SigSize = 64;

PkeyPtr private_key_from_seed(std::span<const std::uint8_t> seed) {
  PkeyPtr key(EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, seed.data(), seed.size()));
  if (!key) throw IntegrityError("cannot load Ed25519 private key");
  return key;
}

}  // namespace

ClientIdentity generate_identity(int client_id, Bytes message, std::int64_t timestamp,
                                 std::uint64_t seed) {
  if (message.empty()) throw InvalidArgument("identity message must be non-empty");
  Bytes material = to_bytes("fedtrace/ed25519-seed");
  append_be64(material, seed);
  const auto digest = sha256(material);

  ClientIdentity id;
  id.client_id = client_id;
  id.message = std::move(message);
  id.timestamp = timestamp;
  id.key_pair.private_key.assign(digest.begin(), digest.end());

  auto key = private_key_from_seed(id.key_pair.private_key);
  std::size_t len = kEd25519KeySize;
  id.key_pair.public_key.resize(len);
  if (EVP_PKEY_get_raw_public_key(key.get(), id.key_pair.public_key.data(), &len) != 1 ||
      len != kEd25519KeySize) {
    throw IntegrityError("cannot derive Ed25519 public key");
  }
  return id;
}

Bytes signing_payload(std::span<const std::uint8_t> message, std::int64_t timestamp) {
  Bytes out(message.begin(), message.end());
  append_be64(out, static_cast<std::uint64_t>(timestamp));
  return out;
}

Bytes sign(const KeyPair& key_pair, std::span<const std::uint8_t> payload) {
  if (key_pair.algorithm != "ed25519") throw InvalidArgument("unsupported key algorithm");
  auto key = private_key_from_seed(key_pair.private_key);
  MdCtxPtr ctx(EVP_MD_CTX_new());
  Bytes sig(kEd25519SigSize);
  std::size_t len = sig.size();
  if (!ctx || EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, key.get()) != 1 ||
      EVP_DigestSign(ctx.get(), sig.data(), &len, payload.data(), payload.size()) != 1) {
    throw IntegrityError("Ed25519 signing failed");
  }
  sig.resize(len);
  return sig;
}

bool verify_signature(std::span<const std::uint8_t> public_key,
                      std::span<const std::uint8_t> payload,
                      std::span<const std::uint8_t> signature) {
  if (public_key.size() != kEd25519KeySize || signature.size() != kEd25519SigSize) return false;
  PkeyPtr key(EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, public_key.data(),
                                          public_key.size()));
  if (!key) return false;
  MdCtxPtr ctx(EVP_MD_CTX_new());
  if (!ctx || EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, key.get()) != 1) {
    return false;
  }
  return EVP_DigestVerify(ctx.get(), signature.data(), signature.size(), payload.data(),
                          payload.size()) == 1;
}

TokenId derive_trigger_index(std::span<const std::uint8_t> signature, std::uint32_t counter,
                             std::size_t vocab_size) {
  Bytes buf(signature.begin(), signature.end());
  Bytes counter_bytes;
  do {
    counter_bytes.push_back(static_cast<std::uint8_t>(counter & 0xff));
    counter >>= 8;
  } while (counter != 0);
  buf.insert(buf.end(), counter_bytes.rbegin(), counter_bytes.rend());
  return static_cast<TokenId>(reduce_be_mod(sha256(buf), vocab_size));
}

bool TriggerRegistry::is_taken(TokenId index) const {
  if (reserved_.contains(index)) return true;
  if (universal_ && universal_->trigger_index == index) return true;
  return find_trigger(index) != nullptr;
}

std::size_t TriggerRegistry::blocked_count(std::size_t vocab_size) const {
  std::set<TokenId> blocked;
  for (auto r : reserved_) {
    if (r < vocab_size) blocked.insert(r);
  }
  for (const auto& a : assignments_) blocked.insert(a.trigger_index);
  if (universal_) blocked.insert(universal_->trigger_index);
  return blocked.size();
}

const TriggerAssignment* TriggerRegistry::find_client(int client_id) const {
  for (const auto& a : assignments_) {
    if (a.client_id == client_id) return &a;
  }
  return nullptr;
}

const TriggerAssignment* TriggerRegistry::find_trigger(TokenId index) const {
  for (const auto& a : assignments_) {
    if (a.trigger_index == index) return &a;
  }
  return nullptr;
}

void TriggerRegistry::set_trigger_token(TokenId index, const std::string& token) {
  if (universal_ && universal_->trigger_index == index) universal_->trigger_token = token;
  for (auto& a : assignments_) {
    if (a.trigger_index == index) a.trigger_token = token;
  }
}

std::vector<TokenId> TriggerRegistry::client_triggers() const {
  std::vector<TokenId> out;
  for (const auto& a : assignments_) out.push_back(a.trigger_index);
  return out;
}

void TriggerRegistry::add(TriggerAssignment assignment) {
  if (is_taken(assignment.trigger_index)) {
    throw InvalidArgument("trigger index already registered or reserved");
  }
  if (assignment.universal) {
    if (universal_) throw InvalidArgument("universal trigger already registered");
    if (find_client(assignment.client_id)) throw InvalidArgument("client id already registered");
    universal_ = std::move(assignment);
    return;
  }
  if (find_client(assignment.client_id) ||
      (universal_ && universal_->client_id == assignment.client_id)) {
    throw InvalidArgument("client id already registered");
  }
  auto pos = std::upper_bound(
      assignments_.begin(), assignments_.end(), assignment.timestamp,
      [](std::int64_t ts, const TriggerAssignment& a) { return ts < a.timestamp; });
  assignments_.insert(pos, std::move(assignment));
}

namespace {

nlohmann::json assignment_to_json(const TriggerAssignment& a) {
  return {
      {"client_id", a.client_id},
      {"public_key_hex", to_hex(a.public_key)},
      {"signature_hex", to_hex(a.signature)},
      {"timestamp", a.timestamp},
      {"trigger_index", a.trigger_index},
      {"rehash_counter", a.rehash_counter},
      {"message_hex", to_hex(a.message)},
      {"vocab_size", a.vocab_size},
      {"trigger_token", a.trigger_token},
      {"universal", a.universal},
  };
}

TriggerAssignment assignment_from_json(const nlohmann::json& j) {
  TriggerAssignment a;
  a.client_id = j.at("client_id").get<int>();
  a.public_key = from_hex(j.at("public_key_hex").get<std::string>());
  a.signature = from_hex(j.at("signature_hex").get<std::string>());
  a.timestamp = j.at("timestamp").get<std::int64_t>();
  a.trigger_index = j.at("trigger_index").get<TokenId>();
  a.rehash_counter = j.at("rehash_counter").get<std::uint32_t>();
  a.message = from_hex(j.value("message_hex", std::string{}));
  a.vocab_size = j.value("vocab_size", std::size_t{0});
  a.trigger_token = j.value("trigger_token", std::string{});
  a.universal = j.value("universal", false);
  return a;
}

}  // namespace

std::string TriggerRegistry::to_json_string() const {
  nlohmann::json arr = nlohmann::json::array();
  if (universal_) arr.push_back(assignment_to_json(*universal_));
  for (const auto& a : assignments_) arr.push_back(assignment_to_json(a));
  return arr.dump(2);
}

TriggerRegistry TriggerRegistry::from_json_string(const std::string& text) {
  auto arr = nlohmann::json::parse(text);
  if (!arr.is_array()) throw InvalidArgument("registry JSON must be an array");
  TriggerRegistry reg;
  for (const auto& j : arr) reg.add(assignment_from_json(j));
  return reg;
}

void TriggerRegistry::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << to_json_string() << '\n';
}

TriggerRegistry TriggerRegistry::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return from_json_string(ss.str());
}

TriggerAssignment sign_and_assign(const ClientIdentity& identity, std::size_t vocab_size,
                                  TriggerRegistry& registry, AssignmentRole role) {
  if (registry.blocked_count(vocab_size) >= vocab_size) {
    throw CapacityError("no free trigger index left in the vocabulary");
  }
  const Bytes payload = signing_payload(identity.message, identity.timestamp);
  TriggerAssignment a;
  a.client_id = identity.client_id;
  a.public_key = identity.key_pair.public_key;
  a.message = identity.message;
  a.timestamp = identity.timestamp;
  a.signature = sign(identity.key_pair, payload);
  a.vocab_size = vocab_size;
  a.universal = role == AssignmentRole::kUniversal;
  if (!verify_signature(a.public_key, payload, a.signature)) {
    throw IntegrityError("signature does not verify against the registered public key");
  }

  // Rehashing is a random probe over [0, V); with f free slots it takes
  // about V/f attempts, so 64*V bounds the search generously.
  const std::uint64_t max_attempts = 64ULL * vocab_size + 64;
  for (std::uint64_t counter = 0; counter < max_attempts; ++counter) {
    const TokenId idx = derive_trigger_index(a.signature, static_cast<std::uint32_t>(counter),
                                             vocab_size);
    if (!registry.is_taken(idx)) {
      a.trigger_index = idx;
      a.rehash_counter = static_cast<std::uint32_t>(counter);
      a.trigger_token = "#" + std::to_string(idx);
      registry.add(a);
      return a;
    }
  }
  throw CapacityError("rehash budget exhausted while searching for a free trigger index");
}

TriggerAssignment sign_and_assign(const ClientIdentity& identity, const Vocab& vocab,
                                  TriggerRegistry& registry, AssignmentRole role) {
  auto a = sign_and_assign(identity, vocab.size(), registry, role);
  const std::string token = vocab.token(a.trigger_index);
  registry.set_trigger_token(a.trigger_index, token);
  a.trigger_token = token;
  return a;
}

bool verify_assignment(const TriggerAssignment& assignment,
                       std::span<const std::uint8_t> public_key,
                       std::span<const std::uint8_t> message) {
  const Bytes payload = signing_payload(message, assignment.timestamp);
  if (!verify_signature(public_key, payload, assignment.signature)) return false;
  if (assignment.vocab_size == 0) return false;
  return derive_trigger_index(assignment.signature, assignment.rehash_counter,
                              assignment.vocab_size) == assignment.trigger_index;
}

std::optional<int> resolve_dispute(const TriggerRegistry& registry,
                                   std::span<const TokenId> responding_triggers) {
  const TriggerAssignment* best = nullptr;
  for (const auto& a : registry.assignments()) {
    if (std::find(responding_triggers.begin(), responding_triggers.end(), a.trigger_index) ==
        responding_triggers.end()) {
      continue;
    }
    if (!best || a.timestamp < best->timestamp) best = &a;
  }
  if (!best) return std::nullopt;
  return best->client_id;
}

}  // namespace fedtrace
