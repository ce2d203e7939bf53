// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>

#include "fedtrace/errors.hpp"
#include "fedtrace/hash.hpp"
#include "fedtrace/identity.hpp"
#include "support.hpp"

namespace fedtrace {
namespace {

ClientIdentity make_identity(int id, std::int64_t ts, std::uint64_t seed) {
  return generate_identity(id, to_bytes("client-" + std::to_string(id)), ts, seed);
}

TEST(GenerateIdentity, DeterministicPerSeed) {
  const auto a = generate_identity(0, to_bytes("server"), 0, 7);
  const auto b = generate_identity(0, to_bytes("server"), 0, 7);
  const auto c = generate_identity(0, to_bytes("server"), 0, 8);
  EXPECT_EQ(a.key_pair.public_key, b.key_pair.public_key);
  EXPECT_EQ(a.key_pair.private_key, b.key_pair.private_key);
  EXPECT_NE(a.key_pair.public_key, c.key_pair.public_key);
  EXPECT_EQ(a.key_pair.public_key.size(), 32u);
  EXPECT_EQ(a.timestamp, 0);
}

TEST(GenerateIdentity, EmptyMessageRejected) {
  EXPECT_THROW(generate_identity(1, Bytes{}, 0, 7), InvalidArgument);
}

TEST(Signature, BindsTimestamp) {
  const auto id = make_identity(1, 100, 1);
  const auto sig = sign(id.key_pair, signing_payload(id.message, 100));
  EXPECT_TRUE(verify_signature(id.key_pair.public_key, signing_payload(id.message, 100), sig));
  EXPECT_FALSE(verify_signature(id.key_pair.public_key, signing_payload(id.message, 101), sig));
}

TEST(DeriveTriggerIndex, ZeroSignatureFixture) {
  EXPECT_EQ(derive_trigger_index(Bytes(32, 0), 0, 2000), 1625u);
}

TEST(SignAndAssign, FirstHashWhenFree) {
  TriggerRegistry reg;
  const auto id = make_identity(1, 10, 1);
  const auto a = sign_and_assign(id, 2000, reg);
  EXPECT_EQ(a.rehash_counter, 0u);
  EXPECT_EQ(a.trigger_index, derive_trigger_index(a.signature, 0, 2000));
  EXPECT_EQ(reduce_be_mod(sha256([&] {
                            Bytes b = a.signature;
                            b.push_back(0);
                            return b;
                          }()),
                          2000),
            a.trigger_index);
  ASSERT_EQ(reg.assignments().size(), 1u);
  EXPECT_EQ(reg.assignments()[0], a);
}

TEST(SignAndAssign, CollisionTakesNextCounter) {
  const auto id = make_identity(1, 10, 1);
  TriggerRegistry probe;
  const auto first = sign_and_assign(id, 2000, probe);
  TriggerRegistry reg(std::set<TokenId>{first.trigger_index});
  const auto a = sign_and_assign(id, 2000, reg);
  EXPECT_EQ(a.rehash_counter, 1u);
  EXPECT_EQ(a.trigger_index, derive_trigger_index(first.signature, 1, 2000));
  EXPECT_NE(a.trigger_index, first.trigger_index);
}

TEST(SignAndAssign, UniqueAcrossCrowdedVocab) {
  TriggerRegistry reg(std::set<TokenId>{0, 1, 2, 3});
  const std::size_t vocab = 40;
  std::set<TokenId> seen;
  for (int k = 0; k < 36; ++k) {
    const auto a = sign_and_assign(make_identity(k, k, 100 + k), vocab, reg);
    EXPECT_GE(a.trigger_index, 4u);
    EXPECT_LT(a.trigger_index, vocab);
    EXPECT_TRUE(seen.insert(a.trigger_index).second);
  }
  EXPECT_THROW(sign_and_assign(make_identity(99, 99, 1), vocab, reg), CapacityError);
}

TEST(SignAndAssign, DeterministicForSameState) {
  TriggerRegistry r1;
  TriggerRegistry r2;
  EXPECT_EQ(sign_and_assign(make_identity(3, 5, 9), 2000, r1),
            sign_and_assign(make_identity(3, 5, 9), 2000, r2));
}

TEST(SignAndAssign, UniversalIsSeparate) {
  TriggerRegistry reg;
  const auto u = sign_and_assign(make_identity(0, 0, 1), 2000, reg, AssignmentRole::kUniversal);
  const auto c = sign_and_assign(make_identity(1, 1, 2), 2000, reg);
  ASSERT_TRUE(reg.universal().has_value());
  EXPECT_EQ(reg.universal()->trigger_index, u.trigger_index);
  EXPECT_NE(u.trigger_index, c.trigger_index);
  EXPECT_EQ(reg.client_triggers(), (std::vector<TokenId>{c.trigger_index}));
  EXPECT_THROW(sign_and_assign(make_identity(1, 2, 3), 2000, reg), InvalidArgument);
}

TEST(VerifyAssignment, SoundAgainstMutations) {
  TriggerRegistry reg;
  const auto id = make_identity(2, 42, 5);
  const auto a = sign_and_assign(id, 2000, reg);
  EXPECT_TRUE(verify_assignment(a, id.key_pair.public_key, id.message));

  auto off = a;
  off.trigger_index = (a.trigger_index + 1) % 2000;
  EXPECT_FALSE(verify_assignment(off, id.key_pair.public_key, id.message));

  auto flipped = a;
  flipped.signature[0] ^= 0x01;
  EXPECT_FALSE(verify_assignment(flipped, id.key_pair.public_key, id.message));

  auto counter = a;
  counter.rehash_counter += 1;
  EXPECT_FALSE(verify_assignment(counter, id.key_pair.public_key, id.message));

  auto ts = a;
  ts.timestamp += 1;
  EXPECT_FALSE(verify_assignment(ts, id.key_pair.public_key, id.message));

  EXPECT_FALSE(verify_assignment(a, make_identity(3, 0, 6).key_pair.public_key, id.message));
  EXPECT_FALSE(verify_assignment(a, id.key_pair.public_key, to_bytes("someone else")));
}

TEST(Registry, OrderedByTimestampAndJsonRoundTrip) {
  TriggerRegistry reg(std::set<TokenId>{5, 6});
  sign_and_assign(make_identity(0, 1, 1), 2000, reg, AssignmentRole::kUniversal);
  sign_and_assign(make_identity(2, 300, 2), 2000, reg);
  sign_and_assign(make_identity(1, 100, 3), 2000, reg);
  sign_and_assign(make_identity(3, 200, 4), 2000, reg);
  std::vector<int> order;
  for (const auto& a : reg.assignments()) order.push_back(a.client_id);
  EXPECT_EQ(order, (std::vector<int>{1, 3, 2}));

  testing::TempDir dir;
  reg.save(dir.path() / "registry.json");
  const auto back = TriggerRegistry::load(dir.path() / "registry.json");
  EXPECT_EQ(back.assignments(), reg.assignments());
  EXPECT_EQ(back.universal(), reg.universal());
  EXPECT_EQ(back.to_json_string(), reg.to_json_string());
  for (const auto& a : back.assignments()) EXPECT_TRUE(verify_assignment(a, a.public_key, a.message));
}

TEST(ResolveDispute, EarliestTimestampWins) {
  TriggerRegistry reg;
  const auto late = sign_and_assign(make_identity(7, 200, 1), 2000, reg);
  const auto early = sign_and_assign(make_identity(4, 100, 2), 2000, reg);
  const std::vector<TokenId> both = {late.trigger_index, early.trigger_index};
  EXPECT_EQ(resolve_dispute(reg, both), 4);
  EXPECT_EQ(resolve_dispute(reg, std::vector<TokenId>{late.trigger_index}), 7);
  EXPECT_EQ(resolve_dispute(reg, std::vector<TokenId>{}), std::nullopt);
  TokenId unused = 0;
  while (reg.is_taken(unused)) ++unused;
  EXPECT_EQ(resolve_dispute(reg, std::vector<TokenId>{unused}), std::nullopt);
}

}  // namespace
}  // namespace fedtrace
