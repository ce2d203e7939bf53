// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedtrace {

using Bytes = std::vector<std::uint8_t>;
using Sha256Digest = std::array<std::uint8_t, 32>;

Sha256Digest sha256(std::span<const std::uint8_t> data);

std::string to_hex(std::span<const std::uint8_t> bytes);
Bytes from_hex(std::string_view hex);

Bytes to_bytes(std::string_view text);

// Appends `value` as a fixed-width big-endian integer.
void append_be64(Bytes& out, std::uint64_t value);

// Big-endian unsigned integer `digest` reduced modulo `modulus`.
std::uint64_t reduce_be_mod(std::span<const std::uint8_t> digest, std::uint64_t modulus);

}  // namespace fedtrace
