#pragma once

// Content hashing and base64 helpers shared by the weight store, the surrogate
// evaluator, the worker protocol and checkpoints.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dqnas {

using Blob = std::vector<std::uint8_t>;
using Digest128 = std::array<std::uint8_t, 16>;

// BLAKE2b with a 16-byte output: stable across runs and platforms.
Digest128 hash128(std::span<const std::uint8_t> bytes);
Digest128 hash128(std::string_view text);

std::string to_hex(std::span<const std::uint8_t> bytes);
Blob from_hex(std::string_view hex);

/// First eight digest bytes read as a little-endian integer.
std::uint64_t low64(const Digest128& d);

std::string base64_encode(std::span<const std::uint8_t> bytes);
// Throws ParseError on malformed input.
Blob base64_decode(std::string_view text);

}  // namespace dqnas
