#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace cotforge {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::string_view bytes);
std::string to_hex(const Digest& d);
std::string sha256_hex(std::string_view bytes);
Digest digest_from_hex(std::string_view hex);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

// First 8 bytes of a digest as a little-endian integer.
std::uint64_t digest_prefix_u64(const Digest& d);

}  // namespace cotforge
