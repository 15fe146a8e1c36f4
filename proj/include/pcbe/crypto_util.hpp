#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pcbe::crypto {

using Digest256 = std::array<std::uint8_t, 32>;

Digest256 sha256(std::span<const std::uint8_t> data);
Digest256 sha256(std::string_view data);

// Keyed MAC over `data`. `algo` is "SHA1" (20-byte tag, the wire default) or
// "SHA256" (32-byte tag).
std::vector<std::uint8_t> hmac(std::string_view algo, std::string_view key,
                               std::string_view data);

std::string to_hex(std::span<const std::uint8_t> data);

}  // namespace pcbe::crypto
