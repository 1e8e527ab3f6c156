#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace ckpt_arbiter {

// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

// Stable 64-bit FNV-1a; used to fold strings into seeds.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace ckpt_arbiter
