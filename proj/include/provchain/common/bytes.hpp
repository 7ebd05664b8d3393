#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace provchain {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

// 32-byte digest with value semantics and ordering, usable as a map key.
struct Hash32 {
  std::array<std::uint8_t, 32> bytes{};

  static Hash32 zero() { return {}; }
  static Hash32 from_hex(std::string_view hex);

  std::string hex() const;
  bool is_zero() const;
  ByteView view() const { return bytes; }

  auto operator<=>(const Hash32&) const = default;
};

std::string to_hex(ByteView data);
// Accepts an optional "0x" prefix; throws Error(kValidation) on odd length or bad digits.
Bytes from_hex(std::string_view hex);

bool is_lower_hex(std::string_view s, std::size_t expected_len);

inline ByteView as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

}  // namespace provchain
