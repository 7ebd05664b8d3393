#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "provchain/common/bytes.hpp"

namespace provchain::crypto {

// 20-byte account address: the last 20 bytes of keccak256(uncompressed pubkey x||y).
struct Address {
  std::array<std::uint8_t, 20> bytes{};

  static Address from_hex(std::string_view hex);
  // Lowercase, 0x-prefixed.
  std::string hex() const;
  ByteView view() const { return bytes; }

  auto operator<=>(const Address&) const = default;
};

// A secp256k1 scalar in [1, n-1]. Construction validates the range.
class PrivateKey {
 public:
  explicit PrivateKey(const std::array<std::uint8_t, 32>& scalar);
  static PrivateKey from_hex(std::string_view hex);
  static PrivateKey random();

  const std::array<std::uint8_t, 32>& scalar() const { return scalar_; }
  Address address() const;
  // 64 bytes: x || y of the public point.
  std::array<std::uint8_t, 64> public_key() const;

 private:
  std::array<std::uint8_t, 32> scalar_;
};

struct RecoverableSignature {
  Hash32 r;
  Hash32 s;
  std::uint8_t recovery_id = 0;  // 0 or 1

  // r || s || recovery_id
  std::array<std::uint8_t, 65> to_compact() const;
  static RecoverableSignature from_compact(ByteView bytes);

  auto operator<=>(const RecoverableSignature&) const = default;
};

// Deterministic (RFC 6979, HMAC-SHA256) ECDSA over a 32-byte digest with s in
// the lower half of the group order.
RecoverableSignature sign(const Hash32& digest, const PrivateKey& key);

// Throws Error(kKey) when the signature does not define a valid public key.
Address recover_address(const Hash32& digest, const RecoverableSignature& sig);

bool is_low_s(const Hash32& s);

}  // namespace provchain::crypto
