#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "provchain/anchor/rlp.hpp"
#include "provchain/crypto/secp256k1.hpp"

namespace provchain::anchor {

// Legacy (pre-1559) transaction fields.
struct EthTransaction {
  std::uint64_t nonce = 0;
  Wei gas_price = 0;
  std::uint64_t gas_limit = 0;
  crypto::Address to;
  Wei value = 0;
  Bytes data;

  bool operator==(const EthTransaction&) const = default;
};

// Keccak-256 of the RLP list (nonce, gasprice, startgas, to, value, data),
// extended with (chain_id, 0, 0) when replay protection is requested.
Hash32 signing_hash(const EthTransaction& tx, std::optional<std::uint64_t> chain_id = std::nullopt);

struct SignedEthTransaction {
  EthTransaction tx;
  std::uint64_t v = 27;
  Hash32 r;
  Hash32 s;

  Bytes raw() const;
  // Keccak-256 of raw().
  Hash32 hash() const;
  std::optional<std::uint64_t> chain_id() const;
  // Throws Error(kKey) when v, r, s do not recover a key.
  crypto::Address sender() const;

  // Strict: nine fields, canonical integers, v of 27/28 or chain-id form.
  static SignedEthTransaction decode(ByteView raw);
};

// v is 27/28 unless `chain_id` is given (then chain_id * 2 + 35/36).
SignedEthTransaction sign_and_encode(const EthTransaction& tx, const crypto::PrivateKey& key,
                                     std::optional<std::uint64_t> chain_id = std::nullopt);

// 21000 plus 68 per nonzero and 4 per zero data byte.
std::uint64_t intrinsic_gas(ByteView data);
// Adds 20%, rounded down.
std::uint64_t with_safety_margin(std::uint64_t gas);

// The anchor payload is the ASCII text of the lowercase 64-hex blockhash.
// Throws Error(kValidation) for anything else.
Bytes anchor_payload(std::string_view blockhash_hex);
std::optional<std::string> decode_anchor_payload(ByteView data);

std::string to_string(const Wei& v);
// Decimal or 0x-prefixed hex. Throws Error(kValidation).
Wei parse_wei(std::string_view text);
std::string to_quantity_hex(const Wei& v);

}  // namespace provchain::anchor
