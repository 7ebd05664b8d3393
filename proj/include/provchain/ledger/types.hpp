#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "provchain/common/bytes.hpp"
#include "provchain/crypto/secp256k1.hpp"

namespace provchain::ledger {

using NodeId = std::string;

enum class Permission : std::uint8_t {
  kConnect = 1 << 0,
  kSend = 1 << 1,
  kReceive = 1 << 2,
  kMine = 1 << 3,
  kAdmin = 1 << 4,
};

class PermissionSet {
 public:
  constexpr PermissionSet() = default;
  constexpr PermissionSet(std::initializer_list<Permission> perms) {
    for (Permission p : perms) bits_ |= static_cast<std::uint8_t>(p);
  }
  static constexpr PermissionSet from_bits(std::uint8_t bits) {
    PermissionSet s;
    s.bits_ = bits;
    return s;
  }
  static constexpr PermissionSet all() {
    return {Permission::kConnect, Permission::kSend, Permission::kReceive, Permission::kMine,
            Permission::kAdmin};
  }
  static constexpr std::uint8_t kValidBits = 0x1f;

  constexpr bool has(Permission p) const { return (bits_ & static_cast<std::uint8_t>(p)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint8_t bits() const { return bits_; }
  constexpr PermissionSet operator|(PermissionSet o) const { return from_bits(bits_ | o.bits_); }
  constexpr PermissionSet without(PermissionSet o) const {
    return from_bits(static_cast<std::uint8_t>(bits_ & ~o.bits_));
  }

  // e.g. ["connect","send"]
  std::vector<std::string> names() const;
  // Accepts the names above; throws Error(kValidation) on unknown names.
  static PermissionSet parse(const std::vector<std::string>& names);

  constexpr bool operator==(const PermissionSet&) const = default;

 private:
  std::uint8_t bits_ = 0;
};

// A notarized data asset. md5 is the unique index; sha256 is the strong attribute.
struct AssetRecord {
  std::string md5_index;
  std::string sha256;
  std::string source_uri;
  std::int64_t processed_ts_ms = 0;
  std::map<std::string, std::string> metadata;
  std::optional<std::string> parent_md5;

  bool operator==(const AssetRecord&) const = default;
};

// Throws Error(kValidation) naming the offending field.
void validate_asset_fields(const AssetRecord& asset);

// The issuer of a grant is the enclosing transaction's sender.
struct PermissionGrant {
  NodeId subject;
  // Registers the subject's signing key; required on the first grant to a node.
  std::optional<crypto::Address> subject_address;
  PermissionSet permissions;
  bool granted = true;

  bool operator==(const PermissionGrant&) const = default;
};

struct NodeEvent {
  std::string event;
  std::string detail;

  bool operator==(const NodeEvent&) const = default;
};

enum class TxKind : std::uint8_t { kAssetIssue = 1, kPermissionSet = 2, kNodeEvent = 3 };
std::string_view to_string(TxKind kind);

using TxPayload = std::variant<AssetRecord, PermissionGrant, NodeEvent>;

struct LedgerTransaction {
  NodeId sender;
  std::int64_t created_ms = 0;
  TxPayload payload;
  crypto::RecoverableSignature signature;

  TxKind kind() const;
  // Canonical encoding of everything except the signature.
  Bytes body_bytes() const;
  Hash32 signing_hash() const;
  Bytes serialize() const;
  // Double SHA-256 of serialize().
  Hash32 id() const;
  static LedgerTransaction deserialize(ByteView data);

  const AssetRecord* asset() const { return std::get_if<AssetRecord>(&payload); }
  const PermissionGrant* grant() const { return std::get_if<PermissionGrant>(&payload); }

  bool operator==(const LedgerTransaction&) const = default;
};

LedgerTransaction sign_transaction(NodeId sender, std::int64_t created_ms, TxPayload payload,
                                   const crypto::PrivateKey& key);

struct BlockHeader {
  std::uint64_t height = 0;
  Hash32 prev_hash;
  Hash32 tx_root;
  std::int64_t timestamp = 0;  // Unix seconds, miner clock
  std::uint64_t nonce = 0;
  NodeId miner;

  Bytes serialize() const;
  static BlockHeader deserialize(ByteView data);

  bool operator==(const BlockHeader&) const = default;
};

// Double SHA-256 over the canonical header encoding
// (height, prev_hash, tx_root, timestamp, nonce, miner).
Hash32 compute_block_hash(const BlockHeader& header);

struct Block {
  BlockHeader header;
  std::vector<LedgerTransaction> txs;

  Hash32 hash() const { return compute_block_hash(header); }
  std::vector<Hash32> tx_ids() const;
  Bytes serialize() const;
  static Block deserialize(ByteView data);

  bool operator==(const Block&) const = default;
};

// Number of leading '0' characters in the hash's hex form.
unsigned leading_zero_hex(const Hash32& hash);

}  // namespace provchain::ledger
