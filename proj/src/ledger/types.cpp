#include "provchain/ledger/types.hpp"

#include <array>
#include <utility>

#include "provchain/common/error.hpp"
#include "provchain/crypto/hash.hpp"
#include "provchain/ledger/codec.hpp"

namespace provchain::ledger {
namespace {

constexpr std::array<std::pair<Permission, const char*>, 5> kPermissionNames = {{
    {Permission::kConnect, "connect"},
    {Permission::kSend, "send"},
    {Permission::kReceive, "receive"},
    {Permission::kMine, "mine"},
    {Permission::kAdmin, "admin"},
}};

constexpr std::size_t kMaxStringField = 4096;
constexpr std::size_t kMaxBlockTxs = 100000;

void encode_payload(Writer& w, const AssetRecord& a) {
  w.str(a.md5_index).str(a.sha256).str(a.source_uri).u64(static_cast<std::uint64_t>(a.processed_ts_ms));
  w.u32(static_cast<std::uint32_t>(a.metadata.size()));
  for (const auto& [k, v] : a.metadata) w.str(k).str(v);
  w.u8(a.parent_md5 ? 1 : 0);
  if (a.parent_md5) w.str(*a.parent_md5);
}

void encode_payload(Writer& w, const PermissionGrant& g) {
  w.str(g.subject);
  w.u8(g.subject_address ? 1 : 0);
  if (g.subject_address) w.bytes(g.subject_address->view());
  w.u8(g.permissions.bits()).u8(g.granted ? 1 : 0);
}

void encode_payload(Writer& w, const NodeEvent& e) { w.str(e.event).str(e.detail); }

AssetRecord decode_asset(Reader& r) {
  AssetRecord a;
  a.md5_index = r.str(kMaxStringField);
  a.sha256 = r.str(kMaxStringField);
  a.source_uri = r.str(kMaxStringField);
  a.processed_ts_ms = static_cast<std::int64_t>(r.u64());
  const std::uint32_t n = r.u32();
  if (n > 1024) throw Error(ErrorCode::kDecode, "too many metadata entries");
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string k = r.str(kMaxStringField);
    std::string v = r.str(kMaxStringField);
    // Canonical order is strictly ascending keys.
    if (!a.metadata.empty() && !(a.metadata.rbegin()->first < k)) {
      throw Error(ErrorCode::kDecode, "metadata keys not in canonical order");
    }
    a.metadata.emplace(std::move(k), std::move(v));
  }
  if (r.boolean()) a.parent_md5 = r.str(kMaxStringField);
  return a;
}

PermissionGrant decode_grant(Reader& r) {
  PermissionGrant g;
  g.subject = r.str(kMaxStringField);
  if (r.boolean()) {
    const Bytes addr = r.bytes(20);
    if (addr.size() != 20) throw Error(ErrorCode::kDecode, "address must be 20 bytes");
    crypto::Address a;
    std::copy(addr.begin(), addr.end(), a.bytes.begin());
    g.subject_address = a;
  }
  const std::uint8_t bits = r.u8();
  if ((bits & ~PermissionSet::kValidBits) != 0) throw Error(ErrorCode::kDecode, "unknown permission bits");
  g.permissions = PermissionSet::from_bits(bits);
  g.granted = r.boolean();
  return g;
}

NodeEvent decode_event(Reader& r) {
  NodeEvent e;
  e.event = r.str(kMaxStringField);
  e.detail = r.str(kMaxStringField);
  return e;
}

void require(bool ok, const char* message) {
  if (!ok) throw Error(ErrorCode::kValidation, message);
}

}  // namespace

std::vector<std::string> PermissionSet::names() const {
  std::vector<std::string> out;
  for (const auto& [p, name] : kPermissionNames) {
    if (has(p)) out.emplace_back(name);
  }
  return out;
}

PermissionSet PermissionSet::parse(const std::vector<std::string>& names) {
  PermissionSet s;
  for (const std::string& n : names) {
    bool found = false;
    for (const auto& [p, name] : kPermissionNames) {
      if (n == name) {
        s = s | PermissionSet{p};
        found = true;
      }
    }
    if (!found) throw Error(ErrorCode::kValidation, "unknown permission: " + n);
  }
  return s;
}

void validate_asset_fields(const AssetRecord& a) {
  require(is_lower_hex(a.md5_index, 32), "hash.md5 must be exactly 32 lowercase hex characters");
  require(!a.sha256.empty(), "hash.sha256 is required");
  require(is_lower_hex(a.sha256, 64), "hash.sha256 must be exactly 64 lowercase hex characters");
  require(!a.source_uri.empty(), "source.uri is required");
  require(a.source_uri.size() <= kMaxStringField, "source.uri too long");
  require(a.processed_ts_ms >= 0, "processed.ts must be non-negative");
  if (a.parent_md5) {
    require(is_lower_hex(*a.parent_md5, 32), "parent.md5 must be exactly 32 lowercase hex characters");
    require(*a.parent_md5 != a.md5_index, "parent.md5 must differ from hash.md5");
  }
  require(a.metadata.size() <= 1024, "too many metadata entries");
  for (const auto& [k, v] : a.metadata) {
    require(!k.empty() && k.size() <= kMaxStringField && v.size() <= kMaxStringField,
            "metadata entries must be non-empty keys of bounded length");
  }
}

std::string_view to_string(TxKind kind) {
  switch (kind) {
    case TxKind::kAssetIssue: return "asset_issue";
    case TxKind::kPermissionSet: return "permission_set";
    case TxKind::kNodeEvent: return "node_event";
  }
  return "unknown";
}

TxKind LedgerTransaction::kind() const { return static_cast<TxKind>(payload.index() + 1); }

Bytes LedgerTransaction::body_bytes() const {
  Writer w;
  w.u8(static_cast<std::uint8_t>(kind())).str(sender).u64(static_cast<std::uint64_t>(created_ms));
  std::visit([&w](const auto& p) { encode_payload(w, p); }, payload);
  return std::move(w).take();
}

Hash32 LedgerTransaction::signing_hash() const { return crypto::sha256d(body_bytes()); }

Bytes LedgerTransaction::serialize() const {
  Bytes out = body_bytes();
  const auto sig = signature.to_compact();
  Writer w;
  w.bytes(sig);
  const Bytes& tail = w.data();
  out.insert(out.end(), tail.begin(), tail.end());
  return out;
}

Hash32 LedgerTransaction::id() const { return crypto::sha256d(serialize()); }

LedgerTransaction LedgerTransaction::deserialize(ByteView data) {
  Reader r(data);
  LedgerTransaction tx;
  const std::uint8_t kind = r.u8();
  tx.sender = r.str(kMaxStringField);
  tx.created_ms = static_cast<std::int64_t>(r.u64());
  switch (static_cast<TxKind>(kind)) {
    case TxKind::kAssetIssue: tx.payload = decode_asset(r); break;
    case TxKind::kPermissionSet: tx.payload = decode_grant(r); break;
    case TxKind::kNodeEvent: tx.payload = decode_event(r); break;
    default: throw Error(ErrorCode::kDecode, "unknown transaction kind");
  }
  const Bytes sig = r.bytes(65);
  tx.signature = crypto::RecoverableSignature::from_compact(sig);
  r.finish();
  return tx;
}

LedgerTransaction sign_transaction(NodeId sender, std::int64_t created_ms, TxPayload payload,
                                   const crypto::PrivateKey& key) {
  LedgerTransaction tx;
  tx.sender = std::move(sender);
  tx.created_ms = created_ms;
  tx.payload = std::move(payload);
  tx.signature = crypto::sign(tx.signing_hash(), key);
  return tx;
}

Bytes BlockHeader::serialize() const {
  Writer w;
  w.u64(height)
      .bytes(prev_hash.view())
      .bytes(tx_root.view())
      .u64(static_cast<std::uint64_t>(timestamp))
      .u64(nonce)
      .str(miner);
  return std::move(w).take();
}

namespace {

BlockHeader read_header(Reader& r) {
  BlockHeader h;
  h.height = r.u64();
  h.prev_hash = r.hash32();
  h.tx_root = r.hash32();
  h.timestamp = static_cast<std::int64_t>(r.u64());
  h.nonce = r.u64();
  h.miner = r.str(kMaxStringField);
  return h;
}

}  // namespace

BlockHeader BlockHeader::deserialize(ByteView data) {
  Reader r(data);
  BlockHeader h = read_header(r);
  r.finish();
  return h;
}

Hash32 compute_block_hash(const BlockHeader& header) { return crypto::sha256d(header.serialize()); }

std::vector<Hash32> Block::tx_ids() const {
  std::vector<Hash32> ids;
  ids.reserve(txs.size());
  for (const auto& tx : txs) ids.push_back(tx.id());
  return ids;
}

// Layout: header fields inline, u32 tx count, then each transaction as a
// length-prefixed byte string.
Bytes Block::serialize() const {
  Bytes out = header.serialize();
  Writer w;
  w.u32(static_cast<std::uint32_t>(txs.size()));
  for (const auto& tx : txs) w.bytes(tx.serialize());
  const Bytes& tail = w.data();
  out.insert(out.end(), tail.begin(), tail.end());
  return out;
}

Block Block::deserialize(ByteView data) {
  Reader r(data);
  Block b;
  b.header = read_header(r);
  const std::uint32_t n = r.u32();
  if (n > kMaxBlockTxs) throw Error(ErrorCode::kDecode, "too many transactions");
  b.txs.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const Bytes raw = r.bytes();
    b.txs.push_back(LedgerTransaction::deserialize(raw));
  }
  r.finish();
  return b;
}

unsigned leading_zero_hex(const Hash32& hash) {
  unsigned n = 0;
  for (std::uint8_t b : hash.bytes) {
    if (b == 0) {
      n += 2;
      continue;
    }
    if ((b >> 4) == 0) ++n;
    break;
  }
  return n;
}

}  // namespace provchain::ledger
