#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "provchain/common/error.hpp"
#include "provchain/ledger/types.hpp"

namespace provchain::ledger {

struct ChainParams {
  // Required count of leading zero hex characters in every block hash.
  unsigned difficulty = 2;
};

// Everything query_asset reports about a confirmed asset.
struct AssetView {
  AssetRecord record;
  Hash32 issue_tx_id;
  std::uint64_t height = 0;
  Hash32 block_hash;
  std::int64_t block_time = 0;

  bool operator==(const AssetView&) const = default;
};

struct NodeEntry {
  crypto::Address address;
  PermissionSet permissions;

  bool operator==(const NodeEntry&) const = default;
};

struct TxLocation {
  std::uint64_t height = 0;
  std::uint32_t index = 0;

  bool operator==(const TxLocation&) const = default;
};

// The chain plus the state derived from it. Derived maps are a pure fold over
// `blocks`; rebuild_state() recomputes them from scratch.
struct ChainState {
  ChainParams params;
  std::vector<std::shared_ptr<const Block>> blocks;
  std::vector<Hash32> block_hashes;
  std::map<std::string, AssetView> asset_index;
  std::map<NodeId, NodeEntry> permission_table;
  std::map<Hash32, TxLocation> tx_index;
  std::map<Hash32, std::uint64_t> height_by_hash;

  bool empty() const { return blocks.empty(); }
  std::uint64_t height() const { return blocks.size() - 1; }
  const Block& tip() const { return *blocks.back(); }
  const Hash32& tip_hash() const { return block_hashes.back(); }

  bool has_permission(const NodeId& node, Permission p) const;
  std::optional<NodeEntry> node(const NodeId& node) const;
  const LedgerTransaction* find_tx(const Hash32& id) const;

  // Derived state only; block storage identity is not compared.
  bool same_derived_state(const ChainState& other) const;
};

// Builds a self-signed genesis block granting every permission to the master
// node, mined to the configured difficulty.
Block make_genesis(const NodeId& master, const crypto::PrivateKey& master_key,
                   std::int64_t timestamp, const ChainParams& params);

// Applies a block atomically: the returned state includes it, or an Error is
// thrown and `state` is untouched. The first block applied to an empty state
// must be a genesis block.
ChainState append_block(const ChainState& state, const Block& block);
// In-place variant with the same all-or-nothing guarantee.
void append_block_in_place(ChainState& state, std::shared_ptr<const Block> block);

ChainState rebuild_state(std::span<const Block> blocks, const ChainParams& params);

struct ValidationReport {
  bool valid = true;
  std::optional<std::uint64_t> failed_height;
  std::optional<ErrorCode> code;
  std::string reason;
};

ValidationReport validate_chain(std::span<const Block> blocks, const ChainParams& params);
// Same checks starting from stored bytes; undecodable records fail at their index.
ValidationReport validate_chain_bytes(std::span<const Bytes> blocks, const ChainParams& params);

// Searches nonces from zero. Throws Error(kDuplicateAsset) when two pending
// asset transactions share an md5 index, naming the later one.
Block mine_block(std::vector<LedgerTransaction> pending, const BlockHeader& parent,
                 const ChainParams& params, const NodeId& miner, std::int64_t timestamp);

class PendingPool;

struct Signer {
  NodeId id;
  crypto::PrivateKey key;
};

// Throws kValidation for malformed fields, kPermissionDenied when the issuer
// lacks send, kDuplicateAsset when the md5 is confirmed or pending, and
// kUnknownParent when parent_md5 is neither confirmed nor pending.
LedgerTransaction issue_asset_tx(const ChainState& state, const PendingPool* pool,
                                 const AssetRecord& asset, const Signer& issuer,
                                 std::int64_t now_ms);

// Throws kPermissionDenied unless the issuer currently holds admin.
LedgerTransaction set_permission_tx(const ChainState& state, const PermissionGrant& grant,
                                    const Signer& issuer, std::int64_t now_ms);

LedgerTransaction node_event_tx(const ChainState& state, const NodeEvent& event,
                                const Signer& issuer, std::int64_t now_ms);

// Only assets included in a block are reported. Throws kValidation on a malformed md5.
std::optional<AssetView> query_asset(const ChainState& state, std::string_view md5);

struct ConfirmedTip {
  Hash32 hash;
  std::uint64_t height = 0;
};

// Hash of the block `confirm_depth` blocks behind the tip; kInsufficientDepth
// unless the chain holds more than confirm_depth blocks.
ConfirmedTip latest_confirmed_blockhash(const ChainState& state, std::uint64_t confirm_depth);

// Follows parent_md5 links from `md5` back to its root; the result starts at `md5`.
std::vector<std::string> lineage(const ChainState& state, const std::string& md5);

}  // namespace provchain::ledger
