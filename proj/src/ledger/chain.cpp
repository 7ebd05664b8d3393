#include "provchain/ledger/chain.hpp"

#include <mutex>
#include <set>
#include <unordered_map>

#include "provchain/ledger/merkle.hpp"
#include "provchain/ledger/pending_pool.hpp"

namespace provchain::ledger {
namespace {

// Address recovery is a pure function of (digest, signature), so results are
// memoized; replaying a long chain would otherwise redo every EC recovery.
class SignatureCache {
 public:
  crypto::Address recover(const Hash32& digest, const crypto::RecoverableSignature& sig) {
    Bytes key(digest.bytes.begin(), digest.bytes.end());
    const auto compact = sig.to_compact();
    key.insert(key.end(), compact.begin(), compact.end());
    const std::string k(key.begin(), key.end());
    {
      std::lock_guard lock(mu_);
      if (auto it = cache_.find(k); it != cache_.end()) return it->second;
    }
    const crypto::Address addr = crypto::recover_address(digest, sig);
    std::lock_guard lock(mu_);
    if (cache_.size() >= kCapacity) cache_.clear();
    cache_.emplace(k, addr);
    return addr;
  }

 private:
  static constexpr std::size_t kCapacity = 1 << 18;
  std::mutex mu_;
  std::unordered_map<std::string, crypto::Address> cache_;
};

SignatureCache& signature_cache() {
  static SignatureCache cache;
  return cache;
}

std::string at(std::uint64_t height, std::uint32_t index) {
  return "block " + std::to_string(height) + " tx " + std::to_string(index) + ": ";
}

Permission required_permission(TxKind kind) {
  switch (kind) {
    case TxKind::kAssetIssue: return Permission::kSend;
    case TxKind::kPermissionSet: return Permission::kAdmin;
    case TxKind::kNodeEvent: return Permission::kConnect;
  }
  return Permission::kAdmin;
}

// Block-local overlay on top of a ChainState. Validation writes only here;
// commit() moves it into the state once the whole block has passed.
struct Staged {
  const ChainState& base;
  std::map<NodeId, NodeEntry> perms;
  std::map<std::string, AssetView> new_assets;
  std::map<Hash32, TxLocation> new_txs;

  explicit Staged(const ChainState& s) : base(s), perms(s.permission_table) {}

  bool has_asset(const std::string& md5) const {
    return base.asset_index.contains(md5) || new_assets.contains(md5);
  }
  bool has_tx(const Hash32& id) const { return base.tx_index.contains(id) || new_txs.contains(id); }
  bool allowed(const NodeId& node, Permission p) const {
    auto it = perms.find(node);
    return it != perms.end() && it->second.permissions.has(p);
  }
};

void check_signature(const Staged& st, const LedgerTransaction& tx, const std::string& where) {
  auto it = st.perms.find(tx.sender);
  if (it == st.perms.end()) {
    throw Error(ErrorCode::kPermissionDenied, where + "unknown sender " + tx.sender);
  }
  crypto::Address recovered;
  try {
    recovered = signature_cache().recover(tx.signing_hash(), tx.signature);
  } catch (const Error&) {
    throw Error(ErrorCode::kInvalidBlock, where + "unrecoverable signature");
  }
  if (recovered != it->second.address) {
    throw Error(ErrorCode::kInvalidBlock, where + "signature does not match sender " + tx.sender);
  }
}

void apply_grant(Staged& st, const PermissionGrant& g, const std::string& where) {
  if (g.subject.empty()) throw Error(ErrorCode::kValidation, where + "empty grant subject");
  auto it = st.perms.find(g.subject);
  if (it == st.perms.end()) {
    if (!g.granted || !g.subject_address) {
      throw Error(ErrorCode::kValidation,
                  where + "first grant to " + g.subject + " must register an address");
    }
    st.perms.emplace(g.subject, NodeEntry{*g.subject_address, g.permissions});
    return;
  }
  if (g.subject_address && *g.subject_address != it->second.address) {
    throw Error(ErrorCode::kValidation, where + "address of " + g.subject + " cannot change");
  }
  it->second.permissions =
      g.granted ? it->second.permissions | g.permissions : it->second.permissions.without(g.permissions);
}

// Validates `tx` against the overlay and records its effects there.
void stage_tx(Staged& st, const LedgerTransaction& tx, const Hash32& id, std::uint64_t height,
              std::uint32_t index, const Hash32& block_hash, std::int64_t block_time,
              const PendingPool* pool = nullptr) {
  const std::string where = at(height, index);
  check_signature(st, tx, where);
  if (!st.allowed(tx.sender, required_permission(tx.kind()))) {
    throw Error(ErrorCode::kPermissionDenied, where + tx.sender + " lacks permission for " +
                                                  std::string(to_string(tx.kind())));
  }
  if (st.has_tx(id)) throw Error(ErrorCode::kInvalidBlock, where + "duplicate transaction id");

  if (const AssetRecord* a = tx.asset()) {
    try {
      validate_asset_fields(*a);
    } catch (const Error& e) {
      throw Error(ErrorCode::kValidation, where + e.what());
    }
    if (st.has_asset(a->md5_index)) {
      throw Error(ErrorCode::kDuplicateAsset, where + "duplicate asset " + a->md5_index);
    }
    if (a->parent_md5 && !st.has_asset(*a->parent_md5) &&
        !(pool && pool->contains_md5(*a->parent_md5))) {
      throw Error(ErrorCode::kUnknownParent, where + "unknown parent asset " + *a->parent_md5);
    }
    st.new_assets.emplace(a->md5_index, AssetView{*a, id, height, block_hash, block_time});
  } else if (const PermissionGrant* g = tx.grant()) {
    apply_grant(st, *g, where);
  }
  st.new_txs.emplace(id, TxLocation{height, index});
}

void commit(ChainState& state, Staged&& st, std::shared_ptr<const Block> block, const Hash32& hash) {
  state.permission_table = std::move(st.perms);
  state.asset_index.merge(st.new_assets);
  state.tx_index.merge(st.new_txs);
  state.height_by_hash.emplace(hash, block->header.height);
  state.block_hashes.push_back(hash);
  state.blocks.push_back(std::move(block));
}

void stage_genesis_grant(Staged& st, const Block& block, const Hash32& hash) {
  const std::string where = at(0, 0);
  if (block.txs.empty()) throw Error(ErrorCode::kInvalidBlock, "genesis block has no transactions");
  const LedgerTransaction& tx = block.txs.front();
  const PermissionGrant* g = tx.grant();
  if (!g || g->subject != tx.sender || !g->subject_address || !g->granted ||
      g->permissions != PermissionSet::all() || block.header.miner != tx.sender) {
    throw Error(ErrorCode::kInvalidBlock,
                where + "genesis must open with the miner granting itself every permission");
  }
  crypto::Address recovered;
  try {
    recovered = signature_cache().recover(tx.signing_hash(), tx.signature);
  } catch (const Error&) {
    throw Error(ErrorCode::kInvalidBlock, where + "unrecoverable signature");
  }
  if (recovered != *g->subject_address) {
    throw Error(ErrorCode::kInvalidBlock, where + "genesis grant not signed by its subject");
  }
  st.perms.emplace(g->subject, NodeEntry{*g->subject_address, g->permissions});
  st.new_txs.emplace(tx.id(), TxLocation{0, 0});
  (void)hash;
}

// Fills tx_root and searches nonces from zero until the proof-of-work target is met.
void seal(Block& b, const ChainParams& params) {
  const std::vector<Hash32> ids = b.tx_ids();
  b.header.tx_root = merkle_root(ids);
  for (b.header.nonce = 0;; ++b.header.nonce) {
    if (leading_zero_hex(compute_block_hash(b.header)) >= params.difficulty) return;
  }
}

}  // namespace

bool ChainState::has_permission(const NodeId& node, Permission p) const {
  auto it = permission_table.find(node);
  return it != permission_table.end() && it->second.permissions.has(p);
}

std::optional<NodeEntry> ChainState::node(const NodeId& node) const {
  auto it = permission_table.find(node);
  if (it == permission_table.end()) return std::nullopt;
  return it->second;
}

const LedgerTransaction* ChainState::find_tx(const Hash32& id) const {
  auto it = tx_index.find(id);
  if (it == tx_index.end()) return nullptr;
  return &blocks[it->second.height]->txs[it->second.index];
}

bool ChainState::same_derived_state(const ChainState& o) const {
  return params.difficulty == o.params.difficulty && block_hashes == o.block_hashes &&
         asset_index == o.asset_index && permission_table == o.permission_table &&
         tx_index == o.tx_index && height_by_hash == o.height_by_hash;
}

void append_block_in_place(ChainState& state, std::shared_ptr<const Block> block_ptr) {
  const Block& block = *block_ptr;
  const BlockHeader& h = block.header;
  const bool genesis = state.empty();

  if (genesis) {
    if (h.height != 0 || !h.prev_hash.is_zero()) {
      throw Error(ErrorCode::kInvalidBlock, "genesis must have height 0 and a zero parent hash");
    }
  } else {
    if (h.height != state.height() + 1 || h.prev_hash != state.tip_hash()) {
      throw Error(ErrorCode::kStaleParent, "block " + std::to_string(h.height) +
                                               " does not extend tip " + std::to_string(state.height()));
    }
    if (h.timestamp < state.tip().header.timestamp) {
      throw Error(ErrorCode::kInvalidBlock,
                  "block " + std::to_string(h.height) + " timestamp precedes its parent");
    }
  }

  const Hash32 hash = compute_block_hash(h);
  if (leading_zero_hex(hash) < state.params.difficulty) {
    throw Error(ErrorCode::kInvalidProof, "block " + std::to_string(h.height) + " fails proof of work");
  }
  const std::vector<Hash32> ids = block.tx_ids();
  if (merkle_root(ids) != h.tx_root) {
    throw Error(ErrorCode::kInvalidBlock, "block " + std::to_string(h.height) + " tx_root mismatch");
  }

  Staged st(state);
  std::uint32_t first = 0;
  if (genesis) {
    stage_genesis_grant(st, block, hash);
    first = 1;
  } else if (!st.allowed(h.miner, Permission::kMine)) {
    throw Error(ErrorCode::kPermissionDenied,
                "block " + std::to_string(h.height) + " miner " + h.miner + " lacks mine permission");
  }
  for (std::uint32_t i = first; i < block.txs.size(); ++i) {
    stage_tx(st, block.txs[i], ids[i], h.height, i, hash, h.timestamp);
  }
  commit(state, std::move(st), std::move(block_ptr), hash);
}

ChainState append_block(const ChainState& state, const Block& block) {
  ChainState next = state;
  append_block_in_place(next, std::make_shared<const Block>(block));
  return next;
}

ChainState rebuild_state(std::span<const Block> blocks, const ChainParams& params) {
  ChainState state;
  state.params = params;
  for (const Block& b : blocks) append_block_in_place(state, std::make_shared<const Block>(b));
  return state;
}

Block make_genesis(const NodeId& master, const crypto::PrivateKey& master_key,
                   std::int64_t timestamp, const ChainParams& params) {
  PermissionGrant g{master, master_key.address(), PermissionSet::all(), true};
  Block b;
  b.header.timestamp = timestamp;
  b.header.miner = master;
  b.txs.push_back(sign_transaction(master, timestamp * 1000, g, master_key));
  seal(b, params);
  return b;
}

Block mine_block(std::vector<LedgerTransaction> pending, const BlockHeader& parent,
                 const ChainParams& params, const NodeId& miner, std::int64_t timestamp) {
  std::set<std::string> seen;
  for (const auto& tx : pending) {
    if (const AssetRecord* a = tx.asset(); a && !seen.insert(a->md5_index).second) {
      throw Error(ErrorCode::kDuplicateAsset,
                  "pending tx " + tx.id().hex() + " repeats md5 " + a->md5_index);
    }
  }
  Block b;
  b.header.height = parent.height + 1;
  b.header.prev_hash = compute_block_hash(parent);
  b.header.timestamp = std::max(timestamp, parent.timestamp);
  b.header.miner = miner;
  b.txs = std::move(pending);
  seal(b, params);
  return b;
}

ValidationReport validate_chain(std::span<const Block> blocks, const ChainParams& params) {
  ValidationReport report;
  if (blocks.empty()) {
    return {false, 0, ErrorCode::kInvalidBlock, "empty chain"};
  }
  ChainState state;
  state.params = params;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    try {
      append_block_in_place(state, std::make_shared<const Block>(blocks[i]));
    } catch (const Error& e) {
      return {false, i, e.code(), e.what()};
    }
  }
  return report;
}

ValidationReport validate_chain_bytes(std::span<const Bytes> blocks, const ChainParams& params) {
  if (blocks.empty()) return {false, 0, ErrorCode::kInvalidBlock, "empty chain"};
  ChainState state;
  state.params = params;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    try {
      auto b = std::make_shared<const Block>(Block::deserialize(blocks[i]));
      append_block_in_place(state, std::move(b));
    } catch (const Error& e) {
      return {false, i, e.code(), e.what()};
    }
  }
  return {};
}

namespace {

void require_signer_registered(const ChainState& state, const Signer& issuer, Permission p,
                               const char* what) {
  const auto entry = state.node(issuer.id);
  if (!entry || !entry->permissions.has(p)) {
    throw Error(ErrorCode::kPermissionDenied, issuer.id + " lacks " + what + " permission");
  }
  if (entry->address != issuer.key.address()) {
    throw Error(ErrorCode::kPermissionDenied, issuer.id + " signing key is not the registered key");
  }
}

}  // namespace

LedgerTransaction issue_asset_tx(const ChainState& state, const PendingPool* pool,
                                 const AssetRecord& asset, const Signer& issuer,
                                 std::int64_t now_ms) {
  validate_asset_fields(asset);
  require_signer_registered(state, issuer, Permission::kSend, "send");
  if (state.asset_index.contains(asset.md5_index) || (pool && pool->contains_md5(asset.md5_index))) {
    throw Error(ErrorCode::kDuplicateAsset, "asset " + asset.md5_index + " already issued");
  }
  if (asset.parent_md5 && !state.asset_index.contains(*asset.parent_md5) &&
      !(pool && pool->contains_md5(*asset.parent_md5))) {
    throw Error(ErrorCode::kUnknownParent, "unknown parent asset " + *asset.parent_md5);
  }
  return sign_transaction(issuer.id, now_ms, asset, issuer.key);
}

LedgerTransaction set_permission_tx(const ChainState& state, const PermissionGrant& grant,
                                    const Signer& issuer, std::int64_t now_ms) {
  require_signer_registered(state, issuer, Permission::kAdmin, "admin");
  if (grant.subject.empty()) throw Error(ErrorCode::kValidation, "grant subject is empty");
  if (!state.permission_table.contains(grant.subject) && (!grant.granted || !grant.subject_address)) {
    throw Error(ErrorCode::kValidation, "first grant to " + grant.subject + " must register an address");
  }
  return sign_transaction(issuer.id, now_ms, grant, issuer.key);
}

LedgerTransaction node_event_tx(const ChainState& state, const NodeEvent& event,
                                const Signer& issuer, std::int64_t now_ms) {
  require_signer_registered(state, issuer, Permission::kConnect, "connect");
  return sign_transaction(issuer.id, now_ms, event, issuer.key);
}

std::optional<AssetView> query_asset(const ChainState& state, std::string_view md5) {
  if (!is_lower_hex(md5, 32)) {
    throw Error(ErrorCode::kValidation, "md5 must be exactly 32 lowercase hex characters");
  }
  auto it = state.asset_index.find(std::string(md5));
  if (it == state.asset_index.end()) return std::nullopt;
  return it->second;
}

ConfirmedTip latest_confirmed_blockhash(const ChainState& state, std::uint64_t confirm_depth) {
  if (state.blocks.size() <= confirm_depth) {
    throw Error(ErrorCode::kInsufficientDepth,
                "chain of " + std::to_string(state.blocks.size()) + " blocks is not deeper than " +
                    std::to_string(confirm_depth));
  }
  const std::uint64_t height = state.blocks.size() - 1 - confirm_depth;
  return {state.block_hashes[height], height};
}

std::vector<std::string> lineage(const ChainState& state, const std::string& md5) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  std::optional<std::string> cur = md5;
  while (cur && seen.insert(*cur).second) {
    auto it = state.asset_index.find(*cur);
    if (it == state.asset_index.end()) break;
    out.push_back(*cur);
    cur = it->second.record.parent_md5;
  }
  return out;
}

// ---- pending pool ---------------------------------------------------------

bool PendingPool::add(const LedgerTransaction& tx) {
  const Hash32 id = tx.id();
  std::lock_guard lock(mu_);
  if (ids_.contains(id)) return false;
  if (const AssetRecord* a = tx.asset()) {
    if (md5s_.contains(a->md5_index)) return false;
    md5s_.emplace(a->md5_index, id);
  }
  ids_.insert(id);
  txs_.emplace_back(id, tx);
  return true;
}

bool PendingPool::contains(const Hash32& tx_id) const {
  std::lock_guard lock(mu_);
  return ids_.contains(tx_id);
}

bool PendingPool::contains_md5(const std::string& md5) const {
  std::lock_guard lock(mu_);
  return md5s_.contains(md5);
}

std::size_t PendingPool::size() const {
  std::lock_guard lock(mu_);
  return txs_.size();
}

std::vector<LedgerTransaction> PendingPool::snapshot() const {
  std::lock_guard lock(mu_);
  std::vector<LedgerTransaction> out;
  out.reserve(txs_.size());
  for (const auto& [id, tx] : txs_) out.push_back(tx);
  return out;
}

void PendingPool::erase_locked(const Hash32& id) {
  if (!ids_.erase(id)) return;
  for (auto it = txs_.begin(); it != txs_.end(); ++it) {
    if (it->first != id) continue;
    if (const AssetRecord* a = it->second.asset()) md5s_.erase(a->md5_index);
    txs_.erase(it);
    return;
  }
}

void PendingPool::remove_included(const Block& block) {
  std::lock_guard lock(mu_);
  for (const auto& tx : block.txs) {
    erase_locked(tx.id());
    // A different tx claiming an md5 that just got confirmed can never apply.
    if (const AssetRecord* a = tx.asset()) {
      if (auto it = md5s_.find(a->md5_index); it != md5s_.end()) erase_locked(it->second);
    }
  }
}

void PendingPool::prune(const ChainState& state) {
  const std::vector<LedgerTransaction> keep = select_applicable(state, snapshot());
  std::lock_guard lock(mu_);
  std::set<Hash32> keep_ids;
  for (const auto& tx : keep) keep_ids.insert(tx.id());
  std::vector<Hash32> drop;
  for (const auto& [id, tx] : txs_) {
    if (!keep_ids.contains(id)) drop.push_back(id);
  }
  for (const Hash32& id : drop) erase_locked(id);
}

void check_transaction(const ChainState& state, const LedgerTransaction& tx, const PendingPool* pool) {
  if (state.empty()) throw Error(ErrorCode::kInvalidBlock, "no chain");
  Staged st(state);
  stage_tx(st, tx, tx.id(), state.height() + 1, 0, Hash32::zero(), 0, pool);
}

std::vector<LedgerTransaction> select_applicable(const ChainState& state,
                                                 const std::vector<LedgerTransaction>& txs) {
  std::vector<LedgerTransaction> out;
  if (state.empty()) return out;
  Staged st(state);
  for (const auto& tx : txs) {
    // stage_tx leaves the overlay untouched when it throws.
    try {
      stage_tx(st, tx, tx.id(), state.height() + 1, static_cast<std::uint32_t>(out.size()),
               Hash32::zero(), 0);
    } catch (const Error&) {
      continue;
    }
    out.push_back(tx);
  }
  return out;
}

}  // namespace provchain::ledger
