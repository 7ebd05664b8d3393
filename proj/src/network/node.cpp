#include "provchain/network/node.hpp"

#include <openssl/rand.h>

#include <algorithm>
#include <future>

#include "provchain/common/error.hpp"
#include "provchain/ledger/codec.hpp"

namespace provchain::network {

using ledger::Block;
using ledger::ChainState;
using ledger::Permission;

std::string_view to_string(SessionState state) {
  switch (state) {
    case SessionState::kHandshaking: return "handshaking";
    case SessionState::kActive: return "active";
    case SessionState::kRejected: return "rejected";
    case SessionState::kClosed: return "closed";
  }
  return "unknown";
}

std::size_t DeliveryReport::delivered() const {
  return static_cast<std::size_t>(
      std::count_if(peers.begin(), peers.end(), [](const PeerDelivery& d) { return d.ok; }));
}

namespace {

std::string_view permission_name(Permission p) {
  switch (p) {
    case Permission::kConnect: return "connect";
    case Permission::kSend: return "send";
    case Permission::kReceive: return "receive";
    case Permission::kMine: return "mine";
    case Permission::kAdmin: return "admin";
  }
  return "unknown";
}

Hash32 random_challenge() {
  Hash32 c;
  if (RAND_bytes(c.bytes.data(), static_cast<int>(c.bytes.size())) != 1) {
    throw Error(ErrorCode::kKey, "random source failed");
  }
  return c;
}

Bytes encode_blocks(const ChainState& state, std::uint64_t from) {
  ledger::Writer w;
  const std::uint64_t n = state.blocks.size();
  const std::uint64_t count = from < n ? n - from : 0;
  w.u32(static_cast<std::uint32_t>(count));
  for (std::uint64_t h = from; h < n; ++h) w.bytes(state.blocks[h]->serialize());
  return std::move(w).take();
}

std::vector<Block> decode_blocks(ByteView body) {
  ledger::Reader r(body);
  const std::uint32_t count = r.u32();
  std::vector<Block> out;
  out.reserve(std::min<std::uint32_t>(count, 4096));
  for (std::uint32_t i = 0; i < count; ++i) out.push_back(Block::deserialize(r.bytes()));
  r.finish();
  return out;
}

}  // namespace

ForkResolution resolve_fork(const std::vector<Block>& local, const std::vector<Block>& remote,
                            const ledger::ChainParams& params) {
  if (local.empty() || remote.empty()) throw Error(ErrorCode::kValidation, "empty chain");
  if (local.front().hash() != remote.front().hash()) {
    throw Error(ErrorCode::kIncompatibleNetwork, "chains have different genesis blocks");
  }
  for (const auto* chain : {&local, &remote}) {
    auto report = ledger::validate_chain(*chain, params);
    if (!report.valid) {
      throw Error(report.code.value_or(ErrorCode::kInvalidBlock),
                  std::string(chain == &local ? "local" : "remote") + " chain invalid at height " +
                      std::to_string(report.failed_height.value_or(0)) + ": " + report.reason);
    }
  }

  ForkResolution out;
  out.adopted_remote = remote.size() > local.size();
  out.chosen = out.adopted_remote ? remote : local;
  const auto& loser = out.adopted_remote ? local : remote;

  std::set<Hash32> kept;
  for (const auto& b : out.chosen)
    for (const auto& tx : b.txs) kept.insert(tx.id());
  for (const auto& b : loser) {
    for (const auto& tx : b.txs) {
      if (tx.asset() && !kept.contains(tx.id())) out.returned_to_pending.push_back(tx);
    }
  }
  return out;
}

Node::Node(NodeConfig config, std::shared_ptr<ledger::Ledger> ledger, std::shared_ptr<Transport> transport,
           Clock clock)
    : config_(std::move(config)),
      ledger_(std::move(ledger)),
      transport_(std::move(transport)),
      clock_(std::move(clock)) {}

WireMessage Node::sign(MessageKind kind, Bytes body) const {
  return WireMessage::make(kind, config_.id, std::move(body), config_.key);
}

void Node::violation(const ledger::NodeId& peer, MessageKind kind, std::string reason) {
  std::lock_guard lock(mu_);
  violations_.push_back({peer, kind, std::move(reason)});
}

void Node::flag(const ledger::NodeId& peer) {
  std::lock_guard lock(mu_);
  flagged_.insert(peer);
}

void Node::count_mutation(const ledger::NodeId& peer) {
  std::lock_guard lock(mu_);
  ++mutations_[peer];
}

std::vector<ProtocolViolation> Node::violations() const {
  std::lock_guard lock(mu_);
  return violations_;
}

std::set<ledger::NodeId> Node::flagged_peers() const {
  std::lock_guard lock(mu_);
  return flagged_;
}

std::map<ledger::NodeId, std::size_t> Node::inbound_mutations() const {
  std::lock_guard lock(mu_);
  return mutations_;
}

std::vector<PeerSession> Node::sessions() const {
  std::lock_guard lock(mu_);
  std::vector<PeerSession> out;
  for (const auto& [_, s] : sessions_) out.push_back(s);
  return out;
}

std::optional<PeerSession> Node::session(const ledger::NodeId& peer) const {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(peer);
  if (it == sessions_.end()) return std::nullopt;
  return it->second;
}

bool Node::admit(const WireMessage& m, std::initializer_list<Permission> need) {
  auto state = ledger_->snapshot();
  auto entry = state->node(m.sender);
  if (!entry) {
    violation(m.sender, m.kind, "unknown sender");
    return false;
  }
  if (!m.signed_by(entry->address)) {
    violation(m.sender, m.kind, "signature does not match registered key");
    return false;
  }
  for (Permission p : need) {
    if (!entry->permissions.has(p)) {
      violation(m.sender, m.kind, "sender lacks " + std::string(permission_name(p)) + " permission");
      return false;
    }
  }
  return true;
}

std::optional<Bytes> Node::handle(const Bytes& envelope, const std::string& remote) {
  WireMessage m;
  try {
    m = WireMessage::deserialize(envelope);
  } catch (const Error& e) {
    violation(remote, MessageKind::kHello, std::string("undecodable envelope: ") + e.what());
    return std::nullopt;
  }
  switch (m.kind) {
    case MessageKind::kHello: return on_hello(m, remote);
    case MessageKind::kTxBroadcast: return on_tx(m);
    case MessageKind::kBlockBroadcast: return on_block(m);
    case MessageKind::kGetBlocks: return on_get_blocks(m);
    case MessageKind::kHelloAck:
    case MessageKind::kBlocksReply:
      violation(m.sender, m.kind, "unsolicited reply");
      return std::nullopt;
  }
  return std::nullopt;
}

std::optional<Bytes> Node::on_hello(const WireMessage& m, const std::string& remote) {
  Hash32 challenge;
  std::string listen;
  try {
    ledger::Reader r(m.body);
    challenge = r.hash32();
    listen = r.str(1024);
    r.finish();
  } catch (const Error&) {
    violation(m.sender, m.kind, "malformed hello");
    return std::nullopt;
  }
  if (!admit(m, {Permission::kConnect})) return std::nullopt;

  const auto entry = ledger_->snapshot()->node(m.sender);
  {
    std::lock_guard lock(mu_);
    auto& s = sessions_[m.sender];
    s.peer_id = m.sender;
    s.remote_address = listen.empty() ? remote : listen;
    s.permissions = entry->permissions;
    s.state = SessionState::kActive;
    s.reason.clear();
  }
  ledger::Writer w;
  w.bytes(challenge.view()).str(config_.listen_address);
  return sign(MessageKind::kHelloAck, std::move(w).take()).serialize();
}

std::optional<Bytes> Node::on_tx(const WireMessage& m) {
  if (!admit(m, {Permission::kConnect, Permission::kSend})) return std::nullopt;
  ledger::LedgerTransaction tx;
  try {
    tx = ledger::LedgerTransaction::deserialize(m.body);
  } catch (const Error& e) {
    violation(m.sender, m.kind, std::string("malformed transaction: ") + e.what());
    return std::nullopt;
  }
  auto state = ledger_->snapshot();
  const Hash32 id = tx.id();
  if (pending_.contains(id) || state->tx_index.contains(id)) return std::nullopt;
  try {
    ledger::check_transaction(*state, tx, &pending_);
  } catch (const Error& e) {
    violation(m.sender, m.kind, std::string("rejected transaction: ") + e.what());
    return std::nullopt;
  }
  if (pending_.add(tx)) count_mutation(m.sender);
  return std::nullopt;
}

std::optional<Bytes> Node::on_block(const WireMessage& m) {
  if (!admit(m, {Permission::kConnect})) return std::nullopt;
  Block block;
  try {
    block = Block::deserialize(m.body);
  } catch (const Error& e) {
    violation(m.sender, m.kind, std::string("malformed block: ") + e.what());
    flag(m.sender);
    return std::nullopt;
  }
  auto state = ledger_->snapshot();
  if (state->height_by_hash.contains(block.hash())) return std::nullopt;
  // Only direct extensions are applied inline; anything else waits for sync.
  if (block.header.height != state->height() + 1 || block.header.prev_hash != state->tip_hash()) {
    return std::nullopt;
  }
  try {
    ledger_->append(block);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kStaleParent) return std::nullopt;
    violation(m.sender, m.kind, std::string("invalid block: ") + e.what());
    flag(m.sender);
    return std::nullopt;
  }
  count_mutation(m.sender);
  pending_.remove_included(block);
  after_chain_change();
  return std::nullopt;
}

std::optional<Bytes> Node::on_get_blocks(const WireMessage& m) {
  if (!admit(m, {Permission::kConnect, Permission::kReceive})) return std::nullopt;
  std::uint64_t from = 0;
  try {
    ledger::Reader r(m.body);
    from = r.u64();
    r.finish();
  } catch (const Error&) {
    violation(m.sender, m.kind, "malformed block request");
    return std::nullopt;
  }
  return sign(MessageKind::kBlocksReply, encode_blocks(*ledger_->snapshot(), from)).serialize();
}

void Node::after_chain_change() {
  auto state = ledger_->snapshot();
  pending_.prune(*state);
  std::lock_guard lock(mu_);
  for (auto& [peer, s] : sessions_) {
    if (s.state != SessionState::kActive) continue;
    if (!state->has_permission(peer, Permission::kConnect)) {
      s.state = SessionState::kClosed;
      s.reason = "connect permission revoked";
    }
  }
}

std::optional<WireMessage> Node::request(const std::string& address, const WireMessage& m) {
  auto reply = transport_->exchange(address, m.serialize(), config_.peer_timeout);
  if (!reply) return std::nullopt;
  return WireMessage::deserialize(*reply);
}

PeerSession Node::handshake(const std::string& address) {
  PeerSession s;
  s.remote_address = address;
  s.state = SessionState::kHandshaking;

  auto reject = [&](std::string key, std::string reason) {
    s.state = SessionState::kRejected;
    s.reason = std::move(reason);
    if (key.empty()) key = address;
    s.peer_id = s.peer_id.empty() ? key : s.peer_id;
    std::lock_guard lock(mu_);
    auto it = sessions_.find(key);
    // A failed re-dial does not tear down a session the peer opened to us.
    if (it == sessions_.end() || it->second.state != SessionState::kActive) sessions_[key] = s;
    return s;
  };

  const Hash32 challenge = random_challenge();
  ledger::Writer w;
  w.bytes(challenge.view()).str(config_.listen_address);
  std::optional<WireMessage> ack;
  try {
    ack = request(address, sign(MessageKind::kHello, std::move(w).take()));
  } catch (const Error& e) {
    return reject("", e.what());
  }
  if (!ack) return reject("", "peer refused the handshake");
  if (ack->kind != MessageKind::kHelloAck) return reject("", "unexpected reply to hello");

  Hash32 echoed;
  try {
    ledger::Reader r(ack->body);
    echoed = r.hash32();
    r.str(1024);
    r.finish();
  } catch (const Error&) {
    return reject(ack->sender, "malformed hello_ack");
  }
  s.peer_id = ack->sender;
  if (echoed != challenge) return reject(ack->sender, "challenge not echoed");

  auto entry = ledger_->snapshot()->node(ack->sender);
  if (!entry) return reject(ack->sender, "unknown identity");
  if (!ack->signed_by(entry->address)) return reject(ack->sender, "challenge signature invalid");
  if (!entry->permissions.has(Permission::kConnect)) return reject(ack->sender, "peer lacks connect permission");

  s.permissions = entry->permissions;
  s.state = SessionState::kActive;
  std::lock_guard lock(mu_);
  sessions_[s.peer_id] = s;
  return s;
}

std::vector<PeerSession> Node::connect_peers() {
  std::set<std::string> active;
  for (const auto& s : sessions()) {
    if (s.state == SessionState::kActive) active.insert(s.remote_address);
  }
  std::vector<PeerSession> out;
  for (const auto& peer : config_.peers) {
    if (peer == config_.listen_address || active.contains(peer)) continue;
    out.push_back(handshake(peer));
  }
  return out;
}

DeliveryReport Node::propagate(const WireMessage& message) {
  std::vector<PeerSession> targets;
  for (auto& s : sessions()) {
    if (s.state == SessionState::kActive) targets.push_back(std::move(s));
  }
  const Bytes envelope = message.serialize();
  std::vector<std::future<void>> pending;
  pending.reserve(targets.size());
  for (const auto& t : targets) {
    pending.push_back(std::async(std::launch::async, [this, &envelope, address = t.remote_address] {
      transport_->exchange(address, envelope, config_.peer_timeout);
    }));
  }
  DeliveryReport report;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    PeerDelivery d{targets[i].peer_id, targets[i].remote_address, true, {}};
    try {
      pending[i].get();
    } catch (const std::exception& e) {
      d.ok = false;
      d.error = e.what();
    }
    report.peers.push_back(std::move(d));
  }
  return report;
}

void Node::broadcast_transaction(const ledger::LedgerTransaction& tx) {
  propagate(sign(MessageKind::kTxBroadcast, tx.serialize()));
}

ledger::LedgerTransaction Node::submit_asset(const ledger::AssetRecord& asset) {
  auto tx = ledger::issue_asset_tx(*ledger_->snapshot(), &pending_, asset, signer(), clock_());
  if (!pending_.add(tx)) throw Error(ErrorCode::kDuplicateAsset, "asset " + asset.md5_index + " already pending");
  broadcast_transaction(tx);
  return tx;
}

ledger::LedgerTransaction Node::submit_permission(const ledger::PermissionGrant& grant) {
  auto tx = ledger::set_permission_tx(*ledger_->snapshot(), grant, signer(), clock_());
  if (!pending_.add(tx)) throw Error(ErrorCode::kValidation, "permission change already pending");
  broadcast_transaction(tx);
  return tx;
}

Block Node::mine() {
  auto state = ledger_->snapshot();
  if (!state->has_permission(config_.id, Permission::kMine)) {
    throw Error(ErrorCode::kPermissionDenied, config_.id + " lacks mine permission");
  }
  auto txs = ledger::select_applicable(*state, pending_.snapshot());
  const auto& parent = state->tip().header;
  const std::int64_t ts = std::max<std::int64_t>(parent.timestamp, clock_() / 1000);
  Block block = ledger::mine_block(std::move(txs), parent, ledger_->params(), config_.id, ts);
  ledger_->append(block);
  pending_.remove_included(block);
  after_chain_change();
  propagate(sign(MessageKind::kBlockBroadcast, block.serialize()));
  return block;
}

std::vector<Block> Node::fetch_blocks(const PeerSession& session, std::uint64_t from) {
  ledger::Writer w;
  w.u64(from);
  auto reply = request(session.remote_address, sign(MessageKind::kGetBlocks, std::move(w).take()));
  if (!reply) throw Error(ErrorCode::kRejected, "peer refused the block request");
  if (reply->kind != MessageKind::kBlocksReply || reply->sender != session.peer_id) {
    throw Error(ErrorCode::kDecode, "unexpected reply to block request");
  }
  auto entry = ledger_->snapshot()->node(session.peer_id);
  if (!entry || !reply->signed_by(entry->address)) {
    throw Error(ErrorCode::kPermissionDenied, "block reply not signed by the peer");
  }
  return decode_blocks(reply->body);
}

SyncResult Node::sync_with_peer(const PeerSession& session) {
  SyncResult result;
  if (session.state != SessionState::kActive) {
    result.error = "session not active";
    return result;
  }
  auto fail = [&](const std::string& why, bool blame) {
    result.error = why;
    if (blame) {
      violation(session.peer_id, MessageKind::kBlocksReply, why);
      flag(session.peer_id);
    }
    return result;
  };

  auto state = ledger_->snapshot();
  std::vector<Block> incoming;
  try {
    incoming = fetch_blocks(session, state->height() + 1);
  } catch (const Error& e) {
    return fail(e.what(), e.code() == ErrorCode::kDecode);
  }
  if (incoming.empty()) return result;

  const auto& first = incoming.front().header;
  if (first.height == state->height() + 1 && first.prev_hash == state->tip_hash()) {
    for (const auto& block : incoming) {
      try {
        ledger_->append(block);
      } catch (const Error& e) {
        if (!result.applied.empty()) after_chain_change();
        return fail("peer served an invalid block at height " + std::to_string(block.header.height) + ": " +
                        e.what(),
                    e.code() != ErrorCode::kStaleParent);
      }
      pending_.remove_included(block);
      result.applied.push_back(block);
    }
    after_chain_change();
    return result;
  }

  // The peer's chain diverges from ours below our tip.
  result.fork_detected = true;
  std::vector<Block> remote;
  try {
    remote = fetch_blocks(session, 0);
  } catch (const Error& e) {
    return fail(e.what(), e.code() == ErrorCode::kDecode);
  }
  std::vector<Block> local;
  local.reserve(state->blocks.size());
  for (const auto& b : state->blocks) local.push_back(*b);

  ForkResolution resolution;
  try {
    resolution = resolve_fork(local, remote, ledger_->params());
  } catch (const Error& e) {
    return fail(e.what(), true);
  }
  if (!resolution.adopted_remote) return result;

  try {
    ledger_->replace_chain(resolution.chosen);
  } catch (const Error& e) {
    return fail(e.what(), false);
  }
  result.adopted_remote = true;
  std::size_t common = 0;
  while (common < local.size() && common < remote.size() && local[common].hash() == remote[common].hash()) {
    ++common;
  }
  result.applied.assign(remote.begin() + static_cast<std::ptrdiff_t>(common), remote.end());
  for (const auto& b : result.applied) pending_.remove_included(b);

  auto now = ledger_->snapshot();
  for (const auto& tx : resolution.returned_to_pending) {
    try {
      ledger::check_transaction(*now, tx, &pending_);
      pending_.add(tx);
    } catch (const Error&) {
    }
  }
  after_chain_change();
  return result;
}

std::vector<SyncResult> Node::sync_all() {
  std::vector<SyncResult> out;
  for (const auto& s : sessions()) {
    if (s.state == SessionState::kActive) out.push_back(sync_with_peer(s));
  }
  return out;
}

}  // namespace provchain::network
