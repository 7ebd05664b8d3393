#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "provchain/common/time.hpp"
#include "provchain/ledger/ledger.hpp"
#include "provchain/ledger/pending_pool.hpp"
#include "provchain/network/message.hpp"
#include "provchain/network/transport.hpp"

namespace provchain::network {

enum class SessionState { kHandshaking, kActive, kRejected, kClosed };
std::string_view to_string(SessionState state);

struct PeerSession {
  ledger::NodeId peer_id;
  std::string remote_address;
  ledger::PermissionSet permissions;  // snapshot taken at handshake
  SessionState state = SessionState::kHandshaking;
  std::string reason;
};

struct PeerDelivery {
  ledger::NodeId peer_id;
  std::string address;
  bool ok = false;
  std::string error;
};

struct DeliveryReport {
  std::vector<PeerDelivery> peers;
  std::size_t delivered() const;
  std::size_t failed() const { return peers.size() - delivered(); }
};

struct ProtocolViolation {
  ledger::NodeId peer;
  MessageKind kind;
  std::string reason;
};

struct SyncResult {
  std::vector<ledger::Block> applied;
  bool fork_detected = false;
  bool adopted_remote = false;
  std::optional<std::string> error;
};

struct ForkResolution {
  std::vector<ledger::Block> chosen;
  bool adopted_remote = false;
  // Asset transactions only present on the losing branch.
  std::vector<ledger::LedgerTransaction> returned_to_pending;
};

// Longest valid chain wins; on equal length the local (first-seen) chain is
// kept. Throws kIncompatibleNetwork for different genesis blocks and
// kInvalidBlock when either chain fails validation.
ForkResolution resolve_fork(const std::vector<ledger::Block>& local,
                            const std::vector<ledger::Block>& remote, const ledger::ChainParams& params);

struct NodeConfig {
  ledger::NodeId id;
  crypto::PrivateKey key;
  std::string listen_address;
  std::vector<std::string> peers;  // static peer list
  std::chrono::milliseconds peer_timeout{2000};
};

// One participant in the permissioned network. Inbound messages arrive via
// handle(); every state change funnels into the Ledger's single writer.
class Node {
 public:
  Node(NodeConfig config, std::shared_ptr<ledger::Ledger> ledger, std::shared_ptr<Transport> transport,
       Clock clock = system_clock());

  const ledger::NodeId& id() const { return config_.id; }
  const std::string& address() const { return config_.listen_address; }
  ledger::Signer signer() const { return {config_.id, config_.key}; }
  std::shared_ptr<const ledger::ChainState> snapshot() const { return ledger_->snapshot(); }
  ledger::Ledger& ledger() { return *ledger_; }
  ledger::PendingPool& pending() { return pending_; }

  // Inbound entry point, suitable as a transport Handler.
  std::optional<Bytes> handle(const Bytes& envelope, const std::string& remote);

  // Dials `address`, proves our identity and checks the peer's: the session is
  // active only if the peer holds connect on our current chain.
  PeerSession handshake(const std::string& address);
  // Handshakes with every configured peer that has no active session.
  std::vector<PeerSession> connect_peers();
  std::vector<PeerSession> sessions() const;
  std::optional<PeerSession> session(const ledger::NodeId& peer) const;

  DeliveryReport propagate(const WireMessage& message);

  // Local submission paths: build, sign, add to the pending pool, broadcast.
  ledger::LedgerTransaction submit_asset(const ledger::AssetRecord& asset);
  ledger::LedgerTransaction submit_permission(const ledger::PermissionGrant& grant);
  void broadcast_transaction(const ledger::LedgerTransaction& tx);

  // Mines the applicable pending transactions (possibly none) on top of the tip.
  // Requires mine permission.
  ledger::Block mine();

  SyncResult sync_with_peer(const PeerSession& session);
  // One sync round against every active session.
  std::vector<SyncResult> sync_all();

  std::vector<ProtocolViolation> violations() const;
  std::set<ledger::NodeId> flagged_peers() const;
  // Count of inbound messages that changed local state, keyed by sender.
  std::map<ledger::NodeId, std::size_t> inbound_mutations() const;

 private:
  std::optional<Bytes> on_hello(const WireMessage& m, const std::string& remote);
  std::optional<Bytes> on_tx(const WireMessage& m);
  std::optional<Bytes> on_block(const WireMessage& m);
  std::optional<Bytes> on_get_blocks(const WireMessage& m);

  // Sender must be registered, signed correctly and hold `need`; otherwise a
  // violation is recorded and false returned.
  bool admit(const WireMessage& m, std::initializer_list<ledger::Permission> need);
  void violation(const ledger::NodeId& peer, MessageKind kind, std::string reason);
  void flag(const ledger::NodeId& peer);
  void count_mutation(const ledger::NodeId& peer);
  void after_chain_change();
  std::optional<WireMessage> request(const std::string& address, const WireMessage& m);
  std::vector<ledger::Block> fetch_blocks(const PeerSession& session, std::uint64_t from);
  WireMessage sign(MessageKind kind, Bytes body) const;

  NodeConfig config_;
  std::shared_ptr<ledger::Ledger> ledger_;
  std::shared_ptr<Transport> transport_;
  Clock clock_;
  ledger::PendingPool pending_;

  mutable std::mutex mu_;
  std::map<ledger::NodeId, PeerSession> sessions_;
  std::vector<ProtocolViolation> violations_;
  std::set<ledger::NodeId> flagged_;
  std::map<ledger::NodeId, std::size_t> mutations_;
};

}  // namespace provchain::network
