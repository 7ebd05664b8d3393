#include <catch_amalgamated.hpp>

#include "provchain/ledger/codec.hpp"
#include "support/network_fixture.hpp"

using namespace provchain;
using namespace provchain::ledger;
using namespace provchain::network;
using fixture::Cluster;
using fixture::chain_of;
using fixture::mem_address;
using fixture::serve_blocks;
using fixture::seeded_key;

namespace {

const PermissionSet kClient{Permission::kConnect, Permission::kSend, Permission::kReceive};

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kValidation;
}

std::size_t count_violations(const Node& n, const std::string& peer) {
  std::size_t c = 0;
  for (const auto& v : n.violations()) c += v.peer == peer;
  return c;
}

std::size_t mutations_from(const Node& n, const std::string& peer) {
  auto m = n.inbound_mutations();
  auto it = m.find(peer);
  return it == m.end() ? 0 : it->second;
}

}  // namespace

TEST_CASE("wire envelope round-trips and rejects tampering") {
  auto key = seeded_key("alpha");
  auto m = WireMessage::make(MessageKind::kTxBroadcast, "alpha", to_bytes("payload"), key);
  auto back = WireMessage::deserialize(m.serialize());
  CHECK(back.serialize() == m.serialize());
  CHECK(back.signed_by(key.address()));
  back.body[0] ^= 1;
  CHECK_FALSE(back.signed_by(key.address()));
  CHECK_FALSE(m.signed_by(seeded_key("beta").address()));

  Bytes bad = m.serialize();
  bad[0] = 9;
  CHECK(code_of([&] { WireMessage::deserialize(bad); }) == ErrorCode::kDecode);
  Bytes trailing = m.serialize();
  trailing.push_back(0);
  CHECK(code_of([&] { WireMessage::deserialize(trailing); }) == ErrorCode::kDecode);

  Bytes f = frame(to_bytes("abc"));
  CHECK(to_hex(f) == "00000003616263");
}

TEST_CASE("handshake admits only nodes holding connect") {
  Cluster c({"master", "alice", "mallory"});
  c.grant("alice", kClient);

  auto s = c["alice"].handshake(mem_address("master"));
  CHECK(s.state == SessionState::kActive);
  CHECK(s.peer_id == "master");
  CHECK(s.permissions == PermissionSet::all());
  auto inbound = c.master().session("alice");
  REQUIRE(inbound);
  CHECK(inbound->state == SessionState::kActive);
  CHECK(inbound->permissions == kClient);

  auto m = c["mallory"].handshake(mem_address("master"));
  CHECK(m.state == SessionState::kRejected);
  CHECK_FALSE(c.master().session("mallory"));
  CHECK(count_violations(c.master(), "mallory") == 1);

  SECTION("unreachable peer is rejected, not fatal") {
    c.net->set_down(mem_address("master"), true);
    auto down = c["alice"].handshake(mem_address("master"));
    CHECK(down.state == SessionState::kRejected);
    CHECK_FALSE(down.reason.empty());
    // The earlier session survives a failed re-dial.
    CHECK(c["alice"].session("master")->state == SessionState::kActive);
  }
}

TEST_CASE("revoking connect closes sessions and blocks reconnection") {
  Cluster c({"master", "alice"});
  c.grant("alice", kClient);
  c.connect_all();
  c.sync_all();
  REQUIRE(c.master().session("alice")->state == SessionState::kActive);

  c.grant("alice", {Permission::kConnect}, false);
  auto closed = c.master().session("alice");
  CHECK(closed->state == SessionState::kClosed);
  CHECK(closed->reason == "connect permission revoked");

  auto retry = c["alice"].handshake(mem_address("master"));
  CHECK(retry.state == SessionState::kRejected);
}

TEST_CASE("transactions and blocks propagate across three nodes") {
  Cluster c({"master", "alice", "bob"});
  c.grant("alice", kClient);
  c.grant("bob", kClient);
  c.master().connect_peers();
  c["alice"].sync_all();
  c["bob"].sync_all();
  c.connect_all();
  for (const auto& id : c.ids) {
    for (const auto& s : c[id].sessions()) CHECK(s.state == SessionState::kActive);
    CHECK(c[id].sessions().size() == 2);
  }

  auto tx = c["alice"].submit_asset(fixture::asset(1));
  for (const auto& id : c.ids) CHECK(c[id].pending().contains(tx.id()));

  auto block = c.master().mine();
  CHECK(block.txs.size() == 1);
  for (const auto& id : c.ids) {
    auto state = c[id].snapshot();
    CHECK(state->tip_hash() == block.hash());
    auto view = query_asset(*state, fixture::md5_of(1));
    REQUIRE(view);
    CHECK(view->issue_tx_id == tx.id());
    CHECK(c[id].pending().size() == 0);
  }

  SECTION("a down peer is reported without failing the broadcast") {
    c.net->set_down(mem_address("bob"), true);
    auto report = c.master().propagate(
        WireMessage::make(MessageKind::kTxBroadcast, "master", {}, seeded_key("master")));
    CHECK(report.peers.size() == 2);
    CHECK(report.delivered() == 1);
    CHECK(report.failed() == 1);
  }
}

TEST_CASE("a node without send cannot place an asset through any path") {
  Cluster c({"master", "alice", "carol"});
  c.grant("alice", kClient);
  c.grant("carol", {Permission::kConnect, Permission::kReceive});
  c.master().connect_peers();
  c.sync_all();
  c.connect_all();

  // Local API path.
  CHECK(code_of([&] { c["carol"].submit_asset(fixture::asset(7)); }) == ErrorCode::kPermissionDenied);

  // Direct broadcast of a hand-signed transaction.
  auto tx = sign_transaction("carol", 1, fixture::asset(7), seeded_key("carol"));
  auto env = WireMessage::make(MessageKind::kTxBroadcast, "carol", tx.serialize(), seeded_key("carol"));
  for (const auto& id : {"master", "alice"}) {
    CHECK_FALSE(c.net->deliver(mem_address("carol"), mem_address(id), env.serialize()));
    CHECK_FALSE(c[id].pending().contains(tx.id()));
    CHECK(mutations_from(c[id], "carol") == 0);
    CHECK(count_violations(c[id], "carol") >= 1);
  }

  // A relayed copy from a sender that does hold send is still checked.
  auto relay = WireMessage::make(MessageKind::kTxBroadcast, "alice", tx.serialize(), seeded_key("alice"));
  c.net->deliver(mem_address("alice"), mem_address("master"), relay.serialize());
  CHECK_FALSE(c.master().pending().contains(tx.id()));

  // Sync path: a block that carries the transaction is refused.
  auto tip = c.master().snapshot();
  Block forged = mine_block({tx}, tip->tip().header, c.params, "master", tip->tip().header.timestamp + 1);
  auto before = chain_of(c["alice"]);
  c.net->unbind(mem_address("carol"));
  c.net->bind(mem_address("carol"), serve_blocks("carol", {forged}));
  PeerSession rogue{"carol", mem_address("carol"), {Permission::kConnect, Permission::kReceive},
                    SessionState::kActive, {}};
  auto r = c["alice"].sync_with_peer(rogue);
  CHECK(r.applied.empty());
  CHECK(r.error);
  CHECK(c["alice"].flagged_peers().contains("carol"));
  CHECK(chain_of(c["alice"]).size() == before.size());
  CHECK_FALSE(query_asset(*c["alice"].snapshot(), fixture::md5_of(7)));

  // Block broadcast path.
  auto benv = WireMessage::make(MessageKind::kBlockBroadcast, "carol", forged.serialize(), seeded_key("carol"));
  c.net->deliver(mem_address("carol"), mem_address("master"), benv.serialize());
  CHECK_FALSE(query_asset(*c.master().snapshot(), fixture::md5_of(7)));
  CHECK(mutations_from(c.master(), "carol") == 0);
}

TEST_CASE("revoking send takes effect in the next block") {
  Cluster c({"master", "alice"});
  c.grant("alice", kClient);
  c.connect_all();
  c.sync_all();

  auto ok = c["alice"].submit_asset(fixture::asset(1));
  c.master().mine();
  REQUIRE(query_asset(*c.master().snapshot(), fixture::md5_of(1)));

  // A transaction queued behind the revocation is dropped at mining time.
  c.master().submit_permission({"alice", std::nullopt, {Permission::kSend}, false});
  auto late = c["alice"].submit_asset(fixture::asset(2));
  REQUIRE(c.master().pending().contains(late.id()));
  auto revoking = c.master().mine();
  CHECK(revoking.txs.size() == 1);
  CHECK(revoking.txs[0].grant());
  auto next = c.master().mine();
  CHECK(next.txs.empty());
  CHECK_FALSE(query_asset(*c.master().snapshot(), fixture::md5_of(2)));
  CHECK(code_of([&] { c["alice"].submit_asset(fixture::asset(3)); }) == ErrorCode::kPermissionDenied);

  // A block carrying the stale transaction is invalid after revocation.
  auto tip = c.master().snapshot();
  Block stale = mine_block({late}, tip->tip().header, c.params, "master", tip->tip().header.timestamp);
  CHECK(code_of([&] { append_block(*tip, stale); }) == ErrorCode::kPermissionDenied);
}

TEST_CASE("a late node syncs fifty blocks and the second sync is a no-op") {
  Cluster c({"master", "late"});
  c.stop("late");
  c.grant("late", kClient);
  for (int i = 1; i < 50; ++i) {
    c.master().submit_asset(fixture::asset(i));
    c.master().mine();
  }
  REQUIRE(c.master().snapshot()->height() == 50);

  Node& late = c.start("late");
  auto sessions = late.connect_peers();
  REQUIRE(sessions.size() == 1);
  REQUIRE(sessions[0].state == SessionState::kActive);
  auto r = late.sync_with_peer(sessions[0]);
  CHECK_FALSE(r.error);
  CHECK(r.applied.size() == 50);
  CHECK(late.snapshot()->tip_hash() == c.master().snapshot()->tip_hash());
  CHECK(late.snapshot()->same_derived_state(*c.master().snapshot()));

  auto again = late.sync_with_peer(sessions[0]);
  CHECK(again.applied.empty());
  CHECK_FALSE(again.error);

  // The master is never behind its own peer, so syncing from the late node is a no-op too.
  auto back = c.master().sync_with_peer(*c.master().session("late"));
  CHECK(back.applied.empty());
  CHECK_FALSE(back.error);
}

TEST_CASE("sync aborts and flags a peer serving a block that fails proof of work") {
  Cluster c({"master", "alice", "eve"});
  c.grant("alice", kClient);
  c.grant("eve", kClient);
  c.master().mine();
  auto good = chain_of(c.master());
  c.stop("master");

  std::vector<Block> served(good.begin() + 1, good.end());
  Block& bad = served.back();
  do {
    ++bad.header.nonce;
  } while (leading_zero_hex(bad.hash()) >= c.params.difficulty);

  // alice first needs eve's registration, so feed her the valid prefix directly.
  c["alice"].ledger().append(good[1]);
  c["alice"].ledger().append(good[2]);
  c.net->unbind(mem_address("eve"));
  c.net->bind(mem_address("eve"), serve_blocks("eve", {served.back()}));
  PeerSession s{"eve", mem_address("eve"), kClient, SessionState::kActive, {}};
  auto r = c["alice"].sync_with_peer(s);
  CHECK(r.applied.empty());
  REQUIRE(r.error);
  CHECK(r.error->find("proof of work") != std::string::npos);
  CHECK(c["alice"].flagged_peers().contains("eve"));
  CHECK(c["alice"].snapshot()->height() == 2);
}

TEST_CASE("resolve_fork prefers the longer chain and keeps the incumbent on ties") {
  fixture::Chain base;
  auto alice = fixture::signer("alice");
  base.admit(alice);

  fixture::Chain left = base, right = base;
  left.mine({left.issue(fixture::asset(1), alice)});
  right.mine({right.issue(fixture::asset(2), alice)});

  auto tie = resolve_fork(left.blocks, right.blocks, base.params);
  CHECK_FALSE(tie.adopted_remote);
  CHECK(tie.chosen.back().hash() == left.blocks.back().hash());
  REQUIRE(tie.returned_to_pending.size() == 1);
  CHECK(tie.returned_to_pending[0].asset()->md5_index == fixture::md5_of(2));

  right.mine({});
  right.mine({});
  auto longer = resolve_fork(left.blocks, right.blocks, base.params);
  CHECK(longer.adopted_remote);
  CHECK(longer.chosen.size() == right.blocks.size());
  REQUIRE(longer.returned_to_pending.size() == 1);
  CHECK(longer.returned_to_pending[0].asset()->md5_index == fixture::md5_of(1));

  auto same = resolve_fork(right.blocks, right.blocks, base.params);
  CHECK_FALSE(same.adopted_remote);
  CHECK(same.returned_to_pending.empty());

  fixture::Chain other;
  other.params.difficulty = 1;
  other.blocks[0] = make_genesis("other", fixture::seeded_key("other"), fixture::kGenesisTime, base.params);
  CHECK(code_of([&] { resolve_fork(left.blocks, other.blocks, base.params); }) ==
        ErrorCode::kIncompatibleNetwork);

  auto broken = right.blocks;
  broken[2].header.nonce ^= 0xffff;
  CHECK(code_of([&] { resolve_fork(left.blocks, broken, base.params); }) != ErrorCode::kIncompatibleNetwork);
}

TEST_CASE("partitioned miners converge on the longer branch after sync") {
  Cluster c({"master", "bob"});
  c.grant("bob", {Permission::kConnect, Permission::kSend, Permission::kReceive, Permission::kMine});
  c.connect_all();
  c.sync_all();
  REQUIRE(c["bob"].snapshot()->tip_hash() == c.master().snapshot()->tip_hash());

  c.net->set_down(mem_address("master"), true);
  c.net->set_down(mem_address("bob"), true);
  auto lost = c["bob"].submit_asset(fixture::asset(11));
  c["bob"].mine();
  c.master().submit_asset(fixture::asset(12));
  c.master().mine();
  c.master().mine();
  c.net->set_down(mem_address("master"), false);
  c.net->set_down(mem_address("bob"), false);

  auto r = c["bob"].sync_with_peer(*c["bob"].session("master"));
  CHECK_FALSE(r.error);
  CHECK(r.fork_detected);
  CHECK(r.adopted_remote);
  CHECK(r.applied.size() == 2);
  CHECK(c["bob"].snapshot()->tip_hash() == c.master().snapshot()->tip_hash());
  CHECK(c["bob"].pending().contains(lost.id()));

  // The master keeps its longer chain when syncing from bob.
  auto m = c.master().sync_with_peer(*c.master().session("bob"));
  CHECK_FALSE(m.adopted_remote);

  // Bob's orphaned asset lands once it is rebroadcast and mined.
  c["bob"].broadcast_transaction(lost);
  c.master().mine();
  for (const auto& id : c.ids) CHECK(query_asset(*c[id].snapshot(), fixture::md5_of(11)));
}

TEST_CASE("nodes talk over TCP") {
  fixture::ChainParams params{2};
  auto genesis = make_genesis("master", seeded_key("master"), fixture::kGenesisTime, params);
  auto tcp = std::make_shared<TcpTransport>();

  auto master_ledger = std::make_shared<Ledger>(params, genesis);
  std::unique_ptr<Node> master;
  TcpListener master_listener("127.0.0.1", 0, [&](const Bytes& e, const std::string& r) {
    return master->handle(e, r);
  });
  master = std::make_unique<Node>(NodeConfig{"master", seeded_key("master"), master_listener.address(), {},
                                             std::chrono::milliseconds(2000)},
                                  master_ledger, tcp);

  auto alice_ledger = std::make_shared<Ledger>(params, genesis);
  std::unique_ptr<Node> alice;
  TcpListener alice_listener("127.0.0.1", 0, [&](const Bytes& e, const std::string& r) {
    return alice->handle(e, r);
  });
  alice = std::make_unique<Node>(NodeConfig{"alice", seeded_key("alice"), alice_listener.address(),
                                            {master_listener.address()}, std::chrono::milliseconds(2000)},
                                 alice_ledger, tcp);

  master->submit_permission({"alice", seeded_key("alice").address(), kClient, true});
  master->mine();
  auto sessions = alice->connect_peers();
  REQUIRE(sessions.size() == 1);
  REQUIRE(sessions[0].state == SessionState::kActive);
  auto r = alice->sync_with_peer(sessions[0]);
  CHECK(r.applied.size() == 1);

  auto tx = alice->submit_asset(fixture::asset(5));
  CHECK(master->pending().contains(tx.id()));
  master->mine();
  CHECK(alice->snapshot()->tip_hash() == master->snapshot()->tip_hash());

  auto unreachable = alice->handshake("127.0.0.1:1");
  CHECK(unreachable.state == SessionState::kRejected);

  alice_listener.stop();
  master_listener.stop();
}
