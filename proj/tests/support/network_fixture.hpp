#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "provchain/ledger/codec.hpp"
#include "provchain/network/node.hpp"
#include "support/chain_fixture.hpp"

namespace fixture {

using namespace provchain::network;

inline std::string mem_address(const std::string& id) { return "mem://" + id; }

// Answers get_blocks with a fixed list, signed as `id`.
inline Handler serve_blocks(const std::string& id, std::vector<Block> blocks) {
  return [id, blocks](const Bytes& env, const std::string&) -> std::optional<Bytes> {
    auto m = WireMessage::deserialize(env);
    if (m.kind != MessageKind::kGetBlocks) return std::nullopt;
    Writer w;
    w.u32(static_cast<std::uint32_t>(blocks.size()));
    for (const auto& b : blocks) w.bytes(b.serialize());
    return WireMessage::make(MessageKind::kBlocksReply, id, std::move(w).take(), seeded_key(id)).serialize();
  };
}

inline std::vector<Block> chain_of(const Node& n) {
  std::vector<Block> out;
  for (const auto& b : n.snapshot()->blocks) out.push_back(*b);
  return out;
}

// N nodes on a loopback network sharing one genesis; the first id is the
// master. Optionally each node persists to a block log under `log_root`.
struct Cluster {
  ChainParams params{2};
  std::shared_ptr<LoopbackNetwork> net = std::make_shared<LoopbackNetwork>();
  std::shared_ptr<std::atomic<std::int64_t>> now_ms =
      std::make_shared<std::atomic<std::int64_t>>(kGenesisTime * 1000);
  std::vector<std::string> ids;
  Block genesis;
  std::filesystem::path log_root;
  std::map<std::string, std::unique_ptr<Node>> nodes;

  explicit Cluster(std::vector<std::string> node_ids, std::filesystem::path logs = {})
      : ids(std::move(node_ids)), log_root(std::move(logs)) {
    genesis = make_genesis(ids.front(), seeded_key(ids.front()), kGenesisTime, params);
    for (const auto& id : ids) start(id);
  }

  Clock clock() const {
    auto t = now_ms;
    return [t] { return t->fetch_add(1000) + 1000; };
  }

  Node& start(const std::string& id) {
    std::shared_ptr<BlockLog> log;
    if (!log_root.empty()) {
      std::filesystem::create_directories(log_root / id);
      log = std::make_shared<BlockLog>(log_root / id);
    }
    auto ledger = std::make_shared<Ledger>(params, genesis, log);
    NodeConfig cfg{id, seeded_key(id), mem_address(id), {}, std::chrono::milliseconds(500)};
    for (const auto& other : ids) {
      if (other != id) cfg.peers.push_back(mem_address(other));
    }
    auto node = std::make_unique<Node>(cfg, ledger, net->endpoint(cfg.listen_address), clock());
    Node* raw = node.get();
    net->bind(cfg.listen_address, [raw](const Bytes& env, const std::string& remote) {
      return raw->handle(env, remote);
    });
    nodes[id] = std::move(node);
    return *raw;
  }

  void stop(const std::string& id) {
    net->unbind(mem_address(id));
    nodes.erase(id);
  }

  Node& master() { return *nodes.at(ids.front()); }
  Node& operator[](const std::string& id) { return *nodes.at(id); }

  // Master grants `perms` to `id` and mines the grant.
  void grant(const std::string& id, PermissionSet perms, bool granted = true) {
    master().submit_permission({id, seeded_key(id).address(), perms, granted});
    master().mine();
  }

  void connect_all() {
    for (auto& [_, n] : nodes) n->connect_peers();
  }

  void sync_all() {
    for (auto& [_, n] : nodes) n->sync_all();
  }
};

}  // namespace fixture
