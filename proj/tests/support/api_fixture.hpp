#pragma once

#include <filesystem>
#include <memory>

#include "provchain/api/asset_api.hpp"
#include "support/network_fixture.hpp"

namespace fixture {

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() /
           ("provchain-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// A master and a client on loopback, a funded wallet on a mock public chain,
// and the API served from the master.
struct ApiStack {
  Cluster cluster{{"master", "alice"}};
  std::filesystem::path dir;
  std::shared_ptr<anchor::MockPublicChain> mock = std::make_shared<anchor::MockPublicChain>();
  crypto::PrivateKey wallet = seeded_key("wallet");
  std::shared_ptr<anchor::AnchorService> anchors;
  std::unique_ptr<api::AssetApi> api;

  explicit ApiStack(const std::string& name, std::shared_ptr<anchor::PublicChainBackend> backend = nullptr)
      : dir(scratch_dir(name)) {
    mock->set_balance(wallet.address(), anchor::Wei(1'000'000'000'000'000'000ULL));
    auto log = std::make_shared<anchor::AnchorLog>(dir / "anchors.jsonl");
    Node& master = cluster.master();
    anchors = std::make_shared<anchor::AnchorService>([&master] { return master.snapshot(); },
                                                      backend ? backend : mock, wallet, log,
                                                      anchor::AnchorConfig{}, cluster.clock());
    api::ApiConfig cfg;
    cfg.allowlist = api::Allowlist({"10.0.0.0/8", "127.0.0.1", "fd00::/8"});
    cfg.admin_token = "s3cret";
    api = std::make_unique<api::AssetApi>(master, anchors, cfg, cluster.clock());
  }

  Node& master() { return cluster.master(); }

  // Mines until the chain is deeper than the anchor confirm depth.
  void deepen(std::size_t blocks = 7) {
    for (std::size_t i = 0; i < blocks; ++i) master().mine();
  }
};

}  // namespace fixture
