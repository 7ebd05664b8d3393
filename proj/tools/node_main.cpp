#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include <json.hpp>

#include "provchain/anchor/json_rpc.hpp"
#include "provchain/anchor/service.hpp"
#include "provchain/api/http_server.hpp"
#include "provchain/common/error.hpp"
#include "provchain/ledger/block_log.hpp"
#include "provchain/ledger/ledger.hpp"
#include "provchain/network/node.hpp"

using namespace provchain;
using nlohmann::json;
using std::chrono::milliseconds;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

void log_line(const std::string& msg) {
  static std::mutex mu;
  std::lock_guard lock(mu);
  std::cerr << format_iso8601(system_now_ms()) << " " << msg << "\n";
}

std::pair<std::string, std::uint16_t> split_host_port(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::kValidation, "expected host:port, got '" + s + "'");
  const int port = std::stoi(s.substr(colon + 1));
  if (port < 0 || port > 65535) throw Error(ErrorCode::kValidation, "port out of range in '" + s + "'");
  return {s.substr(0, colon), static_cast<std::uint16_t>(port)};
}

Bytes read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + p.string());
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return Bytes(s.begin(), s.end());
}

std::string env_or_empty(const std::string& var) {
  const char* v = std::getenv(var.c_str());
  return v ? v : "";
}

// Background loop that runs `fn` every `period` until shutdown.
std::thread every(milliseconds period, std::function<void()> fn) {
  return std::thread([period, fn = std::move(fn)] {
    auto next = std::chrono::steady_clock::now() + period;
    while (!g_stop) {
      std::this_thread::sleep_for(milliseconds(50));
      if (std::chrono::steady_clock::now() < next) continue;
      next += period;
      try {
        fn();
      } catch (const std::exception& e) {
        log_line(std::string("error: ") + e.what());
      }
    }
  });
}

struct Backends {
  std::shared_ptr<anchor::PublicChainBackend> backend;
  std::vector<std::pair<std::shared_ptr<anchor::MockPublicChain>, int>> mocks;  // with block interval
};

Backends make_backends(const json& list, const crypto::Address& wallet) {
  Backends out;
  std::vector<std::shared_ptr<anchor::PublicChainBackend>> all;
  for (const auto& b : list) {
    const auto id = b.at("id").get<std::string>();
    if (b.value("mock", false)) {
      auto mock = std::make_shared<anchor::MockPublicChain>(id);
      if (b.contains("chain_id")) mock->set_chain_id(b["chain_id"].get<std::uint64_t>());
      if (b.contains("fund_wei")) mock->set_balance(wallet, anchor::parse_wei(b["fund_wei"].get<std::string>()));
      out.mocks.emplace_back(mock, b.value("block_ms", 15000));
      all.push_back(mock);
    } else {
      all.push_back(std::make_shared<anchor::JsonRpcBackend>(id, b.at("url").get<std::string>(),
                                                             milliseconds(b.value("timeout_ms", 5000))));
    }
  }
  if (all.empty()) throw Error(ErrorCode::kValidation, "anchor.backends is empty");
  out.backend = all.size() == 1 ? all.front() : std::make_shared<anchor::FallbackBackend>(all);
  return out;
}

anchor::AnchorConfig anchor_config(const json& a) {
  anchor::AnchorConfig c;
  c.confirm_depth = a.value("confirm_depth", c.confirm_depth);
  if (a.contains("fire_time")) c.fire_minute_of_day = anchor::parse_fire_time(a["fire_time"].get<std::string>());
  if (a.contains("chain_id") && !a["chain_id"].is_null()) c.chain_id = a["chain_id"].get<std::uint64_t>();
  if (a.contains("gas_price_wei") && !a["gas_price_wei"].is_null())
    c.gas_price = anchor::parse_wei(a["gas_price_wei"].get<std::string>());
  if (a.contains("gas_limit") && !a["gas_limit"].is_null()) c.gas_limit = a["gas_limit"].get<std::uint64_t>();
  c.use_backend_estimate = a.value("use_backend_estimate", false);
  c.usd_per_eth = a.value("usd_per_eth", 0.0);
  c.explorer_tx_url = a.value("explorer_tx_url", c.explorer_tx_url);
  return c;
}

// Grants listed in the config that the chain does not reflect yet.
void submit_bootstrap_grants(network::Node& node, const json& grants) {
  const auto state = node.snapshot();
  for (const auto& g : grants) {
    ledger::PermissionGrant grant;
    grant.subject = g.at("id").get<std::string>();
    grant.subject_address = crypto::Address::from_hex(g.at("address").get<std::string>());
    grant.permissions = ledger::PermissionSet::parse(g.at("permissions").get<std::vector<std::string>>());
    grant.granted = g.value("granted", true);
    auto it = state->permission_table.find(grant.subject);
    if (it != state->permission_table.end() && it->second.permissions == grant.permissions) continue;
    node.submit_permission(grant);
    log_line("queued grant for " + grant.subject);
  }
}

int run(const std::filesystem::path& config_path) {
  json cfg;
  {
    std::ifstream in(config_path);
    if (!in) throw Error(ErrorCode::kIo, "cannot read " + config_path.string());
    cfg = json::parse(in);
  }
  const auto base = config_path.parent_path();
  auto resolve = [&](const std::string& p) { return std::filesystem::path(p).is_absolute() ? std::filesystem::path(p) : base / p; };

  ledger::ChainParams params{cfg.value("difficulty", 2u)};
  const auto genesis = ledger::Block::deserialize(read_file(resolve(cfg.at("genesis").get<std::string>())));
  const auto data_dir = resolve(cfg.value("data_dir", "data"));
  std::filesystem::create_directories(data_dir / "blocks");
  auto ledger_ = std::make_shared<ledger::Ledger>(params, genesis, std::make_shared<ledger::BlockLog>(data_dir / "blocks"));

  network::NodeConfig ncfg{cfg.at("id").get<std::string>(),
                           anchor::wallet_key_from_env(cfg.value("node_key_env", "PROVCHAIN_NODE_KEY").c_str()),
                           {}, {}, milliseconds(cfg.value("peer_timeout_ms", 2000))};
  const auto listen = cfg.at("listen").get<std::string>();
  ncfg.listen_address = cfg.value("advertise", listen);
  ncfg.peers = cfg.value("peers", std::vector<std::string>{});

  std::unique_ptr<network::Node> node;
  const auto [host, port] = split_host_port(listen);
  network::TcpListener listener(host, port, [&node](const Bytes& env, const std::string& remote) {
    return node ? node->handle(env, remote) : std::nullopt;
  });
  node = std::make_unique<network::Node>(ncfg, ledger_, std::make_shared<network::TcpTransport>());
  log_line("node " + ncfg.id + " listening on " + listener.address() + ", height " +
           std::to_string(node->snapshot()->height()));

  if (cfg.contains("grants")) submit_bootstrap_grants(*node, cfg["grants"]);

  std::shared_ptr<anchor::AnchorService> anchors;
  Backends backends;
  if (cfg.contains("anchor")) {
    const auto& a = cfg["anchor"];
    const auto wallet = anchor::wallet_key_from_env(a.value("wallet_key_env", "PROVCHAIN_WALLET_KEY").c_str());
    backends = make_backends(a.at("backends"), wallet.address());
    auto log = std::make_shared<anchor::AnchorLog>(resolve(a.value("log", "anchors.jsonl")));
    network::Node* n = node.get();
    anchors = std::make_shared<anchor::AnchorService>([n] { return n->snapshot(); }, backends.backend, wallet, log,
                                                      anchor_config(a));
    log_line("anchoring from wallet " + anchors->wallet_address().hex() + " via " + backends.backend->id());
  }

  std::unique_ptr<api::AssetApi> asset_api;
  std::unique_ptr<api::HttpServer> http;
  if (cfg.contains("api")) {
    const auto& a = cfg["api"];
    api::ApiConfig acfg;
    acfg.allowlist = api::Allowlist(a.value("allowlist", std::vector<std::string>{"127.0.0.1", "::1"}));
    acfg.admin_token = env_or_empty(a.value("admin_token_env", "PROVCHAIN_ADMIN_TOKEN"));
    acfg.default_page_size = a.value("default_page_size", acfg.default_page_size);
    acfg.max_page_size = a.value("max_page_size", acfg.max_page_size);
    std::shared_ptr<api::RequestLog> rlog;
    if (a.contains("request_log")) rlog = std::make_shared<api::RequestLog>(resolve(a["request_log"].get<std::string>()));
    asset_api = std::make_unique<api::AssetApi>(*node, anchors, acfg);
    const auto [ahost, aport] = split_host_port(a.value("listen", "127.0.0.1:8080"));
    http = std::make_unique<api::HttpServer>(*asset_api, ahost, aport, rlog);
    log_line("api on " + http->url());
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  std::vector<std::thread> loops;
  loops.push_back(every(milliseconds(cfg.value("sync_interval_ms", 5000)), [&] {
    if (node->sessions().size() < ncfg.peers.size()) node->connect_peers();
    for (const auto& r : node->sync_all()) {
      if (!r.applied.empty()) log_line("synced " + std::to_string(r.applied.size()) + " blocks");
      if (r.error) log_line("sync error: " + *r.error);
    }
  }));
  const int mine_ms = cfg.value("mine_interval_ms", 10000);
  const bool mine_empty = cfg.value("mine_empty", false);
  if (mine_ms > 0) {
    loops.push_back(every(milliseconds(mine_ms), [&] {
      const auto state = node->snapshot();
      auto it = state->permission_table.find(ncfg.id);
      if (it == state->permission_table.end() || !it->second.permissions.has(ledger::Permission::kMine)) return;
      if (node->pending().size() == 0 && !mine_empty) return;
      const auto b = node->mine();
      log_line("mined block " + std::to_string(b.header.height) + " " + b.hash().hex() + " with " +
               std::to_string(b.txs.size()) + " txs");
    }));
  }
  if (anchors) {
    loops.push_back(every(milliseconds(cfg["anchor"].value("tick_interval_ms", 30000)), [&] {
      if (auto r = anchors->tick()) {
        log_line("anchored height " + std::to_string(r->private_height) + " in 0x" + r->eth_tx_hash.hex());
      }
    }));
    for (auto& [mock, block_ms] : backends.mocks) {
      if (block_ms > 0) loops.push_back(every(milliseconds(block_ms), [m = mock] { m->step(); }));
    }
  }

  while (!g_stop) std::this_thread::sleep_for(milliseconds(100));
  log_line("shutting down");
  for (auto& t : loops) t.join();
  if (http) http->stop();
  listener.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Permissioned provenance ledger node"};
  app.require_subcommand(1);

  std::string config;
  auto* run_cmd = app.add_subcommand("run", "Run a node from a JSON config");
  run_cmd->add_option("config", config, "Config file")->required()->check(CLI::ExistingFile);

  std::string id = "master", out = "genesis.bin", key_env = "PROVCHAIN_NODE_KEY";
  unsigned difficulty = 2;
  std::int64_t time_s = system_now_ms() / 1000;
  auto* init = app.add_subcommand("init", "Create a genesis block signed by the master key");
  init->add_option("--id", id, "Master node id")->capture_default_str();
  init->add_option("--out", out, "Where to write the genesis block")->capture_default_str();
  init->add_option("--difficulty", difficulty, "Leading zero hex characters")->capture_default_str();
  init->add_option("--time", time_s, "Genesis timestamp, Unix seconds");
  init->add_option("--key-env", key_env, "Variable holding the master key")->capture_default_str();

  auto* keygen = app.add_subcommand("keygen", "Print a fresh node key and its address");
  auto* address = app.add_subcommand("address", "Print the address of the key in the environment");
  address->add_option("--key-env", key_env, "Variable holding the key")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd) return run(config);
    if (*init) {
      const auto key = anchor::wallet_key_from_env(key_env.c_str());
      const auto g = ledger::make_genesis(id, key, time_s, ledger::ChainParams{difficulty});
      const auto bytes = g.serialize();
      std::ofstream(out, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                                 static_cast<std::streamsize>(bytes.size()));
      std::cout << "genesis " << g.hash().hex() << " for " << id << " (" << key.address().hex() << ")\n";
      return 0;
    }
    if (*keygen) {
      const auto key = crypto::PrivateKey::random();
      std::cout << "key " << to_hex(key.scalar()) << "\naddress " << key.address().hex() << "\n";
      return 0;
    }
    if (*address) {
      std::cout << anchor::wallet_key_from_env(key_env.c_str()).address().hex() << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
