#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <thread>

#include "provchain/anchor/json_rpc.hpp"
#include "provchain/common/error.hpp"

using namespace provchain;
using namespace provchain::anchor;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"In-memory public chain served over Ethereum JSON-RPC, for tests and demos"};
  std::string host = "127.0.0.1";
  std::uint16_t port = 8545;
  std::string id = "mock";
  std::optional<std::uint64_t> chain_id;
  std::vector<std::string> funds;
  int block_ms = 0;
  app.add_option("--host", host)->capture_default_str();
  app.add_option("--port", port, "0 picks a free port")->capture_default_str();
  app.add_option("--id", id, "Backend id reported to clients")->capture_default_str();
  app.add_option("--chain-id", chain_id, "Require EIP-155 signatures for this chain id");
  app.add_option("--fund", funds, "ADDRESS=WEI starting balance (repeatable)");
  app.add_option("--block-ms", block_ms, "Mine a block this often; 0 mines only on evm_mine")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    auto chain = std::make_shared<MockPublicChain>(id);
    chain->set_chain_id(chain_id);
    for (const auto& f : funds) {
      const auto eq = f.find('=');
      if (eq == std::string::npos) throw Error(ErrorCode::kValidation, "--fund expects ADDRESS=WEI");
      chain->set_balance(crypto::Address::from_hex(f.substr(0, eq)), parse_wei(f.substr(eq + 1)));
    }
    MockRpcServer server(chain, host, port);
    std::cout << "listening " << server.url() << std::endl;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    auto next_block = std::chrono::steady_clock::now() + std::chrono::milliseconds(block_ms);
    while (!g_stop) {
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
      if (block_ms > 0 && std::chrono::steady_clock::now() >= next_block) {
        chain->step();
        next_block += std::chrono::milliseconds(block_ms);
      }
    }
    server.stop();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
