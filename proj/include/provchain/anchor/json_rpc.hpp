#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <thread>

#include "provchain/anchor/backend.hpp"

namespace provchain::anchor {

// An Ethereum JSON-RPC endpoint over plain HTTP ("http://host:port[/path]").
// Transport failures and non-200 replies are connection errors; JSON-RPC
// error objects are rejections.
class JsonRpcBackend : public PublicChainBackend {
 public:
  JsonRpcBackend(std::string id, std::string url,
                 std::chrono::milliseconds timeout = std::chrono::milliseconds(5000));

  std::string id() const override { return id_; }
  std::uint64_t get_nonce(const crypto::Address& address) override;
  Wei get_balance(const crypto::Address& address) override;
  std::uint64_t estimate_gas(const EthTransaction& tx, const crypto::Address& from) override;
  Wei gas_price() override;
  SendResult send_raw_transaction(ByteView raw) override;
  std::optional<Receipt> get_receipt(const Hash32& tx_hash) override;
  std::optional<SignedEthTransaction> get_transaction(const Hash32& tx_hash) override;
  std::uint64_t head_height() override;

  const std::string& url() const { return url_; }

 private:
  struct Impl;
  std::string id_;
  std::string url_;
  std::shared_ptr<Impl> impl_;
};

// Serves a MockPublicChain over the JSON-RPC verbs JsonRpcBackend uses, plus
// evm_mine (one block) and mock_setBalance(address, quantity).
class MockRpcServer {
 public:
  MockRpcServer(std::shared_ptr<MockPublicChain> chain, const std::string& host, std::uint16_t port);
  ~MockRpcServer();
  MockRpcServer(const MockRpcServer&) = delete;
  MockRpcServer& operator=(const MockRpcServer&) = delete;

  std::uint16_t port() const { return port_; }
  std::string url() const;
  void stop();
  // Blocks until stop() is called from another thread.
  void wait();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::string host_;
  std::uint16_t port_ = 0;
  std::thread thread_;
};

}  // namespace provchain::anchor
