#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "provchain/anchor/eth_tx.hpp"

namespace provchain::anchor {

struct Receipt {
  std::uint64_t block_height = 0;
  bool success = true;
  std::uint64_t gas_used = 0;
};

struct SendResult {
  Hash32 tx_hash;
  std::string backend;  // identifier of the endpoint that accepted it
};

// A public Ethereum-format chain endpoint. Unreachable endpoints throw
// Error(kConnection); endpoints that refuse a request throw Error(kRejected).
class PublicChainBackend {
 public:
  virtual ~PublicChainBackend() = default;

  virtual std::string id() const = 0;
  // Next usable nonce, counting the sender's pending transactions.
  virtual std::uint64_t get_nonce(const crypto::Address& address) = 0;
  virtual Wei get_balance(const crypto::Address& address) = 0;
  virtual std::uint64_t estimate_gas(const EthTransaction& tx, const crypto::Address& from) = 0;
  virtual Wei gas_price() = 0;
  virtual SendResult send_raw_transaction(ByteView raw) = 0;
  // nullopt while the transaction is pending or unknown.
  virtual std::optional<Receipt> get_receipt(const Hash32& tx_hash) = 0;
  virtual std::optional<SignedEthTransaction> get_transaction(const Hash32& tx_hash) = 0;
  virtual std::uint64_t head_height() = 0;
};

// Tries endpoints in configured order. Only connection errors move on to the
// next endpoint; a rejection is returned as-is.
class FallbackBackend : public PublicChainBackend {
 public:
  explicit FallbackBackend(std::vector<std::shared_ptr<PublicChainBackend>> backends);

  std::string id() const override;
  std::uint64_t get_nonce(const crypto::Address& address) override;
  Wei get_balance(const crypto::Address& address) override;
  std::uint64_t estimate_gas(const EthTransaction& tx, const crypto::Address& from) override;
  Wei gas_price() override;
  SendResult send_raw_transaction(ByteView raw) override;
  std::optional<Receipt> get_receipt(const Hash32& tx_hash) override;
  std::optional<SignedEthTransaction> get_transaction(const Hash32& tx_hash) override;
  std::uint64_t head_height() override;

  const std::vector<std::shared_ptr<PublicChainBackend>>& backends() const { return backends_; }
  // A copy that prefers the endpoint named `id` and keeps the rest as fallbacks.
  std::shared_ptr<FallbackBackend> preferring(const std::string& id) const;

 private:
  template <typename F>
  auto first_reachable(F&& f) -> decltype(f(std::declval<PublicChainBackend&>()));

  std::vector<std::shared_ptr<PublicChainBackend>> backends_;
};

// In-process public chain following the legacy transaction rules: intrinsic
// gas, nonce ordering, balance checks and low-s signatures. Blocks are only
// produced by step(). Internally synchronized.
class MockPublicChain : public PublicChainBackend {
 public:
  explicit MockPublicChain(std::string id = "mock", Wei suggested_gas_price = Wei(4'000'000'000ULL));

  std::string id() const override { return id_; }
  std::uint64_t get_nonce(const crypto::Address& address) override;
  Wei get_balance(const crypto::Address& address) override;
  std::uint64_t estimate_gas(const EthTransaction& tx, const crypto::Address& from) override;
  Wei gas_price() override;
  SendResult send_raw_transaction(ByteView raw) override;
  std::optional<Receipt> get_receipt(const Hash32& tx_hash) override;
  std::optional<SignedEthTransaction> get_transaction(const Hash32& tx_hash) override;
  std::uint64_t head_height() override;

  // Includes every pending transaction whose nonce is next in line for its
  // sender; one whose cost exceeds the balance at that point gets a failure
  // receipt instead. Returns the new head height.
  std::uint64_t step();
  void advance(std::uint64_t blocks);

  void set_balance(const crypto::Address& address, const Wei& balance);
  // While unreachable every call throws Error(kConnection).
  void set_reachable(bool reachable);
  void set_chain_id(std::optional<std::uint64_t> chain_id);
  std::size_t pending_count() const;

 private:
  struct Entry {
    SignedEthTransaction tx;
    crypto::Address sender;
    std::optional<Receipt> receipt;
  };

  void check_reachable() const;

  std::string id_;
  Wei suggested_gas_price_;
  mutable std::mutex mu_;
  bool reachable_ = true;
  std::optional<std::uint64_t> chain_id_;
  std::uint64_t head_ = 0;
  std::map<crypto::Address, Wei> balances_;
  std::map<crypto::Address, std::uint64_t> nonces_;
  std::map<Hash32, Entry> txs_;
  std::vector<Hash32> pending_;
};

}  // namespace provchain::anchor
