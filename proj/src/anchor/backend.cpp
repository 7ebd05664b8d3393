#include "provchain/anchor/backend.hpp"

#include <algorithm>

#include "provchain/common/error.hpp"

namespace provchain::anchor {

FallbackBackend::FallbackBackend(std::vector<std::shared_ptr<PublicChainBackend>> backends)
    : backends_(std::move(backends)) {
  if (backends_.empty()) throw Error(ErrorCode::kValidation, "at least one backend is required");
}

std::string FallbackBackend::id() const {
  std::string out;
  for (const auto& b : backends_) out += (out.empty() ? "" : ",") + b->id();
  return out;
}

template <typename F>
auto FallbackBackend::first_reachable(F&& f) -> decltype(f(std::declval<PublicChainBackend&>())) {
  std::string failures;
  for (const auto& b : backends_) {
    try {
      return f(*b);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kConnection) throw;
      failures += (failures.empty() ? "" : "; ") + b->id() + ": " + e.what();
    }
  }
  throw Error(ErrorCode::kConnection, "no backend reachable (" + failures + ")");
}

std::uint64_t FallbackBackend::get_nonce(const crypto::Address& a) {
  return first_reachable([&](PublicChainBackend& b) { return b.get_nonce(a); });
}
Wei FallbackBackend::get_balance(const crypto::Address& a) {
  return first_reachable([&](PublicChainBackend& b) { return b.get_balance(a); });
}
std::uint64_t FallbackBackend::estimate_gas(const EthTransaction& tx, const crypto::Address& from) {
  return first_reachable([&](PublicChainBackend& b) { return b.estimate_gas(tx, from); });
}
Wei FallbackBackend::gas_price() {
  return first_reachable([&](PublicChainBackend& b) { return b.gas_price(); });
}
SendResult FallbackBackend::send_raw_transaction(ByteView raw) {
  return first_reachable([&](PublicChainBackend& b) { return b.send_raw_transaction(raw); });
}
std::optional<Receipt> FallbackBackend::get_receipt(const Hash32& h) {
  return first_reachable([&](PublicChainBackend& b) { return b.get_receipt(h); });
}
std::optional<SignedEthTransaction> FallbackBackend::get_transaction(const Hash32& h) {
  return first_reachable([&](PublicChainBackend& b) { return b.get_transaction(h); });
}
std::uint64_t FallbackBackend::head_height() {
  return first_reachable([](PublicChainBackend& b) { return b.head_height(); });
}

std::shared_ptr<FallbackBackend> FallbackBackend::preferring(const std::string& id) const {
  auto it = std::find_if(backends_.begin(), backends_.end(), [&](const auto& b) { return b->id() == id; });
  if (it == backends_.end()) throw Error(ErrorCode::kValidation, "unknown backend: " + id);
  std::vector<std::shared_ptr<PublicChainBackend>> order{*it};
  for (const auto& b : backends_) {
    if (b != *it) order.push_back(b);
  }
  return std::make_shared<FallbackBackend>(std::move(order));
}

MockPublicChain::MockPublicChain(std::string id, Wei suggested_gas_price)
    : id_(std::move(id)), suggested_gas_price_(suggested_gas_price) {}

void MockPublicChain::check_reachable() const {
  if (!reachable_) throw Error(ErrorCode::kConnection, id_ + " is unreachable");
}

std::uint64_t MockPublicChain::get_nonce(const crypto::Address& address) {
  std::lock_guard lock(mu_);
  check_reachable();
  auto it = nonces_.find(address);
  std::uint64_t next = it == nonces_.end() ? 0 : it->second;
  for (bool advanced = true; advanced;) {
    advanced = false;
    for (const auto& h : pending_) {
      const auto& e = txs_.at(h);
      if (e.sender == address && e.tx.tx.nonce == next) {
        ++next;
        advanced = true;
      }
    }
  }
  return next;
}

Wei MockPublicChain::get_balance(const crypto::Address& address) {
  std::lock_guard lock(mu_);
  check_reachable();
  auto it = balances_.find(address);
  return it == balances_.end() ? Wei(0) : it->second;
}

std::uint64_t MockPublicChain::estimate_gas(const EthTransaction& tx, const crypto::Address&) {
  std::lock_guard lock(mu_);
  check_reachable();
  return intrinsic_gas(tx.data);
}

Wei MockPublicChain::gas_price() {
  std::lock_guard lock(mu_);
  check_reachable();
  return suggested_gas_price_;
}

SendResult MockPublicChain::send_raw_transaction(ByteView raw) {
  std::lock_guard lock(mu_);
  check_reachable();
  SignedEthTransaction tx;
  crypto::Address sender;
  try {
    tx = SignedEthTransaction::decode(raw);
    if (!crypto::is_low_s(tx.s)) throw Error(ErrorCode::kRejected, "invalid sender: high s");
    if (tx.chain_id() && tx.chain_id() != chain_id_) throw Error(ErrorCode::kRejected, "invalid chain id");
    sender = tx.sender();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kRejected) throw;
    throw Error(ErrorCode::kRejected, std::string("invalid raw transaction: ") + e.what());
  }
  const Hash32 hash = tx.hash();
  if (txs_.contains(hash)) throw Error(ErrorCode::kRejected, "already known");
  if (tx.tx.gas_limit < intrinsic_gas(tx.tx.data)) throw Error(ErrorCode::kRejected, "intrinsic gas too low");
  const std::uint64_t confirmed = nonces_.contains(sender) ? nonces_.at(sender) : 0;
  if (tx.tx.nonce < confirmed) throw Error(ErrorCode::kRejected, "nonce too low");
  for (const auto& h : pending_) {
    const auto& e = txs_.at(h);
    if (e.sender == sender && e.tx.tx.nonce == tx.tx.nonce) {
      throw Error(ErrorCode::kRejected, "replacement transaction underpriced");
    }
  }
  const Wei cost = Wei(tx.tx.gas_limit) * tx.tx.gas_price + tx.tx.value;
  const Wei balance = balances_.contains(sender) ? balances_.at(sender) : Wei(0);
  if (balance < cost) throw Error(ErrorCode::kRejected, "insufficient funds for gas * price + value");
  txs_[hash] = Entry{tx, sender, std::nullopt};
  pending_.push_back(hash);
  return {hash, id_};
}

std::optional<Receipt> MockPublicChain::get_receipt(const Hash32& tx_hash) {
  std::lock_guard lock(mu_);
  check_reachable();
  auto it = txs_.find(tx_hash);
  if (it == txs_.end()) return std::nullopt;
  return it->second.receipt;
}

std::optional<SignedEthTransaction> MockPublicChain::get_transaction(const Hash32& tx_hash) {
  std::lock_guard lock(mu_);
  check_reachable();
  auto it = txs_.find(tx_hash);
  if (it == txs_.end()) return std::nullopt;
  return it->second.tx;
}

std::uint64_t MockPublicChain::head_height() {
  std::lock_guard lock(mu_);
  check_reachable();
  return head_;
}

std::uint64_t MockPublicChain::step() {
  std::lock_guard lock(mu_);
  const std::uint64_t height = ++head_;
  for (bool progressed = true; progressed;) {
    progressed = false;
    for (auto it = pending_.begin(); it != pending_.end();) {
      auto& e = txs_.at(*it);
      auto& nonce = nonces_[e.sender];
      if (e.tx.tx.nonce != nonce) {
        ++it;
        continue;
      }
      const auto& t = e.tx.tx;
      const std::uint64_t used = intrinsic_gas(t.data);
      Wei& balance = balances_[e.sender];
      if (balance < Wei(t.gas_limit) * t.gas_price + t.value) {
        // Funds drained since submission: dropped with a failure receipt.
        e.receipt = Receipt{height, false, 0};
      } else {
        balance -= Wei(used) * t.gas_price + t.value;
        balances_[t.to] += t.value;
        ++nonce;
        e.receipt = Receipt{height, true, used};
      }
      it = pending_.erase(it);
      progressed = true;
    }
  }
  return height;
}

void MockPublicChain::advance(std::uint64_t blocks) {
  for (std::uint64_t i = 0; i < blocks; ++i) step();
}

void MockPublicChain::set_balance(const crypto::Address& address, const Wei& balance) {
  std::lock_guard lock(mu_);
  balances_[address] = balance;
}

void MockPublicChain::set_reachable(bool reachable) {
  std::lock_guard lock(mu_);
  reachable_ = reachable;
}

void MockPublicChain::set_chain_id(std::optional<std::uint64_t> chain_id) {
  std::lock_guard lock(mu_);
  chain_id_ = chain_id;
}

std::size_t MockPublicChain::pending_count() const {
  std::lock_guard lock(mu_);
  return pending_.size();
}

}  // namespace provchain::anchor
