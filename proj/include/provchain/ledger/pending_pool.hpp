#pragma once

#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "provchain/ledger/chain.hpp"

namespace provchain::ledger {

// Unconfirmed transactions in arrival order. Internally synchronized.
class PendingPool {
 public:
  // Returns false (and keeps the pool unchanged) for a duplicate tx id or md5.
  bool add(const LedgerTransaction& tx);

  bool contains(const Hash32& tx_id) const;
  bool contains_md5(const std::string& md5) const;
  std::size_t size() const;
  std::vector<LedgerTransaction> snapshot() const;

  void remove_included(const Block& block);
  // Drops transactions that can no longer be applied on top of `state`.
  void prune(const ChainState& state);

 private:
  void erase_locked(const Hash32& id);

  mutable std::mutex mu_;
  std::vector<std::pair<Hash32, LedgerTransaction>> txs_;
  std::set<Hash32> ids_;
  std::map<std::string, Hash32> md5s_;
};

// Checks one transaction against confirmed state as it would be checked at
// block inclusion. A parent_md5 that is still pending is accepted when `pool`
// holds it. Throws Error with the relevant code.
void check_transaction(const ChainState& state, const LedgerTransaction& tx,
                       const PendingPool* pool = nullptr);

// Keeps, in order, the transactions that apply cleanly one after another on
// top of `state`; the rest are dropped.
std::vector<LedgerTransaction> select_applicable(const ChainState& state,
                                                 const std::vector<LedgerTransaction>& txs);

}  // namespace provchain::ledger
