#pragma once

#include <memory>
#include <mutex>
#include <vector>

#include "provchain/ledger/block_log.hpp"
#include "provchain/ledger/chain.hpp"

namespace provchain::ledger {

// Single-writer owner of a ChainState. Readers take immutable snapshots and
// never block writers for longer than a pointer copy.
class Ledger {
 public:
  // Starts from `genesis`, or replays `log` when it already holds blocks (its
  // first block must then be `genesis`, else kIncompatibleNetwork).
  Ledger(const ChainParams& params, const Block& genesis, std::shared_ptr<BlockLog> log = nullptr);

  std::shared_ptr<const ChainState> snapshot() const;
  const ChainParams& params() const { return params_; }

  // Appends atomically; on error neither the state nor the log changes.
  std::shared_ptr<const ChainState> append(const Block& block);
  // Swaps in a different chain sharing our genesis; the log is rewritten from
  // the first differing block.
  std::shared_ptr<const ChainState> replace_chain(const std::vector<Block>& blocks);

  const BlockLog* log() const { return log_.get(); }

 private:
  ChainParams params_;
  std::shared_ptr<BlockLog> log_;
  mutable std::mutex read_mu_;
  std::mutex write_mu_;
  std::shared_ptr<const ChainState> state_;
};

}  // namespace provchain::ledger
