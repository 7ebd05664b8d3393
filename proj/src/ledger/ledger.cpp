#include "provchain/ledger/ledger.hpp"

namespace provchain::ledger {

Ledger::Ledger(const ChainParams& params, const Block& genesis, std::shared_ptr<BlockLog> log)
    : params_(params), log_(std::move(log)) {
  auto state = std::make_shared<ChainState>();
  state->params = params;
  if (log_ && log_->count() > 0) {
    const std::vector<Bytes> records = log_->read_all();
    if (Block::deserialize(records.front()).hash() != genesis.hash()) {
      throw Error(ErrorCode::kIncompatibleNetwork, "block log belongs to a different genesis");
    }
    for (const Bytes& raw : records) {
      append_block_in_place(*state, std::make_shared<const Block>(Block::deserialize(raw)));
    }
  } else {
    append_block_in_place(*state, std::make_shared<const Block>(genesis));
    if (log_) log_->append(genesis);
  }
  state_ = std::move(state);
}

std::shared_ptr<const ChainState> Ledger::snapshot() const {
  std::lock_guard lock(read_mu_);
  return state_;
}

std::shared_ptr<const ChainState> Ledger::append(const Block& block) {
  std::lock_guard writer(write_mu_);
  auto next = std::make_shared<ChainState>(*snapshot());
  append_block_in_place(*next, std::make_shared<const Block>(block));
  if (log_) log_->append(block);
  std::lock_guard lock(read_mu_);
  state_ = next;
  return state_;
}

std::shared_ptr<const ChainState> Ledger::replace_chain(const std::vector<Block>& blocks) {
  std::lock_guard writer(write_mu_);
  const auto current = snapshot();
  if (blocks.empty() || blocks.front().hash() != current->block_hashes.front()) {
    throw Error(ErrorCode::kIncompatibleNetwork, "replacement chain has a different genesis");
  }
  auto next = std::make_shared<ChainState>(rebuild_state(blocks, params_));
  if (log_) {
    std::size_t common = 0;
    while (common < blocks.size() && common < current->blocks.size() &&
           next->block_hashes[common] == current->block_hashes[common]) {
      ++common;
    }
    log_->truncate(common);
    for (std::size_t i = common; i < blocks.size(); ++i) log_->append(blocks[i]);
  }
  std::lock_guard lock(read_mu_);
  state_ = next;
  return state_;
}

}  // namespace provchain::ledger
