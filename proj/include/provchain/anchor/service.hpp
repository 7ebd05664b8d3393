#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "provchain/anchor/anchor_log.hpp"
#include "provchain/anchor/backend.hpp"
#include "provchain/common/time.hpp"
#include "provchain/ledger/chain.hpp"

namespace provchain::anchor {

struct AnchorConfig {
  std::uint64_t confirm_depth = 6;
  std::optional<Wei> gas_price;          // else the backend's suggestion
  std::optional<std::uint64_t> gas_limit;  // else intrinsic gas plus margin
  bool use_backend_estimate = false;     // margin applied to estimate_gas instead
  std::optional<std::uint64_t> chain_id;
  int fire_minute_of_day = 2 * 60;  // daily schedule, UTC
  double usd_per_eth = 0.0;
  std::string explorer_tx_url = "https://etherscan.io/tx/{hash}";
};

// "HH:MM" (UTC) to minutes past midnight. Throws Error(kValidation).
int parse_fire_time(std::string_view hh_mm);

// Reads a hex private key from the environment. The message of any error
// names the variable, never its value.
crypto::PrivateKey wallet_key_from_env(const char* variable = "PROVCHAIN_WALLET_KEY");

EthTransaction build_anchor_transaction(std::string_view blockhash_hex, PublicChainBackend& backend,
                                        const crypto::Address& wallet, const AnchorConfig& config);

struct CostCheck {
  Wei cost = 0;
  Wei balance = 0;
  bool sufficient = false;
};

// cost = gas_limit * gas_price; sufficient iff balance >= cost.
CostCheck estimate_cost_and_check(const EthTransaction& tx, PublicChainBackend& backend,
                                  const crypto::Address& wallet);

struct ScheduleDecision {
  bool anchor = false;
  std::optional<std::string> warning;
};

// Anchor iff `now_ms` has reached the first daily fire time after the last
// anchor. With no previous anchor the schedule is overdue and fires.
ScheduleDecision run_schedule_tick(std::int64_t now_ms, int fire_minute_of_day,
                                   std::optional<std::int64_t> last_anchor_ms);

struct AnchorStatus {
  AnchorRecord record;
  std::uint64_t confirmations = 0;
  std::optional<std::uint64_t> head_height;
  bool stale = false;
  std::string explorer_url;
};

struct AnchorMismatch {
  AnchorRecord record;
  std::string reason;
};

struct AnchorAudit {
  ledger::ValidationReport chain;
  std::uint64_t valid_blocks = 0;  // length of the prefix that validates
  std::vector<AnchorMismatch> mismatches;

  bool clean() const { return chain.valid && mismatches.empty(); }
};

// Cross-checks anchored blockhashes against the longest validating prefix of
// `blocks`: an anchor whose height lies beyond that prefix, or whose hash
// differs from the prefix's block at that height, is a mismatch.
AnchorAudit audit_anchors(std::span<const ledger::Block> blocks, const std::vector<AnchorRecord>& anchors,
                          const ledger::ChainParams& params);
AnchorAudit audit_anchors_bytes(std::span<const Bytes> stored_blocks, const std::vector<AnchorRecord>& anchors,
                                const ledger::ChainParams& params);

using ChainSource = std::function<std::shared_ptr<const ledger::ChainState>()>;

// Commits the private chain's confirmed blockhash to a public chain. At most
// one submission runs at a time; status queries run concurrently.
class AnchorService {
 public:
  AnchorService(ChainSource chain, std::shared_ptr<PublicChainBackend> backend, crypto::PrivateKey wallet,
                std::shared_ptr<AnchorLog> log, AnchorConfig config = {}, Clock clock = system_clock());

  const crypto::Address& wallet_address() const { return wallet_address_; }
  const AnchorConfig& config() const { return config_; }
  AnchorLog& log() { return *log_; }
  const std::shared_ptr<PublicChainBackend>& backend() const { return backend_; }

  // Full workflow. On any failure an audit entry is written, no record is
  // persisted and the Error is rethrown: kInsufficientDepth, kConnection,
  // kInsufficientFunds, kRejected or kValidation.
  AnchorRecord submit_anchor(const std::string& trigger = "manual",
                             std::shared_ptr<PublicChainBackend> via = nullptr);

  // Refreshes a record from its receipt; status changes are persisted.
  AnchorStatus anchor_status(const AnchorRecord& record);

  // True when the record's public transaction carries exactly its blockhash
  // as a zero-value self-send from the wallet.
  bool verify_on_chain(const AnchorRecord& record);

  // Scheduler entry point: anchors when the daily fire time has passed and
  // the chain is deep enough. Failures are audited and reported as nullopt.
  std::optional<AnchorRecord> tick();

  struct CostEstimate {
    std::uint64_t gas_limit = 0;
    Wei gas_price = 0;
    Wei cost = 0;
  };
  // What an anchor would cost now; Error(kConnection) when unreachable.
  CostEstimate estimated_cost();

  std::string explorer_url(const Hash32& eth_tx_hash) const;
  double wei_to_usd(const Wei& wei) const;

 private:
  // The endpoint a record was sent through, when it is still configured.
  PublicChainBackend& backend_of(const AnchorRecord& record) const;
  void refuse(const std::string& code, const std::string& reason, std::map<std::string, std::string> details);

  ChainSource chain_;
  std::shared_ptr<PublicChainBackend> backend_;
  crypto::PrivateKey wallet_;
  crypto::Address wallet_address_;
  std::shared_ptr<AnchorLog> log_;
  AnchorConfig config_;
  Clock clock_;
  std::mutex submit_mu_;
  std::mutex status_mu_;
  std::map<std::uint64_t, std::uint64_t> last_confirmations_;  // by seq
};

}  // namespace provchain::anchor
