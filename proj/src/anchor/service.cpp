#include "provchain/anchor/service.hpp"

#include <cstdlib>

#include "provchain/common/error.hpp"

namespace provchain::anchor {

namespace {

constexpr std::int64_t kDayMs = 24LL * 60 * 60 * 1000;

std::int64_t floor_div(std::int64_t a, std::int64_t b) { return a / b - ((a % b != 0) && ((a < 0) != (b < 0))); }

}  // namespace

int parse_fire_time(std::string_view s) {
  auto digit = [&](std::size_t i) {
    if (s[i] < '0' || s[i] > '9') throw Error(ErrorCode::kValidation, "fire time must be HH:MM");
    return s[i] - '0';
  };
  if (s.size() != 5 || s[2] != ':') throw Error(ErrorCode::kValidation, "fire time must be HH:MM");
  const int h = digit(0) * 10 + digit(1);
  const int m = digit(3) * 10 + digit(4);
  if (h > 23 || m > 59) throw Error(ErrorCode::kValidation, "fire time out of range");
  return h * 60 + m;
}

crypto::PrivateKey wallet_key_from_env(const char* variable) {
  const char* value = std::getenv(variable);
  if (value == nullptr || *value == '\0') {
    throw Error(ErrorCode::kKey, std::string(variable) + " is not set");
  }
  try {
    return crypto::PrivateKey::from_hex(value);
  } catch (const Error&) {
    throw Error(ErrorCode::kKey, std::string(variable) + " does not hold a valid secp256k1 private key");
  }
}

EthTransaction build_anchor_transaction(std::string_view blockhash_hex, PublicChainBackend& backend,
                                        const crypto::Address& wallet, const AnchorConfig& config) {
  EthTransaction tx;
  tx.data = anchor_payload(blockhash_hex);
  tx.to = wallet;
  tx.value = 0;
  tx.nonce = backend.get_nonce(wallet);
  tx.gas_price = config.gas_price ? *config.gas_price : backend.gas_price();
  if (config.gas_limit) {
    tx.gas_limit = *config.gas_limit;
  } else if (config.use_backend_estimate) {
    tx.gas_limit = with_safety_margin(backend.estimate_gas(tx, wallet));
  } else {
    tx.gas_limit = with_safety_margin(intrinsic_gas(tx.data));
  }
  return tx;
}

CostCheck estimate_cost_and_check(const EthTransaction& tx, PublicChainBackend& backend,
                                  const crypto::Address& wallet) {
  CostCheck out;
  out.cost = Wei(tx.gas_limit) * tx.gas_price + tx.value;
  out.balance = backend.get_balance(wallet);
  out.sufficient = out.balance >= out.cost;
  return out;
}

ScheduleDecision run_schedule_tick(std::int64_t now_ms, int fire_minute_of_day,
                                   std::optional<std::int64_t> last_anchor_ms) {
  ScheduleDecision d;
  if (!last_anchor_ms) {
    d.anchor = true;
    return d;
  }
  if (now_ms < *last_anchor_ms) {
    d.warning = "clock is behind the last anchor time; skipping";
    return d;
  }
  const std::int64_t offset = static_cast<std::int64_t>(fire_minute_of_day) * 60 * 1000;
  // First fire instant strictly after the last anchor.
  std::int64_t next = floor_div(*last_anchor_ms - offset, kDayMs) * kDayMs + offset;
  if (next <= *last_anchor_ms) next += kDayMs;
  d.anchor = now_ms >= next;
  return d;
}

namespace {

AnchorAudit audit_prefix(ledger::ValidationReport report, const std::vector<Hash32>& prefix_hashes,
                         const std::vector<AnchorRecord>& anchors) {
  AnchorAudit out;
  out.chain = std::move(report);
  out.valid_blocks = prefix_hashes.size();
  for (const auto& a : anchors) {
    if (a.status == AnchorState::kFailed) continue;
    if (a.private_height >= prefix_hashes.size()) {
      out.mismatches.push_back(
          {a, "anchored height " + std::to_string(a.private_height) + " is beyond the validated chain"});
    } else if (prefix_hashes[a.private_height].hex() != a.private_blockhash) {
      out.mismatches.push_back({a, "block at height " + std::to_string(a.private_height) + " is " +
                                       prefix_hashes[a.private_height].hex() + ", anchored " + a.private_blockhash});
    }
  }
  return out;
}

}  // namespace

AnchorAudit audit_anchors(std::span<const ledger::Block> blocks, const std::vector<AnchorRecord>& anchors,
                          const ledger::ChainParams& params) {
  auto report = ledger::validate_chain(blocks, params);
  const std::size_t n = report.valid ? blocks.size() : static_cast<std::size_t>(*report.failed_height);
  std::vector<Hash32> hashes;
  hashes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) hashes.push_back(blocks[i].hash());
  return audit_prefix(std::move(report), hashes, anchors);
}

AnchorAudit audit_anchors_bytes(std::span<const Bytes> stored_blocks, const std::vector<AnchorRecord>& anchors,
                                const ledger::ChainParams& params) {
  auto report = ledger::validate_chain_bytes(stored_blocks, params);
  const std::size_t n = report.valid ? stored_blocks.size() : static_cast<std::size_t>(*report.failed_height);
  std::vector<Hash32> hashes;
  hashes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) hashes.push_back(ledger::Block::deserialize(stored_blocks[i]).hash());
  return audit_prefix(std::move(report), hashes, anchors);
}

AnchorService::AnchorService(ChainSource chain, std::shared_ptr<PublicChainBackend> backend,
                             crypto::PrivateKey wallet, std::shared_ptr<AnchorLog> log, AnchorConfig config,
                             Clock clock)
    : chain_(std::move(chain)),
      backend_(std::move(backend)),
      wallet_(wallet),
      wallet_address_(wallet.address()),
      log_(std::move(log)),
      config_(std::move(config)),
      clock_(std::move(clock)) {}

void AnchorService::refuse(const std::string& code, const std::string& reason,
                           std::map<std::string, std::string> details) {
  log_->audit({clock_(), "anchor", "refused", code, reason, std::move(details)});
}

AnchorRecord AnchorService::submit_anchor(const std::string& trigger, std::shared_ptr<PublicChainBackend> via) {
  std::lock_guard lock(submit_mu_);
  PublicChainBackend& backend = via ? *via : *backend_;
  std::map<std::string, std::string> details{{"trigger", trigger}, {"backend", backend.id()},
                                             {"wallet", wallet_address_.hex()}};
  auto fail = [&](const Error& e) {
    refuse(std::string(to_string(e.code())), e.what(), details);
    return e;
  };

  ledger::ConfirmedTip tip;
  try {
    tip = ledger::latest_confirmed_blockhash(*chain_(), config_.confirm_depth);
  } catch (const Error& e) {
    throw fail(e);
  }
  details["blockhash"] = tip.hash.hex();
  details["height"] = std::to_string(tip.height);

  EthTransaction tx;
  CostCheck cost;
  try {
    tx = build_anchor_transaction(tip.hash.hex(), backend, wallet_address_, config_);
    cost = estimate_cost_and_check(tx, backend, wallet_address_);
  } catch (const Error& e) {
    throw fail(e);
  }
  details["cost_wei"] = to_string(cost.cost);
  details["balance_wei"] = to_string(cost.balance);
  if (!cost.sufficient) {
    throw fail(Error(ErrorCode::kInsufficientFunds, "wallet balance " + to_string(cost.balance) +
                                                        " wei is below the estimated cost " +
                                                        to_string(cost.cost) + " wei"));
  }

  const auto signed_tx = sign_and_encode(tx, wallet_, config_.chain_id);
  SendResult sent;
  try {
    sent = backend.send_raw_transaction(signed_tx.raw());
  } catch (const Error& e) {
    throw fail(e);
  }

  AnchorRecord r;
  r.anchored_at_ms = clock_();
  r.private_blockhash = tip.hash.hex();
  r.private_height = tip.height;
  r.eth_tx_hash = sent.tx_hash;
  r.wallet_address = wallet_address_;
  r.backend = sent.backend;
  r.status = AnchorState::kSubmitted;
  r.nonce = tx.nonce;
  r.gas_price = tx.gas_price;
  r.gas_limit = tx.gas_limit;
  r.trigger = trigger;
  return log_->append(std::move(r));
}

PublicChainBackend& AnchorService::backend_of(const AnchorRecord& record) const {
  if (auto* fb = dynamic_cast<FallbackBackend*>(backend_.get())) {
    for (const auto& b : fb->backends()) {
      if (b->id() == record.backend) return *b;
    }
  }
  return *backend_;
}

AnchorStatus AnchorService::anchor_status(const AnchorRecord& record) {
  AnchorStatus out;
  out.record = log_->at_seq(record.seq).value_or(record);
  PublicChainBackend& backend = backend_of(out.record);
  out.explorer_url = explorer_url(record.eth_tx_hash);
  try {
    const auto receipt = backend.get_receipt(record.eth_tx_hash);
    out.head_height = backend.head_height();
    if (receipt) {
      const auto state = receipt->success ? AnchorState::kConfirmed : AnchorState::kFailed;
      if (out.record.status != state || out.record.inclusion_height != receipt->block_height) {
        log_->update_status(out.record.seq, state, receipt->block_height, clock_());
        out.record.status = state;
        out.record.inclusion_height = receipt->block_height;
      }
      if (receipt->success && *out.head_height >= receipt->block_height) {
        out.confirmations = *out.head_height - receipt->block_height + 1;
      }
    }
    std::lock_guard lock(status_mu_);
    last_confirmations_[out.record.seq] = out.confirmations;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kConnection) throw;
    out.stale = true;
    std::lock_guard lock(status_mu_);
    auto it = last_confirmations_.find(out.record.seq);
    out.confirmations = it == last_confirmations_.end() ? 0 : it->second;
  }
  return out;
}

bool AnchorService::verify_on_chain(const AnchorRecord& record) {
  const auto tx = backend_of(record).get_transaction(record.eth_tx_hash);
  if (!tx || tx->hash() != record.eth_tx_hash) return false;
  const auto payload = decode_anchor_payload(tx->tx.data);
  try {
    return payload == record.private_blockhash && tx->tx.value == 0 && tx->tx.to == record.wallet_address &&
           tx->sender() == record.wallet_address;
  } catch (const Error&) {
    return false;
  }
}

std::optional<AnchorRecord> AnchorService::tick() {
  std::optional<std::int64_t> last;
  for (const auto& r : log_->records()) {
    if (r.status != AnchorState::kFailed) last = r.anchored_at_ms;
  }
  if (!run_schedule_tick(clock_(), config_.fire_minute_of_day, last).anchor) return std::nullopt;
  if (chain_()->blocks.size() <= config_.confirm_depth) return std::nullopt;
  try {
    return submit_anchor("schedule");
  } catch (const Error&) {
    return std::nullopt;
  }
}

AnchorService::CostEstimate AnchorService::estimated_cost() {
  const auto tx = build_anchor_transaction(std::string(64, 'f'), *backend_, wallet_address_, config_);
  return {tx.gas_limit, tx.gas_price, Wei(tx.gas_limit) * tx.gas_price};
}

std::string AnchorService::explorer_url(const Hash32& eth_tx_hash) const {
  std::string url = config_.explorer_tx_url;
  const auto pos = url.find("{hash}");
  const std::string hash = "0x" + eth_tx_hash.hex();
  if (pos == std::string::npos) return url + hash;
  return url.replace(pos, 6, hash);
}

double AnchorService::wei_to_usd(const Wei& wei) const {
  const double eth = wei.convert_to<double>() / 1e18;
  return eth * config_.usd_per_eth;
}

}  // namespace provchain::anchor
