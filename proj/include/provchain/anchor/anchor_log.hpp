#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "provchain/anchor/eth_tx.hpp"

namespace provchain::anchor {

enum class AnchorState { kSubmitted, kConfirmed, kFailed };
std::string_view to_string(AnchorState s);
AnchorState parse_anchor_state(std::string_view s);

struct AnchorRecord {
  std::uint64_t seq = 0;  // 1-based position in the log
  std::int64_t anchored_at_ms = 0;
  std::string private_blockhash;
  std::uint64_t private_height = 0;
  Hash32 eth_tx_hash;
  crypto::Address wallet_address;
  std::string backend;
  AnchorState status = AnchorState::kSubmitted;
  std::optional<std::uint64_t> inclusion_height;
  std::uint64_t nonce = 0;
  Wei gas_price = 0;
  std::uint64_t gas_limit = 0;
  std::string trigger;

  bool operator==(const AnchorRecord&) const = default;
};

// A failed or refused anchoring attempt. Never carries key material.
struct AuditEntry {
  std::int64_t at_ms = 0;
  std::string action;
  std::string outcome;
  std::string code;
  std::string reason;
  std::map<std::string, std::string> details;
};

nlohmann::json to_json(const AnchorRecord& r);
nlohmann::json to_json(const AuditEntry& e);

// Append-only JSON-lines store of anchor records, status changes and audit
// entries. Every line is fsync'd before the call returns. A torn final line is
// dropped on open. Internally synchronized.
class AnchorLog {
 public:
  explicit AnchorLog(std::filesystem::path file);
  ~AnchorLog();
  AnchorLog(const AnchorLog&) = delete;
  AnchorLog& operator=(const AnchorLog&) = delete;

  AnchorRecord append(AnchorRecord record);
  void update_status(std::uint64_t seq, AnchorState status, std::optional<std::uint64_t> inclusion_height,
                     std::int64_t at_ms);
  void audit(const AuditEntry& entry);

  std::vector<AnchorRecord> records() const;  // oldest first
  std::size_t size() const;
  std::optional<AnchorRecord> latest() const;
  std::optional<AnchorRecord> at_seq(std::uint64_t seq) const;
  // The same signed bytes may be anchored on more than one backend; returns the earliest.
  std::optional<AnchorRecord> find(const Hash32& eth_tx_hash) const;
  std::vector<AnchorRecord> at_height(std::uint64_t private_height) const;
  // Earliest non-failed record anchoring a block at or above `height`.
  std::optional<AnchorRecord> covering(std::uint64_t height) const;
  std::vector<AnchorRecord> between(std::int64_t from_ms, std::int64_t to_ms) const;
  // Newest first; page is 1-based.
  std::vector<AnchorRecord> page(std::size_t page, std::size_t page_size) const;
  std::vector<AuditEntry> audits() const;

  const std::filesystem::path& path() const { return path_; }

 private:
  void load();
  void apply(const nlohmann::json& line);
  void write_line(const nlohmann::json& line);

  std::filesystem::path path_;
  int fd_ = -1;
  mutable std::mutex mu_;
  std::vector<AnchorRecord> records_;
  std::multimap<Hash32, std::size_t> by_hash_;
  std::multimap<std::uint64_t, std::size_t> by_height_;
  std::multimap<std::int64_t, std::size_t> by_time_;
  std::vector<AuditEntry> audits_;
};

}  // namespace provchain::anchor
