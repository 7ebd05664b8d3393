#include "provchain/anchor/anchor_log.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>

#include "provchain/common/error.hpp"

namespace provchain::anchor {

using nlohmann::json;

std::string_view to_string(AnchorState s) {
  switch (s) {
    case AnchorState::kSubmitted: return "submitted";
    case AnchorState::kConfirmed: return "confirmed";
    case AnchorState::kFailed: return "failed";
  }
  return "unknown";
}

AnchorState parse_anchor_state(std::string_view s) {
  if (s == "submitted") return AnchorState::kSubmitted;
  if (s == "confirmed") return AnchorState::kConfirmed;
  if (s == "failed") return AnchorState::kFailed;
  throw Error(ErrorCode::kDecode, "unknown anchor status: " + std::string(s));
}

json to_json(const AnchorRecord& r) {
  json j = {{"seq", r.seq},
            {"anchoredAt", r.anchored_at_ms},
            {"privateBlockhash", r.private_blockhash},
            {"privateHeight", r.private_height},
            {"ethTxHash", "0x" + r.eth_tx_hash.hex()},
            {"walletAddress", r.wallet_address.hex()},
            {"backend", r.backend},
            {"status", std::string(to_string(r.status))},
            {"nonce", r.nonce},
            {"gasPrice", to_string(r.gas_price)},
            {"gasLimit", r.gas_limit},
            {"trigger", r.trigger}};
  j["inclusionHeight"] = r.inclusion_height ? json(*r.inclusion_height) : json(nullptr);
  return j;
}

json to_json(const AuditEntry& e) {
  return {{"at", e.at_ms},       {"action", e.action}, {"outcome", e.outcome},
          {"code", e.code},      {"reason", e.reason}, {"details", e.details}};
}

namespace {

AnchorRecord record_from_json(const json& j) {
  AnchorRecord r;
  r.seq = j.at("seq").get<std::uint64_t>();
  r.anchored_at_ms = j.at("anchoredAt").get<std::int64_t>();
  r.private_blockhash = j.at("privateBlockhash").get<std::string>();
  r.private_height = j.at("privateHeight").get<std::uint64_t>();
  r.eth_tx_hash = Hash32::from_hex(j.at("ethTxHash").get<std::string>());
  r.wallet_address = crypto::Address::from_hex(j.at("walletAddress").get<std::string>());
  r.backend = j.at("backend").get<std::string>();
  r.status = parse_anchor_state(j.at("status").get<std::string>());
  r.nonce = j.at("nonce").get<std::uint64_t>();
  r.gas_price = parse_wei(j.at("gasPrice").get<std::string>());
  r.gas_limit = j.at("gasLimit").get<std::uint64_t>();
  r.trigger = j.at("trigger").get<std::string>();
  if (!j.at("inclusionHeight").is_null()) r.inclusion_height = j["inclusionHeight"].get<std::uint64_t>();
  return r;
}

AuditEntry audit_from_json(const json& j) {
  AuditEntry e;
  e.at_ms = j.at("at").get<std::int64_t>();
  e.action = j.at("action").get<std::string>();
  e.outcome = j.at("outcome").get<std::string>();
  e.code = j.at("code").get<std::string>();
  e.reason = j.at("reason").get<std::string>();
  e.details = j.at("details").get<std::map<std::string, std::string>>();
  return e;
}

}  // namespace

AnchorLog::AnchorLog(std::filesystem::path file) : path_(std::move(file)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  load();
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error(ErrorCode::kIo, "cannot open " + path_.string() + ": " + std::strerror(errno));
}

AnchorLog::~AnchorLog() {
  if (fd_ >= 0) ::close(fd_);
}

void AnchorLog::load() {
  std::ifstream in(path_, std::ios::binary);
  if (!in) return;
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0, good = 0;
  std::size_t line_no = 0;
  while (pos < content.size()) {
    const auto nl = content.find('\n', pos);
    ++line_no;
    if (nl == std::string::npos) break;  // torn tail
    try {
      apply(json::parse(content.substr(pos, nl - pos)));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::kDecode, path_.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
    pos = good = nl + 1;
  }
  if (good < content.size()) std::filesystem::resize_file(path_, good);
}

void AnchorLog::apply(const json& line) {
  const auto type = line.at("type").get<std::string>();
  if (type == "anchor") {
    AnchorRecord r = record_from_json(line.at("record"));
    const std::size_t idx = records_.size();
    by_hash_.emplace(r.eth_tx_hash, idx);
    by_height_.emplace(r.private_height, idx);
    by_time_.emplace(r.anchored_at_ms, idx);
    records_.push_back(std::move(r));
  } else if (type == "status") {
    const auto seq = line.at("seq").get<std::uint64_t>();
    if (seq == 0 || seq > records_.size()) throw Error(ErrorCode::kDecode, "status for unknown anchor");
    auto& r = records_[seq - 1];
    r.status = parse_anchor_state(line.at("status").get<std::string>());
    if (!line.at("inclusionHeight").is_null()) r.inclusion_height = line["inclusionHeight"].get<std::uint64_t>();
  } else if (type == "audit") {
    audits_.push_back(audit_from_json(line.at("entry")));
  } else {
    throw Error(ErrorCode::kDecode, "unknown anchor log entry: " + type);
  }
}

void AnchorLog::write_line(const json& line) {
  const std::string text = line.dump() + "\n";
  std::size_t off = 0;
  while (off < text.size()) {
    const ssize_t n = ::write(fd_, text.data() + off, text.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::kIo, "anchor log write failed: " + std::string(std::strerror(errno)));
    }
    off += static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) throw Error(ErrorCode::kIo, "anchor log fsync failed");
}

AnchorRecord AnchorLog::append(AnchorRecord record) {
  std::lock_guard lock(mu_);
  auto [lo, hi] = by_hash_.equal_range(record.eth_tx_hash);
  for (auto it = lo; it != hi; ++it) {
    if (records_[it->second].backend == record.backend)
      throw Error(ErrorCode::kValidation, "anchor already recorded");
  }
  record.seq = records_.size() + 1;
  json line = {{"type", "anchor"}, {"record", to_json(record)}};
  write_line(line);
  apply(line);
  return record;
}

void AnchorLog::update_status(std::uint64_t seq, AnchorState status, std::optional<std::uint64_t> inclusion_height,
                              std::int64_t at_ms) {
  std::lock_guard lock(mu_);
  if (seq == 0 || seq > records_.size()) throw Error(ErrorCode::kValidation, "unknown anchor");
  json line = {{"type", "status"},
               {"seq", seq},
               {"ethTxHash", "0x" + records_[seq - 1].eth_tx_hash.hex()},
               {"status", std::string(to_string(status))},
               {"inclusionHeight", inclusion_height ? json(*inclusion_height) : json(nullptr)},
               {"at", at_ms}};
  write_line(line);
  apply(line);
}

void AnchorLog::audit(const AuditEntry& entry) {
  std::lock_guard lock(mu_);
  json line = {{"type", "audit"}, {"entry", to_json(entry)}};
  write_line(line);
  apply(line);
}

std::vector<AnchorRecord> AnchorLog::records() const {
  std::lock_guard lock(mu_);
  return records_;
}

std::size_t AnchorLog::size() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

std::optional<AnchorRecord> AnchorLog::latest() const {
  std::lock_guard lock(mu_);
  if (records_.empty()) return std::nullopt;
  return records_.back();
}

std::optional<AnchorRecord> AnchorLog::at_seq(std::uint64_t seq) const {
  std::lock_guard lock(mu_);
  if (seq == 0 || seq > records_.size()) return std::nullopt;
  return records_[seq - 1];
}

std::optional<AnchorRecord> AnchorLog::find(const Hash32& eth_tx_hash) const {
  std::lock_guard lock(mu_);
  auto it = by_hash_.find(eth_tx_hash);
  if (it == by_hash_.end()) return std::nullopt;
  return records_[it->second];
}

std::vector<AnchorRecord> AnchorLog::at_height(std::uint64_t private_height) const {
  std::lock_guard lock(mu_);
  std::vector<AnchorRecord> out;
  auto [lo, hi] = by_height_.equal_range(private_height);
  for (auto it = lo; it != hi; ++it) out.push_back(records_[it->second]);
  return out;
}

std::optional<AnchorRecord> AnchorLog::covering(std::uint64_t height) const {
  std::lock_guard lock(mu_);
  for (auto it = by_height_.lower_bound(height); it != by_height_.end(); ++it) {
    const auto& r = records_[it->second];
    if (r.status != AnchorState::kFailed) return r;
  }
  return std::nullopt;
}

std::vector<AnchorRecord> AnchorLog::between(std::int64_t from_ms, std::int64_t to_ms) const {
  std::lock_guard lock(mu_);
  std::vector<AnchorRecord> out;
  for (auto it = by_time_.lower_bound(from_ms); it != by_time_.end() && it->first <= to_ms; ++it) {
    out.push_back(records_[it->second]);
  }
  return out;
}

std::vector<AnchorRecord> AnchorLog::page(std::size_t page, std::size_t page_size) const {
  if (page == 0 || page_size == 0) throw Error(ErrorCode::kValidation, "page and page_size start at 1");
  std::lock_guard lock(mu_);
  std::vector<AnchorRecord> out;
  const std::size_t skip = (page - 1) * page_size;
  if (skip >= records_.size()) return out;
  for (std::size_t i = records_.size() - skip; i > 0 && out.size() < page_size; --i) {
    out.push_back(records_[i - 1]);
  }
  return out;
}

std::vector<AuditEntry> AnchorLog::audits() const {
  std::lock_guard lock(mu_);
  return audits_;
}

}  // namespace provchain::anchor
