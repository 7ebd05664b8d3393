#include "provchain/api/asset_api.hpp"

#include <openssl/crypto.h>

#include <charconv>
#include <fstream>

#include "provchain/api/ingest_message.hpp"
#include "provchain/common/error.hpp"

namespace provchain::api {

using nlohmann::json;

namespace {

ApiResponse error_response(int status, std::string_view code, const std::string& message) {
  return {status, {{"error", std::string(code)}, {"message", message}}};
}

ApiResponse error_response(int status, const Error& e) { return error_response(status, to_string(e.code()), e.what()); }

std::optional<std::uint64_t> parse_uint(std::string_view s) {
  std::uint64_t v = 0;
  if (s.empty() || s.size() > 19) return std::nullopt;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string format_ether(const anchor::Wei& wei) {
  const anchor::Wei unit("1000000000000000000");
  std::string frac = (wei % unit).str();
  frac.insert(0, 18 - frac.size(), '0');
  return (wei / unit).str() + "." + frac;
}

std::string eth_status(anchor::AnchorState s) {
  return s == anchor::AnchorState::kConfirmed ? "Confirmed" : "Pending";
}

}  // namespace

RequestLog::RequestLog(std::filesystem::path file) : path_(std::move(file)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
}

void RequestLog::record(std::int64_t at_ms, const std::string& method, const std::string& route,
                        const std::string& source, int status, const std::string& outcome) {
  json line = {{"time", format_iso8601(at_ms)}, {"method", method}, {"route", route},
               {"source", source},              {"status", status}, {"outcome", outcome}};
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::app);
  out << line.dump() << '\n';
}

json verification_response(const ledger::AssetView& view, const std::optional<anchor::AnchorStatus>& a) {
  json j = {{"asset", view.record.md5_index},
            {"confirmations", a ? std::to_string(a->confirmations) : "0"},
            {"ethStatus", a ? eth_status(a->record.status) : "NotAnchored"},
            {"ethTxId", a ? "0x" + a->record.eth_tx_hash.hex() : ""},
            {"issueTxId", view.issue_tx_id.hex()},
            {"issued", format_rfc1123(view.block_time)},
            {"multiChainHash", view.block_hash.hex()},
            {"sha256", view.record.sha256},
            {"source", view.record.source_uri}};
  if (a) j["validated"] = format_rfc1123(a->record.anchored_at_ms / 1000);
  if (view.record.parent_md5) j["parentAsset"] = *view.record.parent_md5;
  return j;
}

json block_document(const ledger::ChainState& state, std::uint64_t height) {
  const auto& b = *state.blocks.at(height);
  json ids = json::array();
  for (const auto& id : b.tx_ids()) ids.push_back(id.hex());
  return {{"type", "block"},
          {"height", b.header.height},
          {"hash", state.block_hashes.at(height).hex()},
          {"prevHash", b.header.prev_hash.hex()},
          {"txRoot", b.header.tx_root.hex()},
          {"timestamp", b.header.timestamp},
          {"time", format_rfc1123(b.header.timestamp)},
          {"nonce", b.header.nonce},
          {"miner", b.header.miner},
          {"confirmations", state.height() - height + 1},
          {"txIds", ids}};
}

json transaction_document(const ledger::ChainState& state, const Hash32& tx_id) {
  const auto loc = state.tx_index.at(tx_id);
  const auto& tx = state.blocks.at(loc.height)->txs.at(loc.index);
  json payload;
  if (const auto* a = tx.asset()) {
    payload = to_ingest_json(*a);
  } else if (const auto* g = tx.grant()) {
    payload = {{"subject", g->subject},
               {"address", g->subject_address ? json(g->subject_address->hex()) : json(nullptr)},
               {"permissions", g->permissions.names()},
               {"granted", g->granted}};
  } else if (const auto* e = std::get_if<ledger::NodeEvent>(&tx.payload)) {
    payload = {{"event", e->event}, {"detail", e->detail}};
  }
  return {{"type", "transaction"},
          {"txId", tx_id.hex()},
          {"kind", std::string(ledger::to_string(tx.kind()))},
          {"sender", tx.sender},
          {"created", tx.created_ms},
          {"blockHeight", loc.height},
          {"blockHash", state.block_hashes.at(loc.height).hex()},
          {"index", loc.index},
          {"payload", payload}};
}

AssetApi::AssetApi(network::Node& node, std::shared_ptr<anchor::AnchorService> anchors, ApiConfig config,
                   Clock clock)
    : node_(node), anchors_(std::move(anchors)), config_(std::move(config)), clock_(std::move(clock)) {}

ApiResponse AssetApi::submit_asset(const std::string& body, const std::string& client_address) {
  if (!config_.allowlist.allows(client_address)) {
    return error_response(403, "forbidden", client_address + " is not allowed to submit assets");
  }
  try {
    const auto asset = parse_ingest_message(body);
    const auto tx = node_.submit_asset(asset);
    return {201, {{"md5", asset.md5_index}, {"txId", tx.id().hex()}, {"status", "pending"}}};
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::kValidation:
      case ErrorCode::kUnknownParent: return error_response(400, e);
      case ErrorCode::kDuplicateAsset: return error_response(409, e);
      case ErrorCode::kPermissionDenied: return error_response(403, e);
      default: return error_response(500, e);
    }
  }
}

ApiResponse AssetApi::verify_asset(const std::string& md5) {
  const auto state = node_.snapshot();
  std::optional<ledger::AssetView> view;
  try {
    view = ledger::query_asset(*state, md5);
  } catch (const Error& e) {
    return error_response(400, e);
  }
  if (!view) return error_response(404, "not-found", "no asset with md5 " + md5);

  std::optional<anchor::AnchorStatus> status;
  if (anchors_) {
    // A covering anchor that failed on the public chain is skipped.
    for (int i = 0; i < 8; ++i) {
      auto record = anchors_->log().covering(view->height);
      if (!record) break;
      auto s = anchors_->anchor_status(*record);
      if (s.record.status != anchor::AnchorState::kFailed) {
        status = std::move(s);
        break;
      }
    }
  }
  return {200, verification_response(*view, status)};
}

ApiResponse AssetApi::chain_status() {
  const auto state = node_.snapshot();
  json peers = json::array();
  std::size_t active = 0;
  for (const auto& s : node_.sessions()) {
    active += s.state == network::SessionState::kActive;
    peers.push_back({{"id", s.peer_id}, {"address", s.remote_address}, {"state", std::string(to_string(s.state))}});
  }
  json doc = {{"node", node_.id()},
              {"privateChain",
               {{"height", state->height()},
                {"tipHash", state->tip_hash().hex()},
                {"tipTime", format_rfc1123(state->tip().header.timestamp)},
                {"difficulty", state->params.difficulty},
                {"pendingTransactions", node_.pending().size()}}},
              {"peerCount", active},
              {"peers", peers},
              {"publicChain", nullptr},
              {"wallet", nullptr},
              {"anchorCost", nullptr},
              {"lastAnchor", nullptr}};
  if (!anchors_) return {200, doc};

  const auto& cfg = anchors_->config();
  auto& backend = *anchors_->backend();
  json pub = {{"backend", backend.id()}, {"headHeight", nullptr}, {"stale", false}};
  try {
    pub["headHeight"] = backend.head_height();
  } catch (const Error&) {
    pub["stale"] = true;
  }

  json wallet = {{"address", anchors_->wallet_address().hex()}, {"balanceWei", nullptr}, {"stale", false}};
  std::optional<anchor::Wei> balance;
  try {
    balance = backend.get_balance(anchors_->wallet_address());
    wallet["balanceWei"] = anchor::to_string(*balance);
    wallet["balanceEther"] = format_ether(*balance);
    wallet["balanceUsd"] = anchors_->wei_to_usd(*balance);
  } catch (const Error&) {
    wallet["stale"] = true;
  }

  json cost = {{"stale", false}};
  try {
    auto c = anchors_->estimated_cost();
    cost["gasLimit"] = c.gas_limit;
    cost["gasPriceWei"] = anchor::to_string(c.gas_price);
    cost["costWei"] = anchor::to_string(c.cost);
    cost["costUsd"] = anchors_->wei_to_usd(c.cost);
    if (balance) cost["sufficientFunds"] = *balance >= c.cost;
  } catch (const Error&) {
    cost["stale"] = true;
  }

  pub["synced"] = false;
  if (auto last = anchors_->log().latest()) {
    auto s = anchors_->anchor_status(*last);
    json a = anchor::to_json(s.record);
    a["confirmations"] = std::to_string(s.confirmations);
    a["explorerUrl"] = s.explorer_url;
    a["stale"] = s.stale;
    doc["lastAnchor"] = a;
    pub["synced"] = s.record.status == anchor::AnchorState::kConfirmed;
  }
  doc["publicChain"] = pub;
  doc["wallet"] = wallet;
  doc["anchorCost"] = cost;
  char fire[16];
  std::snprintf(fire, sizeof fire, "%02d:%02d", cfg.fire_minute_of_day / 60 % 24, cfg.fire_minute_of_day % 60);
  doc["schedule"] = {{"fireTimeUtc", fire}, {"confirmDepth", cfg.confirm_depth}};
  return {200, doc};
}

ApiResponse AssetApi::anchor_history(const std::optional<std::string>& page_text,
                                     const std::optional<std::string>& size_text) {
  const auto page = page_text ? parse_uint(*page_text) : std::optional<std::uint64_t>(1);
  const auto size = size_text ? parse_uint(*size_text) : std::optional<std::uint64_t>(config_.default_page_size);
  if (!page || *page == 0) return error_response(400, "validation", "page must be a positive integer");
  if (!size || *size == 0 || *size > config_.max_page_size) {
    return error_response(400, "validation",
                          "page_size must be between 1 and " + std::to_string(config_.max_page_size));
  }
  json list = json::array();
  std::size_t total = 0;
  if (anchors_) {
    total = anchors_->log().size();
    for (const auto& r : anchors_->log().page(*page, *size)) list.push_back(anchor::to_json(r));
  }
  return {200, {{"page", *page}, {"pageSize", *size}, {"total", total}, {"anchors", list}}};
}

ApiResponse AssetApi::explorer(const std::string& selector) {
  const auto state = node_.snapshot();
  if (selector == "latest") return {200, block_document(*state, state->height())};
  if (auto h = parse_uint(selector)) {
    if (*h <= state->height()) return {200, block_document(*state, *h)};
  } else {
    std::string hex = selector.starts_with("0x") ? selector.substr(2) : selector;
    if (is_lower_hex(hex, 64)) {
      const auto id = Hash32::from_hex(hex);
      if (auto it = state->height_by_hash.find(id); it != state->height_by_hash.end()) {
        return {200, block_document(*state, it->second)};
      }
      if (state->tx_index.contains(id)) return {200, transaction_document(*state, id)};
    }
  }
  return error_response(404, "not-found", "nothing on chain matches " + selector);
}

ApiResponse AssetApi::trigger_anchor(const std::string& body, const std::string& client_address,
                                     const std::optional<std::string>& admin_token) {
  if (!config_.allowlist.allows(client_address)) {
    return error_response(403, "forbidden", client_address + " is not allowed to trigger anchors");
  }
  if (config_.admin_token.empty()) return error_response(403, "forbidden", "manual anchoring is disabled");
  if (!admin_token || admin_token->size() != config_.admin_token.size() ||
      CRYPTO_memcmp(admin_token->data(), config_.admin_token.data(), admin_token->size()) != 0) {
    return error_response(401, "unauthorized", "missing or wrong X-Admin-Token");
  }
  if (!anchors_) return error_response(503, "unavailable", "no wallet configured on this node");

  std::shared_ptr<anchor::PublicChainBackend> via;
  if (!body.empty()) {
    json j;
    try {
      j = json::parse(body);
    } catch (const json::exception&) {
      return error_response(400, "validation", "body is not valid JSON");
    }
    if (!j.is_object()) return error_response(400, "validation", "body must be a JSON object");
    if (j.contains("backend") && !j["backend"].is_null()) {
      if (!j["backend"].is_string()) return error_response(400, "validation", "backend must be a string");
      const auto id = j["backend"].get<std::string>();
      if (auto fb = std::dynamic_pointer_cast<anchor::FallbackBackend>(anchors_->backend())) {
        try {
          via = fb->preferring(id);
        } catch (const Error& e) {
          return error_response(400, e);
        }
      } else if (id != anchors_->backend()->id()) {
        return error_response(400, "validation", "unknown backend: " + id);
      }
    }
  }

  try {
    auto record = anchors_->submit_anchor("manual", via);
    json doc = anchor::to_json(record);
    doc["explorerUrl"] = anchors_->explorer_url(record.eth_tx_hash);
    return {201, {{"anchor", doc}}};
  } catch (const Error& e) {
    int status = 500;
    switch (e.code()) {
      case ErrorCode::kInsufficientFunds: status = 402; break;
      case ErrorCode::kInsufficientDepth: status = 409; break;
      case ErrorCode::kConnection: status = 503; break;
      case ErrorCode::kRejected: status = 502; break;
      case ErrorCode::kValidation: status = 400; break;
      default: break;
    }
    auto r = error_response(status, e);
    r.body["refused"] = true;
    return r;
  }
}

ApiResponse AssetApi::backends() {
  json list = json::array();
  if (anchors_) {
    if (auto fb = std::dynamic_pointer_cast<anchor::FallbackBackend>(anchors_->backend())) {
      for (std::size_t i = 0; i < fb->backends().size(); ++i) {
        list.push_back({{"id", fb->backends()[i]->id()}, {"default", i == 0}});
      }
    } else {
      list.push_back({{"id", anchors_->backend()->id()}, {"default", true}});
    }
  }
  return {200, {{"backends", list}}};
}

}  // namespace provchain::api
