#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

#include "provchain/anchor/service.hpp"
#include "provchain/api/cidr.hpp"
#include "provchain/network/node.hpp"

namespace provchain::api {

struct ApiConfig {
  Allowlist allowlist;        // who may submit assets
  std::string admin_token;    // X-Admin-Token for manual anchors; empty disables them
  std::size_t default_page_size = 20;
  std::size_t max_page_size = 100;
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

// One JSON line per request: time, method, route, source, status, outcome.
class RequestLog {
 public:
  explicit RequestLog(std::filesystem::path file);
  void record(std::int64_t at_ms, const std::string& method, const std::string& route, const std::string& source,
              int status, const std::string& outcome);

 private:
  std::mutex mu_;
  std::filesystem::path path_;
};

// The HTTP-independent handlers. `anchors` may be null on nodes without a
// wallet; anchor routes then report the feature as unavailable.
class AssetApi {
 public:
  AssetApi(network::Node& node, std::shared_ptr<anchor::AnchorService> anchors, ApiConfig config,
           Clock clock = system_clock());

  // POST /assets
  ApiResponse submit_asset(const std::string& body, const std::string& client_address);
  // GET /assets/{md5}
  ApiResponse verify_asset(const std::string& md5);
  // GET /status
  ApiResponse chain_status();
  // GET /anchors?page=&page_size=
  ApiResponse anchor_history(const std::optional<std::string>& page, const std::optional<std::string>& page_size);
  // GET /explorer/{selector}: "latest", a height, a block hash or a transaction id
  ApiResponse explorer(const std::string& selector);
  // POST /anchors/trigger, body optionally {"backend": "<id>"}
  ApiResponse trigger_anchor(const std::string& body, const std::string& client_address,
                             const std::optional<std::string>& admin_token);
  // GET /anchors/backends
  ApiResponse backends();

  const ApiConfig& config() const { return config_; }

 private:
  network::Node& node_;
  std::shared_ptr<anchor::AnchorService> anchors_;
  ApiConfig config_;
  Clock clock_;
};

// Key set of Fig. 3C-style verification responses, plus "parentAsset" for
// derived assets.
nlohmann::json verification_response(const ledger::AssetView& view, const std::optional<anchor::AnchorStatus>& anchor);

nlohmann::json block_document(const ledger::ChainState& state, std::uint64_t height);
nlohmann::json transaction_document(const ledger::ChainState& state, const Hash32& tx_id);

}  // namespace provchain::api
