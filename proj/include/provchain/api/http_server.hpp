#pragma once

#include <memory>
#include <string>
#include <thread>

#include "provchain/api/asset_api.hpp"

namespace provchain::api {

// Serves AssetApi over HTTP/1.1. Authorization uses only the socket peer
// address; forwarding headers are ignored.
class HttpServer {
 public:
  HttpServer(AssetApi& api, const std::string& host, std::uint16_t port,
             std::shared_ptr<RequestLog> log = nullptr, Clock clock = system_clock());
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  std::uint16_t port() const { return port_; }
  std::string url() const;
  void stop();
  void wait();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::string host_;
  std::uint16_t port_ = 0;
  std::thread thread_;
};

}  // namespace provchain::api
