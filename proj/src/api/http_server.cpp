#include "provchain/api/http_server.hpp"

#include <httplib.h>

#include "provchain/common/error.hpp"

namespace provchain::api {

struct HttpServer::Impl {
  AssetApi& api;
  std::shared_ptr<RequestLog> log;
  Clock clock;
  httplib::Server server;

  Impl(AssetApi& a, std::shared_ptr<RequestLog> l, Clock c) : api(a), log(std::move(l)), clock(std::move(c)) {}

  static void send(httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(2), "application/json");
  }

  static std::optional<std::string> param(const httplib::Request& req, const char* name) {
    if (!req.has_param(name)) return std::nullopt;
    return req.get_param_value(name);
  }

  void routes() {
    server.Post("/assets", [this](const httplib::Request& req, httplib::Response& res) {
      send(res, api.submit_asset(req.body, req.remote_addr));
    });
    server.Get(R"(/assets/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      send(res, api.verify_asset(req.matches[1]));
    });
    server.Get("/status", [this](const httplib::Request&, httplib::Response& res) { send(res, api.chain_status()); });
    server.Get("/anchors", [this](const httplib::Request& req, httplib::Response& res) {
      send(res, api.anchor_history(param(req, "page"), param(req, "page_size")));
    });
    server.Get("/anchors/backends", [this](const httplib::Request&, httplib::Response& res) {
      send(res, api.backends());
    });
    server.Post("/anchors/trigger", [this](const httplib::Request& req, httplib::Response& res) {
      std::optional<std::string> token;
      if (req.has_header("X-Admin-Token")) token = req.get_header_value("X-Admin-Token");
      send(res, api.trigger_anchor(req.body, req.remote_addr, token));
    });
    server.Get(R"(/explorer/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      send(res, api.explorer(req.matches[1]));
    });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string what = "internal error";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      send(res, {500, {{"error", "internal"}, {"message", what}}});
    });
    server.set_logger([this](const httplib::Request& req, const httplib::Response& res) {
      if (!log) return;
      std::string outcome = "ok";
      if (res.status >= 400) {
        try {
          outcome = nlohmann::json::parse(res.body).value("error", std::string("error"));
        } catch (const std::exception&) {
          outcome = "error";
        }
      }
      log->record(clock(), req.method, req.path, req.remote_addr, res.status, outcome);
    });
  }
};

HttpServer::HttpServer(AssetApi& api, const std::string& host, std::uint16_t port, std::shared_ptr<RequestLog> log,
                       Clock clock)
    : impl_(std::make_unique<Impl>(api, std::move(log), std::move(clock))), host_(host) {
  impl_->routes();
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::kIo, "cannot bind api server on " + host);
    port_ = static_cast<std::uint16_t>(bound);
  } else {
    if (!impl_->server.bind_to_port(host, port)) {
      throw Error(ErrorCode::kIo, "cannot bind api server on " + host + ":" + std::to_string(port));
    }
    port_ = port;
  }
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

HttpServer::~HttpServer() { stop(); }

std::string HttpServer::url() const { return "http://" + host_ + ":" + std::to_string(port_); }

void HttpServer::stop() {
  impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

void HttpServer::wait() {
  while (impl_->server.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

}  // namespace provchain::api
