#include "provchain/anchor/json_rpc.hpp"

#include <httplib.h>

#include <atomic>
#include <json.hpp>

#include "provchain/common/error.hpp"

namespace provchain::anchor {

using nlohmann::json;

namespace {

std::string hex_data(ByteView b) { return "0x" + to_hex(b); }

std::uint64_t quantity_u64(const json& j) {
  if (!j.is_string()) throw Error(ErrorCode::kDecode, "expected a hex quantity");
  const Wei v = parse_wei(j.get<std::string>());
  if (v > std::numeric_limits<std::uint64_t>::max()) throw Error(ErrorCode::kDecode, "quantity too large");
  return static_cast<std::uint64_t>(v);
}

Wei quantity(const json& j) {
  if (!j.is_string()) throw Error(ErrorCode::kDecode, "expected a hex quantity");
  return parse_wei(j.get<std::string>());
}

Hash32 scalar(const json& j) {
  Bytes b = rlp::wei_bytes(quantity(j));
  Hash32 h;
  std::copy(b.begin(), b.end(), h.bytes.end() - static_cast<std::ptrdiff_t>(b.size()));
  return h;
}

Wei to_wei_scalar(const Hash32& h) {
  Wei v = 0;
  boost::multiprecision::import_bits(v, h.bytes.begin(), h.bytes.end(), 8);
  return v;
}

json tx_json(const SignedEthTransaction& t) {
  return {{"hash", hex_data(t.hash().view())},
          {"nonce", to_quantity_hex(t.tx.nonce)},
          {"gasPrice", to_quantity_hex(t.tx.gas_price)},
          {"gas", to_quantity_hex(t.tx.gas_limit)},
          {"to", t.tx.to.hex()},
          {"value", to_quantity_hex(t.tx.value)},
          {"input", hex_data(t.tx.data)},
          {"v", to_quantity_hex(t.v)},
          {"r", to_quantity_hex(to_wei_scalar(t.r))},
          {"s", to_quantity_hex(to_wei_scalar(t.s))}};
}

}  // namespace

struct JsonRpcBackend::Impl {
  std::string scheme_host_port;
  std::string path;
  std::chrono::milliseconds timeout;
  std::atomic<std::uint64_t> next_id{1};

  json call(const std::string& method, json params) {
    httplib::Client cli(scheme_host_port);
    const auto secs = timeout.count() / 1000;
    const auto usecs = (timeout.count() % 1000) * 1000;
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    json req = {{"jsonrpc", "2.0"}, {"id", next_id++}, {"method", method}, {"params", std::move(params)}};
    auto res = cli.Post(path, req.dump(), "application/json");
    if (!res) {
      throw Error(ErrorCode::kConnection,
                  scheme_host_port + " unreachable: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
      throw Error(ErrorCode::kConnection, scheme_host_port + " answered HTTP " + std::to_string(res->status));
    }
    json body;
    try {
      body = json::parse(res->body);
    } catch (const json::exception&) {
      throw Error(ErrorCode::kConnection, scheme_host_port + " sent a malformed reply");
    }
    if (body.contains("error") && !body["error"].is_null()) {
      throw Error(ErrorCode::kRejected, body["error"].value("message", std::string("rpc error")));
    }
    if (!body.contains("result")) throw Error(ErrorCode::kConnection, "reply without result");
    return body["result"];
  }
};

JsonRpcBackend::JsonRpcBackend(std::string id, std::string url, std::chrono::milliseconds timeout)
    : id_(std::move(id)), url_(std::move(url)), impl_(std::make_shared<Impl>()) {
  if (!url_.starts_with("http://")) throw Error(ErrorCode::kValidation, "backend url must start with http://");
  const auto slash = url_.find('/', 7);
  impl_->scheme_host_port = url_.substr(0, slash);
  impl_->path = slash == std::string::npos ? "/" : url_.substr(slash);
  impl_->timeout = timeout;
}

std::uint64_t JsonRpcBackend::get_nonce(const crypto::Address& address) {
  return quantity_u64(impl_->call("eth_getTransactionCount", {address.hex(), "pending"}));
}

Wei JsonRpcBackend::get_balance(const crypto::Address& address) {
  return quantity(impl_->call("eth_getBalance", {address.hex(), "latest"}));
}

std::uint64_t JsonRpcBackend::estimate_gas(const EthTransaction& tx, const crypto::Address& from) {
  json call = {{"from", from.hex()},
               {"to", tx.to.hex()},
               {"value", to_quantity_hex(tx.value)},
               {"data", hex_data(tx.data)}};
  return quantity_u64(impl_->call("eth_estimateGas", {call}));
}

Wei JsonRpcBackend::gas_price() { return quantity(impl_->call("eth_gasPrice", json::array())); }

SendResult JsonRpcBackend::send_raw_transaction(ByteView raw) {
  auto result = impl_->call("eth_sendRawTransaction", {hex_data(raw)});
  if (!result.is_string()) throw Error(ErrorCode::kRejected, "no transaction hash returned");
  try {
    return {Hash32::from_hex(result.get<std::string>()), id_};
  } catch (const Error&) {
    throw Error(ErrorCode::kRejected, "malformed transaction hash returned");
  }
}

std::optional<Receipt> JsonRpcBackend::get_receipt(const Hash32& tx_hash) {
  auto r = impl_->call("eth_getTransactionReceipt", {hex_data(tx_hash.view())});
  if (r.is_null() || r["blockNumber"].is_null()) return std::nullopt;
  Receipt out;
  out.block_height = quantity_u64(r["blockNumber"]);
  out.success = r.value("status", std::string("0x1")) == "0x1";
  if (r.contains("gasUsed")) out.gas_used = quantity_u64(r["gasUsed"]);
  return out;
}

std::optional<SignedEthTransaction> JsonRpcBackend::get_transaction(const Hash32& tx_hash) {
  auto r = impl_->call("eth_getTransactionByHash", {hex_data(tx_hash.view())});
  if (r.is_null()) return std::nullopt;
  SignedEthTransaction t;
  try {
    t.tx.nonce = quantity_u64(r.at("nonce"));
    t.tx.gas_price = quantity(r.at("gasPrice"));
    t.tx.gas_limit = quantity_u64(r.at("gas"));
    t.tx.to = crypto::Address::from_hex(r.at("to").get<std::string>());
    t.tx.value = quantity(r.at("value"));
    t.tx.data = from_hex(r.at("input").get<std::string>());
    t.v = quantity_u64(r.at("v"));
    t.r = scalar(r.at("r"));
    t.s = scalar(r.at("s"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kDecode, std::string("malformed transaction document: ") + e.what());
  }
  return t;
}

std::uint64_t JsonRpcBackend::head_height() {
  return quantity_u64(impl_->call("eth_blockNumber", json::array()));
}

struct MockRpcServer::Impl {
  std::shared_ptr<MockPublicChain> chain;
  httplib::Server server;

  json dispatch(const std::string& method, const json& p) {
    auto addr = [&](std::size_t i) { return crypto::Address::from_hex(p.at(i).get<std::string>()); };
    auto hash = [&](std::size_t i) { return Hash32::from_hex(p.at(i).get<std::string>()); };
    if (method == "eth_getTransactionCount") return to_quantity_hex(chain->get_nonce(addr(0)));
    if (method == "eth_getBalance") return to_quantity_hex(chain->get_balance(addr(0)));
    if (method == "eth_gasPrice") return to_quantity_hex(chain->gas_price());
    if (method == "eth_blockNumber") return to_quantity_hex(chain->head_height());
    if (method == "eth_estimateGas") {
      EthTransaction tx;
      tx.data = from_hex(p.at(0).value("data", std::string("0x")));
      return to_quantity_hex(chain->estimate_gas(tx, {}));
    }
    if (method == "eth_sendRawTransaction") {
      auto sent = chain->send_raw_transaction(from_hex(p.at(0).get<std::string>()));
      return hex_data(sent.tx_hash.view());
    }
    if (method == "eth_getTransactionReceipt") {
      auto h = hash(0);
      auto r = chain->get_receipt(h);
      if (!r) return nullptr;
      return {{"transactionHash", hex_data(h.view())},
              {"blockNumber", to_quantity_hex(r->block_height)},
              {"status", r->success ? "0x1" : "0x0"},
              {"gasUsed", to_quantity_hex(r->gas_used)}};
    }
    if (method == "eth_getTransactionByHash") {
      auto t = chain->get_transaction(hash(0));
      if (!t) return nullptr;
      return tx_json(*t);
    }
    if (method == "evm_mine") return to_quantity_hex(chain->step());
    if (method == "mock_setBalance") {
      chain->set_balance(addr(0), parse_wei(p.at(1).get<std::string>()));
      return true;
    }
    throw std::invalid_argument("method not found: " + method);
  }

  void handle(const httplib::Request& req, httplib::Response& res) {
    json reply = {{"jsonrpc", "2.0"}, {"id", nullptr}};
    try {
      json body = json::parse(req.body);
      reply["id"] = body.value("id", json());
      reply["result"] = dispatch(body.at("method").get<std::string>(), body.value("params", json::array()));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kConnection) {
        res.status = 503;
        return;
      }
      reply["error"] = {{"code", -32000}, {"message", e.what()}};
    } catch (const std::exception& e) {
      reply["error"] = {{"code", -32602}, {"message", e.what()}};
    }
    res.set_content(reply.dump(), "application/json");
  }
};

MockRpcServer::MockRpcServer(std::shared_ptr<MockPublicChain> chain, const std::string& host, std::uint16_t port)
    : impl_(std::make_unique<Impl>()), host_(host) {
  impl_->chain = std::move(chain);
  impl_->server.Post("/", [this](const httplib::Request& req, httplib::Response& res) { impl_->handle(req, res); });
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::kIo, "cannot bind mock rpc server on " + host);
    port_ = static_cast<std::uint16_t>(bound);
  } else {
    if (!impl_->server.bind_to_port(host, port)) {
      throw Error(ErrorCode::kIo, "cannot bind mock rpc server on " + host + ":" + std::to_string(port));
    }
    port_ = port;
  }
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

MockRpcServer::~MockRpcServer() { stop(); }

std::string MockRpcServer::url() const { return "http://" + host_ + ":" + std::to_string(port_); }

void MockRpcServer::stop() {
  impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

void MockRpcServer::wait() {
  while (impl_->server.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

}  // namespace provchain::anchor
