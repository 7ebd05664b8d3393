#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "provchain/common/bytes.hpp"

namespace provchain::network {

// Receives one envelope from `remote` and returns the reply envelope, if any.
using Handler = std::function<std::optional<Bytes>(const Bytes& envelope, const std::string& remote)>;

// Request/response delivery of envelopes. Implementations throw
// Error(kConnection) on unreachable peers and timeouts.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::optional<Bytes> exchange(const std::string& address, const Bytes& envelope,
                                        std::chrono::milliseconds timeout) = 0;
};

// In-process network: addresses map straight to handlers. Every exchange goes
// through the same framing as TCP. Peers can be taken down to inject faults.
class LoopbackNetwork : public Transport {
 public:
  void bind(const std::string& address, Handler handler);
  void unbind(const std::string& address);
  void set_down(const std::string& address, bool down);

  std::optional<Bytes> exchange(const std::string& address, const Bytes& envelope,
                                std::chrono::milliseconds timeout) override;

  // A Transport whose exchanges carry `local_address` as the caller, so
  // handlers can tell peers apart.
  std::shared_ptr<Transport> endpoint(const std::string& local_address);

  std::optional<Bytes> deliver(const std::string& from, const std::string& to, const Bytes& envelope);

 private:

  std::mutex mu_;
  std::map<std::string, std::shared_ptr<Handler>> handlers_;
  std::set<std::string> down_;
};

class TcpTransport : public Transport {
 public:
  std::optional<Bytes> exchange(const std::string& address, const Bytes& envelope,
                                std::chrono::milliseconds timeout) override;
};

// Accepts framed requests on host:port and answers each with one framed reply
// (a zero-length frame when the handler returns nothing).
class TcpListener {
 public:
  TcpListener(const std::string& host, std::uint16_t port, Handler handler);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  std::string address() const;
  void stop();

 private:
  void accept_loop();
  void serve(int fd, std::string remote);

  std::string host_;
  std::uint16_t port_ = 0;
  Handler handler_;
  int listen_fd_ = -1;
  std::atomic<bool> running_{true};
  std::thread acceptor_;
  void reap_finished_locked();

  std::mutex mu_;
  std::map<std::thread::id, std::thread> workers_;
  std::vector<std::thread::id> finished_;
  std::set<int> client_fds_;
};

}  // namespace provchain::network
