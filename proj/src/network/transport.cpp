#include "provchain/network/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "provchain/common/error.hpp"
#include "provchain/ledger/codec.hpp"
#include "provchain/network/message.hpp"

namespace provchain::network {
namespace {

// Strips the length prefix, as the receiving end of a stream would.
Bytes unframe(const Bytes& framed) {
  ledger::Reader r(framed);
  Bytes out = r.bytes(kMaxFrame);
  r.finish();
  return out;
}

class LoopbackEndpoint : public Transport {
 public:
  LoopbackEndpoint(LoopbackNetwork& net, std::string local) : net_(net), local_(std::move(local)) {}
  std::optional<Bytes> exchange(const std::string& address, const Bytes& envelope,
                                std::chrono::milliseconds timeout) override;

 private:
  LoopbackNetwork& net_;
  std::string local_;
};

bool write_all(int fd, const std::uint8_t* p, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::send(fd, p, n, MSG_NOSIGNAL);
    if (w < 0 && errno == EINTR) continue;
    if (w <= 0) return false;
    p += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

bool read_all(int fd, std::uint8_t* p, std::size_t n) {
  while (n > 0) {
    const ssize_t r = ::recv(fd, p, n, 0);
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) return false;
    p += r;
    n -= static_cast<std::size_t>(r);
  }
  return true;
}

// Reads one frame; nullopt on orderly EOF before a header.
std::optional<Bytes> read_frame(int fd) {
  std::uint8_t hdr[4];
  if (!read_all(fd, hdr, 4)) return std::nullopt;
  const std::uint32_t len = (std::uint32_t{hdr[0]} << 24) | (std::uint32_t{hdr[1]} << 16) |
                            (std::uint32_t{hdr[2]} << 8) | hdr[3];
  if (len > kMaxFrame) throw Error(ErrorCode::kConnection, "frame too large");
  Bytes body(len);
  if (len > 0 && !read_all(fd, body.data(), len)) throw Error(ErrorCode::kConnection, "truncated frame");
  return body;
}

std::pair<std::string, std::string> split_host_port(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::kConnection, "address must be host:port");
  return {address.substr(0, colon), address.substr(colon + 1)};
}

void set_timeouts(int fd, std::chrono::milliseconds timeout) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
}

}  // namespace

// ---- loopback ---------------------------------------------------------------

void LoopbackNetwork::bind(const std::string& address, Handler handler) {
  std::lock_guard lock(mu_);
  handlers_[address] = std::make_shared<Handler>(std::move(handler));
}

void LoopbackNetwork::unbind(const std::string& address) {
  std::lock_guard lock(mu_);
  handlers_.erase(address);
}

void LoopbackNetwork::set_down(const std::string& address, bool down) {
  std::lock_guard lock(mu_);
  if (down) {
    down_.insert(address);
  } else {
    down_.erase(address);
  }
}

std::optional<Bytes> LoopbackNetwork::deliver(const std::string& from, const std::string& to,
                                              const Bytes& envelope) {
  std::shared_ptr<Handler> handler;
  {
    std::lock_guard lock(mu_);
    auto it = handlers_.find(to);
    if (it == handlers_.end() || down_.contains(to)) {
      throw Error(ErrorCode::kConnection, "peer unreachable: " + to);
    }
    handler = it->second;
  }
  // Handlers run without the registry lock so they may call back into the network.
  auto reply = (*handler)(unframe(frame(envelope)), from);
  if (!reply) return std::nullopt;
  return unframe(frame(*reply));
}

std::optional<Bytes> LoopbackNetwork::exchange(const std::string& address, const Bytes& envelope,
                                               std::chrono::milliseconds) {
  return deliver("", address, envelope);
}

std::shared_ptr<Transport> LoopbackNetwork::endpoint(const std::string& local_address) {
  return std::make_shared<LoopbackEndpoint>(*this, local_address);
}

std::optional<Bytes> LoopbackEndpoint::exchange(const std::string& address, const Bytes& envelope,
                                                std::chrono::milliseconds) {
  return net_.deliver(local_, address, envelope);
}

// ---- tcp ----------------------------------------------------------------------

std::optional<Bytes> TcpTransport::exchange(const std::string& address, const Bytes& envelope,
                                            std::chrono::milliseconds timeout) {
  const auto [host, port] = split_host_port(address);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0 || !res) {
    throw Error(ErrorCode::kConnection, "cannot resolve " + address);
  }
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, &::freeaddrinfo);
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) throw Error(ErrorCode::kConnection, "socket() failed");
  struct Closer {
    int fd;
    ~Closer() { ::close(fd); }
  } closer{fd};
  set_timeouts(fd, timeout);
  if (::connect(fd, res->ai_addr, res->ai_addrlen) != 0) {
    throw Error(ErrorCode::kConnection, "cannot connect to " + address + ": " + std::strerror(errno));
  }
  const Bytes out = frame(envelope);
  if (!write_all(fd, out.data(), out.size())) throw Error(ErrorCode::kConnection, "send failed");
  auto reply = read_frame(fd);
  if (!reply) throw Error(ErrorCode::kConnection, "peer closed the connection");
  if (reply->empty()) return std::nullopt;
  return reply;
}

TcpListener::TcpListener(const std::string& host, std::uint16_t port, Handler handler)
    : host_(host), handler_(std::move(handler)) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw Error(ErrorCode::kConnection, "socket() failed");
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw Error(ErrorCode::kConnection, "listen host must be an IPv4 address: " + host);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 ||
      ::listen(listen_fd_, 64) != 0) {
    ::close(listen_fd_);
    throw Error(ErrorCode::kConnection, "cannot listen on " + host + ":" + std::to_string(port));
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

TcpListener::~TcpListener() { stop(); }

std::string TcpListener::address() const { return host_ + ":" + std::to_string(port_); }

void TcpListener::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  if (acceptor_.joinable()) acceptor_.join();
  std::map<std::thread::id, std::thread> workers;
  {
    std::lock_guard lock(mu_);
    for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
    finished_.clear();
  }
  for (auto& [id, t] : workers) t.join();
}

void TcpListener::reap_finished_locked() {
  for (const auto& id : finished_) {
    auto it = workers_.find(id);
    if (it == workers_.end()) continue;
    it->second.join();
    workers_.erase(it);
  }
  finished_.clear();
}

void TcpListener::accept_loop() {
  while (running_) {
    sockaddr_in peer{};
    socklen_t len = sizeof peer;
    const int fd = ::accept(listen_fd_, reinterpret_cast<sockaddr*>(&peer), &len);
    if (fd < 0) {
      if (!running_) return;
      continue;
    }
    char ip[INET_ADDRSTRLEN] = {};
    ::inet_ntop(AF_INET, &peer.sin_addr, ip, sizeof ip);
    std::string remote = std::string(ip) + ":" + std::to_string(ntohs(peer.sin_port));
    std::lock_guard lock(mu_);
    reap_finished_locked();
    client_fds_.insert(fd);
    std::thread worker([this, fd, remote] { serve(fd, remote); });
    const auto id = worker.get_id();
    workers_.emplace(id, std::move(worker));
  }
}

void TcpListener::serve(int fd, std::string remote) {
  try {
    while (running_) {
      auto request = read_frame(fd);
      if (!request) break;
      std::optional<Bytes> reply;
      try {
        reply = handler_(*request, remote);
      } catch (const std::exception&) {
        reply.reset();
      }
      const Bytes out = frame(reply ? *reply : Bytes{});
      if (!write_all(fd, out.data(), out.size())) break;
    }
  } catch (const Error&) {
  }
  std::lock_guard lock(mu_);
  client_fds_.erase(fd);
  ::close(fd);
  finished_.push_back(std::this_thread::get_id());
}

}  // namespace provchain::network
