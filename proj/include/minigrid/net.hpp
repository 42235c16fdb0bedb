#pragma once

// Thin POSIX TCP helpers shared by the gateway server and its clients.

#include <cstring>
#include <string>
#include <utility>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include "minigrid/errors.hpp"

namespace minigrid::net {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

inline Endpoint parse_endpoint(const std::string& addr) {
  auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw ConfigError("address must be host:port: " + addr);
  Endpoint ep;
  ep.host = addr.substr(0, colon);
  try {
    ep.port = std::uint16_t(std::stoul(addr.substr(colon + 1)));
  } catch (...) {
    throw ConfigError("bad port in address: " + addr);
  }
  return ep;
}

class Socket {
public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close_fd();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close_fd(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }

  void send_all(const std::string& data) const {
    std::size_t off = 0;
    while (off < data.size()) {
      ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw NetError(std::string("send: ") + std::strerror(errno));
      }
      off += std::size_t(n);
    }
  }

  // Returns 0 on orderly shutdown.
  std::size_t recv_some(char* buf, std::size_t cap) const {
    for (;;) {
      ssize_t n = ::recv(fd_, buf, cap, 0);
      if (n >= 0) return std::size_t(n);
      if (errno == EINTR) continue;
      throw NetError(std::string("recv: ") + std::strerror(errno));
    }
  }

  void shutdown_both() const {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

private:
  void close_fd() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }
  int fd_ = -1;
};

inline sockaddr_in make_addr(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  if (inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) != 1)
    throw NetError("bad IPv4 address: " + ep.host);
  return addr;
}

// Binds and listens; returns the socket and the actually bound port
// (useful when asking for port 0).
inline std::pair<Socket, std::uint16_t> listen_on(const Endpoint& ep, int backlog = 64) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw NetError(std::string("socket: ") + std::strerror(errno));
  Socket sock(fd);
  int one = 1;
  setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr = make_addr(ep);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
    throw NetError("bind " + ep.host + ":" + std::to_string(ep.port) + ": " +
                   std::strerror(errno));
  if (::listen(fd, backlog) != 0)
    throw NetError(std::string("listen: ") + std::strerror(errno));
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
  return {std::move(sock), ntohs(bound.sin_port)};
}

inline Socket connect_to(const Endpoint& ep) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw NetError(std::string("socket: ") + std::strerror(errno));
  Socket sock(fd);
  sockaddr_in addr = make_addr(ep);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0)
    throw NetError("connect " + ep.host + ":" + std::to_string(ep.port) + ": " +
                   std::strerror(errno));
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return sock;
}

} // namespace minigrid::net
