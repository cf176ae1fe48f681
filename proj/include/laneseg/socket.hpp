#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstdint>
#include <cstring>
#include <string>
#include <utility>

#include "laneseg/errors.hpp"

namespace laneseg::net {

// RAII TCP socket with exact-length reads and writes.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket() { close(); }

  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = o.fd_;
      o.fd_ = -1;
    }
    return *this;
  }

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }

  void close() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  // interrupts any blocked read/write on this socket from another thread
  void shutdown_both() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

  void write_all(const void* data, std::size_t len) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    while (len > 0) {
      const ssize_t n = ::send(fd_, p, len, MSG_NOSIGNAL);
      if (n <= 0) {
        if (n < 0 && errno == EINTR) continue;
        throw NetError("socket write failed: " + std::string(std::strerror(errno)));
      }
      p += n;
      len -= static_cast<std::size_t>(n);
    }
  }

  // reads exactly len bytes; throws NetError on error or mid-read EOF
  void read_exact(void* data, std::size_t len) {
    auto* p = static_cast<std::uint8_t*>(data);
    while (len > 0) {
      const ssize_t n = ::recv(fd_, p, len, 0);
      if (n == 0) throw NetError("connection closed mid-message");
      if (n < 0) {
        if (errno == EINTR) continue;
        throw NetError("socket read failed: " + std::string(std::strerror(errno)));
      }
      p += n;
      len -= static_cast<std::size_t>(n);
    }
  }

  // reads up to len bytes; returns 0 on orderly EOF
  std::size_t read_some(void* data, std::size_t len) {
    while (true) {
      const ssize_t n = ::recv(fd_, data, len, 0);
      if (n >= 0) return static_cast<std::size_t>(n);
      if (errno == EINTR) continue;
      throw NetError("socket read failed: " + std::string(std::strerror(errno)));
    }
  }

 private:
  int fd_ = -1;
};

inline Socket connect_tcp(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  if (getaddrinfo(host.c_str(), service.c_str(), &hints, &res) != 0 || !res) {
    throw NetError("cannot resolve host: " + host);
  }
  int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) {
    freeaddrinfo(res);
    throw NetError("cannot create socket: " + std::string(std::strerror(errno)));
  }
  if (::connect(fd, res->ai_addr, res->ai_addrlen) != 0) {
    const std::string reason = std::strerror(errno);
    freeaddrinfo(res);
    ::close(fd);
    throw NetError("cannot connect to " + host + ":" + service + ": " + reason);
  }
  freeaddrinfo(res);
  return Socket(fd);
}

// Listening socket; port 0 binds an ephemeral port.
class Listener {
 public:
  Listener(const std::string& host, std::uint16_t port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw NetError("cannot create listener: " + std::string(std::strerror(errno)));
    const int one = 1;
    setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (host.empty() || host == "0.0.0.0") {
      addr.sin_addr.s_addr = htonl(INADDR_ANY);
    } else if (host == "localhost") {
      addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    } else if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
      ::close(fd_);
      throw NetError("cannot parse bind address: " + host);
    }
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      const std::string reason = std::strerror(errno);
      ::close(fd_);
      throw NetError("cannot bind " + host + ":" + std::to_string(port) + ": " + reason);
    }
    if (::listen(fd_, 16) != 0) {
      const std::string reason = std::strerror(errno);
      ::close(fd_);
      throw NetError("cannot listen: " + reason);
    }
    sockaddr_in bound{};
    socklen_t len = sizeof(bound);
    getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
  }

  ~Listener() { close(); }
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;

  std::uint16_t port() const { return port_; }

  // blocks; throws NetError once the listener is closed
  Socket accept() {
    while (true) {
      const int fd = ::accept(fd_, nullptr, nullptr);
      if (fd >= 0) return Socket(fd);
      if (errno == EINTR) continue;
      throw NetError("accept failed: " + std::string(std::strerror(errno)));
    }
  }

  void close() {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

}  // namespace laneseg::net
