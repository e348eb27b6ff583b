#include "headrest/transport.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <thread>

#include "headrest/error.hpp"

namespace headrest {

namespace {

struct Channel {
  std::mutex mutex;
  std::condition_variable ready;
  std::deque<std::uint8_t> bytes;
  bool closed = false;
};

class PipeStream final : public ByteStream {
 public:
  PipeStream(std::shared_ptr<Channel> in, std::shared_ptr<Channel> out)
      : in_(std::move(in)), out_(std::move(out)) {}
  ~PipeStream() override { close(); }

  std::size_t read_some(std::span<std::uint8_t> buf, std::chrono::milliseconds timeout) override {
    std::unique_lock lock(in_->mutex);
    in_->ready.wait_for(lock, timeout, [&] { return !in_->bytes.empty() || in_->closed; });
    if (in_->bytes.empty()) {
      if (in_->closed) throw Error(ErrorCode::Disconnected, "pipe closed by peer");
      return 0;
    }
    const std::size_t n = std::min(buf.size(), in_->bytes.size());
    std::copy_n(in_->bytes.begin(), n, buf.begin());
    in_->bytes.erase(in_->bytes.begin(), in_->bytes.begin() + static_cast<std::ptrdiff_t>(n));
    return n;
  }

  void write_all(std::span<const std::uint8_t> data) override {
    {
      std::lock_guard lock(out_->mutex);
      if (out_->closed) throw Error(ErrorCode::Disconnected, "pipe closed");
      out_->bytes.insert(out_->bytes.end(), data.begin(), data.end());
    }
    out_->ready.notify_all();
  }

  void close() override {
    for (const auto& ch : {in_, out_}) {
      {
        std::lock_guard lock(ch->mutex);
        ch->closed = true;
      }
      ch->ready.notify_all();
    }
  }

 private:
  std::shared_ptr<Channel> in_;
  std::shared_ptr<Channel> out_;
};

class SocketStream final : public ByteStream {
 public:
  explicit SocketStream(int fd) : fd_(fd) {}
  ~SocketStream() override { close(); }

  std::size_t read_some(std::span<std::uint8_t> buf, std::chrono::milliseconds timeout) override {
    if (fd_ < 0) throw Error(ErrorCode::Disconnected, "socket closed");
    pollfd pfd{fd_, POLLIN, 0};
    const int r = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (r < 0) {
      if (errno == EINTR) return 0;
      throw Error(ErrorCode::Io, std::strerror(errno));
    }
    if (r == 0) return 0;
    const ssize_t n = ::recv(fd_, buf.data(), buf.size(), 0);
    if (n == 0) throw Error(ErrorCode::Disconnected, "peer closed the connection");
    if (n < 0) {
      if (errno == EAGAIN || errno == EINTR) return 0;
      throw Error(ErrorCode::Disconnected, std::strerror(errno));
    }
    return static_cast<std::size_t>(n);
  }

  void write_all(std::span<const std::uint8_t> data) override {
    std::size_t sent = 0;
    while (sent < data.size()) {
      const ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorCode::Disconnected, std::strerror(errno));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  void close() override {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  int fd_;
};

sockaddr_un unix_address(const std::string& path) {
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  if (path.size() >= sizeof(addr.sun_path)) throw Error(ErrorCode::InvalidArgument, "socket path too long");
  std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
  return addr;
}

sockaddr_in tcp_address(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  if (::inet_pton(AF_INET, ep.host == "localhost" ? "127.0.0.1" : ep.host.c_str(), &addr.sin_addr) != 1) {
    throw Error(ErrorCode::InvalidArgument, "expected an IPv4 address: " + ep.host);
  }
  return addr;
}

}  // namespace

std::pair<std::unique_ptr<ByteStream>, std::unique_ptr<ByteStream>> make_pipe() {
  auto a_to_b = std::make_shared<Channel>();
  auto b_to_a = std::make_shared<Channel>();
  return {std::make_unique<PipeStream>(b_to_a, a_to_b), std::make_unique<PipeStream>(a_to_b, b_to_a)};
}

Endpoint Endpoint::parse(const std::string& text) {
  Endpoint ep;
  if (text.rfind("unix:", 0) == 0 || text.find('/') != std::string::npos) {
    ep.kind = Kind::Unix;
    ep.path = text.rfind("unix:", 0) == 0 ? text.substr(5) : text;
    return ep;
  }
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::InvalidArgument, "endpoint needs host:port: " + text);
  ep.host = text.substr(0, colon);
  try {
    const int port = std::stoi(text.substr(colon + 1));
    if (port < 0 || port > 65535) throw std::out_of_range("port");
    ep.port = static_cast<std::uint16_t>(port);
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, "bad port in endpoint: " + text);
  }
  return ep;
}

std::string Endpoint::to_string() const {
  return kind == Kind::Unix ? "unix:" + path : host + ":" + std::to_string(port);
}

std::unique_ptr<ByteStream> connect(const Endpoint& endpoint, std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    const int fd = ::socket(endpoint.kind == Endpoint::Kind::Unix ? AF_UNIX : AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw Error(ErrorCode::Io, std::strerror(errno));
    int rc;
    if (endpoint.kind == Endpoint::Kind::Unix) {
      const sockaddr_un addr = unix_address(endpoint.path);
      rc = ::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr));
    } else {
      const sockaddr_in addr = tcp_address(endpoint);
      rc = ::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr));
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    }
    if (rc == 0) return std::make_unique<SocketStream>(fd);
    const int err = errno;
    ::close(fd);
    if (std::chrono::steady_clock::now() >= deadline) {
      throw Error(ErrorCode::Disconnected, "cannot connect to " + endpoint.to_string() + ": " + std::strerror(err));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

Listener::Listener(const Endpoint& endpoint) : bound_(endpoint) {
  fd_ = ::socket(endpoint.kind == Endpoint::Kind::Unix ? AF_UNIX : AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw Error(ErrorCode::Io, std::strerror(errno));
  int rc;
  if (endpoint.kind == Endpoint::Kind::Unix) {
    ::unlink(endpoint.path.c_str());
    const sockaddr_un addr = unix_address(endpoint.path);
    rc = ::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr));
  } else {
    const int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    const sockaddr_in addr = tcp_address(endpoint);
    rc = ::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr));
    if (rc == 0) {
      sockaddr_in actual{};
      socklen_t len = sizeof(actual);
      ::getsockname(fd_, reinterpret_cast<sockaddr*>(&actual), &len);
      bound_.port = ntohs(actual.sin_port);
    }
  }
  if (rc != 0 || ::listen(fd_, 1) != 0) {
    const std::string msg = std::strerror(errno);
    ::close(fd_);
    throw Error(ErrorCode::Io, "cannot listen on " + endpoint.to_string() + ": " + msg);
  }
}

Listener::~Listener() {
  if (fd_ >= 0) {
    ::close(fd_);
    if (bound_.kind == Endpoint::Kind::Unix) ::unlink(bound_.path.c_str());
  }
}

std::unique_ptr<ByteStream> Listener::accept(std::chrono::milliseconds timeout) {
  pollfd pfd{fd_, POLLIN, 0};
  if (::poll(&pfd, 1, static_cast<int>(timeout.count())) <= 0) return nullptr;
  const int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) throw Error(ErrorCode::Io, std::strerror(errno));
  if (bound_.kind == Endpoint::Kind::Tcp) {
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }
  return std::make_unique<SocketStream>(fd);
}

}  // namespace headrest
