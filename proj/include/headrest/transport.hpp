#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <utility>

namespace headrest {

/// Bidirectional reliable byte stream. A single reader and a single writer
/// may use one stream concurrently.
class ByteStream {
 public:
  virtual ~ByteStream() = default;

  /// Reads at most buf.size() bytes. Returns 0 when nothing arrived within
  /// `timeout`; throws Error(Disconnected) once the peer has closed.
  virtual std::size_t read_some(std::span<std::uint8_t> buf, std::chrono::milliseconds timeout) = 0;
  virtual void write_all(std::span<const std::uint8_t> data) = 0;
  virtual void close() = 0;
};

/// Connected pair of in-process streams.
std::pair<std::unique_ptr<ByteStream>, std::unique_ptr<ByteStream>> make_pipe();

/// "unix:/path/to/socket", "/path/to/socket", or "host:port".
struct Endpoint {
  enum class Kind { Unix, Tcp } kind = Kind::Tcp;
  std::string path;
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  static Endpoint parse(const std::string& text);
  std::string to_string() const;
};

std::unique_ptr<ByteStream> connect(const Endpoint& endpoint,
                                    std::chrono::milliseconds timeout = std::chrono::seconds(5));

class Listener {
 public:
  explicit Listener(const Endpoint& endpoint);
  ~Listener();
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;

  /// Endpoint actually bound (resolves port 0 to the assigned port).
  const Endpoint& endpoint() const { return bound_; }
  /// nullptr on timeout.
  std::unique_ptr<ByteStream> accept(std::chrono::milliseconds timeout);

 private:
  int fd_ = -1;
  Endpoint bound_;
};

}  // namespace headrest
