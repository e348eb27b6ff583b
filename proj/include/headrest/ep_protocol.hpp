#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "headrest/geometry.hpp"
#include "headrest/transport.hpp"

namespace headrest {

enum class TrustedSide : std::uint8_t { Left = 0, Right = 1, Both = 2 };

/// Binaural position update sent from the ear-positioning process to the
/// controller. Coordinates are stage-frame meters.
struct EarPositionMessage {
  std::uint8_t version = 1;
  std::uint64_t timestamp_us = 0;
  Vec3 left = Vec3::Zero();
  Vec3 right = Vec3::Zero();
  TrustedSide trusted = TrustedSide::Left;
  float confidence = 0.0f;

  void validate() const;
  friend bool operator==(const EarPositionMessage&, const EarPositionMessage&) = default;
};

inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::size_t kPayloadSize = 1 + 1 + 8 + 48 + 4;  // before CRC
inline constexpr std::size_t kFrameSize = 2 + kPayloadSize + 4;  // 68 bytes

/// Frame: u16 big-endian length of the remainder, then version u8, flags u8
/// (bits 0-1 trusted side), timestamp u64, 6 x f64 coordinates, f32
/// confidence, CRC32 of the payload; all little-endian after the prefix.
std::vector<std::uint8_t> encode(const EarPositionMessage& msg);

struct Decoded {
  EarPositionMessage message;
  std::size_t consumed = 0;
};

/// Decodes the frame at the start of `bytes`. Throws TruncatedFrame when
/// the frame is incomplete (nothing consumed), BadLength, BadCrc or
/// BadVersion for a complete but invalid frame.
Decoded decode(std::span<const std::uint8_t> bytes);

EarPositionMessage make_message(const EarEstimate& ears, std::uint64_t timestamp_us, float confidence);
EarEstimate to_ear_estimate(const EarPositionMessage& msg);

/// Depth-1 latest-wins mailbox for one writer and one reader. Lock-free
/// triple buffer: neither side ever waits for the other. The writer drops
/// messages not newer than the last one it accepted.
class Mailbox {
 public:
  /// False if the message was not newer than the last accepted one.
  bool offer(const EarPositionMessage& msg);
  /// Newest message not yet taken.
  std::optional<EarPositionMessage> take();

 private:
  static constexpr std::uint8_t kFresh = 0x4;

  std::array<EarPositionMessage, 3> slots_{};
  std::atomic<std::uint8_t> middle_{2};
  std::uint8_t back_ = 0;   // writer-owned
  std::uint8_t front_ = 1;  // reader-owned
  std::optional<std::uint64_t> last_timestamp_;  // writer-owned
};

/// Time source used for staleness; steady clock unless a test injects one.
using Clock = std::function<std::chrono::steady_clock::time_point()>;
Clock steady_clock_source();

inline constexpr std::chrono::milliseconds kStaleAfter{250};

enum class LinkStatus { NoData, Fresh, Stale, Disconnected };

class Publisher {
 public:
  explicit Publisher(ByteStream& stream) : stream_(stream) {}
  void publish(const EarPositionMessage& msg);
  std::size_t sent() const { return sent_; }

 private:
  ByteStream& stream_;
  std::size_t sent_ = 0;
};

struct SubscriberStats {
  std::size_t delivered = 0;     // frames that passed all checks
  std::size_t bad_crc = 0;
  std::size_t bad_version = 0;
  std::size_t bad_length = 0;
  std::size_t out_of_order = 0;  // valid but older than the mailbox content
};

/// Receiving end. `pump` drains whatever bytes are available into the
/// mailbox; `start` runs pumping on a background thread.
class Subscriber {
 public:
  Subscriber(ByteStream& stream, Clock clock = steady_clock_source(),
             std::chrono::milliseconds stale_after = kStaleAfter);
  ~Subscriber();
  Subscriber(const Subscriber&) = delete;
  Subscriber& operator=(const Subscriber&) = delete;

  /// Reads for at most `wait`; returns the number of frames delivered.
  std::size_t pump(std::chrono::milliseconds wait = std::chrono::milliseconds(0));
  void start();
  void stop();

  std::optional<EarPositionMessage> poll() { return mailbox_.take(); }
  LinkStatus status() const;
  SubscriberStats stats() const;

 private:
  std::size_t drain_buffer();

  ByteStream& stream_;
  Clock clock_;
  std::chrono::milliseconds stale_after_;
  Mailbox mailbox_;
  std::vector<std::uint8_t> buffer_;
  std::atomic<bool> disconnected_{false};
  std::atomic<bool> running_{false};
  std::atomic<std::int64_t> last_delivery_ns_{-1};
  mutable std::mutex stats_mutex_;
  SubscriberStats stats_;
  std::thread worker_;
};

}  // namespace headrest
