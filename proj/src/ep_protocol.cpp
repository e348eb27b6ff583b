#include "headrest/ep_protocol.hpp"

#include <cmath>

#include "headrest/byte_io.hpp"

namespace headrest {

void EarPositionMessage::validate() const {
  if (version != kProtocolVersion) throw Error(ErrorCode::BadVersion, "only version 1 is defined");
  if (!left.allFinite() || !right.allFinite()) throw Error(ErrorCode::InvalidArgument, "coordinates must be finite");
  if (!(confidence >= 0.0f && confidence <= 1.0f)) throw Error(ErrorCode::InvalidArgument, "confidence outside [0, 1]");
  if (static_cast<std::uint8_t>(trusted) > 2) throw Error(ErrorCode::InvalidArgument, "bad trusted side");
}

std::vector<std::uint8_t> encode(const EarPositionMessage& msg) {
  msg.validate();
  ByteWriter payload;
  payload.le<std::uint8_t>(msg.version);
  payload.le<std::uint8_t>(static_cast<std::uint8_t>(msg.trusted) & 0x3);
  payload.le<std::uint64_t>(msg.timestamp_us);
  for (const Vec3* v : {&msg.left, &msg.right}) {
    payload.le(v->x());
    payload.le(v->y());
    payload.le(v->z());
  }
  payload.le<float>(msg.confidence);
  const std::uint32_t crc = crc32(payload.bytes());

  ByteWriter frame;
  frame.u16_be(static_cast<std::uint16_t>(kPayloadSize + 4));
  frame.raw(payload.bytes());
  frame.le(crc);
  return std::move(frame.bytes());
}

Decoded decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2) throw Error(ErrorCode::TruncatedFrame, "length prefix incomplete");
  const std::size_t length = (static_cast<std::size_t>(bytes[0]) << 8) | bytes[1];
  if (length != kPayloadSize + 4) throw Error(ErrorCode::BadLength, "unexpected frame length");
  if (bytes.size() < 2 + length) throw Error(ErrorCode::TruncatedFrame, "frame incomplete");

  const auto payload = bytes.subspan(2, kPayloadSize);
  ByteReader crc_reader(bytes.subspan(2 + kPayloadSize, 4), ErrorCode::TruncatedFrame);
  if (crc_reader.le<std::uint32_t>() != crc32(payload)) throw Error(ErrorCode::BadCrc, "payload checksum mismatch");

  ByteReader r(payload, ErrorCode::TruncatedFrame);
  Decoded out;
  out.message.version = r.le<std::uint8_t>();
  if (out.message.version != kProtocolVersion) throw Error(ErrorCode::BadVersion, "unsupported message version");
  const auto flags = r.le<std::uint8_t>();
  if ((flags & 0x3) == 0x3 || (flags & ~0x3) != 0) throw Error(ErrorCode::BadVersion, "unknown flag bits");
  out.message.trusted = static_cast<TrustedSide>(flags & 0x3);
  out.message.timestamp_us = r.le<std::uint64_t>();
  for (Vec3* v : {&out.message.left, &out.message.right}) {
    v->x() = r.le<double>();
    v->y() = r.le<double>();
    v->z() = r.le<double>();
  }
  out.message.confidence = r.le<float>();
  out.consumed = 2 + length;
  return out;
}

EarPositionMessage make_message(const EarEstimate& ears, std::uint64_t timestamp_us, float confidence) {
  EarPositionMessage msg;
  msg.timestamp_us = timestamp_us;
  msg.left = ears.left;
  msg.right = ears.right;
  msg.trusted = ears.decision.trusted == Side::Left ? TrustedSide::Left : TrustedSide::Right;
  msg.confidence = confidence;
  return msg;
}

EarEstimate to_ear_estimate(const EarPositionMessage& msg) {
  EarEstimate ears;
  ears.left = msg.left;
  ears.right = msg.right;
  ears.decision.trusted = msg.trusted == TrustedSide::Right ? Side::Right : Side::Left;
  return ears;
}

bool Mailbox::offer(const EarPositionMessage& msg) {
  if (last_timestamp_ && msg.timestamp_us <= *last_timestamp_) return false;
  last_timestamp_ = msg.timestamp_us;
  slots_[back_] = msg;
  back_ = middle_.exchange(static_cast<std::uint8_t>(back_ | kFresh), std::memory_order_acq_rel) & 0x3;
  return true;
}

std::optional<EarPositionMessage> Mailbox::take() {
  if ((middle_.load(std::memory_order_acquire) & kFresh) == 0) return std::nullopt;
  front_ = middle_.exchange(front_, std::memory_order_acq_rel) & 0x3;
  return slots_[front_];
}

Clock steady_clock_source() {
  return [] { return std::chrono::steady_clock::now(); };
}

void Publisher::publish(const EarPositionMessage& msg) {
  stream_.write_all(encode(msg));
  ++sent_;
}

Subscriber::Subscriber(ByteStream& stream, Clock clock, std::chrono::milliseconds stale_after)
    : stream_(stream), clock_(std::move(clock)), stale_after_(stale_after) {}

Subscriber::~Subscriber() { stop(); }

std::size_t Subscriber::drain_buffer() {
  std::size_t delivered = 0;
  std::size_t pos = 0;
  while (pos < buffer_.size()) {
    const std::span<const std::uint8_t> rest(buffer_.data() + pos, buffer_.size() - pos);
    try {
      const Decoded d = decode(rest);
      pos += d.consumed;
      std::lock_guard lock(stats_mutex_);
      if (mailbox_.offer(d.message)) {
        ++stats_.delivered;
        ++delivered;
        last_delivery_ns_ = std::chrono::duration_cast<std::chrono::nanoseconds>(
                                clock_().time_since_epoch()).count();
      } else {
        ++stats_.out_of_order;
      }
    } catch (const Error& e) {
      std::lock_guard lock(stats_mutex_);
      switch (e.code()) {
        case ErrorCode::TruncatedFrame:
          buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(pos));
          return delivered;
        case ErrorCode::BadCrc:
          ++stats_.bad_crc;
          pos += kFrameSize;
          break;
        case ErrorCode::BadVersion:
          ++stats_.bad_version;
          pos += kFrameSize;
          break;
        default:
          // Framing lost: slide one byte and look for a plausible prefix.
          ++stats_.bad_length;
          pos += 1;
          break;
      }
    }
  }
  buffer_.clear();
  return delivered;
}

std::size_t Subscriber::pump(std::chrono::milliseconds wait) {
  if (disconnected_) return 0;
  std::uint8_t chunk[4096];
  std::size_t delivered = 0;
  try {
    std::size_t n = stream_.read_some(chunk, wait);
    while (n > 0) {
      buffer_.insert(buffer_.end(), chunk, chunk + n);
      delivered += drain_buffer();
      n = stream_.read_some(chunk, std::chrono::milliseconds(0));
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Disconnected) throw;
    disconnected_ = true;
  }
  return delivered;
}

void Subscriber::start() {
  if (running_.exchange(true)) return;
  worker_ = std::thread([this] {
    while (running_ && !disconnected_) pump(std::chrono::milliseconds(20));
  });
}

void Subscriber::stop() {
  running_ = false;
  if (worker_.joinable()) worker_.join();
}

LinkStatus Subscriber::status() const {
  if (disconnected_) return LinkStatus::Disconnected;
  const std::int64_t last = last_delivery_ns_;
  if (last < 0) return LinkStatus::NoData;
  const auto now = std::chrono::duration_cast<std::chrono::nanoseconds>(clock_().time_since_epoch()).count();
  return now - last > std::chrono::duration_cast<std::chrono::nanoseconds>(stale_after_).count()
             ? LinkStatus::Stale
             : LinkStatus::Fresh;
}

SubscriberStats Subscriber::stats() const {
  std::lock_guard lock(stats_mutex_);
  return stats_;
}

}  // namespace headrest
