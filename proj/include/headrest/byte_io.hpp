#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string_view>
#include <type_traits>
#include <vector>

#include "headrest/error.hpp"

namespace headrest {

/// CRC-32 (IEEE 802.3, as in zlib/PNG).
std::uint32_t crc32(std::span<const std::uint8_t> bytes);

namespace detail {

template <typename T>
std::array<std::uint8_t, sizeof(T)> to_le_bytes(T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<std::uint8_t, sizeof(T)> out;
  std::memcpy(out.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(out.begin(), out.end());
  return out;
}

}  // namespace detail

class ByteWriter {
 public:
  template <typename T>
  void le(T value) {
    const auto b = detail::to_le_bytes(value);
    bytes_.insert(bytes_.end(), b.begin(), b.end());
  }
  void u16_be(std::uint16_t value) {
    bytes_.push_back(static_cast<std::uint8_t>(value >> 8));
    bytes_.push_back(static_cast<std::uint8_t>(value & 0xff));
  }
  void raw(std::span<const std::uint8_t> data) { bytes_.insert(bytes_.end(), data.begin(), data.end()); }
  void raw(std::string_view text) { bytes_.insert(bytes_.end(), text.begin(), text.end()); }

  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked little-endian reader; overruns throw `overrun_code`.
class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, ErrorCode overrun_code)
      : bytes_(bytes), overrun_(overrun_code) {}

  template <typename T>
  T le() {
    const auto b = take(sizeof(T));
    std::array<std::uint8_t, sizeof(T)> tmp;
    std::copy(b.begin(), b.end(), tmp.begin());
    if constexpr (std::endian::native == std::endian::big) std::reverse(tmp.begin(), tmp.end());
    T value;
    std::memcpy(&value, tmp.data(), sizeof(T));
    return value;
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    if (remaining() < n) throw Error(overrun_, "input ends inside a field");
    const auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  ErrorCode overrun_;
  std::size_t pos_ = 0;
};

}  // namespace headrest
