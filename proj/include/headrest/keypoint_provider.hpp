#pragma once

#include <chrono>
#include <cstdint>
#include <exception>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "headrest/geometry.hpp"
#include "headrest/head_scene.hpp"
#include "headrest/transport.hpp"

namespace headrest {

inline constexpr double kDefaultConfidenceGate = 0.3;

/// One subject's keypoints (camera frame) at one instant.
struct KeypointFrame {
  std::uint64_t timestamp_us = 0;
  KeypointSet3D keypoints;
  int subject_id = 0;
};

enum class SubjectPolicy { Nearest };

/// Picks one subject among frames sharing a timestamp. Nearest = smallest
/// mean keypoint depth; ties keep the earlier entry.
KeypointFrame select_subject(std::span<const KeypointFrame> candidates,
                             SubjectPolicy policy = SubjectPolicy::Nearest);

/// JSON Lines encoding: {"t_us":..,"subject":..,"kp":[[x,y,z,conf] x5]}.
std::string to_json_line(const KeypointFrame& frame);
/// Throws Error(MalformedFrame) naming `line_number`.
KeypointFrame parse_json_line(const std::string& line, std::size_t line_number);

/// Pull-based source of gated keypoint frames. Owned by a single consumer.
class KeypointProvider {
 public:
  explicit KeypointProvider(double confidence_gate = kDefaultConfidenceGate);
  virtual ~KeypointProvider() = default;

  /// Next frame whose lowest keypoint confidence reaches the gate;
  /// std::nullopt at end of stream.
  std::optional<KeypointFrame> next_frame();

  std::size_t skipped_frames() const { return skipped_; }
  double confidence_gate() const { return gate_; }

 protected:
  virtual std::optional<KeypointFrame> pull() = 0;

 private:
  double gate_;
  std::size_t skipped_ = 0;
};

/// Frames rendered from the head simulator over a fixed pose sequence.
class SyntheticProvider final : public KeypointProvider {
 public:
  SyntheticProvider(HeadGeometry geom, std::vector<HeadPose> poses, CameraModel cam,
                    StageCalibration calib, ObservationModel obs, double frames_per_second = 32.0,
                    double confidence_gate = kDefaultConfidenceGate);

  std::uint64_t frame_period_us() const { return period_us_; }

 protected:
  std::optional<KeypointFrame> pull() override;

 private:
  HeadGeometry geom_;
  std::vector<HeadPose> poses_;
  CameraModel cam_;
  StageCalibration calib_;
  ObservationModel obs_;
  std::uint64_t period_us_;
  std::size_t next_ = 0;
};

/// Source of raw text lines; nullopt at end of input.
class LineSource {
 public:
  virtual ~LineSource() = default;
  virtual std::optional<std::string> next_line() = 0;
};

class IstreamLineSource final : public LineSource {
 public:
  explicit IstreamLineSource(std::istream& in) : in_(in) {}
  std::optional<std::string> next_line() override;

 private:
  std::istream& in_;
};

/// Reads LF-terminated lines from a live byte stream; throws
/// Error(StreamStalled) when no complete line arrives within `stall_timeout`.
class ByteStreamLineSource final : public LineSource {
 public:
  ByteStreamLineSource(ByteStream& stream, std::chrono::milliseconds stall_timeout);
  std::optional<std::string> next_line() override;

 private:
  ByteStream& stream_;
  std::chrono::milliseconds timeout_;
  std::string buffer_;
  bool eof_ = false;
};

/// Replay or live JSON Lines stream. Consecutive lines with equal timestamps
/// are alternative subjects of one instant and are resolved by the policy.
class JsonLinesProvider final : public KeypointProvider {
 public:
  explicit JsonLinesProvider(std::unique_ptr<LineSource> source,
                             double confidence_gate = kDefaultConfidenceGate,
                             SubjectPolicy policy = SubjectPolicy::Nearest);

 protected:
  std::optional<KeypointFrame> pull() override;

 private:
  std::optional<KeypointFrame> read_frame();

  std::unique_ptr<LineSource> source_;
  SubjectPolicy policy_;
  std::optional<KeypointFrame> lookahead_;
  std::exception_ptr pending_error_;
  std::optional<std::uint64_t> last_timestamp_;
  std::size_t line_number_ = 0;
  std::size_t lookahead_line_ = 0;
};

}  // namespace headrest
