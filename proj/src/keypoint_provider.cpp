#include "headrest/keypoint_provider.hpp"

#include <cmath>
#include <exception>
#include <istream>

#include <json.hpp>

namespace headrest {

KeypointFrame select_subject(std::span<const KeypointFrame> candidates, SubjectPolicy policy) {
  if (candidates.empty()) throw Error(ErrorCode::NoSubject, "no subject in frame");
  switch (policy) {
    case SubjectPolicy::Nearest:
      break;
  }
  const KeypointFrame* best = &candidates.front();
  for (const auto& f : candidates.subspan(1)) {
    if (f.keypoints.mean_depth() < best->keypoints.mean_depth()) best = &f;
  }
  return *best;
}

std::string to_json_line(const KeypointFrame& frame) {
  nlohmann::json kp = nlohmann::json::array();
  for (std::size_t i = 0; i < frame.keypoints.points.size(); ++i) {
    const Vec3& p = frame.keypoints.points[i];
    kp.push_back({p.x(), p.y(), p.z(), frame.keypoints.confidence[i]});
  }
  nlohmann::json j;
  j["t_us"] = frame.timestamp_us;
  j["subject"] = frame.subject_id;
  j["kp"] = std::move(kp);
  return j.dump();
}

KeypointFrame parse_json_line(const std::string& line, std::size_t line_number) {
  const auto fail = [&](const std::string& why) -> Error {
    return Error(ErrorCode::MalformedFrame, "line " + std::to_string(line_number) + ": " + why);
  };
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw fail(e.what());
  }
  if (!j.is_object()) throw fail("expected an object");
  const auto t = j.find("t_us");
  const auto subject = j.find("subject");
  const auto kp = j.find("kp");
  if (t == j.end() || !t->is_number_unsigned()) throw fail("t_us must be a non-negative integer");
  if (subject == j.end() || !subject->is_number_integer() || subject->get<long long>() < 0) {
    throw fail("subject must be a non-negative integer");
  }
  if (kp == j.end() || !kp->is_array() || kp->size() != 5) throw fail("kp must hold five keypoints");

  KeypointFrame frame;
  frame.timestamp_us = t->get<std::uint64_t>();
  frame.subject_id = subject->get<int>();
  for (std::size_t i = 0; i < 5; ++i) {
    const auto& row = (*kp)[i];
    if (!row.is_array() || row.size() != 4) throw fail("keypoint must be [x, y, z, conf]");
    for (const auto& v : row) {
      if (!v.is_number()) throw fail("keypoint entries must be numbers");
    }
    frame.keypoints.points[i] = Vec3(row[0].get<double>(), row[1].get<double>(), row[2].get<double>());
    frame.keypoints.confidence[i] = row[3].get<double>();
    if (!frame.keypoints.points[i].allFinite()) throw fail("non-finite coordinate");
    if (!(frame.keypoints.confidence[i] >= 0.0 && frame.keypoints.confidence[i] <= 1.0)) {
      throw fail("confidence outside [0, 1]");
    }
  }
  return frame;
}

KeypointProvider::KeypointProvider(double confidence_gate) : gate_(confidence_gate) {
  if (!(gate_ >= 0.0 && gate_ <= 1.0)) throw Error(ErrorCode::InvalidArgument, "confidence gate outside [0, 1]");
}

std::optional<KeypointFrame> KeypointProvider::next_frame() {
  while (auto frame = pull()) {
    if (frame->keypoints.min_confidence() >= gate_) return frame;
    ++skipped_;
  }
  return std::nullopt;
}

SyntheticProvider::SyntheticProvider(HeadGeometry geom, std::vector<HeadPose> poses, CameraModel cam,
                                     StageCalibration calib, ObservationModel obs, double frames_per_second,
                                     double confidence_gate)
    : KeypointProvider(confidence_gate),
      geom_(std::move(geom)),
      poses_(std::move(poses)),
      cam_(cam),
      calib_(calib),
      obs_(obs) {
  if (!(frames_per_second > 0.0)) throw Error(ErrorCode::InvalidArgument, "frame rate must be positive");
  period_us_ = static_cast<std::uint64_t>(std::llround(1e6 / frames_per_second));
  cam_.validate();
  obs_.validate();
}

std::optional<KeypointFrame> SyntheticProvider::pull() {
  if (next_ >= poses_.size()) return std::nullopt;
  KeypointFrame frame;
  frame.timestamp_us = next_ * period_us_;
  frame.keypoints = observe(geom_, poses_[next_], cam_, calib_, obs_, next_);
  ++next_;
  return frame;
}

std::optional<std::string> IstreamLineSource::next_line() {
  std::string line;
  if (!std::getline(in_, line)) return std::nullopt;
  return line;
}

ByteStreamLineSource::ByteStreamLineSource(ByteStream& stream, std::chrono::milliseconds stall_timeout)
    : stream_(stream), timeout_(stall_timeout) {}

std::optional<std::string> ByteStreamLineSource::next_line() {
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  for (;;) {
    if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    if (eof_) {
      if (buffer_.empty()) return std::nullopt;
      return std::exchange(buffer_, {});
    }
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) throw Error(ErrorCode::StreamStalled, "no keypoint line within the stall timeout");
    std::uint8_t chunk[4096];
    try {
      const auto wait = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now);
      const std::size_t n = stream_.read_some(chunk, std::max(wait, std::chrono::milliseconds(1)));
      buffer_.append(reinterpret_cast<const char*>(chunk), n);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Disconnected) throw;
      eof_ = true;
    }
  }
}

JsonLinesProvider::JsonLinesProvider(std::unique_ptr<LineSource> source, double confidence_gate,
                                     SubjectPolicy policy)
    : KeypointProvider(confidence_gate), source_(std::move(source)), policy_(policy) {}

std::optional<KeypointFrame> JsonLinesProvider::read_frame() {
  while (auto line = source_->next_line()) {
    ++line_number_;
    if (!line->empty() && line->back() == '\r') line->pop_back();
    if (line->empty()) continue;
    return parse_json_line(*line, line_number_);
  }
  return std::nullopt;
}

std::optional<KeypointFrame> JsonLinesProvider::pull() {
  if (pending_error_) std::rethrow_exception(std::exchange(pending_error_, nullptr));
  std::vector<KeypointFrame> group;
  std::size_t first_line = lookahead_line_;
  if (lookahead_) {
    group.push_back(*std::exchange(lookahead_, std::nullopt));
  } else if (auto first = read_frame()) {
    group.push_back(*first);
    first_line = line_number_;
  } else {
    return std::nullopt;
  }
  if (last_timestamp_ && group.front().timestamp_us <= *last_timestamp_) {
    throw Error(ErrorCode::MalformedFrame,
                "line " + std::to_string(first_line) + ": timestamp does not increase");
  }
  try {
    while (auto next = read_frame()) {
      if (next->timestamp_us != group.front().timestamp_us) {
        lookahead_ = std::move(next);
        lookahead_line_ = line_number_;
        break;
      }
      group.push_back(*next);
    }
  } catch (const Error&) {
    // Surface a bad line only after the frame preceding it has been delivered.
    pending_error_ = std::current_exception();
  }
  last_timestamp_ = group.front().timestamp_us;
  return select_subject(group, policy_);
}

}  // namespace headrest
