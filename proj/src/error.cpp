#include "headrest/error.hpp"

namespace headrest {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::DegenerateEyePair: return "DegenerateEyePair";
    case ErrorCode::NonFiniteKeypoint: return "NonFiniteKeypoint";
    case ErrorCode::OutOfFrustum: return "OutOfFrustum";
    case ErrorCode::MalformedFrame: return "MalformedFrame";
    case ErrorCode::StreamStalled: return "StreamStalled";
    case ErrorCode::NoSubject: return "NoSubject";
    case ErrorCode::CoincidentPoints: return "CoincidentPoints";
    case ErrorCode::SampleRateMismatch: return "SampleRateMismatch";
    case ErrorCode::BandOutOfRange: return "BandOutOfRange";
    case ErrorCode::ZeroPower: return "ZeroPower";
    case ErrorCode::SignalTooShort: return "SignalTooShort";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::IllConditioned: return "IllConditioned";
    case ErrorCode::EmptyBank: return "EmptyBank";
    case ErrorCode::NodeOutsideGrid: return "NodeOutsideGrid";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::BadCrc: return "BadCrc";
    case ErrorCode::BadVersion: return "BadVersion";
    case ErrorCode::BadLength: return "BadLength";
    case ErrorCode::TruncatedFrame: return "TruncatedFrame";
    case ErrorCode::Disconnected: return "Disconnected";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace headrest
