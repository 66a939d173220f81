#include "deepcough/common.hpp"

#include <cmath>
#include <numbers>

namespace deepcough {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::UnsupportedEncoding: return "UnsupportedEncoding";
    case ErrorCode::EmptyAudio: return "EmptyAudio";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::WrongSampleRate: return "WrongSampleRate";
    case ErrorCode::FrameTooLong: return "FrameTooLong";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::EmptyData: return "EmptyData";
    case ErrorCode::SequenceTooShort: return "SequenceTooShort";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::OneClassOnly: return "OneClassOnly";
    case ErrorCode::NumericFailure: return "NumericFailure";
  }
  return "Unknown";
}

std::string_view to_string(Label l) { return l == Label::Cough ? "Cough" : "Speech"; }

Label parse_label(std::string_view s) {
  if (s == "Cough" || s == "cough") return Label::Cough;
  if (s == "Speech" || s == "speech") return Label::Speech;
  throw Error(ErrorCode::InvalidArgument, "unknown label '" + std::string(s) + "'");
}

std::uint64_t mix64(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream)
    : key_(mix64(seed ^ mix64(stream + 0x632BE59BD9B4E019ULL))) {}

std::uint64_t Rng::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * 0xD1B54A32D192ED03ULL);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "Rng::below(0)");
  // Rejection keeps the result exactly uniform.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::split(std::uint64_t stream) const {
  Rng child(0);
  child.key_ = mix64(key_ ^ mix64(stream * 0xA24BAED4963EE407ULL + 1));
  return child;
}

}  // namespace deepcough
