#ifndef DEEPCOUGH_COMMON_HPP
#define DEEPCOUGH_COMMON_HPP

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace deepcough {

enum class ErrorCode {
  InvalidArgument,
  Io,
  MalformedHeader,
  UnsupportedEncoding,
  EmptyAudio,
  InsufficientData,
  WrongSampleRate,
  FrameTooLong,
  ShapeMismatch,
  BadMagic,
  VersionMismatch,
  ChecksumMismatch,
  TruncatedFile,
  EmptySplit,
  EmptyWindow,
  EmptyData,
  SequenceTooShort,
  DegenerateData,
  LengthMismatch,
  Empty,
  OneClassOnly,
  NumericFailure,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Cough is the positive class everywhere; its index is 0 in every
// probability vector.
enum class Label : std::uint8_t { Cough = 0, Speech = 1 };

inline int class_index(Label l) { return static_cast<int>(l); }
inline Label label_from_index(int i) { return i == 0 ? Label::Cough : Label::Speech; }
std::string_view to_string(Label l);
Label parse_label(std::string_view s);

// Counter-based generator: draw n of stream s under seed k is a pure
// function of (k, s, n), so any component can split off an independent
// stream without coordinating with the others.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller; one draw pair per call.
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  Rng split(std::uint64_t stream) const;
  std::uint64_t draws() const { return counter_; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace deepcough

#endif  // DEEPCOUGH_COMMON_HPP
