#ifndef DEEPCOUGH_MODEL_FILE_HPP
#define DEEPCOUGH_MODEL_FILE_HPP

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "deepcough/tensor_nn.hpp"

// Chunked "DCGH" container shared by the CNN and the baseline models:
//
//   "DCGH" | u16 version | u16 record count | records... |
//   u16 rows | u16 cols | mean f32[rows*cols] | std f32[rows*cols] |
//   f64 compression constant | u32 CRC32 of every preceding byte
//
// All integers and floats are little-endian; matrices are row-major.
namespace deepcough {

inline constexpr char kModelMagic[4] = {'D', 'C', 'G', 'H'};
inline constexpr std::uint16_t kModelFormatVersion = 1;

enum class RecordKind : std::uint8_t {
  Conv2D = 1,
  Relu = 2,
  MaxPool = 3,
  Dense = 4,
  Dropout = 5,
  Softmax = 6,
  LinearSoftmax = 16,
  LinearSvm = 17,
  HmmGmm = 18,
};

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void f32(float v);
  void f64(double v);
  // Row-major regardless of the matrix's storage order.
  void f32_matrix(const Eigen::Ref<const Eigen::MatrixXf>& m);
  void f64_matrix(const Eigen::Ref<const Eigen::MatrixXd>& m);

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

// Every read past the end throws TruncatedFile.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  float f32();
  double f64();
  Eigen::MatrixXf f32_matrix(Eigen::Index rows, Eigen::Index cols);
  Eigen::MatrixXd f64_matrix(Eigen::Index rows, Eigen::Index cols);

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> take(std::size_t n);

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

struct StatsBlock {
  Eigen::MatrixXf mean;
  Eigen::MatrixXf stddev;
};

// Writes the header; records follow via writer().
class ContainerWriter {
 public:
  explicit ContainerWriter(std::uint16_t record_count);
  ByteWriter& writer() { return out_; }
  std::vector<std::uint8_t> finish(const StatsBlock& stats, double compression_constant);

 private:
  ByteWriter out_;
};

// Validates magic and version on construction; records are then read from
// reader(), and finish() reads the trailer and verifies the checksum.
class ContainerReader {
 public:
  explicit ContainerReader(std::span<const std::uint8_t> bytes);
  std::uint16_t record_count() const { return record_count_; }
  ByteReader& reader() { return in_; }

  struct Trailer {
    StatsBlock stats;
    double compression_constant = 0.0;
  };
  Trailer finish();

 private:
  std::span<const std::uint8_t> bytes_;
  ByteReader in_;
  std::uint16_t record_count_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

// Layer stack plus a trailing softmax record.
void write_network_records(ByteWriter& out, const nn::Network<float>& net);
std::uint16_t network_record_count(const nn::Network<float>& net);
nn::Network<float> read_network_records(ByteReader& in, std::uint16_t record_count);

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path);
void write_binary_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace deepcough

#endif  // DEEPCOUGH_MODEL_FILE_HPP
