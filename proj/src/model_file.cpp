#include "deepcough/model_file.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>

namespace deepcough {

void ByteWriter::u16(std::uint16_t v) {
  u8(static_cast<std::uint8_t>(v & 0xFF));
  u8(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::f64(double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  u32(static_cast<std::uint32_t>(bits & 0xFFFFFFFFu));
  u32(static_cast<std::uint32_t>(bits >> 32));
}

void ByteWriter::f32_matrix(const Eigen::Ref<const Eigen::MatrixXf>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) f32(m(r, c));
}

void ByteWriter::f64_matrix(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
}

std::span<const std::uint8_t> ByteReader::take(std::size_t n) {
  if (n > remaining())
    throw Error(ErrorCode::TruncatedFile, "needed " + std::to_string(n) + " bytes at offset " +
                                              std::to_string(pos_) + ", " + std::to_string(remaining()) + " left");
  auto s = bytes_.subspan(pos_, n);
  pos_ += n;
  return s;
}

std::uint8_t ByteReader::u8() { return take(1)[0]; }

std::uint16_t ByteReader::u16() {
  auto b = take(2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t ByteReader::u32() {
  auto b = take(4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

double ByteReader::f64() {
  const std::uint64_t lo = u32();
  const std::uint64_t hi = u32();
  return std::bit_cast<double>(lo | (hi << 32));
}

Eigen::MatrixXf ByteReader::f32_matrix(Eigen::Index rows, Eigen::Index cols) {
  if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) > remaining() / 4)
    throw Error(ErrorCode::TruncatedFile, "matrix of " + std::to_string(rows) + "x" + std::to_string(cols) +
                                              " exceeds remaining bytes");
  Eigen::MatrixXf m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = f32();
  return m;
}

Eigen::MatrixXd ByteReader::f64_matrix(Eigen::Index rows, Eigen::Index cols) {
  if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) > remaining() / 8)
    throw Error(ErrorCode::TruncatedFile, "matrix of " + std::to_string(rows) + "x" + std::to_string(cols) +
                                              " exceeds remaining bytes");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = f64();
  return m;
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

ContainerWriter::ContainerWriter(std::uint16_t record_count) {
  for (char c : kModelMagic) out_.u8(static_cast<std::uint8_t>(c));
  out_.u16(kModelFormatVersion);
  out_.u16(record_count);
}

std::vector<std::uint8_t> ContainerWriter::finish(const StatsBlock& stats, double compression_constant) {
  if (stats.mean.rows() != stats.stddev.rows() || stats.mean.cols() != stats.stddev.cols())
    throw Error(ErrorCode::ShapeMismatch, "standardization mean and std differ in shape");
  if (stats.mean.rows() > 0xFFFF || stats.mean.cols() > 0xFFFF)
    throw Error(ErrorCode::ShapeMismatch, "standardization block too large");
  out_.u16(static_cast<std::uint16_t>(stats.mean.rows()));
  out_.u16(static_cast<std::uint16_t>(stats.mean.cols()));
  out_.f32_matrix(stats.mean);
  out_.f32_matrix(stats.stddev);
  out_.f64(compression_constant);
  out_.u32(crc32_of(out_.bytes()));
  return std::move(out_.bytes());
}

ContainerReader::ContainerReader(std::span<const std::uint8_t> bytes) : bytes_(bytes), in_(bytes) {
  if (bytes.size() < 4) throw Error(ErrorCode::TruncatedFile, "file shorter than magic");
  if (std::memcmp(bytes.data(), kModelMagic, 4) != 0) throw Error(ErrorCode::BadMagic, "not a DCGH model file");
  in_.u32();
  const std::uint16_t version = in_.u16();
  if (version != kModelFormatVersion)
    throw Error(ErrorCode::VersionMismatch, "format version " + std::to_string(version) + ", expected " +
                                                std::to_string(kModelFormatVersion));
  record_count_ = in_.u16();
}

ContainerReader::Trailer ContainerReader::finish() {
  Trailer t;
  const Eigen::Index rows = in_.u16();
  const Eigen::Index cols = in_.u16();
  t.stats.mean = in_.f32_matrix(rows, cols);
  t.stats.stddev = in_.f32_matrix(rows, cols);
  t.compression_constant = in_.f64();
  const std::size_t body = in_.position();
  const std::uint32_t stored = in_.u32();
  if (in_.remaining() != 0) throw Error(ErrorCode::ChecksumMismatch, "trailing bytes after checksum");
  if (crc32_of(bytes_.first(body)) != stored) throw Error(ErrorCode::ChecksumMismatch, "CRC32 does not match");
  return t;
}

namespace {

constexpr std::uint32_t kMaxDim = 1u << 24;

std::uint32_t dim(ByteReader& in) {
  const std::uint32_t d = in.u32();
  if (d == 0 || d > kMaxDim) throw Error(ErrorCode::TruncatedFile, "implausible dimension " + std::to_string(d));
  return d;
}

std::uint32_t as_u32(Eigen::Index v) { return static_cast<std::uint32_t>(v); }

}  // namespace

std::uint16_t network_record_count(const nn::Network<float>& net) {
  return static_cast<std::uint16_t>(net.layers.size() + 1);
}

void write_network_records(ByteWriter& out, const nn::Network<float>& net) {
  for (const auto& layer : net.layers) {
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, nn::Conv2D<float>>) {
            out.u8(static_cast<std::uint8_t>(RecordKind::Conv2D));
            for (auto d : {l.input.channels, l.input.height, l.input.width, l.filters, l.kernel_h, l.kernel_w})
              out.u32(as_u32(d));
            out.f32_matrix(l.weights);
            out.f32_matrix(l.biases);
          } else if constexpr (std::is_same_v<L, nn::MaxPool>) {
            out.u8(static_cast<std::uint8_t>(RecordKind::MaxPool));
            for (auto d : {l.input.channels, l.input.height, l.input.width, l.pool_h, l.pool_w}) out.u32(as_u32(d));
          } else if constexpr (std::is_same_v<L, nn::Relu>) {
            out.u8(static_cast<std::uint8_t>(RecordKind::Relu));
            out.u32(as_u32(l.size));
          } else if constexpr (std::is_same_v<L, nn::Dense<float>>) {
            out.u8(static_cast<std::uint8_t>(RecordKind::Dense));
            out.u32(as_u32(l.inputs()));
            out.u32(as_u32(l.outputs()));
            out.f32_matrix(l.weights);
            out.f32_matrix(l.biases);
          } else {
            out.u8(static_cast<std::uint8_t>(RecordKind::Dropout));
            out.u32(as_u32(l.size));
            out.f32(static_cast<float>(l.p));
          }
        },
        layer);
  }
  out.u8(static_cast<std::uint8_t>(RecordKind::Softmax));
  out.u32(as_u32(net.output_size()));
}

nn::Network<float> read_network_records(ByteReader& in, std::uint16_t record_count) {
  nn::Network<float> net;
  bool have_softmax = false;
  for (std::uint16_t r = 0; r < record_count; ++r) {
    if (have_softmax) throw Error(ErrorCode::ShapeMismatch, "record after softmax head");
    const auto kind = static_cast<RecordKind>(in.u8());
    switch (kind) {
      case RecordKind::Conv2D: {
        nn::Shape3 shape{dim(in), dim(in), dim(in)};
        const Eigen::Index filters = dim(in), kh = dim(in), kw = dim(in);
        nn::Conv2D<float> conv(shape, filters, kh, kw);
        conv.weights = in.f32_matrix(filters, shape.channels * kh * kw);
        conv.biases = in.f32_matrix(filters, 1);
        net.layers.emplace_back(std::move(conv));
        break;
      }
      case RecordKind::MaxPool: {
        nn::MaxPool pool;
        pool.input = {dim(in), dim(in), dim(in)};
        pool.pool_h = dim(in);
        pool.pool_w = dim(in);
        net.layers.emplace_back(pool);
        break;
      }
      case RecordKind::Relu:
        net.layers.emplace_back(nn::Relu{dim(in)});
        break;
      case RecordKind::Dense: {
        const Eigen::Index inputs = dim(in), outputs = dim(in);
        nn::Dense<float> dense;
        dense.weights = in.f32_matrix(outputs, inputs);
        dense.biases = in.f32_matrix(outputs, 1);
        net.layers.emplace_back(std::move(dense));
        break;
      }
      case RecordKind::Dropout: {
        const Eigen::Index size = dim(in);
        net.layers.emplace_back(nn::Dropout{size, static_cast<double>(in.f32())});
        break;
      }
      case RecordKind::Softmax:
        if (static_cast<Eigen::Index>(dim(in)) != net.output_size())
          throw Error(ErrorCode::ShapeMismatch, "softmax width does not match the last layer");
        have_softmax = true;
        break;
      default:
        throw Error(ErrorCode::ShapeMismatch, "unexpected record kind " + std::to_string(static_cast<int>(kind)));
    }
  }
  if (!have_softmax) throw Error(ErrorCode::ShapeMismatch, "network has no softmax head");
  net.validate();
  return net;
}

std::vector<std::uint8_t> read_binary_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_binary_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

}  // namespace deepcough
