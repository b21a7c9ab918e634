#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "agssm/tensor.hpp"

namespace agssm::io {

// Malformed/truncated payload.
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};
// Recognized container, unsupported format version.
struct VersionError : FormatError {
  explicit VersionError(const std::string& msg) : FormatError(msg) {}
};
// Stored hash does not match payload.
struct IntegrityError : FormatError {
  explicit IntegrityError(const std::string& msg) : FormatError(msg) {}
};

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n,
                    std::uint64_t seed = 0xCBF29CE484222325ull);

// Little-endian byte sink; the file layout is the same on every host.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void bytes(const void* data, std::size_t n);
  void str(const std::string& s);  // u64 length + raw bytes
  void tensor_f64(const Tensor& t);
  const std::vector<std::uint8_t>& data() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t n) : data_(data), size_(n) {}
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  void bytes(void* out, std::size_t n);
  std::string str();
  Tensor tensor_f64();
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return size_ - pos_; }

 private:
  void need(std::size_t n) const;
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

// Whole-file helpers; write is atomic (temp file + rename).
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::string& path);
std::string read_text_file(const std::string& path);

}  // namespace agssm::io
