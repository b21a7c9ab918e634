#include "agssm/serialize.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace agssm::io {

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back((std::uint8_t)(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back((std::uint8_t)(v >> (8 * i)));
}

void ByteWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::bytes(const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  buf_.insert(buf_.end(), p, p + n);
}

void ByteWriter::str(const std::string& s) {
  u64(s.size());
  bytes(s.data(), s.size());
}

void ByteWriter::tensor_f64(const Tensor& t) {
  u32((std::uint32_t)t.rank());
  for (std::size_t i = 0; i < t.rank(); ++i) u64(t.dim(i));
  for (std::size_t i = 0; i < t.size(); ++i) f64(t[i]);
}

void ByteReader::need(std::size_t n) const {
  if (pos_ + n > size_) throw FormatError("truncated payload");
}

std::uint8_t ByteReader::u8() {
  need(1);
  return data_[pos_++];
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= (std::uint32_t)data_[pos_ + i] << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= (std::uint64_t)data_[pos_ + i] << (8 * i);
  pos_ += 8;
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }

void ByteReader::bytes(void* out, std::size_t n) {
  need(n);
  std::memcpy(out, data_ + pos_, n);
  pos_ += n;
}

std::string ByteReader::str() {
  const std::uint64_t n = u64();
  need(n);
  std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
  pos_ += n;
  return s;
}

Tensor ByteReader::tensor_f64() {
  const std::uint32_t rank = u32();
  if (rank > 8) throw FormatError("implausible tensor rank");
  std::vector<std::size_t> shape(rank);
  for (std::uint32_t i = 0; i < rank; ++i) shape[i] = u64();
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = f64();
  return t;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + tmp);
    os.write(reinterpret_cast<const char*>(bytes.data()), (std::streamsize)bytes.size());
    if (!os) throw std::runtime_error("short write: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw std::runtime_error("cannot open: " + path);
  const std::streamsize n = is.tellg();
  is.seekg(0);
  std::vector<std::uint8_t> bytes((std::size_t)n);
  is.read(reinterpret_cast<char*>(bytes.data()), n);
  if (!is) throw std::runtime_error("short read: " + path);
  return bytes;
}

std::string read_text_file(const std::string& path) {
  auto bytes = read_file(path);
  return std::string(bytes.begin(), bytes.end());
}

}  // namespace agssm::io
