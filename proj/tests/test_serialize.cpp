#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "agssm/serialize.hpp"
#include "agssm/tensor.hpp"
#include "doctest.h"

using namespace agssm;
using namespace agssm::io;

TEST_SUITE("serialize") {

TEST_CASE("fnv1a published vectors") {
  // Offset basis and the "a"/"foobar" values from the FNV reference tables.
  CHECK(fnv1a(nullptr, 0) == 0xCBF29CE484222325ull);
  const char* a = "a";
  CHECK(fnv1a((const std::uint8_t*)a, 1) == 0xAF63DC4C8601EC8Cull);
  const char* foobar = "foobar";
  CHECK(fnv1a((const std::uint8_t*)foobar, 6) == 0x85944171F73967E8ull);
}

TEST_CASE("fnv1a chains through the seed") {
  const char* s = "split anywhere";
  auto* p = (const std::uint8_t*)s;
  std::uint64_t whole = fnv1a(p, 14);
  for (std::size_t cut = 0; cut <= 14; ++cut) {
    std::uint64_t part = fnv1a(p + cut, 14 - cut, fnv1a(p, cut));
    CHECK(part == whole);
  }
}

TEST_CASE("scalar round-trip is exact and little-endian") {
  ByteWriter w;
  w.u8(0xAB);
  w.u32(0x01020304u);
  w.u64(0x1122334455667788ull);
  w.f32(1.5f);
  w.f64(-0.1);
  const auto& buf = w.data();
  // u32 layout check: least significant byte first.
  CHECK(buf[1] == 0x04);
  CHECK(buf[2] == 0x03);
  CHECK(buf[3] == 0x02);
  CHECK(buf[4] == 0x01);
  ByteReader r(buf.data(), buf.size());
  CHECK(r.u8() == 0xAB);
  CHECK(r.u32() == 0x01020304u);
  CHECK(r.u64() == 0x1122334455667788ull);
  CHECK(r.f32() == 1.5f);
  CHECK(r.f64() == -0.1);
  CHECK(r.remaining() == 0);
}

TEST_CASE("string and tensor round-trip") {
  Tensor t({2, 3});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.1 * (double)i - 0.25;
  ByteWriter w;
  w.str("hello \x01 world");
  w.tensor_f64(t);
  w.str("");
  ByteReader r(w.data().data(), w.data().size());
  CHECK(r.str() == "hello \x01 world");
  Tensor back = r.tensor_f64();
  REQUIRE(back.same_shape(t));
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);
  CHECK(r.str() == "");
  CHECK(r.remaining() == 0);
}

TEST_CASE("truncation raises FormatError") {
  ByteWriter w;
  w.u64(42);
  ByteReader r(w.data().data(), 7);
  CHECK_THROWS_AS(r.u64(), FormatError);
  ByteWriter w2;
  w2.str("abcdef");
  ByteReader r2(w2.data().data(), w2.data().size() - 1);
  CHECK_THROWS_AS(r2.str(), FormatError);
}

TEST_CASE("error hierarchy") {
  // VersionError and IntegrityError are FormatErrors but distinguishable.
  bool caught_version = false;
  try {
    throw VersionError("v9");
  } catch (const FormatError&) {
    caught_version = true;
  }
  CHECK(caught_version);
  CHECK_THROWS_AS(throw IntegrityError("bad hash"), IntegrityError);
  CHECK_THROWS_AS(throw IntegrityError("bad hash"), FormatError);
}

TEST_CASE("file round-trip") {
  std::string path = "serialize_probe.bin";
  std::vector<std::uint8_t> bytes = {0, 1, 2, 255, 128, 7};
  write_file(path, bytes);
  auto back = read_file(path);
  CHECK(back == bytes);
  std::remove(path.c_str());
  CHECK_THROWS_AS(read_file("no_such_file.bin"), std::runtime_error);
}

}
