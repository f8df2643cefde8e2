#include <doctest.h>

#include <sstream>

#include "paircam/phl1.hpp"
#include "paircam/rng.hpp"

using namespace paircam;

namespace {

std::vector<PixelHit> random_hits(size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<PixelHit> hits(n);
  int64_t t = 0;
  for (auto& h : hits) {
    t += static_cast<int64_t>(rng.uniform_below(100'000));
    h.x = static_cast<uint16_t>(rng.uniform_below(256));
    h.y = static_cast<uint16_t>(rng.uniform_below(256));
    h.toa_ps = t;
    h.tot = static_cast<uint16_t>(1 + rng.uniform_below(400));
  }
  return hits;
}

}  // namespace

TEST_CASE("empty hit list encodes to a bare 24-byte header") {
  const auto bytes = encode_hits({});
  CHECK(bytes.size() == kPhl1HeaderSize);
  CHECK(decode_hits(bytes).empty());
}

TEST_CASE("single record layout is 24 + 14 bytes") {
  const std::vector<PixelHit> hits{{10, 20, 1000, 5}};
  const auto bytes = encode_hits(hits);
  CHECK(bytes.size() == kPhl1HeaderSize + kPhl1RecordSize);
  const auto back = decode_hits(bytes);
  REQUIRE(back.size() == 1);
  CHECK(back[0] == hits[0]);
}

TEST_CASE("round trip preserves 1000 random hits exactly") {
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    const auto hits = random_hits(1000, seed);
    CHECK(decode_hits(encode_hits(hits, 12345)) == hits);
  }
}

TEST_CASE("header carries the acquisition duration") {
  const auto bytes = encode_hits(random_hits(10, 4), 987654321);
  std::istringstream in(bytes, std::ios::binary);
  Phl1Reader reader(in);
  CHECK(reader.header().acquisition_duration_ps == 987654321);
  CHECK(reader.header().record_count == 10);
}

TEST_CASE("encode rejects time-unsorted input") {
  std::ostringstream out(std::ios::binary);
  Phl1Writer writer(out, 0);
  writer.write({1, 1, 100, 1});
  CHECK_THROWS_AS(writer.write({1, 1, 99, 1}), OrderingError);
}

TEST_CASE("wrong magic bytes raise a format error") {
  auto bytes = encode_hits(random_hits(3, 5));
  bytes[0] = 'X';
  std::istringstream in(bytes, std::ios::binary);
  try {
    Phl1Reader reader(in);
    FAIL("expected CodecError");
  } catch (const CodecError& e) {
    CHECK(e.kind == CodecError::Kind::BadMagic);
  }
}

TEST_CASE("version mismatch is its own error variant") {
  auto bytes = encode_hits({});
  bytes[4] = 9;  // little-endian u32 version
  std::istringstream in(bytes, std::ios::binary);
  try {
    Phl1Reader reader(in);
    FAIL("expected CodecError");
  } catch (const CodecError& e) {
    CHECK(e.kind == CodecError::Kind::BadVersion);
  }
}

TEST_CASE("truncation mid-record names the byte offset") {
  const auto hits = random_hits(5, 6);
  auto bytes = encode_hits(hits);
  const size_t cut = kPhl1HeaderSize + 3 * kPhl1RecordSize + 7;
  bytes.resize(cut);
  std::istringstream in(bytes, std::ios::binary);
  Phl1Reader reader(in);
  for (int i = 0; i < 3; ++i) CHECK(reader.next().has_value());
  try {
    reader.next();
    FAIL("expected CodecError");
  } catch (const CodecError& e) {
    CHECK(e.kind == CodecError::Kind::Truncated);
    CHECK(e.byte_offset == cut);
  }
}

TEST_CASE("decode preserves file order") {
  const auto hits = random_hits(200, 7);
  const auto back = decode_hits(encode_hits(hits));
  CHECK(std::is_sorted(back.begin(), back.end(),
                       [](const PixelHit& a, const PixelHit& b) {
                         return a.toa_ps < b.toa_ps;
                       }));
  CHECK(back == hits);
}

TEST_CASE("csv codec round trips and rejects a bad header") {
  const auto hits = random_hits(50, 8);
  std::stringstream s;
  write_hits_csv(s, hits);
  CHECK(read_hits_csv(s) == hits);

  std::istringstream bad("a,b,c\n1,2,3,4\n");
  CHECK_THROWS_AS(read_hits_csv(bad), CodecError);
}
