#include "paircam/phl1.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace paircam {

namespace {

void put_u16(char* p, uint16_t v) {
  p[0] = static_cast<char>(v & 0xff);
  p[1] = static_cast<char>((v >> 8) & 0xff);
}

void put_u32(char* p, uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<char>((v >> (8 * i)) & 0xff);
}

void put_u64(char* p, uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<char>((v >> (8 * i)) & 0xff);
}

uint16_t get_u16(const char* p) {
  return static_cast<uint16_t>(static_cast<uint8_t>(p[0]) |
                               (static_cast<uint16_t>(static_cast<uint8_t>(p[1])) << 8));
}

uint32_t get_u32(const char* p) {
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<uint8_t>(p[i]);
  return v;
}

uint64_t get_u64(const char* p) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<uint8_t>(p[i]);
  return v;
}

void encode_header(char* buf, const Phl1Header& h) {
  std::memcpy(buf, kPhl1Magic, 4);
  put_u32(buf + 4, h.version);
  put_u64(buf + 8, h.record_count);
  put_u64(buf + 16, h.acquisition_duration_ps);
}

void encode_record(char* buf, const PixelHit& hit) {
  put_u16(buf, hit.x);
  put_u16(buf + 2, hit.y);
  put_u64(buf + 4, static_cast<uint64_t>(hit.toa_ps));
  put_u16(buf + 12, hit.tot);
}

}  // namespace

Phl1Writer::Phl1Writer(std::ostream& out, uint64_t acquisition_duration_ps)
    : out_(out) {
  char buf[kPhl1HeaderSize];
  Phl1Header h;
  h.acquisition_duration_ps = acquisition_duration_ps;
  encode_header(buf, h);
  out_.write(buf, kPhl1HeaderSize);
}

Phl1Writer::~Phl1Writer() {
  if (!closed_) close();
}

void Phl1Writer::write(const PixelHit& hit) {
  if (hit.toa_ps < last_toa_ps_) {
    throw OrderingError("encode_hits: input not sorted by toa_ps at record " +
                        std::to_string(count_));
  }
  last_toa_ps_ = hit.toa_ps;
  char buf[kPhl1RecordSize];
  encode_record(buf, hit);
  out_.write(buf, kPhl1RecordSize);
  ++count_;
}

void Phl1Writer::close() {
  if (closed_) return;
  closed_ = true;
  const auto end = out_.tellp();
  out_.seekp(8);  // record_count field
  char buf[8];
  put_u64(buf, count_);
  out_.write(buf, 8);
  out_.seekp(end);
  out_.flush();
  if (!out_) throw CodecError(CodecError::Kind::Io, 0, "PHL1 write failed");
}

Phl1Reader::Phl1Reader(std::istream& in) : in_(in) {
  char buf[kPhl1HeaderSize];
  in_.read(buf, kPhl1HeaderSize);
  if (in_.gcount() != static_cast<std::streamsize>(kPhl1HeaderSize)) {
    throw CodecError(CodecError::Kind::Truncated, static_cast<uint64_t>(in_.gcount()),
                     "PHL1 header truncated");
  }
  if (std::memcmp(buf, kPhl1Magic, 4) != 0) {
    throw CodecError(CodecError::Kind::BadMagic, 0, "not a PHL1 file (bad magic)");
  }
  header_.version = get_u32(buf + 4);
  if (header_.version != kPhl1Version) {
    throw CodecError(CodecError::Kind::BadVersion, 4,
                     "unsupported PHL1 version " + std::to_string(header_.version));
  }
  header_.record_count = get_u64(buf + 8);
  header_.acquisition_duration_ps = get_u64(buf + 16);
  offset_ = kPhl1HeaderSize;
}

std::optional<PixelHit> Phl1Reader::next() {
  if (read_ == header_.record_count) return std::nullopt;
  char buf[kPhl1RecordSize];
  in_.read(buf, kPhl1RecordSize);
  const auto got = in_.gcount();
  if (got == 0 && in_.eof()) {
    throw CodecError(CodecError::Kind::Truncated, offset_,
                     "PHL1 file ends after " + std::to_string(read_) + " of " +
                         std::to_string(header_.record_count) + " records");
  }
  if (got != static_cast<std::streamsize>(kPhl1RecordSize)) {
    throw CodecError(CodecError::Kind::Truncated, offset_ + static_cast<uint64_t>(got),
                     "PHL1 record " + std::to_string(read_) + " truncated at byte " +
                         std::to_string(offset_ + static_cast<uint64_t>(got)));
  }
  PixelHit hit;
  hit.x = get_u16(buf);
  hit.y = get_u16(buf + 2);
  hit.toa_ps = static_cast<int64_t>(get_u64(buf + 4));
  hit.tot = get_u16(buf + 12);
  offset_ += kPhl1RecordSize;
  ++read_;
  return hit;
}

std::string encode_hits(const std::vector<PixelHit>& hits,
                        uint64_t acquisition_duration_ps) {
  std::ostringstream out(std::ios::binary);
  {
    Phl1Writer writer(out, acquisition_duration_ps);
    for (const auto& h : hits) writer.write(h);
    writer.close();
  }
  return out.str();
}

std::vector<PixelHit> decode_hits(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  Phl1Reader reader(in);
  std::vector<PixelHit> hits;
  hits.reserve(reader.header().record_count);
  while (auto h = reader.next()) hits.push_back(*h);
  return hits;
}

void write_phl1_file(const std::string& path, const std::vector<PixelHit>& hits,
                     uint64_t acquisition_duration_ps) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CodecError(CodecError::Kind::Io, 0, "cannot open " + path);
  Phl1Writer writer(out, acquisition_duration_ps);
  for (const auto& h : hits) writer.write(h);
  writer.close();
}

std::vector<PixelHit> read_phl1_file(const std::string& path, Phl1Header* header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CodecError(CodecError::Kind::Io, 0, "cannot open " + path);
  Phl1Reader reader(in);
  if (header) *header = reader.header();
  std::vector<PixelHit> hits;
  hits.reserve(reader.header().record_count);
  while (auto h = reader.next()) hits.push_back(*h);
  return hits;
}

void write_hits_csv(std::ostream& out, const std::vector<PixelHit>& hits) {
  out << "x,y,toa_ps,tot\n";
  for (const auto& h : hits) {
    out << h.x << ',' << h.y << ',' << h.toa_ps << ',' << h.tot << '\n';
  }
}

std::vector<PixelHit> read_hits_csv(std::istream& in) {
  std::vector<PixelHit> hits;
  std::string line;
  if (!std::getline(in, line)) return hits;
  if (line != "x,y,toa_ps,tot") {
    throw CodecError(CodecError::Kind::BadRecord, 0,
                     "hit CSV header mismatch: '" + line + "'");
  }
  uint64_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    PixelHit h;
    unsigned long x = 0, y = 0, tot = 0;
    long long toa = 0;
    if (std::sscanf(line.c_str(), "%lu,%lu,%lld,%lu", &x, &y, &toa, &tot) != 4) {
      throw CodecError(CodecError::Kind::BadRecord, lineno,
                       "hit CSV parse error on line " + std::to_string(lineno));
    }
    h.x = static_cast<uint16_t>(x);
    h.y = static_cast<uint16_t>(y);
    h.toa_ps = toa;
    h.tot = static_cast<uint16_t>(tot);
    hits.push_back(h);
  }
  return hits;
}

}  // namespace paircam
