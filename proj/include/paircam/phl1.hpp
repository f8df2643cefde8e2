#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "paircam/types.hpp"

namespace paircam {

/// PHL1: the canonical interchange format for pixel-hit lists.
/// Little-endian layout:
///   header (24 bytes): magic "PHL1", u32 version = 1, u64 record count,
///                      u64 acquisition_duration_ps
///   records (14 bytes): u16 x, u16 y, u64 toa_ps, u16 tot
/// Records must be sorted by toa_ps ascending.

inline constexpr char kPhl1Magic[4] = {'P', 'H', 'L', '1'};
inline constexpr uint32_t kPhl1Version = 1;
inline constexpr size_t kPhl1HeaderSize = 24;
inline constexpr size_t kPhl1RecordSize = 14;

struct Phl1Header {
  uint32_t version = kPhl1Version;
  uint64_t record_count = 0;
  uint64_t acquisition_duration_ps = 0;
};

/// Streaming writer. The record count is patched into the header on close,
/// so the sink must be seekable (a file).
class Phl1Writer {
 public:
  Phl1Writer(std::ostream& out, uint64_t acquisition_duration_ps);
  ~Phl1Writer();

  Phl1Writer(const Phl1Writer&) = delete;
  Phl1Writer& operator=(const Phl1Writer&) = delete;

  /// Appends one hit; throws OrderingError if toa_ps decreases.
  void write(const PixelHit& hit);

  /// Patches the header and flushes. Called by the destructor if needed.
  void close();

  uint64_t written() const { return count_; }

 private:
  std::ostream& out_;
  uint64_t count_ = 0;
  int64_t last_toa_ps_ = INT64_MIN;
  bool closed_ = false;
};

/// Streaming reader; holds one record at a time.
class Phl1Reader {
 public:
  explicit Phl1Reader(std::istream& in);

  const Phl1Header& header() const { return header_; }

  /// Next hit in file order, or nullopt at a clean end of stream.
  /// Throws CodecError(Truncated) naming the byte offset on a partial record.
  std::optional<PixelHit> next();

  uint64_t records_read() const { return read_; }

 private:
  std::istream& in_;
  Phl1Header header_;
  uint64_t read_ = 0;
  uint64_t offset_ = 0;
};

/// Whole-list conveniences used by tests and small files.
std::string encode_hits(const std::vector<PixelHit>& hits,
                        uint64_t acquisition_duration_ps = 0);
std::vector<PixelHit> decode_hits(const std::string& bytes);

void write_phl1_file(const std::string& path, const std::vector<PixelHit>& hits,
                     uint64_t acquisition_duration_ps);
std::vector<PixelHit> read_phl1_file(const std::string& path,
                                     Phl1Header* header = nullptr);

/// Debug CSV alternative: header line "x,y,toa_ps,tot", decimal integers.
void write_hits_csv(std::ostream& out, const std::vector<PixelHit>& hits);
std::vector<PixelHit> read_hits_csv(std::istream& in);

}  // namespace paircam
