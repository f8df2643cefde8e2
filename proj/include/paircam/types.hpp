#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace paircam {

inline constexpr int kSensorSize = 256;       // pixels per side
inline constexpr double kHalfBoundaryX = 128.0;

enum class Basis { NearField, FarField };

std::string to_string(Basis b);
Basis basis_from_string(const std::string& s);

enum class Half : uint8_t { Left, Right };

/// One camera pixel firing. Times are integer picoseconds from run start.
struct PixelHit {
  uint16_t x = 0;
  uint16_t y = 0;
  int64_t toa_ps = 0;
  uint16_t tot = 1;

  friend bool operator==(const PixelHit&, const PixelHit&) = default;
};

/// A reconstructed single photon (cluster centroid).
struct PhotonEvent {
  double cx = 0.0;          // sub-pixel centroid, fractional pixels
  double cy = 0.0;
  int64_t t_ps = 0;         // time of the max-amplitude pixel, timewalk-corrected downstream
  uint32_t n_pixels = 0;
  uint32_t sum_tot = 0;
  uint16_t max_tot = 0;     // amplitude of the pixel that supplied t_ps
  Half half = Half::Left;

  friend bool operator==(const PhotonEvent&, const PhotonEvent&) = default;
};

inline Half half_of_centroid(double cx) {
  return cx < kHalfBoundaryX ? Half::Left : Half::Right;
}

/// Two photons within the coincidence window. Under the default
/// cross-halves pairing, `a` is on the left half and `b` on the right.
struct CoincidencePair {
  PhotonEvent a;
  PhotonEvent b;
  int64_t dt_ps = 0;        // |a.t_ps - b.t_ps|

  friend bool operator==(const CoincidencePair&, const CoincidencePair&) = default;
};

/// Imaging geometry for one configuration (position or momentum basis).
struct OpticsConfig {
  double pixel_pitch_m = 55e-6;
  double magnification_nf = 10.0;
  double f_eff_m = 0.075;
  double wavelength_m = 810e-9;
  Basis basis = Basis::NearField;

  friend bool operator==(const OpticsConfig&, const OpticsConfig&) = default;
};

/// Physical width of one pixel in the given basis: meters (NF) or 1/m (FF).
double pixel_scale(const OpticsConfig& optics);

/// Converts a pixel-valued quantity (coordinate span or width) to physical units.
double pixel_to_physical(const OpticsConfig& optics, double pixels);

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Input stream violated a required time ordering.
class OrderingError : public Error {
 public:
  explicit OrderingError(const std::string& msg) : Error(msg) {}
};

/// Malformed binary or CSV event data.
class CodecError : public Error {
 public:
  enum class Kind { BadMagic, BadVersion, Truncated, BadRecord, Io };

  CodecError(Kind kind, uint64_t byte_offset, const std::string& msg)
      : Error(msg), kind(kind), byte_offset(byte_offset) {}

  Kind kind;
  uint64_t byte_offset;  // offset of the offending byte(s) in the stream
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class AnalysisError : public Error {
 public:
  explicit AnalysisError(const std::string& msg) : Error(msg) {}
};

class CalibrationError : public AnalysisError {
 public:
  explicit CalibrationError(const std::string& msg) : AnalysisError(msg) {}
};

}  // namespace paircam
