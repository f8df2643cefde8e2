#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "paircam/types.hpp"

namespace paircam {

enum class ProjectionKind { Marginal, Conditional, Minus, Sum };

/// 2D grid derived from a Jpd. Marginal/Minus/Sum grids hold raw counts;
/// Conditional grids are normalized by the reference marginal.
struct Projection {
  ProjectionKind kind = ProjectionKind::Marginal;
  int nx = 0;
  int ny = 0;
  int origin_x = 0;  // coordinate value of grid column 0
  int origin_y = 0;
  std::vector<double> grid;  // row-major, ny rows of nx

  double& at(int ix, int iy) { return grid[static_cast<size_t>(iy) * nx + ix]; }
  double at(int ix, int iy) const { return grid[static_cast<size_t>(iy) * nx + ix]; }
  double total() const;
};

/// Sparse 4D joint distribution over (left pixel, right pixel) pairs.
/// Keys pack the four 8-bit pixel indices; a dense 256^4 array is never built.
class Jpd {
 public:
  Jpd() = default;
  Jpd(Basis basis, OpticsConfig optics, double acquisition_s)
      : basis_(basis), optics_(optics), acquisition_s_(acquisition_s) {}

  static uint64_t pack_key(int px1, int py1, int px2, int py2) {
    return (static_cast<uint64_t>(px1) << 48) | (static_cast<uint64_t>(py1) << 32) |
           (static_cast<uint64_t>(px2) << 16) | static_cast<uint64_t>(py2);
  }
  static void unpack_key(uint64_t key, int& px1, int& py1, int& px2, int& py2) {
    px1 = static_cast<int>((key >> 48) & 0xffff);
    py1 = static_cast<int>((key >> 32) & 0xffff);
    px2 = static_cast<int>((key >> 16) & 0xffff);
    py2 = static_cast<int>(key & 0xffff);
  }

  /// Adds one pair: centroids rounded to the nearest pixel (half away from
  /// zero), left event first. Same-half pairs are skipped and counted.
  void add(const CoincidencePair& pair);

  /// Raw bin increment; indices must already be valid pixels.
  void add_bin(int px1, int py1, int px2, int py2, uint64_t count = 1);

  uint64_t total_pairs() const { return total_pairs_; }
  uint64_t skipped_same_half() const { return skipped_same_half_; }
  size_t occupied_bins() const { return counts_.size(); }
  Basis basis() const { return basis_; }
  const OpticsConfig& optics() const { return optics_; }
  double acquisition_s() const { return acquisition_s_; }
  const std::unordered_map<uint64_t, uint64_t>& counts() const { return counts_; }

  /// Bin-wise sum; requires identical basis and optics.
  void merge(const Jpd& other);

  Projection marginal(Half side) const;
  /// counts(ref, .) / marginal(ref); throws AnalysisError when the marginal
  /// at ref is zero.
  Projection conditional(int ref_px1, int ref_py1) const;
  Projection minus_projection() const;  // spans [-255, 255]^2
  Projection sum_projection() const;    // spans [0, 510]^2

  /// Marginalizes onto one axis pair: out[a1][a2] = sum over the other axis,
  /// a1 from the left event, a2 from the right. Used by the conditional-width
  /// analysis. Row-major [a1 * 256 + a2].
  std::vector<double> axis_matrix(int axis) const;  // axis 0 = x, 1 = y

  bool operator==(const Jpd& other) const;

  void save(const std::string& path) const;  // CSV + ".meta" sidecar
  static Jpd load(const std::string& path);

 private:
  Basis basis_ = Basis::NearField;
  OpticsConfig optics_;
  double acquisition_s_ = 0.0;
  std::unordered_map<uint64_t, uint64_t> counts_;
  uint64_t total_pairs_ = 0;
  uint64_t skipped_same_half_ = 0;
  uint64_t dropped_out_of_range_ = 0;
};

/// Plain-text grid (one row per line) and 16-bit PGM exports for plotting.
void write_projection_text(const Projection& p, const std::string& path);
void write_projection_pgm(const Projection& p, const std::string& path);

}  // namespace paircam
