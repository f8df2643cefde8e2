#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "paircam/analysis.hpp"
#include "paircam/types.hpp"

namespace paircam {

/// Double-Gaussian pair source. Widths are intensity standard deviations of
/// the sum and difference coordinates, identical for both transverse axes.
struct SourceParams {
  double sigma_sum_m = 2.6178e-4;      // std of (x1 + x2) at the crystal
  double sigma_diff_m = 1.17e-5;       // std of (x1 - x2)
  double kappa_sum_inv_m = 3.82e3;     // std of (k1 + k2)
  double kappa_diff_inv_m = 8.547e4;   // std of (k1 - k2)
  double pair_rate_hz = 1e6;
  bool separable = false;  // independent photons drawn from the marginal
};

/// Parametric model of the intensifier + time-stamping camera chain.
struct DetectorParams {
  double quantum_efficiency = 0.20;
  double dead_time_ps = 1e6;
  double cluster_psf_sigma_px = 0.6;   // 0 collapses clusters to one pixel
  double mean_cluster_tot = 25.0;
  double tot_noise_sigma = 2.0;
  double timewalk_coeff_ps = 30'000.0;  // added shift c / tot per pixel
  double dark_rate_hz_per_px = 0.0;
  double tick_ps = 1562.5;             // ToA quantization step
  double time_jitter_ps = 1800.0;      // per-photon Gaussian sigma
  // Beam centers on the sensor; one image per half.
  double center_left_x_px = 64.0;
  double center_left_y_px = 128.0;
  double center_right_x_px = 192.0;
  double center_right_y_px = 128.0;
};

struct PairSample {
  double u1 = 0.0, v1 = 0.0;  // photon 0 (imaged on the left half)
  double u2 = 0.0, v2 = 0.0;  // photon 1 (right half)
};

/// Samples pair coordinates in physical units: sum and difference coordinates
/// are independent centered normals per axis, with the position (NF) or
/// momentum (FF) widths. Deterministic for a fixed seed.
std::vector<PairSample> sample_pairs(const SourceParams& params, Basis basis,
                                     size_t n, uint64_t seed);

/// Momentum-basis intensity widths of the pure double-Gaussian state whose
/// position widths are given: the Fourier transform of
/// exp(-s^2/(4 ss^2) - d^2/(4 sd^2)) has sum/difference widths (1/ss, 1/sd).
std::pair<double, double> pure_state_widths(double sigma_sum_m, double sigma_diff_m);

struct TruthPair {
  int64_t t_ps = 0;
  double u1 = 0.0, v1 = 0.0, u2 = 0.0, v2 = 0.0;  // physical units
};

/// One detected cluster (or dark hit), linked to its parent photon.
struct TruthCluster {
  int64_t pair_id = -1;   // -1: noise
  int photon_idx = -1;    // 0 or 1; -1 for noise
  int64_t det_t_ps = 0;   // quantized time of the max-ToT pixel
  double det_x_px = 0.0;  // true (unrounded) cluster center on the sensor
  double det_y_px = 0.0;
};

struct TruthRecord {
  std::vector<TruthPair> pairs;
  std::vector<TruthCluster> clusters;
  uint64_t emitted_pairs = 0;
  uint64_t photons_off_sensor = 0;
  uint64_t hits_dead_time_dropped = 0;
};

void write_truth_pairs_csv(std::ostream& out, std::span<const TruthPair> pairs);
void write_truth_clusters_csv(std::ostream& out, std::span<const TruthCluster> clusters);
std::vector<TruthPair> read_truth_pairs_csv(std::istream& in);
std::vector<TruthCluster> read_truth_clusters_csv(std::istream& in);

struct SimulationOutput {
  std::vector<PixelHit> hits;  // toa-sorted, dead-time filtered
  TruthRecord truth;
};

/// Applies the detector model to already-sampled pairs with given emission
/// times (ascending). Exposed for oracle tests; the Simulator drives it in
/// time chunks.
SimulationOutput detector_response(std::span<const PairSample> pairs,
                                   std::span<const int64_t> emission_t_ps,
                                   const OpticsConfig& optics,
                                   const DetectorParams& det, double duration_s,
                                   uint64_t seed);

/// Chunked generator with bounded memory. Hits stream to `hit_sink` sorted
/// and dead-time filtered; truth rows stream to the optional sinks. All
/// randomness derives from (seed, chunk index), so a run is reproducible for
/// a fixed chunking policy.
class Simulator {
 public:
  using HitSink = std::function<void(const PixelHit&)>;
  using TruthPairSink = std::function<void(int64_t pair_id, const TruthPair&)>;
  using TruthClusterSink = std::function<void(const TruthCluster&)>;

  Simulator(const SourceParams& source, const DetectorParams& det,
            const OpticsConfig& optics, uint64_t seed, double time_chunk_s = 1.0);

  struct RunStats {
    uint64_t pairs_emitted = 0;
    uint64_t hits_written = 0;
    uint64_t photons_off_sensor = 0;
    uint64_t hits_dead_time_dropped = 0;
  };

  RunStats run(double duration_s, const HitSink& hit_sink,
               const TruthPairSink& pair_sink = nullptr,
               const TruthClusterSink& cluster_sink = nullptr);

 private:
  SourceParams source_;
  DetectorParams det_;
  OpticsConfig optics_;
  uint64_t seed_;
  double time_chunk_s_;
};

/// Whole-run convenience keeping everything in memory (desk-scale tests).
SimulationOutput simulate_hits(const SourceParams& source, const DetectorParams& det,
                               const OpticsConfig& optics, double duration_s,
                               uint64_t seed, double time_chunk_s = 1.0);

/// Closed-form certification quantities implied by the Gaussian model, for
/// comparison with the measured chain. Errors are zero; both axes identical.
CertificationReport theory_report(const SourceParams& params);

}  // namespace paircam
