#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "paircam/types.hpp"

namespace paircam {

struct ClusterParams {
  int spatial_adjacency_px = 1;          // Chebyshev radius for neighborhood
  int64_t cluster_time_window_ps = 300'000;
  uint32_t min_cluster_tot = 1;
};

struct PairingParams {
  int64_t coincidence_window_ps = 6'000;
  bool cross_halves_only = true;
};

using Cluster = std::vector<PixelHit>;

/// Streaming connected-component clustering over a time-sorted hit stream.
/// Two hits share a cluster iff they are linked by a chain of hits that are
/// within `spatial_adjacency_px` (Chebyshev) and `cluster_time_window_ps` of
/// each other. Emits clusters ordered by earliest hit time, with memory
/// bounded by the number of simultaneously open clusters.
class Clusterer {
 public:
  using Sink = std::function<void(Cluster&&)>;

  explicit Clusterer(ClusterParams params) : params_(params) {}

  void push(const PixelHit& hit, const Sink& sink);
  void flush(const Sink& sink);

 private:
  struct Open {
    Cluster hits;
    int64_t first_toa_ps = 0;
    int64_t last_toa_ps = 0;
    int min_x = 0, max_x = 0, min_y = 0, max_y = 0;
  };

  void finish(Cluster&& cluster);
  void emit_ready(const Sink& sink, bool all);

  ClusterParams params_;
  std::vector<Open> open_;
  std::vector<Cluster> done_;  // finished, awaiting start-time ordered emission
  int64_t last_toa_ps_ = INT64_MIN;
};

/// Amplitude-weighted centroid; cluster time is the time of the max-ToT hit
/// (ties: earliest toa, then smallest (x, y)).
PhotonEvent centroid(const Cluster& cluster);

/// Subtracts the amplitude-dependent time shift c / max_tot from each event.
void timewalk_correct(std::span<PhotonEvent> events, double coeff_ps);

/// Least-squares fit of dt = c / tot over (tot, dt_ps) samples. Requires at
/// least 10 samples spanning at least 2 distinct ToT values.
double calibrate_timewalk(std::span<const std::pair<uint32_t, double>> samples);

/// Calibrates the same model from coincidence pairs without an external
/// reference: regresses dt = c * (1/max_tot_a - 1/max_tot_b).
double calibrate_timewalk_from_pairs(std::span<const CoincidencePair> pairs);

struct PairingStats {
  uint64_t events_in = 0;
  uint64_t pairs = 0;
  /// Events that found no opposite-half partner but had a same-half neighbor
  /// inside the window (diagnostic; such coincidences never enter the JPD).
  uint64_t same_half_coincident_events = 0;
};

/// Greedy coincidence matching over a time-sorted photon stream: each event,
/// in time order, claims the earliest subsequent unpaired event on the
/// opposite half within the window (equal times resolve in stream order).
/// Every event belongs to at most one pair. With cross_halves_only = false,
/// halves are ignored when matching and emitted pairs are time-ordered
/// internally instead of left-first.
class Pairer {
 public:
  using Sink = std::function<void(CoincidencePair&&)>;

  explicit Pairer(PairingParams params) : params_(params) {}

  void push(const PhotonEvent& event, const Sink& sink);
  void flush(const Sink& sink);

  const PairingStats& stats() const { return stats_; }

 private:
  void expire(int64_t now_ps);

  PairingParams params_;
  std::vector<PhotonEvent> pending_;
  PairingStats stats_;
  int64_t last_t_ps_ = INT64_MIN;
};

/// Convenience whole-stream wrappers used by tests and the CLI.
std::vector<Cluster> cluster_hits(std::span<const PixelHit> hits,
                                  const ClusterParams& params);
std::vector<CoincidencePair> find_coincidences(std::span<const PhotonEvent> events,
                                               const PairingParams& params,
                                               PairingStats* stats = nullptr);

struct PipelineResult {
  std::vector<CoincidencePair> pairs;
  PairingStats pairing;
  uint64_t clusters = 0;
  double timewalk_coeff_ps = 0.0;  // the coefficient actually applied
};

/// cluster -> centroid -> timewalk -> pair in one pass over sorted hits.
/// A negative timewalk_coeff_ps requests self-calibration from the pair
/// sample (two-phase: pair uncorrected, fit c, correct, re-pair).
PipelineResult process_hits(std::span<const PixelHit> hits,
                            const ClusterParams& cparams,
                            const PairingParams& pparams,
                            double timewalk_coeff_ps = 0.0);

/// Runs process_hits on overlapping time chunks and keeps each pair exactly
/// once (owned by the chunk containing its first event). With overlap >=
/// max(cluster window, coincidence window) this reproduces the single-pass
/// result; the equivalence is covered by the acceptance suite.
PipelineResult process_hits_chunked(std::span<const PixelHit> hits,
                                    const ClusterParams& cparams,
                                    const PairingParams& pparams,
                                    double timewalk_coeff_ps,
                                    int64_t chunk_ps, int64_t overlap_ps);

/// Header "cx1,cy1,t1_ps,cx2,cy2,t2_ps,dt_ps"; one pair per line.
void write_pairs_csv(std::ostream& out, std::span<const CoincidencePair> pairs);

}  // namespace paircam
