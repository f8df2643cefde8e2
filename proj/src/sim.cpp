#include "paircam/sim.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <tuple>
#include <unordered_map>

#include "paircam/rng.hpp"

namespace paircam {

namespace {

void validate(const SourceParams& p) {
  if (p.sigma_sum_m <= 0 || p.sigma_diff_m <= 0 || p.kappa_sum_inv_m <= 0 ||
      p.kappa_diff_inv_m <= 0) {
    throw ConfigError("SourceParams: widths must be > 0");
  }
  if (p.pair_rate_hz <= 0) throw ConfigError("SourceParams: pair_rate_hz must be > 0");
}

void validate(const DetectorParams& p) {
  if (p.quantum_efficiency < 0 || p.quantum_efficiency > 1) {
    throw ConfigError("DetectorParams: quantum_efficiency must be in [0, 1]");
  }
  if (p.dead_time_ps < 0) throw ConfigError("DetectorParams: dead_time_ps must be >= 0");
}

// RNG substream tags; detection draws stay on their own stream so that a
// lower quantum efficiency thins the same underlying photon set.
enum StreamTag : uint64_t { kEmission = 0, kDetect = 1, kCluster = 2, kDark = 3 };

struct GenHit {
  PixelHit hit;
  uint64_t cluster_id;
};

struct PendingCluster {
  int64_t pair_id = -1;
  int photon_idx = -1;
  double det_x_px = 0.0;
  double det_y_px = 0.0;
  uint32_t undecided_hits = 0;
  bool any_survived = false;
  PixelHit anchor;  // surviving max-ToT pixel so far (centroid tie rules)
};

bool better_anchor(const PixelHit& h, const PixelHit& cur) {
  if (h.tot != cur.tot) return h.tot > cur.tot;
  if (h.toa_ps != cur.toa_ps) return h.toa_ps < cur.toa_ps;
  return std::pair(h.x, h.y) < std::pair(cur.x, cur.y);
}

int64_t quantize_toa(double t_ps, double tick_ps) {
  if (t_ps < 0.0) t_ps = 0.0;
  if (tick_ps <= 0.0) return std::llround(t_ps);
  return std::llround(std::floor(t_ps / tick_ps) * tick_ps);
}

/// Shared generation state threaded through chunks.
struct Generation {
  const OpticsConfig& optics;
  const DetectorParams& det;
  double scale;                       // physical units per pixel
  std::vector<GenHit> pending_hits;   // unsorted, awaiting watermark emission
  std::unordered_map<uint64_t, PendingCluster> pending_clusters;
  uint64_t next_cluster_id = 0;
  std::vector<int64_t> last_hit_ps;   // per-pixel dead-time state
  uint64_t off_sensor = 0;
  uint64_t dead_dropped = 0;
  uint64_t hits_out = 0;

  Generation(const OpticsConfig& o, const DetectorParams& d)
      : optics(o), det(d), scale(pixel_scale(o)),
        last_hit_ps(static_cast<size_t>(kSensorSize) * kSensorSize, INT64_MIN / 2) {}

  /// Builds the cluster for one detected photon. Returns false when the
  /// photon lands off the sensor or fires no pixel.
  bool make_cluster(double px, double py, double base_t_ps, int64_t pair_id,
                    int photon_idx, Rng& rng) {
    const long cx0 = std::lround(px);
    const long cy0 = std::lround(py);
    if (cx0 < 0 || cx0 >= kSensorSize || cy0 < 0 || cy0 >= kSensorSize) {
      ++off_sensor;
      return false;
    }
    const uint64_t id = next_cluster_id++;
    uint32_t fired = 0;

    auto fire = [&](long ix, long iy, int tot) {
      PixelHit h;
      h.x = static_cast<uint16_t>(ix);
      h.y = static_cast<uint16_t>(iy);
      h.tot = static_cast<uint16_t>(tot);
      h.toa_ps = quantize_toa(base_t_ps + det.timewalk_coeff_ps / tot, det.tick_ps);
      pending_hits.push_back({h, id});
      ++fired;
    };

    const double sigma = det.cluster_psf_sigma_px;
    if (sigma <= 0.0) {
      const auto tot = std::max<long>(
          1, std::lround(rng.normal(det.mean_cluster_tot, det.tot_noise_sigma)));
      fire(cx0, cy0, static_cast<int>(tot));
    } else {
      const int radius = static_cast<int>(std::ceil(
          sigma * std::sqrt(2.0 * std::log(std::max(2.0 * det.mean_cluster_tot, 10.0)))));
      for (long iy = cy0 - radius; iy <= cy0 + radius; ++iy) {
        for (long ix = cx0 - radius; ix <= cx0 + radius; ++ix) {
          const double dx = static_cast<double>(ix) - px;
          const double dy = static_cast<double>(iy) - py;
          const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
          const double mu = det.mean_cluster_tot * w;
          // Pixels with an expected amplitude below half a ToT count never
          // fire; every fired pixel then sits within the 8-connected core and
          // one photon cannot split into several clusters.
          if (mu < 0.5) continue;
          const auto tot = std::lround(rng.normal(mu, det.tot_noise_sigma));
          if (tot < 1) continue;
          if (ix < 0 || ix >= kSensorSize || iy < 0 || iy >= kSensorSize) continue;
          fire(ix, iy, static_cast<int>(tot));
        }
      }
    }
    if (fired == 0) {
      --next_cluster_id;
      return false;
    }
    PendingCluster pc;
    pc.pair_id = pair_id;
    pc.photon_idx = photon_idx;
    pc.det_x_px = px;
    pc.det_y_px = py;
    pc.undecided_hits = fired;
    pending_clusters.emplace(id, pc);
    return true;
  }

  void add_dark_hits(double t_lo_ps, double t_hi_ps, Rng& rng) {
    if (det.dark_rate_hz_per_px <= 0.0) return;
    const double lambda = det.dark_rate_hz_per_px *
                          static_cast<double>(kSensorSize) * kSensorSize *
                          (t_hi_ps - t_lo_ps) * 1e-12;
    const uint64_t n = rng.poisson(lambda);
    for (uint64_t i = 0; i < n; ++i) {
      const double t = rng.uniform(t_lo_ps, t_hi_ps);
      const auto x = static_cast<uint16_t>(rng.uniform_below(kSensorSize));
      const auto y = static_cast<uint16_t>(rng.uniform_below(kSensorSize));
      const auto tot = std::max<long>(
          1, std::lround(rng.normal(det.mean_cluster_tot, det.tot_noise_sigma)));
      PixelHit h;
      h.x = x;
      h.y = y;
      h.tot = static_cast<uint16_t>(tot);
      h.toa_ps = quantize_toa(t + det.timewalk_coeff_ps / static_cast<double>(tot),
                              det.tick_ps);
      const uint64_t id = next_cluster_id++;
      pending_hits.push_back({h, id});
      PendingCluster pc;
      pc.det_x_px = x;
      pc.det_y_px = y;
      pc.undecided_hits = 1;
      pending_clusters.emplace(id, pc);
    }
  }

  /// Emits every pending hit below the watermark in global time order through
  /// the dead-time filter, finalizing truth clusters whose hits are all
  /// decided.
  template <typename HitSinkT, typename ClusterSinkT>
  void drain(int64_t watermark_ps, const HitSinkT& hit_sink,
             const ClusterSinkT& cluster_sink) {
    auto split = std::partition(
        pending_hits.begin(), pending_hits.end(),
        [watermark_ps](const GenHit& g) { return g.hit.toa_ps < watermark_ps; });
    std::vector<GenHit> batch(std::make_move_iterator(pending_hits.begin()),
                              std::make_move_iterator(split));
    pending_hits.erase(pending_hits.begin(), split);
    std::sort(batch.begin(), batch.end(), [](const GenHit& a, const GenHit& b) {
      return std::tuple(a.hit.toa_ps, a.hit.y, a.hit.x, a.hit.tot) <
             std::tuple(b.hit.toa_ps, b.hit.y, b.hit.x, b.hit.tot);
    });
    for (const auto& g : batch) {
      const size_t px = static_cast<size_t>(g.hit.y) * kSensorSize + g.hit.x;
      const bool alive =
          static_cast<double>(g.hit.toa_ps - last_hit_ps_at(px)) >= det.dead_time_ps;
      auto it = pending_clusters.find(g.cluster_id);
      if (alive) {
        last_hit_ps[px] = g.hit.toa_ps;
        hit_sink(g.hit);
        ++hits_out;
        if (it != pending_clusters.end()) {
          if (!it->second.any_survived || better_anchor(g.hit, it->second.anchor)) {
            it->second.anchor = g.hit;
          }
          it->second.any_survived = true;
        }
      } else {
        ++dead_dropped;
      }
      if (it != pending_clusters.end() && --it->second.undecided_hits == 0) {
        if (it->second.any_survived) {
          TruthCluster tc;
          tc.pair_id = it->second.pair_id;
          tc.photon_idx = it->second.photon_idx;
          tc.det_t_ps = it->second.anchor.toa_ps;
          tc.det_x_px = it->second.det_x_px;
          tc.det_y_px = it->second.det_y_px;
          cluster_sink(tc);
        }
        pending_clusters.erase(it);
      }
    }
  }

  int64_t last_hit_ps_at(size_t idx) const { return last_hit_ps[idx]; }
};

void sample_pair_into(const SourceParams& p, Basis basis, Rng& rng, PairSample& out) {
  const double ws = basis == Basis::NearField ? p.sigma_sum_m : p.kappa_sum_inv_m;
  const double wd = basis == Basis::NearField ? p.sigma_diff_m : p.kappa_diff_inv_m;
  if (p.separable) {
    const double wm = 0.5 * std::sqrt(ws * ws + wd * wd);
    out.u1 = rng.normal(0.0, wm);
    out.v1 = rng.normal(0.0, wm);
    out.u2 = rng.normal(0.0, wm);
    out.v2 = rng.normal(0.0, wm);
    return;
  }
  const double su = rng.normal(0.0, ws);
  const double du = rng.normal(0.0, wd);
  const double sv = rng.normal(0.0, ws);
  const double dv = rng.normal(0.0, wd);
  out.u1 = 0.5 * (su + du);
  out.u2 = 0.5 * (su - du);
  out.v1 = 0.5 * (sv + dv);
  out.v2 = 0.5 * (sv - dv);
}

constexpr double kJitterClampSigmas = 8.0;  // keeps hit times within the
                                            // chunk reorder margin

double jitter_ps(const DetectorParams& det, Rng& rng) {
  if (det.time_jitter_ps <= 0.0) return 0.0;
  const double z = std::clamp(rng.normal(), -kJitterClampSigmas, kJitterClampSigmas);
  return z * det.time_jitter_ps;
}

int64_t reorder_margin_ps(const DetectorParams& det) {
  return static_cast<int64_t>(kJitterClampSigmas * det.time_jitter_ps +
                              det.tick_ps + 64.0);
}

template <typename HitSinkT, typename PairSinkT, typename ClusterSinkT>
Simulator::RunStats run_generation(const SourceParams& source,
                                   const DetectorParams& det,
                                   const OpticsConfig& optics, double duration_s,
                                   uint64_t seed, double time_chunk_s,
                                   const HitSinkT& hit_sink, const PairSinkT& pair_sink,
                                   const ClusterSinkT& cluster_sink) {
  validate(source);
  validate(det);
  Generation gen(optics, det);
  const double duration_ps = duration_s * 1e12;
  const double chunk_ps = std::max(time_chunk_s, 1e-6) * 1e12;
  const auto n_chunks =
      std::max<int64_t>(1, static_cast<int64_t>(std::ceil(duration_ps / chunk_ps)));
  int64_t pair_id = 0;

  for (int64_t k = 0; k < n_chunks; ++k) {
    const double t_lo = static_cast<double>(k) * chunk_ps;
    const double t_hi = std::min(duration_ps, t_lo + chunk_ps);
    Rng rng_emit(derive_seed(seed, static_cast<uint64_t>(k) * 4 + kEmission));
    Rng rng_detect(derive_seed(seed, static_cast<uint64_t>(k) * 4 + kDetect));
    Rng rng_cluster(derive_seed(seed, static_cast<uint64_t>(k) * 4 + kCluster));
    Rng rng_dark(derive_seed(seed, static_cast<uint64_t>(k) * 4 + kDark));

    const uint64_t n_pairs = rng_emit.poisson(source.pair_rate_hz * (t_hi - t_lo) * 1e-12);
    std::vector<double> times(n_pairs);
    for (auto& t : times) t = rng_emit.uniform(t_lo, t_hi);
    std::sort(times.begin(), times.end());

    for (uint64_t i = 0; i < n_pairs; ++i) {
      PairSample s;
      sample_pair_into(source, optics.basis, rng_emit, s);
      TruthPair tp;
      tp.t_ps = std::llround(times[i]);
      tp.u1 = s.u1;
      tp.v1 = s.v1;
      tp.u2 = s.u2;
      tp.v2 = s.v2;
      pair_sink(pair_id, tp);

      const bool det0 = rng_detect.uniform() < det.quantum_efficiency;
      const bool det1 = rng_detect.uniform() < det.quantum_efficiency;
      if (det0) {
        gen.make_cluster(det.center_left_x_px + s.u1 / gen.scale,
                         det.center_left_y_px + s.v1 / gen.scale,
                         times[i] + jitter_ps(det, rng_cluster), pair_id, 0,
                         rng_cluster);
      }
      if (det1) {
        gen.make_cluster(det.center_right_x_px + s.u2 / gen.scale,
                         det.center_right_y_px + s.v2 / gen.scale,
                         times[i] + jitter_ps(det, rng_cluster), pair_id, 1,
                         rng_cluster);
      }
      ++pair_id;
    }
    gen.add_dark_hits(t_lo, t_hi, rng_dark);

    const int64_t watermark =
        static_cast<int64_t>(t_hi) - reorder_margin_ps(det);
    gen.drain(watermark, hit_sink, cluster_sink);
  }
  gen.drain(INT64_MAX, hit_sink, cluster_sink);

  Simulator::RunStats stats;
  stats.pairs_emitted = static_cast<uint64_t>(pair_id);
  stats.hits_written = gen.hits_out;
  stats.photons_off_sensor = gen.off_sensor;
  stats.hits_dead_time_dropped = gen.dead_dropped;
  return stats;
}

}  // namespace

std::vector<PairSample> sample_pairs(const SourceParams& params, Basis basis,
                                     size_t n, uint64_t seed) {
  validate(params);
  Rng rng(derive_seed(seed, kEmission));
  std::vector<PairSample> out(n);
  for (auto& s : out) sample_pair_into(params, basis, rng, s);
  return out;
}

std::pair<double, double> pure_state_widths(double sigma_sum_m, double sigma_diff_m) {
  if (sigma_sum_m <= 0 || sigma_diff_m <= 0) {
    throw ConfigError("pure_state_widths: widths must be > 0");
  }
  return {1.0 / sigma_sum_m, 1.0 / sigma_diff_m};
}

SimulationOutput detector_response(std::span<const PairSample> pairs,
                                   std::span<const int64_t> emission_t_ps,
                                   const OpticsConfig& optics,
                                   const DetectorParams& det, double duration_s,
                                   uint64_t seed) {
  if (pairs.size() != emission_t_ps.size()) {
    throw ConfigError("detector_response: pairs and emission times differ in length");
  }
  validate(det);
  Generation gen(optics, det);
  Rng rng_detect(derive_seed(seed, kDetect));
  Rng rng_cluster(derive_seed(seed, kCluster));
  Rng rng_dark(derive_seed(seed, kDark));

  SimulationOutput out;
  out.truth.pairs.reserve(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (i > 0 && emission_t_ps[i] < emission_t_ps[i - 1]) {
      throw OrderingError("detector_response: emission times not sorted");
    }
    const auto& s = pairs[i];
    out.truth.pairs.push_back(
        {emission_t_ps[i], s.u1, s.v1, s.u2, s.v2});
    const bool det0 = rng_detect.uniform() < det.quantum_efficiency;
    const bool det1 = rng_detect.uniform() < det.quantum_efficiency;
    const auto pair_id = static_cast<int64_t>(i);
    if (det0) {
      gen.make_cluster(det.center_left_x_px + s.u1 / gen.scale,
                       det.center_left_y_px + s.v1 / gen.scale,
                       static_cast<double>(emission_t_ps[i]) + jitter_ps(det, rng_cluster),
                       pair_id, 0, rng_cluster);
    }
    if (det1) {
      gen.make_cluster(det.center_right_x_px + s.u2 / gen.scale,
                       det.center_right_y_px + s.v2 / gen.scale,
                       static_cast<double>(emission_t_ps[i]) + jitter_ps(det, rng_cluster),
                       pair_id, 1, rng_cluster);
    }
  }
  gen.add_dark_hits(0.0, duration_s * 1e12, rng_dark);
  gen.drain(
      INT64_MAX, [&out](const PixelHit& h) { out.hits.push_back(h); },
      [&out](const TruthCluster& c) { out.truth.clusters.push_back(c); });

  out.truth.emitted_pairs = pairs.size();
  out.truth.photons_off_sensor = gen.off_sensor;
  out.truth.hits_dead_time_dropped = gen.dead_dropped;
  return out;
}

Simulator::Simulator(const SourceParams& source, const DetectorParams& det,
                     const OpticsConfig& optics, uint64_t seed, double time_chunk_s)
    : source_(source), det_(det), optics_(optics), seed_(seed),
      time_chunk_s_(time_chunk_s) {}

Simulator::RunStats Simulator::run(double duration_s, const HitSink& hit_sink,
                                   const TruthPairSink& pair_sink,
                                   const TruthClusterSink& cluster_sink) {
  const TruthPairSink pairs =
      pair_sink ? pair_sink : TruthPairSink([](int64_t, const TruthPair&) {});
  const TruthClusterSink clusters =
      cluster_sink ? cluster_sink : TruthClusterSink([](const TruthCluster&) {});
  return run_generation(source_, det_, optics_, duration_s, seed_, time_chunk_s_,
                        hit_sink, pairs, clusters);
}

SimulationOutput simulate_hits(const SourceParams& source, const DetectorParams& det,
                               const OpticsConfig& optics, double duration_s,
                               uint64_t seed, double time_chunk_s) {
  SimulationOutput out;
  Simulator sim(source, det, optics, seed, time_chunk_s);
  const auto stats = sim.run(
      duration_s, [&out](const PixelHit& h) { out.hits.push_back(h); },
      [&out](int64_t, const TruthPair& p) { out.truth.pairs.push_back(p); },
      [&out](const TruthCluster& c) { out.truth.clusters.push_back(c); });
  out.truth.emitted_pairs = stats.pairs_emitted;
  out.truth.photons_off_sensor = stats.photons_off_sensor;
  out.truth.hits_dead_time_dropped = stats.hits_dead_time_dropped;
  return out;
}

CertificationReport theory_report(const SourceParams& params) {
  validate(params);
  const double ss = params.sigma_sum_m, sd = params.sigma_diff_m;
  const double ks = params.kappa_sum_inv_m, kd = params.kappa_diff_inv_m;

  double cond_pos, cond_mom, minus_pos, plus_mom;
  if (params.separable) {
    cond_pos = 0.5 * std::sqrt(ss * ss + sd * sd);  // conditional = marginal
    cond_mom = 0.5 * std::sqrt(ks * ks + kd * kd);
    minus_pos = std::sqrt((ss * ss + sd * sd) / 2.0);
    plus_mom = std::sqrt((ks * ks + kd * kd) / 2.0);
  } else {
    cond_pos = ss * sd / std::sqrt(ss * ss + sd * sd);
    cond_mom = ks * kd / std::sqrt(ks * ks + kd * kd);
    minus_pos = sd;
    plus_mom = ks;
  }

  AxisReport axis;
  axis.cond_ref_pos_m = cond_pos;
  axis.cond_ref_mom_inv_m = cond_mom;
  axis.delta_min_pos_m = cond_pos;
  axis.delta_min_mom_inv_m = cond_mom;
  axis.delta_minus_pos_m = minus_pos;
  axis.delta_plus_mom_inv_m = plus_mom;
  const auto epr = epr_reid_product(cond_pos, cond_mom);
  axis.epr_product = epr.product;
  axis.epr_violated = epr.violated;
  axis.eof = eof_lower_bound(minus_pos, plus_mom);
  axis.entanglement_certified = axis.eof > 0.0;
  axis.dim = dimension_bound(axis.eof);
  axis.dim_floor = std::max<int64_t>(1, static_cast<int64_t>(std::floor(axis.dim)));

  CertificationReport report;
  report.x = axis;
  report.y = axis;  // both transverse axes share the model widths
  report.dim_total_floor = report.x.dim_floor + report.y.dim_floor;
  report.source = "theory";
  return report;
}

void write_truth_pairs_csv(std::ostream& out, std::span<const TruthPair> pairs) {
  out << "pair_id,photon_idx,u_m,v_m,t_ps\n";
  char buf[160];
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    std::snprintf(buf, sizeof(buf), "%zu,0,%.17g,%.17g,%lld\n", i, p.u1, p.v1,
                  static_cast<long long>(p.t_ps));
    out << buf;
    std::snprintf(buf, sizeof(buf), "%zu,1,%.17g,%.17g,%lld\n", i, p.u2, p.v2,
                  static_cast<long long>(p.t_ps));
    out << buf;
  }
}

void write_truth_clusters_csv(std::ostream& out, std::span<const TruthCluster> clusters) {
  out << "cluster_id,pair_id,photon_idx,t_ps,x_px,y_px\n";
  char buf[160];
  for (size_t i = 0; i < clusters.size(); ++i) {
    const auto& c = clusters[i];
    std::snprintf(buf, sizeof(buf), "%zu,%lld,%d,%lld,%.17g,%.17g\n", i,
                  static_cast<long long>(c.pair_id), c.photon_idx,
                  static_cast<long long>(c.det_t_ps), c.det_x_px, c.det_y_px);
    out << buf;
  }
}

std::vector<TruthPair> read_truth_pairs_csv(std::istream& in) {
  std::vector<TruthPair> pairs;
  std::string line;
  if (!std::getline(in, line) || line != "pair_id,photon_idx,u_m,v_m,t_ps") {
    throw CodecError(CodecError::Kind::BadRecord, 0, "truth pairs CSV header mismatch");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    unsigned long long id;
    int idx;
    double u, v;
    long long t;
    if (std::sscanf(line.c_str(), "%llu,%d,%lg,%lg,%lld", &id, &idx, &u, &v, &t) != 5) {
      throw CodecError(CodecError::Kind::BadRecord, 0,
                       "truth pairs CSV parse error: " + line);
    }
    if (id >= pairs.size()) pairs.resize(id + 1);
    auto& p = pairs[id];
    p.t_ps = t;
    if (idx == 0) {
      p.u1 = u;
      p.v1 = v;
    } else {
      p.u2 = u;
      p.v2 = v;
    }
  }
  return pairs;
}

std::vector<TruthCluster> read_truth_clusters_csv(std::istream& in) {
  std::vector<TruthCluster> clusters;
  std::string line;
  if (!std::getline(in, line) ||
      line != "cluster_id,pair_id,photon_idx,t_ps,x_px,y_px") {
    throw CodecError(CodecError::Kind::BadRecord, 0,
                     "truth clusters CSV header mismatch");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    unsigned long long id;
    long long pair_id, t;
    int idx;
    double x, y;
    if (std::sscanf(line.c_str(), "%llu,%lld,%d,%lld,%lg,%lg", &id, &pair_id, &idx,
                    &t, &x, &y) != 6) {
      throw CodecError(CodecError::Kind::BadRecord, 0,
                       "truth clusters CSV parse error: " + line);
    }
    TruthCluster c;
    c.pair_id = pair_id;
    c.photon_idx = idx;
    c.det_t_ps = t;
    c.det_x_px = x;
    c.det_y_px = y;
    clusters.push_back(c);
  }
  return clusters;
}

}  // namespace paircam
