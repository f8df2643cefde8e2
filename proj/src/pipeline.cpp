#include "paircam/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>
#include <tuple>

namespace paircam {

namespace {

bool adjacent(const PixelHit& a, const PixelHit& b, int radius, int64_t window_ps) {
  const int dx = std::abs(static_cast<int>(a.x) - static_cast<int>(b.x));
  const int dy = std::abs(static_cast<int>(a.y) - static_cast<int>(b.y));
  return std::max(dx, dy) <= radius && std::abs(a.toa_ps - b.toa_ps) <= window_ps;
}

}  // namespace

void Clusterer::push(const PixelHit& hit, const Sink& sink) {
  if (hit.toa_ps < last_toa_ps_) {
    throw OrderingError("cluster_hits: input not sorted by toa_ps");
  }
  last_toa_ps_ = hit.toa_ps;

  // Close clusters that can no longer grow.
  for (size_t i = 0; i < open_.size();) {
    if (hit.toa_ps - open_[i].last_toa_ps > params_.cluster_time_window_ps) {
      finish(std::move(open_[i].hits));
      open_[i] = std::move(open_.back());
      open_.pop_back();
    } else {
      ++i;
    }
  }

  // Find every open cluster this hit chains onto (bounding box prefilter).
  const int r = params_.spatial_adjacency_px;
  std::vector<size_t> matches;
  for (size_t i = 0; i < open_.size(); ++i) {
    const Open& c = open_[i];
    if (hit.x + r < c.min_x || static_cast<int>(hit.x) > c.max_x + r ||
        hit.y + r < c.min_y || static_cast<int>(hit.y) > c.max_y + r) {
      continue;
    }
    for (const auto& h : c.hits) {
      if (adjacent(hit, h, r, params_.cluster_time_window_ps)) {
        matches.push_back(i);
        break;
      }
    }
  }

  if (matches.empty()) {
    Open c;
    c.hits.push_back(hit);
    c.first_toa_ps = c.last_toa_ps = hit.toa_ps;
    c.min_x = c.max_x = hit.x;
    c.min_y = c.max_y = hit.y;
    open_.push_back(std::move(c));
  } else {
    // Merge all matching clusters into the first, then absorb the hit.
    Open& target = open_[matches[0]];
    for (size_t m = matches.size(); m-- > 1;) {
      Open& src = open_[matches[m]];
      target.hits.insert(target.hits.end(), src.hits.begin(), src.hits.end());
      target.first_toa_ps = std::min(target.first_toa_ps, src.first_toa_ps);
      target.last_toa_ps = std::max(target.last_toa_ps, src.last_toa_ps);
      target.min_x = std::min(target.min_x, src.min_x);
      target.max_x = std::max(target.max_x, src.max_x);
      target.min_y = std::min(target.min_y, src.min_y);
      target.max_y = std::max(target.max_y, src.max_y);
      open_.erase(open_.begin() + static_cast<ptrdiff_t>(matches[m]));
    }
    target.hits.push_back(hit);
    target.last_toa_ps = std::max(target.last_toa_ps, hit.toa_ps);
    target.min_x = std::min(target.min_x, static_cast<int>(hit.x));
    target.max_x = std::max(target.max_x, static_cast<int>(hit.x));
    target.min_y = std::min(target.min_y, static_cast<int>(hit.y));
    target.max_y = std::max(target.max_y, static_cast<int>(hit.y));
  }

  emit_ready(sink, false);
}

void Clusterer::flush(const Sink& sink) {
  for (auto& c : open_) finish(std::move(c.hits));
  open_.clear();
  emit_ready(sink, true);
  last_toa_ps_ = INT64_MIN;
}

void Clusterer::finish(Cluster&& cluster) {
  // Canonical internal order; makes emission deterministic under any stable
  // reordering of equal-time input hits.
  std::sort(cluster.begin(), cluster.end(), [](const PixelHit& a, const PixelHit& b) {
    return std::tuple(a.toa_ps, a.y, a.x, a.tot) < std::tuple(b.toa_ps, b.y, b.x, b.tot);
  });
  done_.push_back(std::move(cluster));
}

void Clusterer::emit_ready(const Sink& sink, bool all) {
  if (done_.empty()) return;
  // A finished cluster may only be emitted once no open cluster can precede
  // it; future clusters start at or after the latest hit seen.
  int64_t barrier = all ? INT64_MAX : last_toa_ps_;
  if (!all) {
    for (const auto& c : open_) barrier = std::min(barrier, c.first_toa_ps);
  }
  std::sort(done_.begin(), done_.end(), [](const Cluster& a, const Cluster& b) {
    return std::tuple(a.front().toa_ps, a.front().y, a.front().x) <
           std::tuple(b.front().toa_ps, b.front().y, b.front().x);
  });
  size_t emitted = 0;
  for (auto& c : done_) {
    if (!all && c.front().toa_ps >= barrier) break;
    uint64_t sum_tot = 0;
    for (const auto& h : c) sum_tot += h.tot;
    if (sum_tot >= params_.min_cluster_tot) sink(std::move(c));
    ++emitted;
  }
  done_.erase(done_.begin(), done_.begin() + static_cast<ptrdiff_t>(emitted));
}

PhotonEvent centroid(const Cluster& cluster) {
  if (cluster.empty()) throw AnalysisError("centroid: empty cluster");
  double wx = 0.0, wy = 0.0;
  uint64_t wsum = 0;
  const PixelHit* anchor = &cluster.front();
  for (const auto& h : cluster) {
    wx += static_cast<double>(h.tot) * h.x;
    wy += static_cast<double>(h.tot) * h.y;
    wsum += h.tot;
    const bool better =
        h.tot > anchor->tot ||
        (h.tot == anchor->tot &&
         (h.toa_ps < anchor->toa_ps ||
          (h.toa_ps == anchor->toa_ps &&
           std::pair(h.x, h.y) < std::pair(anchor->x, anchor->y))));
    if (better) anchor = &h;
  }
  PhotonEvent e;
  e.cx = wx / static_cast<double>(wsum);
  e.cy = wy / static_cast<double>(wsum);
  e.t_ps = anchor->toa_ps;
  e.n_pixels = static_cast<uint32_t>(cluster.size());
  e.sum_tot = static_cast<uint32_t>(wsum);
  e.max_tot = anchor->tot;
  e.half = half_of_centroid(e.cx);
  return e;
}

void timewalk_correct(std::span<PhotonEvent> events, double coeff_ps) {
  if (coeff_ps == 0.0) return;
  for (auto& e : events) {
    e.t_ps -= std::llround(coeff_ps / static_cast<double>(e.max_tot));
  }
}

double calibrate_timewalk(std::span<const std::pair<uint32_t, double>> samples) {
  if (samples.size() < 10) {
    throw CalibrationError("calibrate_timewalk: need at least 10 samples, got " +
                           std::to_string(samples.size()));
  }
  std::set<uint32_t> distinct;
  double num = 0.0, den = 0.0;
  for (const auto& [tot, dt_ps] : samples) {
    distinct.insert(tot);
    const double inv = 1.0 / static_cast<double>(tot);
    num += dt_ps * inv;
    den += inv * inv;
  }
  if (distinct.size() < 2) {
    throw CalibrationError("calibrate_timewalk: all samples share one ToT value");
  }
  return num / den;
}

double calibrate_timewalk_from_pairs(std::span<const CoincidencePair> pairs) {
  double num = 0.0, den = 0.0;
  size_t used = 0;
  for (const auto& p : pairs) {
    const double x = 1.0 / static_cast<double>(p.a.max_tot) -
                     1.0 / static_cast<double>(p.b.max_tot);
    if (x == 0.0) continue;
    const double dt = static_cast<double>(p.a.t_ps - p.b.t_ps);
    num += x * dt;
    den += x * x;
    ++used;
  }
  if (used < 10 || den <= 0.0) {
    throw CalibrationError(
        "calibrate_timewalk_from_pairs: insufficient ToT spread in pair sample");
  }
  return num / den;
}

void Pairer::push(const PhotonEvent& event, const Sink& sink) {
  if (event.t_ps < last_t_ps_) {
    throw OrderingError("find_coincidences: input not sorted by t_ps");
  }
  last_t_ps_ = event.t_ps;
  ++stats_.events_in;
  expire(event.t_ps);

  // Oldest pending event gets first claim; all pending are within the window
  // after expiry.
  size_t match = pending_.size();
  bool same_half_near = false;
  for (size_t i = 0; i < pending_.size(); ++i) {
    if (pending_[i].half != event.half) {
      match = i;
      break;
    }
    same_half_near = true;
    if (!params_.cross_halves_only) {
      match = i;
      break;
    }
  }

  if (match < pending_.size()) {
    CoincidencePair pair;
    const PhotonEvent& partner = pending_[match];
    if (params_.cross_halves_only) {
      pair.a = partner.half == Half::Left ? partner : event;
      pair.b = partner.half == Half::Left ? event : partner;
    } else {
      pair.a = partner;  // earlier event first
      pair.b = event;
    }
    pair.dt_ps = std::abs(event.t_ps - partner.t_ps);
    pending_.erase(pending_.begin() + static_cast<ptrdiff_t>(match));
    ++stats_.pairs;
    sink(std::move(pair));
    return;
  }
  if (same_half_near) ++stats_.same_half_coincident_events;
  pending_.push_back(event);
}

void Pairer::flush(const Sink&) {
  pending_.clear();
  last_t_ps_ = INT64_MIN;
}

void Pairer::expire(int64_t now_ps) {
  size_t keep = 0;
  while (keep < pending_.size() &&
         now_ps - pending_[keep].t_ps > params_.coincidence_window_ps) {
    ++keep;
  }
  if (keep > 0) pending_.erase(pending_.begin(), pending_.begin() + static_cast<ptrdiff_t>(keep));
}

std::vector<Cluster> cluster_hits(std::span<const PixelHit> hits,
                                  const ClusterParams& params) {
  std::vector<Cluster> out;
  Clusterer clusterer(params);
  const auto sink = [&out](Cluster&& c) { out.push_back(std::move(c)); };
  for (const auto& h : hits) clusterer.push(h, sink);
  clusterer.flush(sink);
  return out;
}

std::vector<CoincidencePair> find_coincidences(std::span<const PhotonEvent> events,
                                               const PairingParams& params,
                                               PairingStats* stats) {
  std::vector<CoincidencePair> out;
  Pairer pairer(params);
  const auto sink = [&out](CoincidencePair&& p) { out.push_back(std::move(p)); };
  for (const auto& e : events) pairer.push(e, sink);
  pairer.flush(sink);
  if (stats) *stats = pairer.stats();
  return out;
}

namespace {

std::vector<PhotonEvent> reconstruct_events(std::span<const PixelHit> hits,
                                            const ClusterParams& cparams,
                                            uint64_t* n_clusters) {
  std::vector<PhotonEvent> events;
  Clusterer clusterer(cparams);
  const auto sink = [&events](Cluster&& c) { events.push_back(centroid(c)); };
  for (const auto& h : hits) clusterer.push(h, sink);
  clusterer.flush(sink);
  if (n_clusters) *n_clusters = events.size();
  // Cluster times come from the max-ToT pixel, so emission order (by first
  // hit) is not exactly time order.
  std::stable_sort(events.begin(), events.end(),
                   [](const PhotonEvent& a, const PhotonEvent& b) { return a.t_ps < b.t_ps; });
  return events;
}

}  // namespace

PipelineResult process_hits(std::span<const PixelHit> hits,
                            const ClusterParams& cparams,
                            const PairingParams& pparams, double timewalk_coeff_ps) {
  PipelineResult result;
  auto events = reconstruct_events(hits, cparams, &result.clusters);

  double coeff = timewalk_coeff_ps;
  if (coeff < 0.0) {  // self-calibrate from the uncorrected pair sample
    const auto pairs0 = find_coincidences(events, pparams, nullptr);
    try {
      coeff = calibrate_timewalk_from_pairs(pairs0);
    } catch (const CalibrationError&) {
      coeff = 0.0;
    }
  }
  if (coeff != 0.0) {
    timewalk_correct(events, coeff);
    std::stable_sort(events.begin(), events.end(),
                     [](const PhotonEvent& a, const PhotonEvent& b) { return a.t_ps < b.t_ps; });
  }
  result.timewalk_coeff_ps = coeff;
  result.pairs = find_coincidences(events, pparams, &result.pairing);
  return result;
}

PipelineResult process_hits_chunked(std::span<const PixelHit> hits,
                                    const ClusterParams& cparams,
                                    const PairingParams& pparams,
                                    double timewalk_coeff_ps, int64_t chunk_ps,
                                    int64_t overlap_ps) {
  if (timewalk_coeff_ps < 0.0) {
    throw AnalysisError(
        "process_hits_chunked: self-calibration is per-pass; pass a fixed "
        "timewalk coefficient");
  }
  PipelineResult result;
  result.timewalk_coeff_ps = timewalk_coeff_ps;
  if (hits.empty()) return result;
  const int64_t t0 = hits.front().toa_ps;
  const int64_t t_end = hits.back().toa_ps;
  const auto n_chunks =
      static_cast<int64_t>((t_end - t0) / chunk_ps) + 1;

  for (int64_t k = 0; k < n_chunks; ++k) {
    const int64_t own_lo = t0 + k * chunk_ps;
    const int64_t own_hi = own_lo + chunk_ps;
    const int64_t slice_lo = own_lo - overlap_ps;
    const int64_t slice_hi = own_hi + overlap_ps;
    const auto first = std::lower_bound(
        hits.begin(), hits.end(), slice_lo,
        [](const PixelHit& h, int64_t t) { return h.toa_ps < t; });
    const auto last = std::lower_bound(
        hits.begin(), hits.end(), slice_hi,
        [](const PixelHit& h, int64_t t) { return h.toa_ps < t; });
    if (first == last) continue;
    auto chunk = process_hits(std::span(&*first, static_cast<size_t>(last - first)),
                              cparams, pparams, timewalk_coeff_ps);
    for (auto& p : chunk.pairs) {
      const int64_t t_first = std::min(p.a.t_ps, p.b.t_ps);
      const bool owned = (t_first >= own_lo || k == 0) &&
                         (t_first < own_hi || k == n_chunks - 1);
      if (owned) result.pairs.push_back(std::move(p));
    }
    result.pairing.events_in += chunk.pairing.events_in;
    result.clusters += chunk.clusters;
  }
  result.pairing.pairs = result.pairs.size();
  return result;
}

void write_pairs_csv(std::ostream& out, std::span<const CoincidencePair> pairs) {
  out << "cx1,cy1,t1_ps,cx2,cy2,t2_ps,dt_ps\n";
  for (const auto& p : pairs) {
    out << p.a.cx << ',' << p.a.cy << ',' << p.a.t_ps << ',' << p.b.cx << ','
        << p.b.cy << ',' << p.b.t_ps << ',' << p.dt_ps << '\n';
  }
}

}  // namespace paircam
