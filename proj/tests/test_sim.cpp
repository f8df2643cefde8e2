#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "oracles.hpp"
#include "paircam/sim.hpp"

using namespace paircam;
using doctest::Approx;

namespace {

SourceParams pure_source(double sigma_sum, double sigma_diff) {
  SourceParams p;
  p.sigma_sum_m = sigma_sum;
  p.sigma_diff_m = sigma_diff;
  std::tie(p.kappa_sum_inv_m, p.kappa_diff_inv_m) =
      pure_state_widths(sigma_sum, sigma_diff);
  return p;
}

DetectorParams quiet_detector() {
  DetectorParams d;
  d.quantum_efficiency = 1.0;
  d.dark_rate_hz_per_px = 0.0;
  d.time_jitter_ps = 0.0;
  d.timewalk_coeff_ps = 0.0;
  return d;
}

}  // namespace

TEST_CASE("sample_pairs with n = 0 is empty") {
  CHECK(sample_pairs(pure_source(1e-3, 1e-5), Basis::NearField, 0, 1).empty());
}

TEST_CASE("sample_pairs reproduces the sum/difference widths within 1%") {
  const auto source = pure_source(1e-3, 1e-5);
  const auto pairs = sample_pairs(source, Basis::NearField, 100'000, 42);
  std::vector<double> sum, diff;
  sum.reserve(pairs.size());
  diff.reserve(pairs.size());
  for (const auto& p : pairs) {
    sum.push_back(p.u1 + p.u2);
    diff.push_back(p.u1 - p.u2);
  }
  CHECK(oracles::sample_moments(sum).stddev == Approx(1e-3).epsilon(0.01));
  CHECK(oracles::sample_moments(diff).stddev == Approx(1e-5).epsilon(0.01));

  // Far field uses the momentum widths.
  const auto ff = sample_pairs(source, Basis::FarField, 100'000, 43);
  std::vector<double> ksum;
  for (const auto& p : ff) ksum.push_back(p.v1 + p.v2);
  CHECK(oracles::sample_moments(ksum).stddev ==
        Approx(source.kappa_sum_inv_m).epsilon(0.01));
}

TEST_CASE("conditional width matches the covariance-algebra oracle") {
  const auto source = pure_source(1e-3, 1e-5);
  const auto pairs = sample_pairs(source, Basis::NearField, 400'000, 7);

  // Oracle: for a jointly Gaussian pair, Var(x1|x2) = Var(x1) - Cov^2/Var(x2),
  // which equals the residual variance of the linear regression of u1 on u2.
  double m1 = 0, m2 = 0;
  for (const auto& p : pairs) {
    m1 += p.u1;
    m2 += p.u2;
  }
  m1 /= static_cast<double>(pairs.size());
  m2 /= static_cast<double>(pairs.size());
  double v1 = 0, v2 = 0, cov = 0;
  for (const auto& p : pairs) {
    v1 += (p.u1 - m1) * (p.u1 - m1);
    v2 += (p.u2 - m2) * (p.u2 - m2);
    cov += (p.u1 - m1) * (p.u2 - m2);
  }
  v1 /= static_cast<double>(pairs.size());
  v2 /= static_cast<double>(pairs.size());
  cov /= static_cast<double>(pairs.size());
  const double oracle_cond = std::sqrt(v1 - cov * cov / v2);

  const double ss = source.sigma_sum_m, sd = source.sigma_diff_m;
  const double formula = ss * sd / std::sqrt(ss * ss + sd * sd);
  CHECK(oracle_cond == Approx(formula).epsilon(0.01));

  // Binned check: residual spread of u1 around the per-bin mean, pooled over
  // narrow u2 bins (bin width small against the conditional width).
  const double bin_w = 0.5 * formula;
  std::map<int64_t, std::vector<double>> bins;
  for (const auto& p : pairs) {
    bins[static_cast<int64_t>(std::floor(p.u2 / bin_w))].push_back(p.u1);
  }
  double pooled = 0.0;
  size_t n_pooled = 0;
  for (const auto& [bin, xs] : bins) {
    if (xs.size() < 50) continue;
    const auto m = oracles::sample_moments(xs);
    pooled += m.stddev * m.stddev * static_cast<double>(xs.size());
    n_pooled += xs.size();
  }
  REQUIRE(n_pooled > 100'000);
  CHECK(std::sqrt(pooled / static_cast<double>(n_pooled)) ==
        Approx(formula).epsilon(0.05));
}

TEST_CASE("pure_state_widths swaps roles under sum/diff exchange") {
  const auto [ks, kd] = pure_state_widths(1e-3, 1e-5);
  const auto [ks2, kd2] = pure_state_widths(1e-5, 1e-3);
  CHECK(ks == Approx(kd2));
  CHECK(kd == Approx(ks2));
}

TEST_CASE("pure_state_widths of a round Gaussian is round") {
  const auto [ks, kd] = pure_state_widths(2e-4, 2e-4);
  CHECK(ks == Approx(kd));
}

TEST_CASE("pure_state_widths agrees with a discrete Fourier transform oracle") {
  // Moderate-ratio grid checks the coordinate pairing (sum <-> sum).
  {
    const auto widths = oracles::momentum_widths_by_fft(8.0, 1.0, 512, 0.25);
    const auto [ks, kd] = pure_state_widths(8.0, 1.0);
    CHECK(widths.sum_width == Approx(ks).epsilon(0.02));
    CHECK(widths.diff_width == Approx(kd).epsilon(0.02));
  }
  // The physical-scale case from the sampling tests.
  {
    const auto widths = oracles::momentum_widths_by_fft(1e-3, 1e-5, 2048, 5e-6);
    const auto [ks, kd] = pure_state_widths(1e-3, 1e-5);
    CHECK(widths.sum_width == Approx(ks).epsilon(0.02));
    CHECK(widths.diff_width == Approx(kd).epsilon(0.02));
  }
}

TEST_CASE("one pair at the sensor center yields exactly two truth-linked clusters") {
  const std::vector<PairSample> pairs{{0.0, 0.0, 0.0, 0.0}};
  const std::vector<int64_t> times{500'000'000};
  OpticsConfig optics;  // near field
  const auto out =
      detector_response(pairs, times, optics, quiet_detector(), 1.0, 11);
  REQUIRE(out.truth.clusters.size() == 2);
  CHECK(out.truth.clusters[0].pair_id == 0);
  CHECK(out.truth.clusters[1].pair_id == 0);
  CHECK(out.truth.clusters[0].photon_idx + out.truth.clusters[1].photon_idx == 1);
  CHECK(out.hits.size() >= 2);
  CHECK(std::is_sorted(out.hits.begin(), out.hits.end(),
                       [](const PixelHit& a, const PixelHit& b) {
                         return a.toa_ps < b.toa_ps;
                       }));
}

TEST_CASE("quantum_efficiency = 0 leaves only dark hits") {
  auto det = quiet_detector();
  det.quantum_efficiency = 0.0;
  det.dark_rate_hz_per_px = 5.0;
  const auto pairs = sample_pairs(pure_source(1e-3, 1e-5), Basis::NearField, 500, 3);
  const std::vector<int64_t> times(500, 1000);
  OpticsConfig optics;
  const auto out = detector_response(pairs, times, optics, det, 0.01, 5);
  CHECK(!out.truth.clusters.empty());
  for (const auto& c : out.truth.clusters) {
    CHECK(c.pair_id == -1);
    CHECK(c.photon_idx == -1);
  }
  CHECK(out.hits.size() == out.truth.clusters.size());
}

TEST_CASE("identical seeds give bit-identical hit streams") {
  const auto source = pure_source(2.6e-4, 1.2e-5);
  DetectorParams det;  // defaults: jitter, timewalk, clusters all on
  det.dark_rate_hz_per_px = 20.0;
  OpticsConfig optics;
  auto a = simulate_hits(source, det, optics, 0.02, 99);
  auto b = simulate_hits(source, det, optics, 0.02, 99);
  CHECK(a.hits == b.hits);
  CHECK(a.truth.clusters.size() == b.truth.clusters.size());
  auto c = simulate_hits(source, det, optics, 0.02, 100);
  CHECK(a.hits != c.hits);
}

TEST_CASE("pair emission times ascend across chunk boundaries") {
  const auto source = pure_source(2.6e-4, 1.2e-5);
  auto det = quiet_detector();
  OpticsConfig optics;
  SourceParams s = source;
  s.pair_rate_hz = 20'000;
  const auto out = simulate_hits(s, det, optics, 2.5, 17, 1.0);
  CHECK(out.truth.pairs.size() > 40'000);
  CHECK(std::is_sorted(out.truth.pairs.begin(), out.truth.pairs.end(),
                       [](const TruthPair& a, const TruthPair& b) {
                         return a.t_ps < b.t_ps;
                       }));
}

TEST_CASE("lowering quantum efficiency never increases the cluster count") {
  const auto source = pure_source(2.6e-4, 1.2e-5);
  OpticsConfig optics;
  size_t previous = SIZE_MAX;
  for (double qe : {1.0, 0.7, 0.4, 0.1}) {
    auto det = quiet_detector();
    det.dead_time_ps = 0.0;  // isolates the thinning construction
    det.quantum_efficiency = qe;
    const auto out = simulate_hits(source, det, optics, 0.02, 1234);
    CHECK(out.truth.clusters.size() <= previous);
    previous = out.truth.clusters.size();
  }
}

TEST_CASE("dead time suppresses same-pixel hits closer than the dead window") {
  auto det = quiet_detector();
  det.quantum_efficiency = 0.0;
  det.dark_rate_hz_per_px = 3000.0;  // force same-pixel revisits
  det.dead_time_ps = 5e8;
  det.cluster_psf_sigma_px = 0.0;
  const auto out = simulate_hits(pure_source(1e-3, 1e-5), det, OpticsConfig{}, 0.05, 21);
  CHECK(out.truth.hits_dead_time_dropped > 0);
  std::map<std::pair<uint16_t, uint16_t>, int64_t> last;
  for (const auto& h : out.hits) {
    const auto key = std::pair(h.x, h.y);
    auto it = last.find(key);
    if (it != last.end()) {
      CHECK(static_cast<double>(h.toa_ps - it->second) >= det.dead_time_ps);
    }
    last[key] = h.toa_ps;
  }
}

TEST_CASE("truth stays consistent with the emitted pairs") {
  const auto source = pure_source(2.6e-4, 1.2e-5);
  DetectorParams det;
  det.dark_rate_hz_per_px = 30.0;
  const auto out = simulate_hits(source, det, OpticsConfig{}, 0.05, 55);
  uint64_t linked = 0;
  for (const auto& c : out.truth.clusters) {
    if (c.pair_id < 0) continue;
    ++linked;
    REQUIRE(static_cast<size_t>(c.pair_id) < out.truth.pairs.size());
    CHECK((c.photon_idx == 0 || c.photon_idx == 1));
  }
  CHECK(linked <= 2 * out.truth.emitted_pairs);
}

TEST_CASE("theory report: separable source certifies nothing") {
  auto source = pure_source(1e-3, 1e-5);
  source.separable = true;
  const auto report = theory_report(source);
  CHECK(report.x.epr_product >= 0.5);
  CHECK_FALSE(report.x.epr_violated);
  CHECK(report.x.eof <= 0.0);
  CHECK_FALSE(report.x.entanglement_certified);
}

TEST_CASE("theory report reproduces the published-width arithmetic") {
  // Source whose minus/plus widths are the published 1.17e-5 m and 3.82e3 1/m.
  const auto source = pure_source(1.0 / 3.82e3, 1.17e-5);
  const auto report = theory_report(source);
  CHECK(report.x.delta_minus_pos_m == Approx(1.17e-5));
  CHECK(report.x.delta_plus_mom_inv_m == Approx(3.82e3));
  // Independent route: log(x)/log(2) instead of log2.
  const double expected =
      -std::log(std::exp(1.0) * 1.17e-5 * 3.82e3) / std::log(2.0);
  CHECK(report.x.eof == Approx(expected).epsilon(1e-12));
  CHECK(report.x.eof == Approx(3.04).epsilon(0.002));
  CHECK(report.x.epr_violated);
}

TEST_CASE("doubling sigma_sum and halving sigma_diff raises the bound by 2") {
  const auto a = theory_report(pure_source(2.6178e-4, 1.17e-5));
  const auto b = theory_report(pure_source(2 * 2.6178e-4, 0.5 * 1.17e-5));
  CHECK(b.x.eof - a.x.eof == Approx(2.0).epsilon(1e-12));
}

TEST_CASE("truth csv round trips") {
  const auto source = pure_source(2.6e-4, 1.2e-5);
  DetectorParams det;
  det.dark_rate_hz_per_px = 10.0;
  const auto out = simulate_hits(source, det, OpticsConfig{}, 0.01, 77);
  REQUIRE(!out.truth.pairs.empty());
  REQUIRE(!out.truth.clusters.empty());

  std::stringstream ps;
  write_truth_pairs_csv(ps, out.truth.pairs);
  const auto pairs_back = read_truth_pairs_csv(ps);
  REQUIRE(pairs_back.size() == out.truth.pairs.size());
  CHECK(pairs_back[0].u1 == out.truth.pairs[0].u1);
  CHECK(pairs_back.back().u2 == out.truth.pairs.back().u2);

  std::stringstream cs;
  write_truth_clusters_csv(cs, out.truth.clusters);
  const auto clusters_back = read_truth_clusters_csv(cs);
  REQUIRE(clusters_back.size() == out.truth.clusters.size());
  CHECK(clusters_back[0].det_t_ps == out.truth.clusters[0].det_t_ps);
  CHECK(clusters_back.back().det_x_px == out.truth.clusters.back().det_x_px);
}
