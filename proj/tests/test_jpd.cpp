#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "paircam/gaussfit.hpp"
#include "paircam/jpd.hpp"
#include "paircam/rng.hpp"
#include "paircam/sim.hpp"

using namespace paircam;
using doctest::Approx;

namespace {

PhotonEvent event_at(double cx, double cy, int64_t t_ps = 0) {
  PhotonEvent e;
  e.cx = cx;
  e.cy = cy;
  e.t_ps = t_ps;
  e.n_pixels = 1;
  e.sum_tot = 10;
  e.max_tot = 10;
  e.half = half_of_centroid(cx);
  return e;
}

CoincidencePair pair_at(double cx1, double cy1, double cx2, double cy2) {
  CoincidencePair p;
  p.a = event_at(cx1, cy1);
  p.b = event_at(cx2, cy2);
  p.dt_ps = 0;
  return p;
}

Jpd random_jpd(uint64_t seed, size_t n) {
  Rng rng(seed);
  Jpd j(Basis::NearField, OpticsConfig{}, 1.0);
  for (size_t i = 0; i < n; ++i) {
    j.add_bin(static_cast<int>(rng.uniform_below(40)),
              static_cast<int>(rng.uniform_below(40)),
              static_cast<int>(128 + rng.uniform_below(40)),
              static_cast<int>(rng.uniform_below(40)),
              1 + rng.uniform_below(5));
  }
  return j;
}

/// Left photon around (64, 128), right photon strongly correlated with it.
Jpd synthetic_correlated_jpd(uint64_t seed, size_t n_pairs, double marginal_px,
                             double cond_px) {
  Rng rng(seed);
  Jpd j(Basis::NearField, OpticsConfig{}, 1.0);
  for (size_t i = 0; i < n_pairs; ++i) {
    const double x1 = rng.normal(64.0, marginal_px);
    const double y1 = rng.normal(128.0, marginal_px);
    const double x2 = 128.0 + x1 + rng.normal(0.0, cond_px) * std::numbers::sqrt2;
    const double y2 = y1 + rng.normal(0.0, cond_px) * std::numbers::sqrt2;
    CoincidencePair p = pair_at(x1, y1, x2, y2);
    if (p.a.half != Half::Left || p.b.half != Half::Right) continue;
    j.add(p);
  }
  return j;
}

}  // namespace

TEST_CASE("empty stream accumulates to an empty distribution") {
  Jpd j(Basis::NearField, OpticsConfig{}, 1.0);
  CHECK(j.total_pairs() == 0);
  CHECK(j.occupied_bins() == 0);
}

TEST_CASE("accumulate rounds centroids half away from zero, left event first") {
  Jpd j(Basis::NearField, OpticsConfig{}, 1.0);
  j.add(pair_at(10.2, 20.0, 200.7, 30.0));
  CHECK(j.total_pairs() == 1);
  REQUIRE(j.occupied_bins() == 1);
  CHECK(j.counts().count(Jpd::pack_key(10, 20, 201, 30)) == 1);

  // Right event presented first still lands left-first.
  Jpd j2(Basis::NearField, OpticsConfig{}, 1.0);
  CoincidencePair p = pair_at(200.7, 30.0, 10.2, 20.0);
  j2.add(p);
  CHECK(j2.counts().count(Jpd::pack_key(10, 20, 201, 30)) == 1);

  // Exact halves round away from zero.
  Jpd j3(Basis::NearField, OpticsConfig{}, 1.0);
  j3.add(pair_at(10.5, 20.5, 200.5, 30.5));
  CHECK(j3.counts().count(Jpd::pack_key(11, 21, 201, 31)) == 1);
}

TEST_CASE("same-half pairs are skipped and counted") {
  Jpd j(Basis::NearField, OpticsConfig{}, 1.0);
  j.add(pair_at(10, 20, 30, 40));
  CHECK(j.total_pairs() == 0);
  CHECK(j.skipped_same_half() == 1);
}

TEST_CASE("merge identity, commutativity, and chunked equivalence") {
  const auto a = random_jpd(1, 500);
  const auto b = random_jpd(2, 700);

  Jpd empty(Basis::NearField, OpticsConfig{}, 1.0);
  Jpd ja = a;
  ja.merge(empty);
  CHECK(ja == a);

  Jpd ab = a;
  ab.merge(b);
  Jpd ba = b;
  ba.merge(a);
  CHECK(ab == ba);

  const auto c = random_jpd(3, 300);
  Jpd ab_c = ab;
  ab_c.merge(c);
  Jpd bc = b;
  bc.merge(c);
  Jpd a_bc = a;
  a_bc.merge(bc);
  CHECK(ab_c == a_bc);
}

TEST_CASE("merge requires matching metadata") {
  Jpd nf(Basis::NearField, OpticsConfig{}, 1.0);
  OpticsConfig other;
  other.basis = Basis::FarField;
  Jpd ff(Basis::FarField, other, 1.0);
  CHECK_THROWS_AS(nf.merge(ff), AnalysisError);
}

TEST_CASE("chunked accumulation merged equals single-pass accumulation") {
  Rng rng(9);
  std::vector<CoincidencePair> pairs;
  for (int i = 0; i < 2000; ++i) {
    pairs.push_back(pair_at(rng.uniform(0, 127), rng.uniform(0, 255),
                            rng.uniform(128, 255), rng.uniform(0, 255)));
  }
  Jpd single(Basis::NearField, OpticsConfig{}, 1.0);
  for (const auto& p : pairs) single.add(p);

  Jpd part1(Basis::NearField, OpticsConfig{}, 1.0);
  Jpd part2(Basis::NearField, OpticsConfig{}, 1.0);
  for (size_t i = 0; i < pairs.size(); ++i) {
    (i % 2 ? part1 : part2).add(pairs[i]);
  }
  part1.merge(part2);
  CHECK(part1 == single);
}

TEST_CASE("marginal of a single-bin distribution has one cell") {
  Jpd j(Basis::NearField, OpticsConfig{}, 1.0);
  j.add_bin(10, 20, 201, 30, 7);
  const auto right = j.marginal(Half::Right);
  CHECK(right.at(201, 30) == 7);
  CHECK(right.total() == 7);
  const auto left = j.marginal(Half::Left);
  CHECK(left.at(10, 20) == 7);
}

TEST_CASE("projections conserve the pair total") {
  const auto j = random_jpd(4, 2000);
  const double total = static_cast<double>(j.total_pairs());
  CHECK(j.marginal(Half::Left).total() == Approx(total));
  CHECK(j.marginal(Half::Right).total() == Approx(total));
  CHECK(j.minus_projection().total() == Approx(total));
  CHECK(j.sum_projection().total() == Approx(total));
}

TEST_CASE("conditional is counts over the reference marginal") {
  Jpd j(Basis::NearField, OpticsConfig{}, 1.0);
  j.add_bin(10, 20, 201, 30, 5);
  const auto cond = j.conditional(10, 20);
  CHECK(cond.at(201, 30) == Approx(1.0));
  CHECK(cond.total() == Approx(1.0));
  CHECK_THROWS_AS(j.conditional(99, 99), AnalysisError);
}

TEST_CASE("minus and sum projections of a single pair") {
  Jpd j(Basis::NearField, OpticsConfig{}, 1.0);
  j.add_bin(10, 20, 12, 25, 1);
  const auto minus = j.minus_projection();
  CHECK(minus.at(-2 - minus.origin_x, -5 - minus.origin_y) == 1);
  CHECK(minus.nx == 511);
  const auto sum = j.sum_projection();
  CHECK(sum.at(22, 45) == 1);
  CHECK(sum.nx == 511);
}

TEST_CASE("swapping halves reflects the minus grid and fixes the sum grid") {
  const auto j = random_jpd(6, 1500);
  Jpd swapped(j.basis(), j.optics(), j.acquisition_s());
  for (const auto& [key, count] : j.counts()) {
    int px1, py1, px2, py2;
    Jpd::unpack_key(key, px1, py1, px2, py2);
    swapped.add_bin(px2, py2, px1, py1, count);
  }
  const auto minus = j.minus_projection();
  const auto minus_swapped = swapped.minus_projection();
  const auto sum = j.sum_projection();
  const auto sum_swapped = swapped.sum_projection();
  for (int dy = -30; dy <= 30; ++dy) {
    for (int dx = -30; dx <= 30; ++dx) {
      CHECK(minus.at(dx - minus.origin_x, dy - minus.origin_y) ==
            minus_swapped.at(-dx - minus.origin_x, -dy - minus.origin_y));
    }
  }
  CHECK(sum.grid == sum_swapped.grid);
}

TEST_CASE("storage stays sparse") {
  const auto j = random_jpd(8, 5000);
  CHECK(j.occupied_bins() <= 5000);
}

TEST_CASE("save and load round trip, with a consistency check on totals") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "paircam_jpd_test";
  fs::create_directories(dir);
  const auto path = (dir / "jpd.csv").string();

  auto j = random_jpd(10, 800);
  j.save(path);
  const auto back = Jpd::load(path);
  CHECK(back == j);
  CHECK(back.acquisition_s() == j.acquisition_s());

  // Tampered count total is caught.
  {
    std::ofstream meta(path + ".meta", std::ios::app);
  }
  std::ifstream meta_in(path + ".meta");
  std::string meta((std::istreambuf_iterator<char>(meta_in)),
                   std::istreambuf_iterator<char>());
  meta_in.close();
  const auto pos = meta.find("total_pairs = ");
  meta.replace(pos, meta.find('\n', pos) - pos, "total_pairs = 1");
  std::ofstream(path + ".meta") << meta;
  CHECK_THROWS_AS(Jpd::load(path), CodecError);
  fs::remove_all(dir);
}

TEST_CASE("conditional width of a correlated distribution matches its generator") {
  const double cond_px = 2.0;
  const auto j = synthetic_correlated_jpd(40, 200'000, 20.0, cond_px);
  // Pick a bright reference column and fit the x-conditional.
  const auto matrix = j.axis_matrix(0);
  const std::span<const double> row(matrix.data() + 64 * kSensorSize, kSensorSize);
  const auto fit = fit_gaussian_1d(row, 0.0);
  REQUIRE(fit.converged);
  // x2 | x1 spread: sqrt(2) * cond_px from the generator, plus two rounding
  // variances of 1/12 each.
  const double expected = std::sqrt(2.0 * cond_px * cond_px + 2.0 / 12.0);
  CHECK(fit.width == Approx(expected).epsilon(0.10));
}

TEST_CASE("minus projection width matches its generator") {
  const double cond_px = 2.0;
  const auto j = synthetic_correlated_jpd(41, 200'000, 20.0, cond_px);
  const auto fit = fit_gaussian_2d(j.minus_projection(), {.crop_radius = 40});
  REQUIRE(fit.converged);
  const double expected = std::sqrt(2.0 * cond_px * cond_px + 2.0 / 12.0);
  CHECK(fit.width_u == Approx(expected).epsilon(0.05));
  CHECK(fit.width_v == Approx(expected).epsilon(0.05));
}

TEST_CASE("far-field marginal is a blob centered as configured") {
  SourceParams source;
  source.sigma_sum_m = 2.6178e-4;
  source.sigma_diff_m = 1.17e-5;
  std::tie(source.kappa_sum_inv_m, source.kappa_diff_inv_m) =
      pure_state_widths(source.sigma_sum_m, source.sigma_diff_m);
  source.pair_rate_hz = 400'000;
  DetectorParams det;
  det.quantum_efficiency = 1.0;
  det.dark_rate_hz_per_px = 0.0;
  det.time_jitter_ps = 0.0;
  det.timewalk_coeff_ps = 0.0;
  OpticsConfig optics;
  optics.basis = Basis::FarField;
  optics.f_eff_m = 0.25;
  const auto out = simulate_hits(source, det, optics, 0.1, 2025);

  Jpd j(Basis::FarField, optics, 0.1);
  // Direct truth accumulation; marginal shape is a source property.
  const double scale = pixel_scale(optics);
  for (const auto& p : out.truth.pairs) {
    CoincidencePair cp = pair_at(det.center_left_x_px + p.u1 / scale,
                                 det.center_left_y_px + p.v1 / scale,
                                 det.center_right_x_px + p.u2 / scale,
                                 det.center_right_y_px + p.v2 / scale);
    if (cp.a.half != Half::Left || cp.b.half != Half::Right) continue;
    j.add(cp);
  }
  const auto fit = fit_gaussian_2d(j.marginal(Half::Right), {.crop_radius = 0});
  REQUIRE(fit.converged);
  CHECK(std::abs(fit.u0 - det.center_right_x_px) < 2.0);
  CHECK(std::abs(fit.v0 - det.center_right_y_px) < 2.0);
  const double expected_px =
      0.5 * std::hypot(source.kappa_sum_inv_m, source.kappa_diff_inv_m) / scale;
  CHECK(fit.width_u == Approx(expected_px).epsilon(0.10));
}
