#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "paircam/gaussfit.hpp"
#include "paircam/rng.hpp"

using namespace paircam;
using doctest::Approx;

namespace {

Projection render(double amplitude, double u0, double v0, double du, double dv,
                  double offset, int nx, int ny, int origin_x = 0, int origin_y = 0) {
  Projection p;
  p.nx = nx;
  p.ny = ny;
  p.origin_x = origin_x;
  p.origin_y = origin_y;
  p.grid.assign(static_cast<size_t>(nx) * ny, 0.0);
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const double u = origin_x + ix;
      const double v = origin_y + iy;
      const double ru = (u - u0) / du;
      const double rv = (v - v0) / dv;
      p.at(ix, iy) = amplitude * std::exp(-0.5 * (ru * ru + rv * rv)) + offset;
    }
  }
  return p;
}

}  // namespace

TEST_CASE("noiseless model values are recovered to 1e-6 relative") {
  const auto p = render(100.0, 31.4, 27.2, 2.0, 3.0, 0.0, 64, 64);
  const auto fit = fit_gaussian_2d(p);
  REQUIRE(fit.converged);
  CHECK(fit.width_u == Approx(2.0).epsilon(1e-6));
  CHECK(fit.width_v == Approx(3.0).epsilon(1e-6));
  CHECK(fit.u0 == Approx(31.4).epsilon(1e-6));
  CHECK(fit.v0 == Approx(27.2).epsilon(1e-6));
  CHECK(fit.amplitude == Approx(100.0).epsilon(1e-6));
  CHECK(std::abs(fit.offset) < 1e-4);
}

TEST_CASE("a constant offset is separated from the peak") {
  const auto p = render(50.0, 20.0, 22.0, 2.5, 1.5, 7.0, 48, 48);
  const auto fit = fit_gaussian_2d(p);
  REQUIRE(fit.converged);
  CHECK(fit.offset == Approx(7.0).epsilon(1e-6));
  CHECK(fit.width_u == Approx(2.5).epsilon(1e-6));
  CHECK(fit.amplitude == Approx(50.0).epsilon(1e-6));
}

TEST_CASE("fit respects grid origins (minus-projection style axes)") {
  const auto p = render(80.0, -10.0, -20.0, 4.0, 2.0, 0.0, 101, 101, -50, -50);
  const auto fit = fit_gaussian_2d(p);
  REQUIRE(fit.converged);
  CHECK(fit.u0 == Approx(-10.0).epsilon(1e-6));
  CHECK(fit.v0 == Approx(-20.0).epsilon(1e-6));
}

TEST_CASE("poisson-sampled widths agree with the moment oracle within 2%") {
  const double width_u = 3.0, width_v = 4.0;
  auto p = render(0.0, 32.0, 32.0, 1.0, 1.0, 0.0, 64, 64);
  Rng rng(123);
  // ~1e5 counts in total.
  const double amplitude = 100'000.0 / (2.0 * std::numbers::pi * width_u * width_v);
  double total = 0.0;
  for (int iy = 0; iy < 64; ++iy) {
    for (int ix = 0; ix < 64; ++ix) {
      const double ru = (ix - 32.0) / width_u;
      const double rv = (iy - 32.0) / width_v;
      p.at(ix, iy) =
          static_cast<double>(rng.poisson(amplitude * std::exp(-0.5 * (ru * ru + rv * rv))));
      total += p.at(ix, iy);
    }
  }
  REQUIRE(total > 90'000);

  // Moment oracle on the same sample (background-free by construction).
  double wsum = 0.0, mu = 0.0;
  for (int iy = 0; iy < 64; ++iy) {
    for (int ix = 0; ix < 64; ++ix) {
      wsum += p.at(ix, iy);
      mu += p.at(ix, iy) * ix;
    }
  }
  mu /= wsum;
  double var = 0.0;
  for (int iy = 0; iy < 64; ++iy) {
    for (int ix = 0; ix < 64; ++ix) {
      var += p.at(ix, iy) * (ix - mu) * (ix - mu);
    }
  }
  const double oracle_width = std::sqrt(var / wsum);

  const auto fit = fit_gaussian_2d(p);
  REQUIRE(fit.converged);
  CHECK(fit.width_u == Approx(oracle_width).epsilon(0.02));
  CHECK(fit.width_u == Approx(width_u).epsilon(0.03));
  CHECK(fit.width_v == Approx(width_v).epsilon(0.03));
}

TEST_CASE("an all-zero grid is an error") {
  Projection p;
  p.nx = p.ny = 8;
  p.grid.assign(64, 0.0);
  CHECK_THROWS_AS(fit_gaussian_2d(p), AnalysisError);
  CHECK_THROWS_AS(fit_gaussian_1d(p.grid), AnalysisError);
}

TEST_CASE("sparse grids degrade to moment estimates, flagged unconverged") {
  Projection p;
  p.nx = p.ny = 32;
  p.grid.assign(32 * 32, 0.0);
  p.at(10, 10) = 4.0;
  p.at(11, 10) = 8.0;
  p.at(12, 10) = 4.0;
  const auto fit = fit_gaussian_2d(p);
  CHECK_FALSE(fit.converged);
  CHECK(fit.u0 == Approx(11.0).epsilon(0.01));
  CHECK(fit.width_u > 0.0);
}

TEST_CASE("cropped fits around the peak match full-grid fits") {
  const auto p = render(60.0, 200.0, 210.0, 2.0, 2.5, 0.0, 511, 511, -255, -255);
  const auto full = fit_gaussian_2d(p);
  const auto cropped = fit_gaussian_2d(p, {.crop_radius = 30});
  REQUIRE(full.converged);
  REQUIRE(cropped.converged);
  CHECK(cropped.width_u == Approx(full.width_u).epsilon(1e-6));
  CHECK(cropped.u0 == Approx(full.u0).epsilon(1e-6));
  CHECK(cropped.n_cells < full.n_cells);
}

TEST_CASE("1d fits recover sub-pixel widths from point samples") {
  std::vector<double> values(41, 0.0);
  for (int i = 0; i < 41; ++i) {
    const double r = (i - 20.37) / 0.62;
    values[static_cast<size_t>(i)] = 55.0 * std::exp(-0.5 * r * r) + 2.0;
  }
  const auto fit = fit_gaussian_1d(values);
  REQUIRE(fit.converged);
  CHECK(fit.width == Approx(0.62).epsilon(1e-5));
  CHECK(fit.u0 == Approx(20.37).epsilon(1e-5));
  CHECK(fit.offset == Approx(2.0).epsilon(1e-4));
}

TEST_CASE("1d fit honors the origin argument") {
  std::vector<double> values(61, 0.0);
  for (int i = 0; i < 61; ++i) {
    const double r = (i - 255.0 - 25.0) / 3.0;  // peak at coordinate -230
    values[static_cast<size_t>(i)] = 20.0 * std::exp(-0.5 * r * r);
  }
  const auto fit = fit_gaussian_1d(values, -255.0);
  REQUIRE(fit.converged);
  CHECK(fit.u0 == Approx(-230.0).epsilon(1e-6));
}
