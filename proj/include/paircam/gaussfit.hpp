#pragma once

#include <cstdint>
#include <span>

#include "paircam/jpd.hpp"

namespace paircam {

/// Result of fitting A*exp(-(u-u0)^2/(2*du^2) - (v-v0)^2/(2*dv^2)) + B.
/// Widths are Gaussian standard deviations in grid coordinate units.
struct GaussianFit {
  double amplitude = 0.0;
  double u0 = 0.0;
  double v0 = 0.0;
  double width_u = 0.0;
  double width_v = 0.0;
  double offset = 0.0;
  double residual_rms = 0.0;
  bool converged = false;
  int iterations = 0;
  size_t n_cells = 0;
};

struct Gaussian1dFit {
  double amplitude = 0.0;
  double u0 = 0.0;
  double width = 0.0;
  double offset = 0.0;
  double residual_rms = 0.0;
  bool converged = false;
  int iterations = 0;
};

struct FitOptions {
  int max_iterations = 200;
  /// When > 0, fit only a window of this half-width around the peak cell.
  /// Keeps large Minus/Sum grids cheap; 0 fits the full grid.
  int crop_radius = 0;
};

/// Damped (Levenberg-Marquardt) least squares, initialized from weighted
/// moments. Fewer than 25 nonzero cells, or running out of iterations,
/// degrades to the moment estimates with converged = false. All-zero input
/// throws AnalysisError.
GaussianFit fit_gaussian_2d(const Projection& p, const FitOptions& opts = {});

/// 1D variant over values[i] at coordinate origin + i.
Gaussian1dFit fit_gaussian_1d(std::span<const double> values, double origin = 0.0,
                              const FitOptions& opts = {});

}  // namespace paircam
