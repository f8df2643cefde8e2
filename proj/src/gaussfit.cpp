#include "paircam/gaussfit.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace paircam {

namespace {

constexpr double kMinWidth = 1e-3;  // grid units; keeps 1/width^3 finite

struct Cell {
  double u;
  double v;
  double value;
};

/// Weighted-moment starting point shared by the solver and the fallback.
template <int N>
Eigen::Matrix<double, N, 1> moment_estimate(const std::vector<Cell>& cells) {
  double min_v = std::numeric_limits<double>::max();
  double max_v = -std::numeric_limits<double>::max();
  for (const auto& c : cells) {
    min_v = std::min(min_v, c.value);
    max_v = std::max(max_v, c.value);
  }
  const double offset = min_v;
  double wsum = 0.0, usum = 0.0, vsum = 0.0;
  for (const auto& c : cells) {
    const double w = std::max(c.value - offset, 0.0);
    wsum += w;
    usum += w * c.u;
    vsum += w * c.v;
  }
  double u0 = 0.0, v0 = 0.0;
  if (wsum > 0.0) {
    u0 = usum / wsum;
    v0 = vsum / wsum;
  }
  double uu = 0.0, vv = 0.0;
  for (const auto& c : cells) {
    const double w = std::max(c.value - offset, 0.0);
    uu += w * (c.u - u0) * (c.u - u0);
    vv += w * (c.v - v0) * (c.v - v0);
  }
  const double du = wsum > 0.0 ? std::max(std::sqrt(uu / wsum), kMinWidth) : 1.0;
  const double dv = wsum > 0.0 ? std::max(std::sqrt(vv / wsum), kMinWidth) : 1.0;

  Eigen::Matrix<double, N, 1> p;
  if constexpr (N == 6) {
    p << max_v - offset, u0, v0, du, dv, offset;
  } else {
    p << max_v - offset, u0, du, offset;
  }
  return p;
}

double model2d(const Eigen::Matrix<double, 6, 1>& p, double u, double v) {
  const double ru = (u - p[1]) / p[3];
  const double rv = (v - p[2]) / p[4];
  return p[0] * std::exp(-0.5 * (ru * ru + rv * rv)) + p[5];
}

double model1d(const Eigen::Matrix<double, 4, 1>& p, double u) {
  const double ru = (u - p[1]) / p[2];
  return p[0] * std::exp(-0.5 * ru * ru) + p[3];
}

template <int N, typename Model, typename Jacobian>
struct LmResult {
  Eigen::Matrix<double, N, 1> params;
  double chi2 = 0.0;
  bool converged = false;
  int iterations = 0;
};

template <int N, typename Residuals>
auto levenberg_marquardt(Eigen::Matrix<double, N, 1> p, const Residuals& fill,
                         int max_iterations) {
  using Vec = Eigen::Matrix<double, N, 1>;
  using Mat = Eigen::Matrix<double, N, N>;

  Mat jtj;
  Vec jtr;
  double chi2 = fill(p, &jtj, &jtr);
  double lambda = 1e-3;
  bool converged = false;
  int iter = 0;
  for (; iter < max_iterations; ++iter) {
    Mat damped = jtj;
    for (int i = 0; i < N; ++i) damped(i, i) *= 1.0 + lambda;
    const Vec step = damped.ldlt().solve(jtr);
    if (!step.allFinite()) {
      lambda *= 10.0;
      if (lambda > 1e12) break;
      continue;
    }
    Vec trial = p + step;
    // Widths live in the tail of the vector right before the offset.
    for (int i = (N == 6 ? 3 : 2); i < N - 1; ++i) {
      if (std::abs(trial[i]) < kMinWidth) trial[i] = trial[i] < 0 ? -kMinWidth : kMinWidth;
    }
    Mat jtj_trial;
    Vec jtr_trial;
    const double chi2_trial = fill(trial, &jtj_trial, &jtr_trial);
    if (chi2_trial <= chi2) {
      double max_rel_step = 0.0;
      for (int i = 0; i < N; ++i) {
        max_rel_step = std::max(max_rel_step,
                                std::abs(step[i]) / (std::abs(p[i]) + 1e-12));
      }
      const double rel_improvement = (chi2 - chi2_trial) / std::max(chi2, 1e-300);
      p = trial;
      chi2 = chi2_trial;
      jtj = jtj_trial;
      jtr = jtr_trial;
      lambda = std::max(lambda * 0.3, 1e-12);
      if (max_rel_step < 1e-10 || rel_improvement < 1e-14) {
        converged = true;
        ++iter;
        break;
      }
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
  }
  struct Out {
    Eigen::Matrix<double, N, 1> params;
    double chi2;
    bool converged;
    int iterations;
  };
  return Out{p, chi2, converged, iter};
}

}  // namespace

GaussianFit fit_gaussian_2d(const Projection& projection, const FitOptions& opts) {
  // Locate the peak and build the (optionally cropped) cell list.
  int peak_ix = 0, peak_iy = 0;
  double peak = -1.0;
  bool any_nonzero = false;
  for (int iy = 0; iy < projection.ny; ++iy) {
    for (int ix = 0; ix < projection.nx; ++ix) {
      const double v = projection.at(ix, iy);
      if (v != 0.0) any_nonzero = true;
      if (v > peak) {
        peak = v;
        peak_ix = ix;
        peak_iy = iy;
      }
    }
  }
  if (!any_nonzero) throw AnalysisError("fit_gaussian_2d: all-zero grid");

  int x_lo = 0, x_hi = projection.nx - 1, y_lo = 0, y_hi = projection.ny - 1;
  if (opts.crop_radius > 0) {
    x_lo = std::max(0, peak_ix - opts.crop_radius);
    x_hi = std::min(projection.nx - 1, peak_ix + opts.crop_radius);
    y_lo = std::max(0, peak_iy - opts.crop_radius);
    y_hi = std::min(projection.ny - 1, peak_iy + opts.crop_radius);
  }
  std::vector<Cell> cells;
  cells.reserve(static_cast<size_t>(x_hi - x_lo + 1) * (y_hi - y_lo + 1));
  size_t nonzero = 0;
  for (int iy = y_lo; iy <= y_hi; ++iy) {
    for (int ix = x_lo; ix <= x_hi; ++ix) {
      const double v = projection.at(ix, iy);
      if (v != 0.0) ++nonzero;
      cells.push_back({static_cast<double>(projection.origin_x + ix),
                       static_cast<double>(projection.origin_y + iy), v});
    }
  }

  const auto moments = moment_estimate<6>(cells);
  auto make_result = [&](const Eigen::Matrix<double, 6, 1>& p, double chi2,
                         bool converged, int iterations) {
    GaussianFit fit;
    fit.amplitude = p[0];
    fit.u0 = p[1];
    fit.v0 = p[2];
    fit.width_u = std::abs(p[3]);
    fit.width_v = std::abs(p[4]);
    fit.offset = p[5];
    fit.residual_rms = std::sqrt(chi2 / static_cast<double>(cells.size()));
    fit.converged = converged;
    fit.iterations = iterations;
    fit.n_cells = cells.size();
    return fit;
  };

  if (nonzero < 25) {
    double chi2 = 0.0;
    for (const auto& c : cells) {
      const double r = c.value - model2d(moments, c.u, c.v);
      chi2 += r * r;
    }
    return make_result(moments, chi2, false, 0);
  }

  auto fill = [&cells](const Eigen::Matrix<double, 6, 1>& p,
                       Eigen::Matrix<double, 6, 6>* jtj,
                       Eigen::Matrix<double, 6, 1>* jtr) {
    jtj->setZero();
    jtr->setZero();
    double chi2 = 0.0;
    for (const auto& c : cells) {
      const double ru = (c.u - p[1]) / p[3];
      const double rv = (c.v - p[2]) / p[4];
      const double g = std::exp(-0.5 * (ru * ru + rv * rv));
      const double f = p[0] * g + p[5];
      const double r = c.value - f;
      chi2 += r * r;
      Eigen::Matrix<double, 6, 1> j;
      j[0] = g;
      j[1] = p[0] * g * ru / p[3];
      j[2] = p[0] * g * rv / p[4];
      j[3] = p[0] * g * ru * ru / p[3];
      j[4] = p[0] * g * rv * rv / p[4];
      j[5] = 1.0;
      jtj->noalias() += j * j.transpose();
      jtr->noalias() += j * r;
    }
    return chi2;
  };

  const auto lm = levenberg_marquardt<6>(moments, fill, opts.max_iterations);
  if (!lm.converged) {
    double chi2 = 0.0;
    for (const auto& c : cells) {
      const double r = c.value - model2d(moments, c.u, c.v);
      chi2 += r * r;
    }
    return make_result(moments, chi2, false, lm.iterations);
  }
  return make_result(lm.params, lm.chi2, true, lm.iterations);
}

Gaussian1dFit fit_gaussian_1d(std::span<const double> values, double origin,
                              const FitOptions& opts) {
  std::vector<Cell> cells;
  cells.reserve(values.size());
  size_t nonzero = 0;
  for (size_t i = 0; i < values.size(); ++i) {
    if (values[i] != 0.0) ++nonzero;
    cells.push_back({origin + static_cast<double>(i), 0.0, values[i]});
  }
  if (nonzero == 0) throw AnalysisError("fit_gaussian_1d: all-zero data");

  const auto moments = moment_estimate<4>(cells);
  auto make_result = [&](const Eigen::Matrix<double, 4, 1>& p, double chi2,
                         bool converged, int iterations) {
    Gaussian1dFit fit;
    fit.amplitude = p[0];
    fit.u0 = p[1];
    fit.width = std::abs(p[2]);
    fit.offset = p[3];
    fit.residual_rms = std::sqrt(chi2 / static_cast<double>(cells.size()));
    fit.converged = converged;
    fit.iterations = iterations;
    return fit;
  };

  if (nonzero < 5) {
    double chi2 = 0.0;
    for (const auto& c : cells) {
      const double r = c.value - model1d(moments, c.u);
      chi2 += r * r;
    }
    return make_result(moments, chi2, false, 0);
  }

  auto fill = [&cells](const Eigen::Matrix<double, 4, 1>& p,
                       Eigen::Matrix<double, 4, 4>* jtj,
                       Eigen::Matrix<double, 4, 1>* jtr) {
    jtj->setZero();
    jtr->setZero();
    double chi2 = 0.0;
    for (const auto& c : cells) {
      const double ru = (c.u - p[1]) / p[2];
      const double g = std::exp(-0.5 * ru * ru);
      const double r = c.value - (p[0] * g + p[3]);
      chi2 += r * r;
      Eigen::Matrix<double, 4, 1> j;
      j[0] = g;
      j[1] = p[0] * g * ru / p[2];
      j[2] = p[0] * g * ru * ru / p[2];
      j[3] = 1.0;
      jtj->noalias() += j * j.transpose();
      jtr->noalias() += j * r;
    }
    return chi2;
  };

  const auto lm = levenberg_marquardt<4>(moments, fill, opts.max_iterations);
  if (!lm.converged) {
    double chi2 = 0.0;
    for (const auto& c : cells) {
      const double r = c.value - model1d(moments, c.u);
      chi2 += r * r;
    }
    return make_result(moments, chi2, false, lm.iterations);
  }
  return make_result(lm.params, lm.chi2, true, lm.iterations);
}

}  // namespace paircam
