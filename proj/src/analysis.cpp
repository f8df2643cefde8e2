#include "paircam/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "paircam/rng.hpp"

namespace paircam {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int axis_index(Axis a) { return a == Axis::X ? 0 : 1; }

}  // namespace

DeltaMinResult delta_min(const Jpd& j, Axis axis, const AnalysisParams& params) {
  const auto matrix = j.axis_matrix(axis_index(axis));
  DeltaMinResult result;

  bool any_column_populated = false;
  for (int a1 = 0; a1 < kSensorSize; ++a1) {
    const std::span<const double> row(matrix.data() + static_cast<size_t>(a1) * kSensorSize,
                                      kSensorSize);
    double count = 0.0;
    for (double v : row) count += v;
    if (count < static_cast<double>(params.min_column_counts)) continue;
    any_column_populated = true;

    ColumnWidth col;
    col.column = a1;
    col.weight = count;
    try {
      const auto fit = fit_gaussian_1d(row, 0.0);
      col.width_px = fit.width;
      col.fit_converged = fit.converged;
      // A usable conditional needs an actual peak: the fitted amplitude must
      // stand clear of the Poisson fluctuation of the peak bin, and the width
      // must be a peak, not the whole half.
      const double peak_noise = std::sqrt(std::max(fit.amplitude + fit.offset, 1.0));
      col.included = fit.converged &&
                     fit.amplitude >= params.peak_significance * peak_noise &&
                     fit.width <= params.max_column_width_px;
    } catch (const AnalysisError&) {
      col.included = false;
    }
    result.columns.push_back(col);
  }

  if (!any_column_populated) {
    throw AnalysisError("delta_min: no column reaches min_column_counts = " +
                        std::to_string(params.min_column_counts));
  }
  double wsum = 0.0, wwidth2 = 0.0;
  for (const auto& col : result.columns) {
    if (!col.included) continue;
    wsum += col.weight;
    wwidth2 += col.weight * col.width_px * col.width_px;
    ++result.included_columns;
  }
  if (result.included_columns == 0) {
    throw AnalysisError("delta_min: no column passed the conditional-peak gates");
  }
  result.delta_min_px = std::sqrt(wwidth2 / wsum);
  result.delta_min_phys = pixel_to_physical(j.optics(), result.delta_min_px);
  return result;
}

EprResult epr_reid_product(double delta_min_pos_m, double delta_min_mom_inv_m) {
  if (delta_min_pos_m <= 0 || delta_min_mom_inv_m <= 0) {
    throw AnalysisError("epr_reid_product: widths must be > 0");
  }
  EprResult r;
  r.product = delta_min_pos_m * delta_min_mom_inv_m;
  r.violated = r.product < 0.5;
  return r;
}

double eof_lower_bound(double delta_minus_pos_m, double delta_plus_mom_inv_m) {
  if (delta_minus_pos_m <= 0 || delta_plus_mom_inv_m <= 0) {
    throw AnalysisError("eof_lower_bound: widths must be > 0");
  }
  return -std::log2(std::numbers::e * delta_minus_pos_m * delta_plus_mom_inv_m);
}

double dimension_bound(double eof) { return std::exp2(eof); }

Jpd poisson_resample(const Jpd& j, uint64_t seed) {
  Rng rng(seed);
  Jpd out(j.basis(), j.optics(), j.acquisition_s());
  // Deterministic iteration order regardless of hash layout.
  std::vector<std::pair<uint64_t, uint64_t>> bins(j.counts().begin(), j.counts().end());
  std::sort(bins.begin(), bins.end());
  for (const auto& [key, count] : bins) {
    const uint64_t redrawn = rng.poisson(static_cast<double>(count));
    if (redrawn == 0) continue;
    int px1, py1, px2, py2;
    Jpd::unpack_key(key, px1, py1, px2, py2);
    out.add_bin(px1, py1, px2, py2, redrawn);
  }
  return out;
}

MonteCarloResult monte_carlo_errors(const Jpd& j, const JpdEstimator& estimator,
                                    std::vector<std::string> names, int n_trials,
                                    uint64_t seed, bool resample) {
  if (n_trials < 2) throw AnalysisError("monte_carlo_errors: need n_trials >= 2");
  const size_t n_quantities = names.size();
  std::vector<std::vector<double>> samples(n_quantities);
  std::vector<size_t> failures(n_quantities, 0);

  for (int trial = 0; trial < n_trials; ++trial) {
    std::vector<double> values;
    try {
      const Jpd draw = resample ? poisson_resample(j, derive_seed(seed, trial)) : j;
      values = estimator(draw);
      if (values.size() != n_quantities) {
        throw AnalysisError("monte_carlo_errors: estimator returned " +
                            std::to_string(values.size()) + " values, expected " +
                            std::to_string(n_quantities));
      }
    } catch (const AnalysisError&) {
      values.assign(n_quantities, std::numeric_limits<double>::quiet_NaN());
    }
    for (size_t q = 0; q < n_quantities; ++q) {
      if (std::isnan(values[q])) {
        ++failures[q];
      } else {
        samples[q].push_back(values[q]);
      }
    }
  }

  MonteCarloResult result;
  result.names = std::move(names);
  result.trials = n_trials;
  result.failed_trials = failures;
  result.sigma.resize(n_quantities, 0.0);
  result.five_sigma.resize(n_quantities, 0.0);
  for (size_t q = 0; q < n_quantities; ++q) {
    if (failures[q] * 5 > static_cast<size_t>(n_trials)) {  // > 20%
      throw AnalysisError("monte_carlo_errors: estimator '" + result.names[q] +
                          "' failed in " + std::to_string(failures[q]) + "/" +
                          std::to_string(n_trials) + " trials");
    }
    const auto& s = samples[q];
    if (s.size() < 2) continue;
    double mean = 0.0;
    for (double v : s) mean += v;
    mean /= static_cast<double>(s.size());
    double var = 0.0;
    for (double v : s) var += (v - mean) * (v - mean);
    var /= static_cast<double>(s.size() - 1);
    result.sigma[q] = std::sqrt(var);
    result.five_sigma[q] = 5.0 * result.sigma[q];
  }
  return result;
}

namespace {

/// Scalar quantities derived from one (NF, FF) pair of distributions, in the
/// order mirrored by AxisReport. NaN marks a failed estimator.
struct CoreEstimates {
  // [axis][quantity]: cond_ref_pos, cond_ref_mom, dm_pos, dm_mom, minus, plus,
  // product, eof, dim
  static constexpr size_t kPerAxis = 9;
  std::array<double, 2 * kPerAxis> q;
};

constexpr const char* kQuantityNames[CoreEstimates::kPerAxis] = {
    "cond_ref_pos", "cond_ref_mom", "delta_min_pos", "delta_min_mom",
    "delta_minus",  "delta_plus",   "epr_product",   "eof",
    "dim"};

std::pair<int, int> pick_reference_pixel(const Jpd& nf, const AnalysisParams& params) {
  if (params.cond_ref_px >= 0 && params.cond_ref_py >= 0) {
    return {params.cond_ref_px, params.cond_ref_py};
  }
  const auto m = nf.marginal(Half::Left);
  int best_x = 0, best_y = 0;
  double best = -1.0;
  for (int iy = 0; iy < m.ny; ++iy) {
    for (int ix = 0; ix < m.nx; ++ix) {
      if (m.at(ix, iy) > best) {
        best = m.at(ix, iy);
        best_x = ix;
        best_y = iy;
      }
    }
  }
  return {best_x, best_y};
}

double column_width_at(const DeltaMinResult& dm, int column) {
  for (const auto& col : dm.columns) {
    if (col.column == column && col.included) return col.width_px;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

CoreEstimates estimate_core(const Jpd& nf, const Jpd& ff, const AnalysisParams& params,
                            int ref_px, int ref_py) {
  CoreEstimates out;
  out.q.fill(std::numeric_limits<double>::quiet_NaN());
  const double scale_nf = pixel_scale(nf.optics());
  const double scale_ff = pixel_scale(ff.optics());

  const FitOptions fit_opts{.max_iterations = 200, .crop_radius = params.fit_crop_radius};
  GaussianFit minus_fit, plus_fit;
  bool have_minus = false, have_plus = false;
  try {
    minus_fit = fit_gaussian_2d(nf.minus_projection(), fit_opts);
    have_minus = minus_fit.converged;
  } catch (const AnalysisError&) {
  }
  try {
    plus_fit = fit_gaussian_2d(ff.sum_projection(), fit_opts);
    have_plus = plus_fit.converged;
  } catch (const AnalysisError&) {
  }

  for (int axis = 0; axis < 2; ++axis) {
    double* q = out.q.data() + static_cast<size_t>(axis) * CoreEstimates::kPerAxis;
    const Axis a = axis == 0 ? Axis::X : Axis::Y;
    const int ref_col = axis == 0 ? ref_px : ref_py;

    double dm_pos = std::numeric_limits<double>::quiet_NaN();
    double dm_mom = std::numeric_limits<double>::quiet_NaN();
    try {
      const auto dm = delta_min(nf, a, params);
      dm_pos = dm.delta_min_phys;
      q[0] = pixel_to_physical(nf.optics(), column_width_at(dm, ref_col));
      q[2] = dm_pos;
    } catch (const AnalysisError&) {
    }
    try {
      const auto dm = delta_min(ff, a, params);
      dm_mom = dm.delta_min_phys;
      q[1] = pixel_to_physical(ff.optics(), column_width_at(dm, ref_col));
      q[3] = dm_mom;
    } catch (const AnalysisError&) {
    }
    const double minus_pos =
        have_minus ? (axis == 0 ? minus_fit.width_u : minus_fit.width_v) * scale_nf
                   : std::numeric_limits<double>::quiet_NaN();
    const double plus_mom =
        have_plus ? (axis == 0 ? plus_fit.width_u : plus_fit.width_v) * scale_ff
                  : std::numeric_limits<double>::quiet_NaN();
    q[4] = minus_pos;
    q[5] = plus_mom;
    if (!std::isnan(dm_pos) && !std::isnan(dm_mom)) {
      q[6] = dm_pos * dm_mom;
    }
    if (!std::isnan(minus_pos) && !std::isnan(plus_mom) && minus_pos > 0 &&
        plus_mom > 0) {
      q[7] = eof_lower_bound(minus_pos, plus_mom);
      q[8] = dimension_bound(q[7]);
    }
  }
  return out;
}

void fill_axis_report(AxisReport& axis, const double* q, const double* err) {
  axis.cond_ref_pos_m = q[0];
  axis.cond_ref_mom_inv_m = q[1];
  axis.delta_min_pos_m = q[2];
  axis.delta_min_mom_inv_m = q[3];
  axis.delta_minus_pos_m = q[4];
  axis.delta_plus_mom_inv_m = q[5];
  axis.epr_product = q[6];
  axis.epr_violated = q[6] < 0.5;
  axis.eof = q[7];
  axis.entanglement_certified = q[7] > 0.0;
  axis.dim = q[8];
  axis.dim_floor =
      std::isnan(q[8]) ? 1 : std::max<int64_t>(1, static_cast<int64_t>(std::floor(q[8])));
  axis.cond_ref_pos_err_m = err[0];
  axis.cond_ref_mom_err_inv_m = err[1];
  axis.delta_min_pos_err_m = err[2];
  axis.delta_min_mom_err_inv_m = err[3];
  axis.delta_minus_pos_err_m = err[4];
  axis.delta_plus_mom_err_inv_m = err[5];
  axis.epr_product_err = err[6];
  axis.eof_err = err[7];
  axis.dim_err = err[8];
}

}  // namespace

CertificationReport certify(const Jpd& jpd_nf, const Jpd& jpd_ff,
                            const AnalysisParams& params, uint64_t mc_seed) {
  if (jpd_nf.basis() != Basis::NearField) {
    throw AnalysisError("certify: first distribution must be near-field (position)");
  }
  if (jpd_ff.basis() != Basis::FarField) {
    throw AnalysisError("certify: second distribution must be far-field (momentum)");
  }

  const auto [ref_px, ref_py] = pick_reference_pixel(jpd_nf, params);
  const auto point = estimate_core(jpd_nf, jpd_ff, params, ref_px, ref_py);
  for (size_t i = 0; i < point.q.size(); ++i) {
    const size_t per = CoreEstimates::kPerAxis;
    if (std::isnan(point.q[i])) {
      // The reference-column widths are diagnostics; everything else is load-
      // bearing.
      if (i % per >= 2) {
        throw AnalysisError(std::string("certify: estimator '") +
                            kQuantityNames[i % per] + "' failed on axis " +
                            (i < per ? "x" : "y"));
      }
    }
  }

  // Joint Monte-Carlo over both distributions; trial t resamples NF and FF
  // with derived seeds and reruns the whole estimator chain.
  const int n_trials = params.mc_trials;
  std::array<std::vector<double>, 2 * CoreEstimates::kPerAxis> samples;
  std::array<size_t, 2 * CoreEstimates::kPerAxis> failures{};
  for (int trial = 0; trial < n_trials; ++trial) {
    CoreEstimates est;
    try {
      const Jpd nf = params.mc_resample
                         ? poisson_resample(jpd_nf, derive_seed(mc_seed, 2 * trial))
                         : jpd_nf;
      const Jpd ff = params.mc_resample
                         ? poisson_resample(jpd_ff, derive_seed(mc_seed, 2 * trial + 1))
                         : jpd_ff;
      est = estimate_core(nf, ff, params, ref_px, ref_py);
    } catch (const AnalysisError&) {
      est.q.fill(std::numeric_limits<double>::quiet_NaN());
    }
    for (size_t i = 0; i < est.q.size(); ++i) {
      if (std::isnan(est.q[i])) {
        ++failures[i];
      } else {
        samples[i].push_back(est.q[i]);
      }
    }
  }
  std::array<double, 2 * CoreEstimates::kPerAxis> five_sigma{};
  for (size_t i = 0; i < samples.size(); ++i) {
    const size_t per = CoreEstimates::kPerAxis;
    if (i % per >= 2 && failures[i] * 5 > static_cast<size_t>(n_trials)) {
      throw AnalysisError(std::string("certify: Monte-Carlo estimator '") +
                          kQuantityNames[i % per] + "' failed in " +
                          std::to_string(failures[i]) + "/" + std::to_string(n_trials) +
                          " trials on axis " + (i < per ? "x" : "y"));
    }
    const auto& s = samples[i];
    if (s.size() < 2) continue;
    double mean = 0.0;
    for (double v : s) mean += v;
    mean /= static_cast<double>(s.size());
    double var = 0.0;
    for (double v : s) var += (v - mean) * (v - mean);
    var /= static_cast<double>(s.size() - 1);
    five_sigma[i] = 5.0 * std::sqrt(var);
  }

  CertificationReport report;
  fill_axis_report(report.x, point.q.data(), five_sigma.data());
  fill_axis_report(report.y, point.q.data() + CoreEstimates::kPerAxis,
                   five_sigma.data() + CoreEstimates::kPerAxis);
  report.dim_total_floor = report.x.dim_floor + report.y.dim_floor;
  report.source = "measured";
  report.mc_trials = n_trials;
  report.mc_seed = mc_seed;

  const double px_nf = pixel_scale(jpd_nf.optics());
  const double px_ff = pixel_scale(jpd_ff.optics());
  for (const auto* axis : {&report.x, &report.y}) {
    const char* name = axis == &report.x ? "x" : "y";
    if (axis->delta_min_mom_inv_m < px_ff || axis->delta_plus_mom_inv_m < px_ff) {
      report.warnings.push_back(std::string("sub-pixel momentum width on axis ") + name);
    }
    if (axis->delta_min_pos_m < px_nf || axis->delta_minus_pos_m < px_nf) {
      report.warnings.push_back(std::string("sub-pixel position width on axis ") + name);
    }
  }
  report.extras["analysis.cond_ref_px"] = std::to_string(ref_px);
  report.extras["analysis.cond_ref_py"] = std::to_string(ref_py);
  return report;
}

CertificationReport table1_injected_report() {
  CertificationReport report;
  report.source = "injected";

  auto fill = [](AxisReport& a, double cond_mom, double cond_pos, double dm_mom,
                 double dm_pos, double plus_mom, double minus_pos) {
    a.cond_ref_mom_inv_m = cond_mom;
    a.cond_ref_pos_m = cond_pos;
    a.delta_min_mom_inv_m = dm_mom;
    a.delta_min_pos_m = dm_pos;
    a.delta_plus_mom_inv_m = plus_mom;
    a.delta_minus_pos_m = minus_pos;
    const auto epr = epr_reid_product(dm_pos, dm_mom);
    a.epr_product = epr.product;
    a.epr_violated = epr.violated;
    a.eof = eof_lower_bound(minus_pos, plus_mom);
    a.entanglement_certified = a.eof > 0.0;
    a.dim = dimension_bound(a.eof);
    a.dim_floor = std::max<int64_t>(1, static_cast<int64_t>(std::floor(a.dim)));
  };
  // Published measured widths (X then Y rows).
  fill(report.x, 3.5e3, 1.0e-5, 3.217e3, 1.03e-5, 3.82e3, 1.17e-5);
  fill(report.y, 3.1e3, 9.7e-6, 3.351e3, 1.09e-5, 4.07e3, 1.28e-5);
  report.dim_total_floor = report.x.dim_floor + report.y.dim_floor;
  return report;
}

namespace {

struct KeyedReport {
  std::map<std::string, std::string> kv;
};

void put(KeyedReport& out, const std::string& key, double v) {
  out.kv[key] = fmt_double(v);
}
void put(KeyedReport& out, const std::string& key, const std::string& v) {
  out.kv[key] = v;
}
void put(KeyedReport& out, const std::string& key, bool v) {
  out.kv[key] = v ? "true" : "false";
}
void put(KeyedReport& out, const std::string& key, int64_t v) {
  out.kv[key] = std::to_string(v);
}

void axis_to_kv(const AxisReport& a, const std::string& prefix, KeyedReport& out) {
  put(out, prefix + ".cond_ref_pos_m", a.cond_ref_pos_m);
  put(out, prefix + ".cond_ref_pos_err_m", a.cond_ref_pos_err_m);
  put(out, prefix + ".cond_ref_mom_inv_m", a.cond_ref_mom_inv_m);
  put(out, prefix + ".cond_ref_mom_err_inv_m", a.cond_ref_mom_err_inv_m);
  put(out, prefix + ".delta_min_pos_m", a.delta_min_pos_m);
  put(out, prefix + ".delta_min_pos_err_m", a.delta_min_pos_err_m);
  put(out, prefix + ".delta_min_mom_inv_m", a.delta_min_mom_inv_m);
  put(out, prefix + ".delta_min_mom_err_inv_m", a.delta_min_mom_err_inv_m);
  put(out, prefix + ".delta_minus_pos_m", a.delta_minus_pos_m);
  put(out, prefix + ".delta_minus_pos_err_m", a.delta_minus_pos_err_m);
  put(out, prefix + ".delta_plus_mom_inv_m", a.delta_plus_mom_inv_m);
  put(out, prefix + ".delta_plus_mom_err_inv_m", a.delta_plus_mom_err_inv_m);
  put(out, prefix + ".epr_product", a.epr_product);
  put(out, prefix + ".epr_product_err", a.epr_product_err);
  put(out, prefix + ".epr_violated", a.epr_violated);
  put(out, prefix + ".eof", a.eof);
  put(out, prefix + ".eof_err", a.eof_err);
  put(out, prefix + ".entanglement_certified", a.entanglement_certified);
  put(out, prefix + ".dim", a.dim);
  put(out, prefix + ".dim_err", a.dim_err);
  put(out, prefix + ".dim_floor", a.dim_floor);
}

double take_double(std::map<std::string, std::string>& kv, const std::string& key,
                   bool& known) {
  auto it = kv.find(key);
  if (it == kv.end()) {
    known = false;
    return 0.0;
  }
  const double v = std::strtod(it->second.c_str(), nullptr);
  kv.erase(it);
  return v;
}

bool take_bool(std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) return false;
  const bool v = it->second == "true";
  kv.erase(it);
  return v;
}

std::string take_string(std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) return "";
  std::string v = it->second;
  kv.erase(it);
  return v;
}

void axis_from_kv(std::map<std::string, std::string>& kv, const std::string& prefix,
                  AxisReport& a) {
  bool known = true;
  a.cond_ref_pos_m = take_double(kv, prefix + ".cond_ref_pos_m", known);
  a.cond_ref_pos_err_m = take_double(kv, prefix + ".cond_ref_pos_err_m", known);
  a.cond_ref_mom_inv_m = take_double(kv, prefix + ".cond_ref_mom_inv_m", known);
  a.cond_ref_mom_err_inv_m = take_double(kv, prefix + ".cond_ref_mom_err_inv_m", known);
  a.delta_min_pos_m = take_double(kv, prefix + ".delta_min_pos_m", known);
  a.delta_min_pos_err_m = take_double(kv, prefix + ".delta_min_pos_err_m", known);
  a.delta_min_mom_inv_m = take_double(kv, prefix + ".delta_min_mom_inv_m", known);
  a.delta_min_mom_err_inv_m = take_double(kv, prefix + ".delta_min_mom_err_inv_m", known);
  a.delta_minus_pos_m = take_double(kv, prefix + ".delta_minus_pos_m", known);
  a.delta_minus_pos_err_m = take_double(kv, prefix + ".delta_minus_pos_err_m", known);
  a.delta_plus_mom_inv_m = take_double(kv, prefix + ".delta_plus_mom_inv_m", known);
  a.delta_plus_mom_err_inv_m = take_double(kv, prefix + ".delta_plus_mom_err_inv_m", known);
  a.epr_product = take_double(kv, prefix + ".epr_product", known);
  a.epr_product_err = take_double(kv, prefix + ".epr_product_err", known);
  a.epr_violated = take_bool(kv, prefix + ".epr_violated");
  a.eof = take_double(kv, prefix + ".eof", known);
  a.eof_err = take_double(kv, prefix + ".eof_err", known);
  a.entanglement_certified = take_bool(kv, prefix + ".entanglement_certified");
  a.dim = take_double(kv, prefix + ".dim", known);
  a.dim_err = take_double(kv, prefix + ".dim_err", known);
  a.dim_floor = static_cast<int64_t>(take_double(kv, prefix + ".dim_floor", known));
}

}  // namespace

std::string serialize_report(const CertificationReport& report) {
  KeyedReport out;
  put(out, "report.version", static_cast<int64_t>(1));
  put(out, "report.source", report.source);
  put(out, "report.config_hash", report.config_hash);
  put(out, "input.nf", report.input_nf);
  put(out, "input.ff", report.input_ff);
  put(out, "mc.trials", report.mc_trials);
  put(out, "mc.seed", static_cast<int64_t>(report.mc_seed));
  axis_to_kv(report.x, "x", out);
  axis_to_kv(report.y, "y", out);
  put(out, "dim.total_floor", report.dim_total_floor);
  for (size_t i = 0; i < report.warnings.size(); ++i) {
    put(out, "warning." + std::to_string(i), report.warnings[i]);
  }
  for (const auto& [k, v] : report.extras) out.kv[k] = v;

  std::string text;
  for (const auto& [k, v] : out.kv) {
    text += k;
    text += " = ";
    text += v;
    text += '\n';
  }
  return text;
}

CertificationReport parse_report(const std::string& text,
                                 std::vector<std::string>* unknown_keys) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!key.empty()) kv[key] = value;
  }

  CertificationReport r;
  bool known = true;
  take_double(kv, "report.version", known);
  r.source = take_string(kv, "report.source");
  r.config_hash = take_string(kv, "report.config_hash");
  r.input_nf = take_string(kv, "input.nf");
  r.input_ff = take_string(kv, "input.ff");
  r.mc_trials = static_cast<int64_t>(take_double(kv, "mc.trials", known));
  r.mc_seed = static_cast<uint64_t>(take_double(kv, "mc.seed", known));
  axis_from_kv(kv, "x", r.x);
  axis_from_kv(kv, "y", r.y);
  r.dim_total_floor = static_cast<int64_t>(take_double(kv, "dim.total_floor", known));
  for (size_t i = 0;; ++i) {
    const std::string key = "warning." + std::to_string(i);
    if (!kv.count(key)) break;
    r.warnings.push_back(take_string(kv, key));
  }
  // Anything left is preserved and reported to the caller as unknown.
  for (const auto& [k, v] : kv) {
    r.extras[k] = v;
    if (unknown_keys && k.rfind("analysis.", 0) != 0) unknown_keys->push_back(k);
  }
  return r;
}

std::string format_report(const CertificationReport& report) {
  std::ostringstream out;
  char buf[256];
  out << "# certification report (" << report.source << ")\n#\n";
  auto row = [&](const char* label, double value, double err, const char* unit) {
    std::snprintf(buf, sizeof(buf), "# %-22s %.6g", label, value);
    out << buf;
    if (err > 0.0) {
      std::snprintf(buf, sizeof(buf), " +- %.2g (5 sigma)", err);
      out << buf;
    }
    out << ' ' << unit << '\n';
  };
  const struct {
    const char* name;
    const AxisReport& a;
  } axes[] = {{"x", report.x}, {"y", report.y}};
  for (const auto& [name, a] : axes) {
    out << "# --- axis " << name << " ---\n";
    row("D[k2|k1]", a.cond_ref_mom_inv_m, a.cond_ref_mom_err_inv_m, "1/m");
    row("D[pos2|pos1]", a.cond_ref_pos_m, a.cond_ref_pos_err_m, "m");
    row("D_min[k]", a.delta_min_mom_inv_m, a.delta_min_mom_err_inv_m, "1/m");
    row("D_min[pos]", a.delta_min_pos_m, a.delta_min_pos_err_m, "m");
    row("D[k1+k2]", a.delta_plus_mom_inv_m, a.delta_plus_mom_err_inv_m, "1/m");
    row("D[pos1-pos2]", a.delta_minus_pos_m, a.delta_minus_pos_err_m, "m");
    row("EPR product", a.epr_product, a.epr_product_err,
        a.epr_violated ? "(violates 1/2 bound)" : "(no violation)");
    row("EoF lower bound", a.eof, a.eof_err,
        a.entanglement_certified ? "" : "(no entanglement certified)");
    row("dimension bound", a.dim, a.dim_err, "");
    std::snprintf(buf, sizeof(buf), "# %-22s %lld\n", "dimension floor",
                  static_cast<long long>(a.dim_floor));
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "# total dimension floor(d_x) + floor(d_y) = %lld\n",
                static_cast<long long>(report.dim_total_floor));
  out << buf;
  for (const auto& w : report.warnings) out << "# warning: " << w << '\n';
  out << "#\n" << serialize_report(report);
  return out.str();
}

void write_report(const CertificationReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw CodecError(CodecError::Kind::Io, 0, "cannot open " + path);
  out << format_report(report);
}

CertificationReport read_report(const std::string& path,
                                std::vector<std::string>* unknown_keys) {
  std::ifstream in(path);
  if (!in) throw CodecError(CodecError::Kind::Io, 0, "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_report(buf.str(), unknown_keys);
}

}  // namespace paircam
