#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "paircam/gaussfit.hpp"
#include "paircam/jpd.hpp"
#include "paircam/types.hpp"

namespace paircam {

enum class Axis { X, Y };

struct AnalysisParams {
  /// Minimum counts for a conditional column to enter the minimum-inferred-
  /// uncertainty average.
  uint64_t min_column_counts = 100;
  /// A column is used only when its fitted peak stands out: amplitude >=
  /// peak_significance * sqrt(amplitude + offset). Filters columns that hold
  /// enough counts but no conditional peak (uniform accidental background).
  double peak_significance = 5.0;
  /// Sanity cap on a conditional width, in pixels.
  double max_column_width_px = 64.0;
  /// Half-width of the window fitted around Minus/Sum peaks (0 = full grid).
  int fit_crop_radius = 48;
  int mc_trials = 100;
  bool mc_resample = true;
  /// Reference pixel for the Table-1-style single-pixel conditional widths;
  /// -1 selects the brightest left-half marginal pixel.
  int cond_ref_px = -1;
  int cond_ref_py = -1;
};

struct ColumnWidth {
  int column = 0;        // left-half coordinate along the chosen axis
  double weight = 0.0;   // marginal counts of the column
  double width_px = 0.0;
  bool fit_converged = false;
  bool included = false;
};

struct DeltaMinResult {
  double delta_min_px = 0.0;
  double delta_min_phys = 0.0;  // m (NF) or 1/m (FF)
  std::vector<ColumnWidth> columns;
  size_t included_columns = 0;
};

/// Minimum inferred uncertainty: for every left-half coordinate u1 along the
/// chosen axis (the other axis summed out) with enough counts, fits a 1D
/// Gaussian to the distribution of the right-half coordinate u2 and returns
/// the marginal-weighted quadratic mean of the widths, weights renormalized
/// over the included columns.
DeltaMinResult delta_min(const Jpd& j, Axis axis, const AnalysisParams& params);

struct EprResult {
  double product = 0.0;
  bool violated = false;  // product < 1/2 witnesses entanglement
};

EprResult epr_reid_product(double delta_min_pos_m, double delta_min_mom_inv_m);

/// Entanglement-of-formation lower bound -log2(e * dpos * dmom); may be
/// negative, in which case no entanglement is certified.
double eof_lower_bound(double delta_minus_pos_m, double delta_plus_mom_inv_m);

/// Dimension lower bound 2^E.
double dimension_bound(double eof);

struct AxisReport {
  double cond_ref_pos_m = 0.0;       // width of the NF conditional at the ref column
  double cond_ref_pos_err_m = 0.0;
  double cond_ref_mom_inv_m = 0.0;   // same for FF
  double cond_ref_mom_err_inv_m = 0.0;
  double delta_min_pos_m = 0.0;
  double delta_min_pos_err_m = 0.0;
  double delta_min_mom_inv_m = 0.0;
  double delta_min_mom_err_inv_m = 0.0;
  double delta_minus_pos_m = 0.0;
  double delta_minus_pos_err_m = 0.0;
  double delta_plus_mom_inv_m = 0.0;
  double delta_plus_mom_err_inv_m = 0.0;
  double epr_product = 0.0;
  double epr_product_err = 0.0;
  bool epr_violated = false;
  double eof = 0.0;
  double eof_err = 0.0;
  bool entanglement_certified = false;  // eof > 0
  double dim = 1.0;
  double dim_err = 0.0;
  int64_t dim_floor = 1;
};

/// The artifact's Table 1. Errors are 5 sigma from the Monte-Carlo trials.
struct CertificationReport {
  AxisReport x;
  AxisReport y;
  /// Conservative total dimension statement: floor(d_x) + floor(d_y).
  int64_t dim_total_floor = 2;
  std::string source = "measured";  // measured | theory | injected
  std::string config_hash;
  std::string input_nf;
  std::string input_ff;
  int64_t mc_trials = 0;
  uint64_t mc_seed = 0;
  std::vector<std::string> warnings;
  /// Unknown keys found when parsing a report file, preserved on output.
  std::map<std::string, std::string> extras;
};

/// Runs the full estimator chain on one NF and one FF distribution and
/// propagates Monte-Carlo errors (per-bin Poisson resampling of both).
CertificationReport certify(const Jpd& jpd_nf, const Jpd& jpd_ff,
                            const AnalysisParams& params, uint64_t mc_seed);

/// Redraws every occupied bin as Poisson(count).
Jpd poisson_resample(const Jpd& j, uint64_t seed);

struct MonteCarloResult {
  std::vector<std::string> names;
  std::vector<double> sigma;
  std::vector<double> five_sigma;
  std::vector<size_t> failed_trials;  // per quantity
  int trials = 0;
};

/// Generic parametric bootstrap: per trial, resamples the distribution and
/// re-runs the estimator; sigma is the sample standard deviation over trials.
/// An estimator may signal failure for a quantity with NaN; a quantity failing
/// in more than 20% of trials raises AnalysisError naming it. `resample`
/// false disables the redraw (every trial sees the original counts).
using JpdEstimator = std::function<std::vector<double>(const Jpd&)>;
MonteCarloResult monte_carlo_errors(const Jpd& j, const JpdEstimator& estimator,
                                    std::vector<std::string> names, int n_trials,
                                    uint64_t seed, bool resample = true);

/// Report built from the published Table 1 widths instead of fits; checks the
/// downstream arithmetic in isolation.
CertificationReport table1_injected_report();

/// Lossless flat key-value serialization plus a human-readable rendering.
std::string serialize_report(const CertificationReport& report);
std::string format_report(const CertificationReport& report);  // '#'-commented
                                                               // summary + kv block
CertificationReport parse_report(const std::string& text,
                                 std::vector<std::string>* unknown_keys = nullptr);
void write_report(const CertificationReport& report, const std::string& path);
CertificationReport read_report(const std::string& path,
                                std::vector<std::string>* unknown_keys = nullptr);

}  // namespace paircam
