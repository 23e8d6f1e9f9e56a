#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace bsq {

/// One curve of a scaling collapse. `label` is the scaling variable g_i of
/// the set (a system size N or a layer spacing a_Z).
struct DataSet {
  double label = 0.0;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> sigma;

  /// Throws std::invalid_argument unless the arrays have equal length >= 2,
  /// x is strictly increasing and every sigma is positive.
  void validate() const;
};

struct PowerLawPoint {
  double n = 0.0;
  double y = 0.0;
  double sigma = 0.0;
};

struct PowerLawFit {
  double exponent = 0.0;
  double uncertainty = 0.0;
  double prefactor = 0.0;
  double chi2_reduced = 0.0;
  std::size_t points_used = 0;
};

/// Weighted least squares of log y against log n with weights (y / sigma)^2.
/// The slope uncertainty comes from the parameter covariance; when any sigma
/// is zero the fit is unweighted and the covariance is scaled by the residual
/// variance.
PowerLawFit fit_power_law(const std::vector<PowerLawPoint>& points);

/// Common exponent over several groups (e.g. aspect ratios), each with its
/// own prefactor. chi2_reduced measures how well one slope serves all groups.
PowerLawFit fit_common_power_law(const std::vector<std::vector<PowerLawPoint>>& groups);

struct TransitionPoint {
  double x = 0.0;  // a_Z / L or a rescaled abscissa
  double p = 0.0;
  double uncertainty = 0.0;
};

class TransitionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kTransitionThreshold = 0.05;

/// Largest abscissa where p is significant (p > threshold and p > 2 unc),
/// refined by linear interpolation to the p = threshold crossing towards the
/// next point. Points may come in any order.
double detect_transition(std::vector<TransitionPoint> curve, double threshold = kTransitionThreshold);

class CollapseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CostDetail {
  double value = 0.0;
  std::size_t terms = 0;
  std::size_t pairs_used = 0;
  std::size_t pairs_skipped = 0;
};

/// Collapse cost S(d_x, d_y) with pairwise-overlap grids of
/// max(len_i, len_k) equally spaced points. Pairs without overlap are
/// skipped; CollapseError if every pair is skipped.
CostDetail cost_function_detail(const std::vector<DataSet>& datasets, double d_x, double d_y);
double cost_function(const std::vector<DataSet>& datasets, double d_x, double d_y);

struct SearchWindow {
  double lo = -3.0;
  double hi = 3.0;
};

struct Collapse2dOptions {
  SearchWindow d_V{-3.0, 3.0};
  SearchWindow d_tau{-3.0, 3.0};
  int grid = 41;
};

struct Collapse2dResult {
  double d_V = 0.0;
  double d_tau = 0.0;
  double unc_d_V = 0.0;
  double unc_d_tau = 0.0;
  double S_min = 0.0;
  bool d_V_bounded = true;  // S_min + 1 reached inside the window on both sides
  bool d_tau_bounded = true;
};

/// Collapse of Var a_Z^{-d_V} against (t - t_min) a_Z^{-d_tau} for curves
/// labelled by a_Z at one system size. Grid scan, then simplex refinement;
/// uncertainties are axis-wise S_min + 1 half-widths.
Collapse2dResult optimize_collapse_2d(const std::vector<DataSet>& datasets, const Collapse2dOptions& options = {});

/// A curve of the full collapse: system size, layer spacing and the
/// t_min-aligned variance series.
struct SizedDataSet {
  double n = 0.0;
  double a_z = 0.0;
  DataSet data;  // label ignored
};

struct Collapse1dOptions {
  SearchWindow delta{-1.0, 3.0};
  int grid = 81;
};

struct Collapse1dResult {
  double delta = 0.0;
  double unc_delta = 0.0;
  double S_min = 0.0;
  bool bounded = true;
};

/// The datasets rescaled by the full ansatz at exponent delta, with nu from
/// the constraint: x (t - t_min) a_Z^{-d_tau} N^{delta d_tau / d},
/// y Var a_Z^{-d_V} N^{d_V / d - p}.
std::vector<DataSet> rescale_full(const std::vector<SizedDataSet>& datasets, double d_V, double d_tau,
                                  double delta, double p, int d);

/// One-parameter collapse across system sizes for fixed (d_V, d_tau, p).
Collapse1dResult optimize_collapse_1d(const std::vector<SizedDataSet>& datasets, double d_V, double d_tau,
                                      double p, int d, const Collapse1dOptions& options = {});

struct NuEstimate {
  double nu = 0.0;
  double uncertainty = 0.0;
};

/// nu = p - d_V (1 - delta) / d with first-order error propagation.
NuEstimate derive_nu(double p, double d_V, double delta, int d, double unc_p = 0.0, double unc_d_V = 0.0,
                     double unc_delta = 0.0);

inline constexpr double kDefaultSigmaFactor = 0.04;

/// Uniform per-size uncertainty factor * Var_min.
std::vector<double> default_sigma(const std::vector<double>& var_min, double factor = kDefaultSigmaFactor);

struct CollapseResult {
  double d_V = 0.0;
  double d_tau = 0.0;
  double delta = 0.0;
  double nu = 0.0;
  double p = 0.0;
  double unc_d_V = 0.0;
  double unc_d_tau = 0.0;
  double unc_delta = 0.0;
  double unc_nu = 0.0;
  double unc_p = 0.0;
  double S_min_dVdtau = 0.0;
  double S_min_delta = 0.0;
  double S_min_p = 0.0;
};

}  // namespace bsq
