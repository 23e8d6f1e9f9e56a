#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bilayer/analysis.hpp"
#include "bilayer/dtwa.hpp"
#include "bilayer/io.hpp"
#include "bilayer/lattice.hpp"

namespace bsq {

/// Sweepable parameter. AZOverL sets a_z = value * L after L is resolved.
enum class AxisKind { AZ, AZOverL, L, Lambda, Alpha };

AxisKind parse_axis(std::string_view name);
std::string_view to_string(AxisKind kind);

struct SweepAxis {
  AxisKind kind = AxisKind::AZ;
  std::vector<double> values;
};

inline constexpr std::size_t kDefaultRunBudget = 10000;

struct SweepPlan {
  LatticeSpec base;
  SweepAxis axis1;
  std::optional<SweepAxis> axis2;
  RunConfig run;
  std::filesystem::path out_dir;
  std::size_t budget = kDefaultRunBudget;

  /// Axis values strictly monotone, at most `budget` points, L axis integral.
  void validate() const;
  /// Parameter points in lexicographic (axis1, axis2) order.
  std::vector<LatticeSpec> points() const;

  json to_json() const;
  static SweepPlan from_json(const json& j);
};

struct SweepPoint {
  LatticeSpec spec;
  std::string hash;
  std::filesystem::path series_path;  // relative to the sweep directory
  MinimalVariance minimum;
  bool cached = false;
  bool ok = true;
  std::string error;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  CsvTable minima;
};

/// Runs every point of the plan (trajectories across `threads` workers),
/// writing <out>/points/<hash>/series.csv, <out>/minima.csv and
/// <out>/manifest.json. Points whose series already exist are reloaded.
SweepResult execute_sweep(const SweepPlan& plan, int threads = 0);

/// Minimum of a stored series, as minimal_variance would report it.
MinimalVariance minimum_of(const SeriesColumns& series);

/// Groups minima rows by a_z / L and fits Var_min ~ N^p per group and jointly.
struct PExponentReport {
  struct Group {
    double a_z_over_L = 0.0;
    PowerLawFit fit;
  };
  std::vector<Group> groups;
  PowerLawFit joint;  // common slope; chi2_reduced is S_min^(p)
};

PExponentReport analyze_p(const CsvTable& minima, std::size_t min_points = 3);

struct BoundaryPlan {
  std::vector<Geometry> geometries;
  std::vector<double> alphas;
  std::vector<double> lambdas;
  std::vector<int> sizes;
  std::vector<double> a_z_over_L;  // dTWA bracket around the expected transition
  Boundary boundary = Boundary::Periodic;
  RunConfig run;
  std::filesystem::path out_dir;
  bool bogoliubov_only = false;
};

/// One row per (geometry, alpha, lambda, L). Per-point failures become NaN
/// entries with a warning.
CsvTable pipeline_phase_boundary(const BoundaryPlan& plan, int threads = 0);

struct ScalingPlan {
  Geometry geometry = Geometry::Ladder1D;
  double lambda = 1.0;
  std::vector<double> alphas;
  std::vector<int> sizes;
  std::filesystem::path out_dir;
};

struct ScalingFit {
  double alpha = 0.0;
  double slope = 0.0;  // d log(a_z* / L) / d log L
  double slope_uncertainty = 0.0;
  double predicted_slope = 0.0;
  std::string predicted_kind;
  double power_residual = 0.0;     // rms residual of the pure power law in log space
  double log_corrected_residual = 0.0;  // rms residual of c / sqrt(log L)
};

struct ScalingResult {
  CsvTable table;  // alpha,L,a_z_star,a_z_star_over_L
  std::vector<ScalingFit> fits;
};

ScalingResult pipeline_scaling(const ScalingPlan& plan);

/// One t_min-aligned variance curve of a collapse family.
struct SeriesRecord {
  double L = 0.0;
  double N = 0.0;
  double a_z = 0.0;
  SeriesColumns series;
};

struct CollapsePlan {
  int d = 1;
  double sigma_factor = kDefaultSigmaFactor;
  std::optional<double> p;  // fitted from the minima when absent
  double unc_p = 0.0;
  Collapse2dOptions options_2d;
  Collapse1dOptions options_1d;
};

struct CollapseOutput {
  CollapseResult result;
  bool collapse_ok = true;  // S_min <= 5 for both collapse stages
  CsvTable rescaled;        // N,a_z,x,y,sigma under the full ansatz
};

inline constexpr double kFailedCollapseCost = 5.0;

/// Extraction order: p, then (d_V, d_tau) at the largest N, then delta, then nu.
CollapseOutput collapse_family(const std::vector<SeriesRecord>& records, const CollapsePlan& plan);

/// Loads every series listed in a sweep directory's manifest.
std::vector<SeriesRecord> load_sweep_series(const std::filesystem::path& dir);

json to_json(const CollapseResult& r);

}  // namespace bsq
