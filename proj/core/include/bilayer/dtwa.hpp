#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bilayer/lattice.hpp"

namespace bsq {

/// Classical spin vectors, one row (sx, sy, sz) per site in canonical order.
/// Column-major storage, so each component is a contiguous block.
using SpinMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3>;

struct SpinConfiguration {
  SpinMatrix s;
  int sites_per_layer = 0;

  int n_sites() const { return static_cast<int>(s.rows()); }
};

struct RunConfig {
  std::size_t n_traj = 5000;
  double t_max = 10.0;
  double output_stride = 0.1;
  std::uint64_t master_seed = 0;
  double rel_tol = 1e-8;
  double abs_tol = 1e-8;

  /// Throws std::invalid_argument on n_traj < 2, non-positive times or
  /// tolerances, or more than 10^6 output intervals.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// Output grid 0, stride, 2 stride, ..., ending exactly at t_max.
std::vector<double> output_times(const RunConfig& run);

/// Discrete Wigner sample of the initial product state: layer A along +z,
/// layer B along -z, transverse components +-1/2 with equal probability.
/// Depends only on (master_seed, trajectory_index).
SpinConfiguration sample_initial(const LatticeSpec& spec, std::uint64_t trajectory_index,
                                 std::uint64_t master_seed);

/// Dense form of a coupling table. With J the full symmetric coupling matrix
/// and J_z its intralayer blocks, B = (J s_x, J s_y, J_z s_z).
class SpinDynamics {
 public:
  explicit SpinDynamics(const CouplingTable& table);

  int n_sites() const { return static_cast<int>(couplings_.rows()); }
  int sites_per_layer() const { return sites_per_layer_; }

  void field(const SpinMatrix& s, SpinMatrix& b) const;
  /// ds/dt = s x B.
  void rhs(const SpinMatrix& s, SpinMatrix& ds) const;
  /// Same over raw column-major (n_sites x 3) storage; thread-safe.
  void rhs(const double* s, double* ds) const;
  /// Classical energy 1/2 sum_i s_i . B_i.
  double energy(const SpinMatrix& s) const;

 private:
  Eigen::MatrixXd couplings_;  // symmetric, zero diagonal; [[J_A, K], [K^T, J_B]]
  int sites_per_layer_ = 0;
};

SpinConfiguration eom_rhs(const SpinConfiguration& config, const CouplingTable& table);

/// Scalar observables of one trajectory. O- = S^x_A + S^y_B and its
/// anti-squeezed partner O+ = S^y_A + S^x_B.
struct Observables {
  double o_minus = 0.0;
  double o_plus = 0.0;
  double sz_a = 0.0;
  double sz_b = 0.0;
  double energy = 0.0;
};

Observables observe(const SpinMatrix& s, int sites_per_layer, double energy);

struct TrajectorySeries {
  std::vector<double> t;
  std::vector<Observables> values;
  double max_norm_drift = 0.0;  // max_i,t ||s_i| - sqrt(3)/2| over accepted steps
  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;
};

class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(std::uint64_t trajectory, double time, const std::string& what);

  std::uint64_t trajectory() const { return trajectory_; }
  double time() const { return time_; }

 private:
  std::uint64_t trajectory_;
  double time_;
};

/// Adaptive embedded Runge-Kutta integration of one trajectory with
/// observables sampled on the output grid by cubic Hermite interpolation.
TrajectorySeries integrate_trajectory(const SpinConfiguration& config, const SpinDynamics& dynamics,
                                      const RunConfig& run, std::uint64_t trajectory_index = 0);
TrajectorySeries integrate_trajectory(const SpinConfiguration& config, const CouplingTable& table,
                                      const RunConfig& run, std::uint64_t trajectory_index = 0);

struct EnsembleSeries {
  LatticeSpec spec;
  RunConfig run;
  std::vector<double> t;
  std::vector<double> mean_O_minus;
  std::vector<double> var_O_minus;
  std::vector<double> var_O_plus;
  std::vector<double> sz_a;
  std::vector<double> sz_b;
  std::vector<double> energy_mean;
  std::vector<double> var_stderr;  // jackknife standard error of var_O_minus
  std::size_t n_traj = 0;          // trajectories that entered the averages
  std::size_t n_failed = 0;
  double max_norm_drift = 0.0;

  std::size_t size() const { return t.size(); }
};

/// Fraction of failed trajectories above which run_ensemble aborts.
inline constexpr double kMaxFailureFraction = 1e-3;

/// Trajectory ensemble on `threads` workers (0 selects worker_count()).
/// Results do not depend on the worker count.
EnsembleSeries run_ensemble(const LatticeSpec& spec, const RunConfig& run, int threads = 0);

struct MinimalVariance {
  double t_min = 0.0;
  double var_min = 0.0;
  double std_error = 0.0;
  bool at_window_end = false;
};

class FlatSeriesError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

MinimalVariance minimal_variance(const EnsembleSeries& series);
/// Same refinement on bare arrays; `errors` may be empty.
MinimalVariance minimal_variance(const std::vector<double>& t, const std::vector<double>& var,
                                 const std::vector<double>& errors);

/// Var[O-](t) / <S^z_A - S^z_B>(t)^2, linearly interpolated in t.
double sensitivity(const EnsembleSeries& series, double t);

}  // namespace bsq
