#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "bilayer/lattice.hpp"

namespace bsq {

using cplx = std::complex<double>;

inline constexpr int kMaxOracleSpins = 14;

/// Amplitudes in the computational z basis; bit i of the basis index is
/// site i in canonical order, set for spin up.
struct StateVector {
  Eigen::VectorXcd amplitudes;
  int n_spins = 0;
  int sites_per_layer = 0;
};

class OracleSizeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// |up ... up>_A |down ... down>_B.
StateVector initial_state(const LatticeSpec& spec);

/// Matrix-free H built term by term from a coupling table.
class QuantumHamiltonian {
 public:
  explicit QuantumHamiltonian(const CouplingTable& table);

  int n_spins() const { return n_spins_; }
  int sites_per_layer() const { return sites_per_layer_; }
  /// y = H x.
  void apply(const Eigen::VectorXcd& x, Eigen::VectorXcd& y) const;
  double expectation(const Eigen::VectorXcd& x) const;

 private:
  struct FlipTerm {
    std::uint32_t mask;
    double amplitude;  // V/2 for sx sx + sy sy
  };
  int n_spins_ = 0;
  int sites_per_layer_ = 0;
  Eigen::VectorXd diagonal_;  // intralayer sz sz energies
  std::vector<FlipTerm> flips_;
};

/// y = -i H x.
Eigen::VectorXcd apply_hamiltonian(const StateVector& state, const CouplingTable& table);

/// Exact counterpart of the ensemble observables.
struct ExactSeries {
  std::vector<double> t;
  std::vector<double> mean_O_minus;
  std::vector<double> var_O_minus;
  std::vector<double> var_O_plus;
  std::vector<double> sz_a;
  std::vector<double> sz_b;
  std::vector<double> energy;
  double max_norm_error = 0.0;
};

class OracleToleranceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Propagates |psi(t)> = exp(+i H t)|psi(0)>, the time direction in which
/// O- = S^x_A + S^y_B is squeezed and which the classical flow ds/dt = s x B
/// follows. Lanczos exponential steps with a local error bound `tol`.
ExactSeries evolve(const StateVector& state, const CouplingTable& table, const std::vector<double>& t_grid,
                   double tol = 1e-12);

/// Convenience: initial product state of `spec`, evolved on [0, t_max].
ExactSeries run_oracle(const LatticeSpec& spec, double t_max, double output_stride);

}  // namespace bsq
