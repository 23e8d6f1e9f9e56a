#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "bilayer/lattice.hpp"

namespace bsq {

using cplx = std::complex<double>;

/// One reciprocal-lattice point k = sum_i n_i b_i / L, folded to its
/// smallest-norm representative for the Cartesian coordinates.
struct MomentumPoint {
  std::array<int, 2> n{0, 0};
  Eigen::Vector2d k = Eigen::Vector2d::Zero();
  double abs_k = 0.0;
};

struct MomentumGrid {
  std::vector<MomentumPoint> points;  // points[0] is k = 0
  std::size_t k1 = 0;                 // smallest nonzero |k|, lexicographic tie-break
};

MomentumGrid momentum_grid(const LatticeSpec& spec);

/// Precomputed displacement sets for the per-site Fourier sums. The
/// sublattice-resolved blocks are nsub x nsub:
///   intra(k)_{mu,nu} = sum_r V(|r|) exp(i k.r),        r from (mu, cell 0) to (nu, c) != self
///   inter(k)_{mu,nu} = lambda sum_r V(sqrt(r^2 + a_z^2)) exp(i k.r)
/// For periodic boundaries r is the minimum image; for open boundaries the
/// sum runs one-sidedly from the origin cell to every cell of the layer.
class FourierSums {
 public:
  explicit FourierSums(const LatticeSpec& spec);

  const LatticeSpec& spec() const { return spec_; }
  int sublattices() const { return nsub_; }

  Eigen::MatrixXcd intralayer_block(const MomentumPoint& k) const;
  Eigen::MatrixXcd interlayer_block(const MomentumPoint& k, double a_z) const;
  Eigen::MatrixXcd interlayer_block(const MomentumPoint& k) const { return interlayer_block(k, spec_.a_z); }

  /// Interlayer blocks for many k at one a_z; the power-law weights are
  /// evaluated once.
  std::vector<Eigen::MatrixXcd> interlayer_blocks(const std::vector<MomentumPoint>& ks, double a_z) const;

 private:
  struct Term {
    std::array<int, 2> cell;
    double length_sq;
  };
  cplx phase(const MomentumPoint& k, const std::array<int, 2>& cell, int mu, int nu) const;

  LatticeSpec spec_;
  int nsub_ = 1;
  // terms_[mu * nsub + nu]
  std::vector<std::vector<Term>> intra_terms_;
  std::vector<std::vector<Term>> inter_terms_;
  std::vector<cplx> unit_roots_;  // exp(2 pi i m / L)
};

/// Sublattice-summed intralayer transform from a reference site of
/// sublattice 0; for single-sublattice lattices this is exactly eps~_k.
double fourier_intralayer(const LatticeSpec& spec, const MomentumPoint& k);
/// Sublattice-summed interlayer transform (includes lambda).
cplx fourier_interlayer(const LatticeSpec& spec, const MomentumPoint& k);

struct QuasiEnergy {
  double energy = 0.0;
  double growth_rate = 0.0;
};

/// E_k = sqrt(eps^2 - |omega|^2) when real, otherwise a growth rate
/// sqrt(|omega|^2 - eps^2). Growth rates are variance e-folding rates.
QuasiEnergy quasi_energy(double eps, cplx omega);

/// Growth rates (positive imaginary parts of the eigenvalues, largest first,
/// one per sublattice) of the linearised dynamics
///   M = [[D - E, -W], [W^dagger, -(D - E)]]
/// with D the diagonal of k = 0 row sums of E.
std::vector<double> bdg_growth_rates(const Eigen::MatrixXcd& eps_tilde_k,
                                     const Eigen::VectorXd& eps_tilde_0_rows,
                                     const Eigen::MatrixXcd& omega_k);

std::vector<double> stability_spectrum(const FourierSums& sums, const MomentumPoint& k, double a_z);
std::vector<double> stability_spectrum(const LatticeSpec& spec, const MomentumPoint& k);

struct DispersionPoint {
  MomentumPoint k;
  double eps_tilde = 0.0;
  double eps = 0.0;  // eps~_0 - eps~_k (>= 0 for ferromagnetic couplings)
  cplx omega{0.0, 0.0};
  double growth_rate = 0.0;  // largest growth rate at this k
};

struct DispersionData {
  LatticeSpec spec;
  std::vector<DispersionPoint> points;
  std::size_t k1 = 0;
};

/// Evaluates every grid point. On the honeycomb lattice eps and omega refer
/// to the acoustic intralayer branch; growth_rate always comes from the full
/// sublattice-resolved problem.
DispersionData dispersion(const LatticeSpec& spec);

struct StabilityReport {
  std::vector<MomentumPoint> unstable_k;
  std::vector<double> growth_rates;
  bool is_fully_collective = false;
};

/// Growth rates at or below this are treated as stable.
inline constexpr double kGrowthTolerance = 1e-10;

StabilityReport unstable_modes(const LatticeSpec& spec);

class NoTransitionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// a_z at which the largest finite-k growth rate crosses zero. Bisection on a
/// bracket grown geometrically from [0.1, 10 L]; relative tolerance 1e-6.
double critical_a_z(Geometry geometry, int L, double alpha, double lambda,
                    Boundary boundary = Boundary::Periodic);

struct PowerLaw {
  double prefactor = 0.0;
  double exponent = 0.0;
};

/// Least-squares fit of log eps_k against log |k| over 0 < |k| <= k_max.
PowerLaw fit_dispersion_exponent(const DispersionData& data, double k_max);

enum class ScalingKind { Linear, LogCorrected, Power };

struct CriticalScaling {
  ScalingKind kind = ScalingKind::Linear;
  double exponent = 1.0;  // a_z* ~ L^exponent (Power), 1 otherwise
};

/// Closed-form size scaling of a_z*: linear for alpha < d + 2,
/// L / sqrt(log L) at alpha = d + 2 and L^{2/(alpha - d)} beyond.
CriticalScaling predicted_critical_scaling(double alpha, int d);

/// Leading-order collective prediction Var[O-/+](t) = (N/2) exp(-/+ N V_av t).
struct TmsPrediction {
  int N = 0;
  double v_av = 0.0;

  double rate() const { return N * v_av; }
  double var_minus(double t) const;
  double var_plus(double t) const;
};

TmsPrediction tms_prediction(const LatticeSpec& spec);

}  // namespace bsq
