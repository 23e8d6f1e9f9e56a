#include "bilayer/bogoliubov.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

namespace bsq {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Eigen::Matrix2d reciprocal_basis(Geometry g) {
  const Eigen::Matrix2d a = bravais_basis(g);
  return kTwoPi * a.inverse().transpose();
}

}  // namespace

MomentumGrid momentum_grid(const LatticeSpec& spec) {
  spec.validate();
  const int L = spec.L;
  const int n1_max = spec.dim() == 1 ? 1 : L;
  const Eigen::Matrix2d b = reciprocal_basis(spec.geometry);
  const int m1_range = spec.dim() == 1 ? 0 : 1;

  MomentumGrid grid;
  grid.points.reserve(static_cast<std::size_t>(L * n1_max));
  for (int n1 = 0; n1 < n1_max; ++n1) {
    for (int n0 = 0; n0 < L; ++n0) {
      MomentumPoint p;
      p.n = {n0, n1};
      double best = std::numeric_limits<double>::infinity();
      for (int m0 = -1; m0 <= 1; ++m0) {
        for (int m1 = -m1_range; m1 <= m1_range; ++m1) {
          const Eigen::Vector2d frac(static_cast<double>(n0 + m0 * L) / L,
                                     static_cast<double>(n1 + m1 * L) / L);
          Eigen::Vector2d k = b * frac;
          if (spec.dim() == 1) k.y() = 0.0;
          const double norm = k.norm();
          if (norm < best - 1e-12) {
            best = norm;
            p.k = k;
          }
        }
      }
      p.abs_k = best;
      grid.points.push_back(p);
    }
  }

  double smallest = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < grid.points.size(); ++i) {
    if (grid.points[i].abs_k < smallest - 1e-12) {
      smallest = grid.points[i].abs_k;
      grid.k1 = i;
    }
  }
  return grid;
}

FourierSums::FourierSums(const LatticeSpec& spec) : spec_(spec), nsub_(spec.sublattices()) {
  spec_.validate();
  const int L = spec_.L;
  unit_roots_.resize(static_cast<std::size_t>(L));
  for (int m = 0; m < L; ++m) unit_roots_[static_cast<std::size_t>(m)] = std::polar(1.0, kTwoPi * m / L);

  intra_terms_.assign(static_cast<std::size_t>(nsub_ * nsub_), {});
  inter_terms_.assign(static_cast<std::size_t>(nsub_ * nsub_), {});
  const int cells = spec_.cells_per_layer();
  for (int mu = 0; mu < nsub_; ++mu) {
    const SiteIndex ref{Layer::A, {0, 0}, mu};
    for (int nu = 0; nu < nsub_; ++nu) {
      auto& intra = intra_terms_[static_cast<std::size_t>(mu * nsub_ + nu)];
      auto& inter = inter_terms_[static_cast<std::size_t>(mu * nsub_ + nu)];
      for (int c = 0; c < cells; ++c) {
        const SiteIndex other{Layer::A, {c % L, spec_.dim() == 1 ? 0 : c / L}, nu};
        const PlanarOffset off = planar_offset(spec_, ref, other);
        inter.push_back({off.cell, off.length_sq});
        if (!(mu == nu && c == 0)) intra.push_back({off.cell, off.length_sq});
      }
    }
  }
}

cplx FourierSums::phase(const MomentumPoint& k, const std::array<int, 2>& cell, int mu, int nu) const {
  const int L = spec_.L;
  const long long idx = static_cast<long long>(k.n[0]) * cell[0] + static_cast<long long>(k.n[1]) * cell[1];
  const int m = static_cast<int>(((idx % L) + L) % L);
  cplx ph = unit_roots_[static_cast<std::size_t>(m)];
  if (nsub_ > 1) {
    const auto om = sublattice_offset(spec_.geometry, mu);
    const auto on = sublattice_offset(spec_.geometry, nu);
    const double frac = k.n[0] * (on[0] - om[0]) + k.n[1] * (on[1] - om[1]);
    ph *= std::polar(1.0, kTwoPi * frac / L);
  }
  return ph;
}

Eigen::MatrixXcd FourierSums::intralayer_block(const MomentumPoint& k) const {
  Eigen::MatrixXcd block(nsub_, nsub_);
  for (int mu = 0; mu < nsub_; ++mu) {
    for (int nu = 0; nu < nsub_; ++nu) {
      cplx acc{0.0, 0.0};
      for (const Term& t : intra_terms_[static_cast<std::size_t>(mu * nsub_ + nu)]) {
        acc += coupling_strength(std::sqrt(t.length_sq), spec_.alpha) * phase(k, t.cell, mu, nu);
      }
      block(mu, nu) = acc;
    }
  }
  return block;
}

Eigen::MatrixXcd FourierSums::interlayer_block(const MomentumPoint& k, double a_z) const {
  Eigen::MatrixXcd block(nsub_, nsub_);
  const double az2 = a_z * a_z;
  const double half_alpha = 0.5 * spec_.alpha;
  for (int mu = 0; mu < nsub_; ++mu) {
    for (int nu = 0; nu < nsub_; ++nu) {
      cplx acc{0.0, 0.0};
      for (const Term& t : inter_terms_[static_cast<std::size_t>(mu * nsub_ + nu)]) {
        acc += std::pow(t.length_sq + az2, -half_alpha) * phase(k, t.cell, mu, nu);
      }
      block(mu, nu) = spec_.lambda * acc;
    }
  }
  return block;
}

std::vector<Eigen::MatrixXcd> FourierSums::interlayer_blocks(const std::vector<MomentumPoint>& ks,
                                                            double a_z) const {
  const double az2 = a_z * a_z;
  const double half_alpha = 0.5 * spec_.alpha;
  std::vector<std::vector<double>> weights(inter_terms_.size());
  for (std::size_t b = 0; b < inter_terms_.size(); ++b) {
    weights[b].reserve(inter_terms_[b].size());
    for (const Term& t : inter_terms_[b]) weights[b].push_back(spec_.lambda * std::pow(t.length_sq + az2, -half_alpha));
  }
  std::vector<Eigen::MatrixXcd> blocks;
  blocks.reserve(ks.size());
  for (const MomentumPoint& k : ks) {
    Eigen::MatrixXcd block(nsub_, nsub_);
    for (int mu = 0; mu < nsub_; ++mu) {
      for (int nu = 0; nu < nsub_; ++nu) {
        const auto b = static_cast<std::size_t>(mu * nsub_ + nu);
        cplx acc{0.0, 0.0};
        for (std::size_t i = 0; i < inter_terms_[b].size(); ++i) {
          acc += weights[b][i] * phase(k, inter_terms_[b][i].cell, mu, nu);
        }
        block(mu, nu) = acc;
      }
    }
    blocks.push_back(std::move(block));
  }
  return blocks;
}

double fourier_intralayer(const LatticeSpec& spec, const MomentumPoint& k) {
  const FourierSums sums(spec);
  const Eigen::MatrixXcd block = sums.intralayer_block(k);
  const cplx total = block.row(0).sum();
  if (spec.boundary == Boundary::Periodic && spec.sublattices() == 1 &&
      std::abs(total.imag()) > 1e-10 * std::max(1.0, std::abs(total.real()))) {
    throw std::logic_error("intralayer transform has a non-vanishing imaginary part");
  }
  return total.real();
}

cplx fourier_interlayer(const LatticeSpec& spec, const MomentumPoint& k) {
  const FourierSums sums(spec);
  return sums.interlayer_block(k).row(0).sum();
}

QuasiEnergy quasi_energy(double eps, cplx omega) {
  const double disc = eps * eps - std::norm(omega);
  if (disc >= 0.0) return {std::sqrt(disc), 0.0};
  return {0.0, std::sqrt(-disc)};
}

std::vector<double> bdg_growth_rates(const Eigen::MatrixXcd& eps_tilde_k,
                                     const Eigen::VectorXd& eps_tilde_0_rows,
                                     const Eigen::MatrixXcd& omega_k) {
  const Eigen::Index n = eps_tilde_k.rows();
  Eigen::MatrixXcd h = -eps_tilde_k;
  for (Eigen::Index i = 0; i < n; ++i) h(i, i) += eps_tilde_0_rows(i);

  Eigen::MatrixXcd m(2 * n, 2 * n);
  m.topLeftCorner(n, n) = h;
  m.topRightCorner(n, n) = -omega_k;
  m.bottomLeftCorner(n, n) = omega_k.adjoint();
  m.bottomRightCorner(n, n) = -h;

  std::vector<double> rates;
  if (n == 1) {
    // closed form avoids eigen-solver round-off in the scalar case
    rates.push_back(quasi_energy(h(0, 0).real(), omega_k(0, 0)).growth_rate);
    return rates;
  }
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> solver(m, false);
  if (solver.info() != Eigen::Success) throw std::runtime_error("Bogoliubov eigen-solver failed");
  const double floor = 1e-12 * (1.0 + m.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < 2 * n; ++i) {
    const double im = solver.eigenvalues()(i).imag();
    rates.push_back(im > floor ? im : 0.0);
  }
  std::sort(rates.begin(), rates.end(), std::greater<>());
  rates.resize(static_cast<std::size_t>(n));
  return rates;
}

namespace {

Eigen::VectorXd row_sums_at_zero(const FourierSums& sums) {
  const Eigen::MatrixXcd e0 = sums.intralayer_block(MomentumPoint{});
  Eigen::VectorXd rows(e0.rows());
  for (Eigen::Index i = 0; i < e0.rows(); ++i) rows(i) = e0.row(i).sum().real();
  return rows;
}

}  // namespace

std::vector<double> stability_spectrum(const FourierSums& sums, const MomentumPoint& k, double a_z) {
  return bdg_growth_rates(sums.intralayer_block(k), row_sums_at_zero(sums), sums.interlayer_block(k, a_z));
}

std::vector<double> stability_spectrum(const LatticeSpec& spec, const MomentumPoint& k) {
  const FourierSums sums(spec);
  return stability_spectrum(sums, k, spec.a_z);
}

DispersionData dispersion(const LatticeSpec& spec) {
  const FourierSums sums(spec);
  const MomentumGrid grid = momentum_grid(spec);
  const Eigen::VectorXd rows0 = row_sums_at_zero(sums);

  DispersionData data;
  data.spec = spec;
  data.k1 = grid.k1;
  data.points.reserve(grid.points.size());
  for (const MomentumPoint& k : grid.points) {
    const Eigen::MatrixXcd e = sums.intralayer_block(k);
    const Eigen::MatrixXcd w = sums.interlayer_block(k);
    DispersionPoint p;
    p.k = k;
    if (sums.sublattices() == 1) {
      p.eps_tilde = e(0, 0).real();
      p.eps = rows0(0) - p.eps_tilde;
      p.omega = w(0, 0);
    } else {
      Eigen::MatrixXcd h = -e;
      for (Eigen::Index i = 0; i < h.rows(); ++i) h(i, i) += rows0(i);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(h);
      const Eigen::VectorXcd v = solver.eigenvectors().col(0);
      p.eps = solver.eigenvalues()(0);
      p.eps_tilde = rows0(0) - p.eps;
      p.omega = v.adjoint() * w * v;
    }
    p.growth_rate = bdg_growth_rates(e, rows0, w).front();
    data.points.push_back(p);
  }
  return data;
}

StabilityReport unstable_modes(const LatticeSpec& spec) {
  const DispersionData data = dispersion(spec);
  StabilityReport report;
  bool zero_unstable = false;
  for (const DispersionPoint& p : data.points) {
    if (p.growth_rate > kGrowthTolerance) {
      report.unstable_k.push_back(p.k);
      report.growth_rates.push_back(p.growth_rate);
      if (p.k.n[0] == 0 && p.k.n[1] == 0) zero_unstable = true;
    }
  }
  report.is_fully_collective = zero_unstable && report.unstable_k.size() == 1;
  return report;
}

namespace {

// Largest finite-k growth rate as a function of a_z, with the a_z-independent
// intralayer pieces cached.
class FiniteKInstability {
 public:
  explicit FiniteKInstability(const LatticeSpec& spec) : sums_(spec), grid_(momentum_grid(spec)) {
    rows0_ = row_sums_at_zero(sums_);
    finite_k_.assign(grid_.points.begin() + 1, grid_.points.end());
    for (const MomentumPoint& k : finite_k_) intra_.push_back(sums_.intralayer_block(k));
  }

  bool unstable(double a_z) const {
    const std::vector<Eigen::MatrixXcd> blocks = sums_.interlayer_blocks(finite_k_, a_z);
    for (std::size_t i = 0; i < finite_k_.size(); ++i) {
      const Eigen::MatrixXcd& w = blocks[i];
      const Eigen::MatrixXcd& e = intra_[i];
      double rate = 0.0;
      if (sums_.sublattices() == 1) {
        rate = quasi_energy(rows0_(0) - e(0, 0).real(), w(0, 0)).growth_rate;
      } else {
        rate = bdg_growth_rates(e, rows0_, w).front();
      }
      if (rate > kGrowthTolerance) return true;
    }
    return false;
  }

 private:
  FourierSums sums_;
  MomentumGrid grid_;
  std::vector<MomentumPoint> finite_k_;
  Eigen::VectorXd rows0_;
  std::vector<Eigen::MatrixXcd> intra_;
};

}  // namespace

double critical_a_z(Geometry geometry, int L, double alpha, double lambda, Boundary boundary) {
  if (!(lambda > 0.0)) throw std::invalid_argument("critical_a_z requires lambda > 0");
  LatticeSpec spec;
  spec.geometry = geometry;
  spec.L = L;
  spec.alpha = alpha;
  spec.lambda = lambda;
  spec.boundary = boundary;
  spec.a_z = 1.0;
  spec.validate();

  const FiniteKInstability probe(spec);
  double lo = 0.1;
  double hi = 10.0 * L;
  while (!probe.unstable(lo)) {
    lo *= 0.5;
    if (lo < 1e-8) throw NoTransitionError("no transition in bracket: finite-k modes stable for all a_z");
  }
  while (probe.unstable(hi)) {
    hi *= 2.0;
    if (hi > 1e8 * L) throw NoTransitionError("no transition in bracket: finite-k modes unstable for all a_z");
  }
  while (hi - lo > 1e-6 * hi) {
    const double mid = 0.5 * (lo + hi);
    (probe.unstable(mid) ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

PowerLaw fit_dispersion_exponent(const DispersionData& data, double k_max) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (const DispersionPoint& p : data.points) {
    if (p.k.abs_k > 0.0 && p.k.abs_k <= k_max && p.eps > 0.0) {
      const double x = std::log(p.k.abs_k);
      const double y = std::log(p.eps);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      ++n;
    }
  }
  if (n < 4) throw std::invalid_argument("fit_dispersion_exponent: fewer than 4 points with 0 < |k| <= k_max");
  const double det = n * sxx - sx * sx;
  if (!(std::abs(det) > 0.0)) throw std::invalid_argument("fit_dispersion_exponent: degenerate |k| values");
  const double slope = (n * sxy - sx * sy) / det;
  const double intercept = (sy - slope * sx) / n;
  return {std::exp(intercept), slope};
}

CriticalScaling predicted_critical_scaling(double alpha, int d) {
  if (!(alpha > d)) throw std::invalid_argument("predicted_critical_scaling: alpha <= d (interlayer sum not integrable)");
  const double crossover = d + 2.0;
  if (std::abs(alpha - crossover) < 1e-12) return {ScalingKind::LogCorrected, 1.0};
  if (alpha < crossover) return {ScalingKind::Linear, 1.0};
  return {ScalingKind::Power, 2.0 / (alpha - d)};
}

double TmsPrediction::var_minus(double t) const { return 0.5 * N * std::exp(-rate() * t); }
double TmsPrediction::var_plus(double t) const { return 0.5 * N * std::exp(rate() * t); }

TmsPrediction tms_prediction(const LatticeSpec& spec) {
  const FourierSums sums(spec);
  const cplx omega0 = sums.interlayer_block(MomentumPoint{}).row(0).sum();
  TmsPrediction p;
  p.N = spec.spins_per_layer();
  p.v_av = std::abs(omega0) / p.N;
  return p;
}

}  // namespace bsq
