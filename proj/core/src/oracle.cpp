#include "bilayer/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "bilayer/dtwa.hpp"

namespace bsq {

namespace {

using Vec = Eigen::VectorXcd;
constexpr int kKrylovDim = 30;
const cplx kI{0.0, 1.0};

void check_size(int n) {
  if (n > kMaxOracleSpins) {
    throw OracleSizeError("oracle supports at most " + std::to_string(kMaxOracleSpins) + " spins, got " +
                          std::to_string(n));
  }
}

bool up(std::size_t basis, int site) { return ((basis >> site) & 1u) != 0; }

// O- = sum_A sx + sum_B sy (minus = true) or O+ = sum_A sy + sum_B sx.
void apply_quadrature(const Vec& x, Vec& y, int n_spins, int per_layer, bool minus) {
  y.setZero(x.size());
  for (int site = 0; site < n_spins; ++site) {
    const bool in_a = site < per_layer;
    const bool use_x = in_a == minus;
    const std::size_t bit = std::size_t{1} << site;
    for (std::size_t b = 0; b < static_cast<std::size_t>(x.size()); ++b) {
      const cplx a = x[static_cast<Eigen::Index>(b)];
      if (a == 0.0) continue;
      // sx|s> = 1/2 |flipped>, sy|up> = i/2 |down>, sy|down> = -i/2 |up>
      const cplx c = use_x ? cplx{0.5, 0.0} : (up(b, site) ? cplx{0.0, 0.5} : cplx{0.0, -0.5});
      y[static_cast<Eigen::Index>(b ^ bit)] += c * a;
    }
  }
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

Moments quadrature_moments(const Vec& psi, int n_spins, int per_layer, bool minus, Vec& work) {
  apply_quadrature(psi, work, n_spins, per_layer, minus);
  Moments m;
  m.mean = psi.dot(work).real();  // dot conjugates the first argument
  m.var = work.squaredNorm() - m.mean * m.mean;
  return m;
}

// Lanczos basis for exp(i H tau) v, reused across trial step sizes.
class KrylovExponential {
 public:
  explicit KrylovExponential(const QuantumHamiltonian& h) : h_(h) {}

  void build(const Vec& v) {
    const Eigen::Index n = v.size();
    beta0_ = v.norm();
    basis_.resize(n, kKrylovDim);
    Eigen::VectorXd alpha(kKrylovDim);
    Eigen::VectorXd beta(kKrylovDim);
    basis_.col(0) = v / beta0_;
    Vec w(n);
    m_ = kKrylovDim;
    beta_next_ = 0.0;
    for (int j = 0; j < kKrylovDim; ++j) {
      h_.apply(basis_.col(j), w);
      alpha[j] = basis_.col(j).dot(w).real();
      // full reorthogonalisation keeps the propagator unitary to rounding
      for (int pass = 0; pass < 2; ++pass) {
        const Vec proj = basis_.leftCols(j + 1).adjoint() * w;
        w.noalias() -= basis_.leftCols(j + 1) * proj;
      }
      const double b = w.norm();
      if (j + 1 == kKrylovDim) {
        beta_next_ = b;
        break;
      }
      if (b < 1e-13 * std::max(1.0, std::abs(alpha[j]))) {
        m_ = j + 1;
        beta_next_ = 0.0;
        break;
      }
      beta[j] = b;
      basis_.col(j + 1) = w / b;
    }
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m_, m_);
    for (int j = 0; j < m_; ++j) {
      t(j, j) = alpha[j];
      if (j + 1 < m_) t(j, j + 1) = t(j + 1, j) = beta[j];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
    eigenvalues_ = es.eigenvalues();
    eigenvectors_ = es.eigenvectors();
  }

  /// Coefficients c = exp(i tau T) e1 and the a-posteriori error estimate.
  Vec coefficients(double tau, double& error) const {
    Vec phase(m_);
    for (int k = 0; k < m_; ++k) phase[k] = std::exp(kI * tau * eigenvalues_[k]) * eigenvectors_(0, k);
    Vec c = eigenvectors_.cast<cplx>() * phase;
    error = beta0_ * beta_next_ * std::abs(c[m_ - 1]);
    return c;
  }

  Vec apply(const Vec& c) const { return beta0_ * (basis_.leftCols(m_) * c); }

 private:
  const QuantumHamiltonian& h_;
  Eigen::MatrixXcd basis_;
  Eigen::VectorXd eigenvalues_;
  Eigen::MatrixXd eigenvectors_;
  double beta0_ = 0.0;
  double beta_next_ = 0.0;
  int m_ = 0;
};

}  // namespace

StateVector initial_state(const LatticeSpec& spec) {
  spec.validate();
  const int n = spec.total_spins();
  check_size(n);
  StateVector s;
  s.n_spins = n;
  s.sites_per_layer = spec.spins_per_layer();
  s.amplitudes = Vec::Zero(Eigen::Index{1} << n);
  const std::size_t index = (std::size_t{1} << s.sites_per_layer) - 1;  // layer A up
  s.amplitudes[static_cast<Eigen::Index>(index)] = 1.0;
  return s;
}

QuantumHamiltonian::QuantumHamiltonian(const CouplingTable& table)
    : n_spins_(table.n_sites), sites_per_layer_(table.sites_per_layer) {
  check_size(n_spins_);
  const std::size_t dim = std::size_t{1} << n_spins_;
  diagonal_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  for (const Coupling& c : table.intra) {
    for (std::size_t b = 0; b < dim; ++b) {
      diagonal_[static_cast<Eigen::Index>(b)] += (up(b, c.i) == up(b, c.j) ? 0.25 : -0.25) * c.strength;
    }
    flips_.push_back({(1u << c.i) | (1u << c.j), 0.5 * c.strength});
  }
  for (const Coupling& c : table.inter) flips_.push_back({(1u << c.i) | (1u << c.j), 0.5 * c.strength});
}

void QuantumHamiltonian::apply(const Eigen::VectorXcd& x, Eigen::VectorXcd& y) const {
  y = diagonal_.cast<cplx>().cwiseProduct(x);
  const auto dim = static_cast<std::uint32_t>(x.size());
  for (const FlipTerm& f : flips_) {
    for (std::uint32_t b = 0; b < dim; ++b) {
      const std::uint32_t masked = b & f.mask;
      if (masked == 0 || masked == f.mask) continue;  // flip-flop needs antiparallel spins
      y[b ^ f.mask] += f.amplitude * x[b];
    }
  }
}

double QuantumHamiltonian::expectation(const Eigen::VectorXcd& x) const {
  Vec y;
  apply(x, y);
  return x.dot(y).real();
}

Eigen::VectorXcd apply_hamiltonian(const StateVector& state, const CouplingTable& table) {
  const QuantumHamiltonian h(table);
  if (state.amplitudes.size() != (Eigen::Index{1} << h.n_spins()))
    throw std::invalid_argument("apply_hamiltonian: state size does not match the coupling table");
  Vec y;
  h.apply(state.amplitudes, y);
  return -kI * y;
}

ExactSeries evolve(const StateVector& state, const CouplingTable& table, const std::vector<double>& t_grid,
                   double tol) {
  const QuantumHamiltonian h(table);
  if (state.amplitudes.size() != (Eigen::Index{1} << h.n_spins()))
    throw std::invalid_argument("evolve: state size does not match the coupling table");
  if (t_grid.empty()) throw std::invalid_argument("evolve: empty time grid");
  const int n = h.n_spins();
  const int per_layer = h.sites_per_layer();

  ExactSeries out;
  Vec psi = state.amplitudes;
  Vec work;
  KrylovExponential krylov(h);
  double t = t_grid.front();
  double tau = 0.1;

  auto record = [&](double time) {
    const Moments om = quadrature_moments(psi, n, per_layer, true, work);
    const Moments op = quadrature_moments(psi, n, per_layer, false, work);
    double sza = 0.0;
    double szb = 0.0;
    for (Eigen::Index b = 0; b < psi.size(); ++b) {
      const double p = std::norm(psi[b]);
      if (p == 0.0) continue;
      for (int site = 0; site < n; ++site) {
        const double sz = up(static_cast<std::size_t>(b), site) ? 0.5 : -0.5;
        (site < per_layer ? sza : szb) += p * sz;
      }
    }
    out.t.push_back(time);
    out.mean_O_minus.push_back(om.mean);
    out.var_O_minus.push_back(om.var);
    out.var_O_plus.push_back(op.var);
    out.sz_a.push_back(sza);
    out.sz_b.push_back(szb);
    out.energy.push_back(h.expectation(psi));
    out.max_norm_error = std::max(out.max_norm_error, std::abs(psi.norm() - 1.0));
  };

  record(t);
  for (std::size_t k = 1; k < t_grid.size(); ++k) {
    const double target = t_grid[k];
    if (target < t) throw std::invalid_argument("evolve: time grid must be non-decreasing");
    while (t < target) {
      krylov.build(psi);
      double step = std::min(tau, target - t);
      for (;;) {
        double err = 0.0;
        const Vec c = krylov.coefficients(step, err);
        if (err <= tol) {
          psi = krylov.apply(c);
          t = (step == target - t) ? target : t + step;
          // grow cautiously when the estimate has room to spare
          tau = err < 0.1 * tol ? std::min(2.0 * step, 10.0) : step;
          break;
        }
        step *= 0.5;
        if (step < 1e-12) throw OracleToleranceError("evolve: Krylov step size underflow at t = " + std::to_string(t));
      }
    }
    record(t);
  }
  return out;
}

ExactSeries run_oracle(const LatticeSpec& spec, double t_max, double output_stride) {
  RunConfig run;
  run.t_max = t_max;
  run.output_stride = output_stride;
  return evolve(initial_state(spec), build_coupling_table(spec), output_times(run));
}

}  // namespace bsq
