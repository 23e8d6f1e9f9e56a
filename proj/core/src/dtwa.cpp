#include "bilayer/dtwa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <type_traits>

#include <boost/numeric/odeint.hpp>
#include <spdlog/spdlog.h>

#include "bilayer/parallel.hpp"

namespace bsq {

namespace odeint = boost::numeric::odeint;

namespace {

using State = std::vector<double>;
using Stepper = odeint::runge_kutta_fehlberg78<State>;

const double kSpinNorm = std::sqrt(3.0) / 2.0;

std::uint32_t low_word(std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); }
std::uint32_t high_word(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

double hermite(double f0, double df0, double f1, double df1, double h, double theta) {
  const double t2 = theta * theta;
  const double t3 = t2 * theta;
  return (2 * t3 - 3 * t2 + 1) * f0 + (t3 - 2 * t2 + theta) * h * df0 + (-2 * t3 + 3 * t2) * f1 +
         (t3 - t2) * h * df1;
}

Observables hermite(const Observables& a, const Observables& da, const Observables& b,
                    const Observables& db, double h, double theta) {
  return {hermite(a.o_minus, da.o_minus, b.o_minus, db.o_minus, h, theta),
          hermite(a.o_plus, da.o_plus, b.o_plus, db.o_plus, h, theta),
          hermite(a.sz_a, da.sz_a, b.sz_a, db.sz_a, h, theta),
          hermite(a.sz_b, da.sz_b, b.sz_b, db.sz_b, h, theta),
          hermite(a.energy, da.energy, b.energy, db.energy, h, theta)};
}

double norm_drift(const Eigen::Map<const SpinMatrix>& s) {
  return (s.rowwise().norm().array() - kSpinNorm).abs().maxCoeff();
}

std::string describe_error(const char* what, double t) {
  std::ostringstream os;
  os << what << " at t = " << t;
  return os.str();
}

}  // namespace

void RunConfig::validate() const {
  if (n_traj < 2) throw std::invalid_argument("n_traj must be >= 2");
  if (!(t_max > 0.0) || !std::isfinite(t_max)) throw std::invalid_argument("t_max must be positive");
  if (!(output_stride > 0.0) || !std::isfinite(output_stride))
    throw std::invalid_argument("output_stride must be positive");
  if (t_max / output_stride > 1e6) throw std::invalid_argument("t_max / output_stride exceeds 1e6");
  if (!(rel_tol > 0.0) || !(abs_tol > 0.0)) throw std::invalid_argument("tolerances must be positive");
}

std::vector<double> output_times(const RunConfig& run) {
  run.validate();
  const auto n = static_cast<std::size_t>(std::floor(run.t_max / run.output_stride * (1.0 + 1e-12)));
  std::vector<double> t;
  t.reserve(n + 2);
  for (std::size_t k = 0; k <= n; ++k) t.push_back(static_cast<double>(k) * run.output_stride);
  if (run.t_max - t.back() > 1e-9 * run.t_max) {
    t.push_back(run.t_max);
  } else {
    t.back() = run.t_max;
  }
  return t;
}

SpinConfiguration sample_initial(const LatticeSpec& spec, std::uint64_t trajectory_index,
                                 std::uint64_t master_seed) {
  spec.validate();
  std::seed_seq seq{low_word(master_seed), high_word(master_seed), low_word(trajectory_index),
                    high_word(trajectory_index)};
  std::mt19937_64 rng(seq);

  SpinConfiguration c;
  c.sites_per_layer = spec.spins_per_layer();
  const int n = spec.total_spins();
  c.s.resize(n, 3);
  std::uint64_t bits = 0;
  int left = 0;
  auto next_bit = [&] {
    if (left == 0) {
      bits = rng();
      left = 64;
    }
    const bool b = (bits & 1u) != 0;
    bits >>= 1;
    --left;
    return b;
  };
  for (int i = 0; i < n; ++i) {
    c.s(i, 0) = next_bit() ? 0.5 : -0.5;
    c.s(i, 1) = next_bit() ? 0.5 : -0.5;
    c.s(i, 2) = i < c.sites_per_layer ? 0.5 : -0.5;
  }
  return c;
}

SpinDynamics::SpinDynamics(const CouplingTable& table)
    : couplings_(Eigen::MatrixXd::Zero(table.n_sites, table.n_sites)),
      sites_per_layer_(table.sites_per_layer) {
  for (const auto* list : {&table.intra, &table.inter}) {
    for (const Coupling& c : *list) {
      couplings_(c.i, c.j) += c.strength;
      couplings_(c.j, c.i) += c.strength;
    }
  }
}

void SpinDynamics::field(const SpinMatrix& s, SpinMatrix& b) const {
  const int n = sites_per_layer_;
  b.resize(s.rows(), 3);
  b.leftCols<2>().noalias() = couplings_ * s.leftCols<2>();
  b.col(2).head(n).noalias() = couplings_.topLeftCorner(n, n) * s.col(2).head(n);
  b.col(2).tail(n).noalias() = couplings_.bottomRightCorner(n, n) * s.col(2).tail(n);
}

void SpinDynamics::rhs(const SpinMatrix& s, SpinMatrix& ds) const {
  ds.resize(s.rows(), 3);
  rhs(s.data(), ds.data());
}

void SpinDynamics::rhs(const double* s_ptr, double* ds_ptr) const {
  const Eigen::Index n = couplings_.rows();
  const Eigen::Map<const SpinMatrix> s(s_ptr, n, 3);
  Eigen::Map<SpinMatrix> ds(ds_ptr, n, 3);
  thread_local SpinMatrix b;
  field(s, b);
  const auto sx = s.col(0).array();
  const auto sy = s.col(1).array();
  const auto sz = s.col(2).array();
  ds.col(0).array() = sy * b.col(2).array() - sz * b.col(1).array();
  ds.col(1).array() = sz * b.col(0).array() - sx * b.col(2).array();
  ds.col(2).array() = sx * b.col(1).array() - sy * b.col(0).array();
}

double SpinDynamics::energy(const SpinMatrix& s) const {
  SpinMatrix b;
  field(s, b);
  return 0.5 * s.cwiseProduct(b).sum();
}

SpinConfiguration eom_rhs(const SpinConfiguration& config, const CouplingTable& table) {
  const SpinDynamics dyn(table);
  SpinConfiguration out;
  out.sites_per_layer = config.sites_per_layer;
  dyn.rhs(config.s, out.s);
  return out;
}

Observables observe(const SpinMatrix& s, int n, double energy) {
  Observables o;
  o.o_minus = s.col(0).head(n).sum() + s.col(1).tail(n).sum();
  o.o_plus = s.col(1).head(n).sum() + s.col(0).tail(n).sum();
  o.sz_a = s.col(2).head(n).sum();
  o.sz_b = s.col(2).tail(n).sum();
  o.energy = energy;
  return o;
}

IntegrationError::IntegrationError(std::uint64_t trajectory, double time, const std::string& what)
    : std::runtime_error("trajectory " + std::to_string(trajectory) + ": " + what),
      trajectory_(trajectory),
      time_(time) {}

TrajectorySeries integrate_trajectory(const SpinConfiguration& config, const SpinDynamics& dyn,
                                      const RunConfig& run, std::uint64_t trajectory_index) {
  const std::vector<double> grid = output_times(run);
  const Eigen::Index n_sites = dyn.n_sites();
  if (config.n_sites() != n_sites || config.sites_per_layer != dyn.sites_per_layer())
    throw std::invalid_argument("integrate_trajectory: configuration does not match couplings");
  const int per_layer = dyn.sites_per_layer();

  auto system = [&dyn](const State& x, State& dxdt, double /*t*/) { dyn.rhs(x.data(), dxdt.data()); };
  auto controlled = odeint::make_controlled(run.abs_tol, run.rel_tol, Stepper());

  State x(config.s.data(), config.s.data() + config.s.size());
  State dxdt(x.size());
  system(x, dxdt, 0.0);

  auto snapshot = [&](const State& xs, const State& dxs, Observables& value, Observables& rate) {
    const Eigen::Map<const SpinMatrix> s(xs.data(), n_sites, 3);
    const Eigen::Map<const SpinMatrix> ds(dxs.data(), n_sites, 3);
    value = observe(s, per_layer, dyn.energy(s));
    rate = observe(ds, per_layer, 0.0);
  };

  TrajectorySeries out;
  out.t = grid;
  out.values.reserve(grid.size());
  Observables f0;
  Observables df0;
  snapshot(x, dxdt, f0, df0);
  out.values.push_back(f0);
  out.max_norm_drift = norm_drift(Eigen::Map<const SpinMatrix>(x.data(), n_sites, 3));

  const double t_end = grid.back();
  double t = 0.0;
  double dt = std::min(run.output_stride, 0.05);
  std::size_t next = 1;
  int rejected_in_row = 0;
  Observables f1;
  Observables df1;
  while (next < grid.size()) {
    const double t0 = t;
    const bool last = t + dt >= t_end;
    double step = last ? t_end - t : dt;
    const odeint::controlled_step_result res = controlled.try_step(system, x, dxdt, t, step);
    if (res == odeint::fail) {
      ++out.rejected_steps;
      dt = step;
      if (++rejected_in_row > 200 || dt < 1e-14 * std::max(1.0, t))
        throw IntegrationError(trajectory_index, t, describe_error("step size underflow", t));
      continue;
    }
    rejected_in_row = 0;
    ++out.accepted_steps;
    if (last) t = t_end;
    // keep the controller's proposal unless the step was shortened to hit t_end
    if (!last || step > dt) dt = step;
    system(x, dxdt, t);

    const Eigen::Map<const SpinMatrix> s(x.data(), n_sites, 3);
    if (!s.allFinite())
      throw IntegrationError(trajectory_index, t, describe_error("non-finite state", t));
    out.max_norm_drift = std::max(out.max_norm_drift, norm_drift(s));

    snapshot(x, dxdt, f1, df1);
    const double h = t - t0;
    while (next < grid.size() && grid[next] <= t) {
      const double theta = (grid[next] - t0) / h;
      out.values.push_back(grid[next] == t ? f1 : hermite(f0, df0, f1, df1, h, theta));
      ++next;
    }
    f0 = f1;
    df0 = df1;
  }
  return out;
}

TrajectorySeries integrate_trajectory(const SpinConfiguration& config, const CouplingTable& table,
                                      const RunConfig& run, std::uint64_t trajectory_index) {
  return integrate_trajectory(config, SpinDynamics(table), run, trajectory_index);
}

namespace {

// Per-time sums over a contiguous range of trajectories.
struct Accumulator {
  std::size_t count = 0;
  std::vector<double> om;
  std::vector<double> om2;

  explicit Accumulator(std::size_t n_t) : om(n_t, 0.0), om2(n_t, 0.0) {}
};

}  // namespace

EnsembleSeries run_ensemble(const LatticeSpec& spec, const RunConfig& run, int threads) {
  spec.validate();
  run.validate();
  if (threads <= 0) threads = worker_count();
  const SpinDynamics dyn(build_coupling_table(spec));
  const std::vector<double> grid = output_times(run);
  const std::size_t n_t = grid.size();

  EnsembleSeries es;
  es.spec = spec;
  es.run = run;
  es.t = grid;

  const std::size_t n_blocks = std::min<std::size_t>(64, run.n_traj);
  std::vector<Accumulator> blocks(n_blocks, Accumulator(n_t));
  std::vector<double> sum_op(n_t, 0.0);
  std::vector<double> sum_op2(n_t, 0.0);
  std::vector<double> sum_sza(n_t, 0.0);
  std::vector<double> sum_szb(n_t, 0.0);
  std::vector<double> sum_e(n_t, 0.0);

  // Bounded memory: at most ~32M doubles of buffered trajectory output.
  const std::size_t budget = std::max<std::size_t>(1, (std::size_t{1} << 25) / (5 * n_t));
  const std::size_t batch = std::clamp<std::size_t>(budget, 1, std::max<std::size_t>(64, 16 * threads));
  const auto max_failures = static_cast<std::size_t>(std::floor(kMaxFailureFraction * run.n_traj));

  std::vector<std::optional<TrajectorySeries>> results(batch);
  for (std::size_t start = 0; start < run.n_traj; start += batch) {
    const std::size_t len = std::min(batch, run.n_traj - start);
    parallel_for(len, threads, [&](std::size_t k) {
      const std::uint64_t index = start + k;
      try {
        results[k] = integrate_trajectory(sample_initial(spec, index, run.master_seed), dyn, run, index);
      } catch (const IntegrationError& e) {
        spdlog::warn("{}", e.what());
        results[k].reset();
      }
    });
    // fixed-order reduction
    for (std::size_t k = 0; k < len; ++k) {
      const std::size_t index = start + k;
      if (!results[k]) {
        if (++es.n_failed > max_failures) {
          throw std::runtime_error("run_ensemble: " + std::to_string(es.n_failed) +
                                   " trajectories failed (limit " + std::to_string(max_failures) + ")");
        }
        continue;
      }
      const TrajectorySeries& tr = *results[k];
      Accumulator& acc = blocks[index * n_blocks / run.n_traj];
      ++acc.count;
      for (std::size_t i = 0; i < n_t; ++i) {
        const Observables& o = tr.values[i];
        acc.om[i] += o.o_minus;
        acc.om2[i] += o.o_minus * o.o_minus;
        sum_op[i] += o.o_plus;
        sum_op2[i] += o.o_plus * o.o_plus;
        sum_sza[i] += o.sz_a;
        sum_szb[i] += o.sz_b;
        sum_e[i] += o.energy;
      }
      es.max_norm_drift = std::max(es.max_norm_drift, tr.max_norm_drift);
      results[k].reset();
    }
  }

  const std::size_t n = run.n_traj - es.n_failed;
  if (n < 2) throw std::runtime_error("run_ensemble: fewer than two successful trajectories");
  es.n_traj = n;
  const auto nd = static_cast<double>(n);
  auto variance = [](double s, double q, double m) { return (q - s * s / m) / (m - 1.0); };

  es.mean_O_minus.resize(n_t);
  es.var_O_minus.resize(n_t);
  es.var_O_plus.resize(n_t);
  es.sz_a.resize(n_t);
  es.sz_b.resize(n_t);
  es.energy_mean.resize(n_t);
  es.var_stderr.resize(n_t);
  std::vector<double> loo(n_blocks);
  for (std::size_t i = 0; i < n_t; ++i) {
    double s = 0.0;
    double q = 0.0;
    for (const Accumulator& b : blocks) {
      s += b.om[i];
      q += b.om2[i];
    }
    es.mean_O_minus[i] = s / nd;
    es.var_O_minus[i] = variance(s, q, nd);
    es.var_O_plus[i] = variance(sum_op[i], sum_op2[i], nd);
    es.sz_a[i] = sum_sza[i] / nd;
    es.sz_b[i] = sum_szb[i] / nd;
    es.energy_mean[i] = sum_e[i] / nd;

    // delete-one-block jackknife
    std::size_t used = 0;
    double mean_loo = 0.0;
    for (const Accumulator& b : blocks) {
      const auto m = static_cast<double>(n - b.count);
      if (b.count == 0 || m < 2.0) continue;
      loo[used] = variance(s - b.om[i], q - b.om2[i], m);
      mean_loo += loo[used];
      ++used;
    }
    double err = 0.0;
    if (used >= 2) {
      mean_loo /= static_cast<double>(used);
      for (std::size_t g = 0; g < used; ++g) err += (loo[g] - mean_loo) * (loo[g] - mean_loo);
      err = std::sqrt(err * static_cast<double>(used - 1) / static_cast<double>(used));
    }
    es.var_stderr[i] = err;
  }
  return es;
}

MinimalVariance minimal_variance(const std::vector<double>& t, const std::vector<double>& var,
                                 const std::vector<double>& errors) {
  if (t.size() != var.size() || (!errors.empty() && errors.size() != var.size()))
    throw std::invalid_argument("minimal_variance: array lengths differ");
  if (t.size() < 3) throw std::invalid_argument("minimal_variance: need at least 3 time points");
  const auto it = std::min_element(var.begin(), var.end());
  const auto i = static_cast<std::size_t>(it - var.begin());
  const auto err_at = [&](std::size_t k) { return errors.empty() ? 0.0 : errors[k]; };
  if (i == 0 || !(*it > 0.0) || *it == var.front()) {
    throw FlatSeriesError("minimal_variance: variance never drops below its initial value");
  }
  MinimalVariance mv;
  if (i + 1 == t.size()) {
    spdlog::warn("minimal_variance: minimum at the end of the window (t = {}); increase t_max", t.back());
    mv.t_min = t.back();
    mv.var_min = var.back();
    mv.std_error = err_at(i);
    mv.at_window_end = true;
    return mv;
  }

  // parabola through three points of log Var
  const double x0 = t[i - 1];
  const double x1 = t[i];
  const double x2 = t[i + 1];
  const double y0 = std::log(var[i - 1]);
  const double y1 = std::log(var[i]);
  const double y2 = std::log(var[i + 1]);
  const double d01 = (y1 - y0) / (x1 - x0);
  const double d12 = (y2 - y1) / (x2 - x1);
  const double a = (d12 - d01) / (x2 - x0);
  double tv = x1;
  double yv = y1;
  if (a > 0.0) {
    const double b = d01 - a * (x0 + x1);
    tv = std::clamp(-b / (2.0 * a), x0, x2);
    yv = y1 + (tv - x1) * (d01 + a * (tv - x0));
  }
  mv.t_min = tv;
  mv.var_min = std::min(std::exp(yv), var[i]);
  // relative error interpolated between the bracketing grid points
  const std::size_t lo = tv < x1 ? i - 1 : i;
  const double w = (tv - t[lo]) / (t[lo + 1] - t[lo]);
  const double rel = (1.0 - w) * err_at(lo) / var[lo] + w * err_at(lo + 1) / var[lo + 1];
  mv.std_error = rel * mv.var_min;
  return mv;
}

MinimalVariance minimal_variance(const EnsembleSeries& series) {
  return minimal_variance(series.t, series.var_O_minus, series.var_stderr);
}

double sensitivity(const EnsembleSeries& series, double t) {
  if (series.t.empty()) throw std::invalid_argument("sensitivity: empty series");
  if (t < series.t.front() || t > series.t.back()) throw std::out_of_range("sensitivity: t outside the series");
  auto it = std::upper_bound(series.t.begin(), series.t.end(), t);
  const std::size_t hi = it == series.t.end() ? series.t.size() - 1 : static_cast<std::size_t>(it - series.t.begin());
  const std::size_t lo = hi == 0 ? 0 : hi - 1;
  const double w = hi == lo ? 0.0 : (t - series.t[lo]) / (series.t[hi] - series.t[lo]);
  auto lerp = [&](const std::vector<double>& v) { return (1.0 - w) * v[lo] + w * v[hi]; };
  const double pol = lerp(series.sz_a) - lerp(series.sz_b);
  if (std::abs(pol) < 1e-12) throw std::domain_error("sensitivity: vanishing polarization");
  return lerp(series.var_O_minus) / (pol * pol);
}

}  // namespace bsq
