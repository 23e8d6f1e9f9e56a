#include "bilayer/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>
#include <spdlog/spdlog.h>

namespace bsq {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Linear interpolation over a sorted abscissa; queries must be non-decreasing
// for the cursor to stay cheap, but any order is handled.
class Interpolant {
 public:
  explicit Interpolant(const std::vector<double>& x) : x_(x) {}

  // Returns the segment index k and weight w with value (1-w) v[k] + w v[k+1].
  std::pair<std::size_t, double> locate(double q) {
    if (q < x_[k_]) k_ = 0;
    while (k_ + 2 < x_.size() && x_[k_ + 1] < q) ++k_;
    const double w = (q - x_[k_]) / (x_[k_ + 1] - x_[k_]);
    return {k_, std::clamp(w, 0.0, 1.0)};
  }

 private:
  const std::vector<double>& x_;
  std::size_t k_ = 0;
};

double lerp(const std::vector<double>& v, std::pair<std::size_t, double> at) {
  return (1.0 - at.second) * v[at.first] + at.second * v[at.first + 1];
}

// Distance from `center` to where f first reaches `level`, searching in
// direction `dir` up to `limit`. Returns {distance, bounded}.
std::pair<double, bool> crossing(const std::function<double(double)>& f, double center, double dir, double limit,
                                 double level, double step) {
  double pos = center;
  for (;;) {
    const double next = pos + dir * step;
    const bool beyond = dir > 0 ? next >= limit : next <= limit;
    const double probe = beyond ? limit : next;
    if (f(probe) >= level) {
      double a = pos;
      double b = probe;
      for (int it = 0; it < 60 && std::abs(b - a) > 1e-9; ++it) {
        const double m = 0.5 * (a + b);
        (f(m) >= level ? b : a) = m;
      }
      return {std::abs(0.5 * (a + b) - center), true};
    }
    if (beyond) return {std::abs(limit - center), false};
    pos = probe;
  }
}

double safe_cost(const std::vector<DataSet>& datasets, double d_x, double d_y) {
  try {
    const CostDetail c = cost_function_detail(datasets, d_x, d_y);
    return std::isfinite(c.value) ? c.value : kInf;
  } catch (const CollapseError&) {
    return kInf;
  }
}

// Nelder-Mead simplex for a 2-parameter objective.
std::array<double, 2> nelder_mead(const std::function<double(const std::array<double, 2>&)>& f,
                                  std::array<double, 2> start, std::array<double, 2> scale) {
  using P = std::array<double, 2>;
  std::array<P, 3> s{start, P{start[0] + scale[0], start[1]}, P{start[0], start[1] + scale[1]}};
  std::array<double, 3> v{f(s[0]), f(s[1]), f(s[2])};
  auto comb = [](const P& a, const P& b, double t) { return P{a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])}; };
  for (int it = 0; it < 1000; ++it) {
    std::array<int, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int a, int b) { return v[a] < v[b]; });
    const int best = order[0];
    const int mid = order[1];
    const int worst = order[2];
    const double size = std::max({std::abs(s[mid][0] - s[best][0]), std::abs(s[worst][0] - s[best][0]),
                                  std::abs(s[mid][1] - s[best][1]), std::abs(s[worst][1] - s[best][1])});
    if (size < 1e-7) break;
    const P centroid{0.5 * (s[best][0] + s[mid][0]), 0.5 * (s[best][1] + s[mid][1])};
    const P refl = comb(centroid, s[worst], -1.0);
    const double fr = f(refl);
    if (fr < v[best]) {
      const P exp = comb(centroid, s[worst], -2.0);
      const double fe = f(exp);
      if (fe < fr) {
        s[worst] = exp;
        v[worst] = fe;
      } else {
        s[worst] = refl;
        v[worst] = fr;
      }
    } else if (fr < v[mid]) {
      s[worst] = refl;
      v[worst] = fr;
    } else {
      const bool outside = fr < v[worst];
      const P con = outside ? comb(centroid, refl, 0.5) : comb(centroid, s[worst], 0.5);
      const double fc = f(con);
      if (fc < std::min(fr, v[worst])) {
        s[worst] = con;
        v[worst] = fc;
      } else {
        for (int k : {mid, worst}) {
          s[k] = comb(s[best], s[k], 0.5);
          v[k] = f(s[k]);
        }
      }
    }
  }
  const auto it = std::min_element(v.begin(), v.end());
  return s[static_cast<std::size_t>(it - v.begin())];
}

}  // namespace

void DataSet::validate() const {
  if (x.size() < 2 || y.size() != x.size() || sigma.size() != x.size())
    throw std::invalid_argument("DataSet: x, y and sigma need equal length >= 2");
  for (std::size_t i = 0; i + 1 < x.size(); ++i)
    if (!(x[i + 1] > x[i])) throw std::invalid_argument("DataSet: x must be strictly increasing");
  for (double s : sigma)
    if (!(s > 0.0)) throw std::invalid_argument("DataSet: sigma must be positive");
  if (!(label > 0.0)) throw std::invalid_argument("DataSet: label must be positive");
}

PowerLawFit fit_common_power_law(const std::vector<std::vector<PowerLawPoint>>& groups) {
  std::size_t n = 0;
  bool weighted = true;
  for (const auto& g : groups) {
    for (const auto& pt : g) {
      if (!(pt.y > 0.0)) throw std::invalid_argument("fit_power_law: y must be positive");
      if (!(pt.n > 0.0)) throw std::invalid_argument("fit_power_law: n must be positive");
      if (!(pt.sigma > 0.0)) weighted = false;
      ++n;
    }
  }
  const auto n_groups = static_cast<Eigen::Index>(groups.size());
  if (n_groups == 0 || n < static_cast<std::size_t>(n_groups) + 1)
    throw std::invalid_argument("fit_power_law: need more points than groups");

  // columns: one intercept per group, then the common slope
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), n_groups + 1);
  Eigen::VectorXd y(static_cast<Eigen::Index>(n));
  Eigen::VectorXd w(static_cast<Eigen::Index>(n));
  Eigen::Index row = 0;
  for (Eigen::Index g = 0; g < n_groups; ++g) {
    for (const auto& pt : groups[static_cast<std::size_t>(g)]) {
      X(row, g) = 1.0;
      X(row, n_groups) = std::log(pt.n);
      y[row] = std::log(pt.y);
      const double rel = weighted ? pt.sigma / pt.y : 1.0;
      w[row] = 1.0 / (rel * rel);
      ++row;
    }
  }
  const Eigen::MatrixXd A = X.transpose() * w.asDiagonal() * X;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 1e-12 * ldlt.vectorD().maxCoeff())
    throw std::invalid_argument("fit_power_law: degenerate abscissae");
  const Eigen::VectorXd beta = ldlt.solve(X.transpose() * w.asDiagonal() * y);
  const Eigen::VectorXd resid = y - X * beta;
  const double chi2 = resid.cwiseProduct(resid).dot(w);
  const auto dof = static_cast<double>(n) - static_cast<double>(n_groups + 1);
  Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(n_groups + 1, n_groups + 1));
  if (!weighted && dof > 0) cov *= chi2 / dof;

  PowerLawFit fit;
  fit.exponent = beta[n_groups];
  fit.uncertainty = std::sqrt(std::max(0.0, cov(n_groups, n_groups)));
  fit.prefactor = std::exp(beta[0]);
  fit.chi2_reduced = dof > 0 ? chi2 / dof : 0.0;
  fit.points_used = n;
  return fit;
}

PowerLawFit fit_power_law(const std::vector<PowerLawPoint>& points) {
  if (points.size() < 3) throw std::invalid_argument("fit_power_law: need at least 3 points");
  return fit_common_power_law({points});
}

double detect_transition(std::vector<TransitionPoint> curve, double threshold) {
  if (curve.size() < 2) throw std::invalid_argument("detect_transition: need at least 2 points");
  std::sort(curve.begin(), curve.end(), [](const auto& a, const auto& b) { return a.x < b.x; });
  auto significant = [&](const TransitionPoint& pt) { return pt.p > threshold && pt.p > 2.0 * pt.uncertainty; };
  std::ptrdiff_t last = -1;
  for (std::size_t i = 0; i < curve.size(); ++i)
    if (significant(curve[i])) last = static_cast<std::ptrdiff_t>(i);
  if (last < 0) throw TransitionError("no partially collective phase in range");
  if (static_cast<std::size_t>(last) + 1 == curve.size()) throw TransitionError("no collective phase in range");
  const TransitionPoint& a = curve[static_cast<std::size_t>(last)];
  const TransitionPoint& b = curve[static_cast<std::size_t>(last) + 1];
  if (b.p >= threshold) return b.x;
  return a.x + (a.p - threshold) / (a.p - b.p) * (b.x - a.x);
}

CostDetail cost_function_detail(const std::vector<DataSet>& datasets, double d_x, double d_y) {
  if (datasets.size() < 2) throw std::invalid_argument("cost_function: need at least 2 datasets");
  for (const auto& d : datasets) d.validate();
  const std::size_t m = datasets.size();
  std::vector<double> fx(m);
  std::vector<double> fy(m);
  for (std::size_t i = 0; i < m; ++i) {
    fx[i] = std::pow(datasets[i].label, d_x);
    fy[i] = std::pow(datasets[i].label, d_y);
  }

  CostDetail out;
  double sum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = i + 1; k < m; ++k) {
      const DataSet& a = datasets[i];
      const DataSet& b = datasets[k];
      const double lo = std::max(a.x.front() * fx[i], b.x.front() * fx[k]);
      const double hi = std::min(a.x.back() * fx[i], b.x.back() * fx[k]);
      if (!(hi > lo)) {
        ++out.pairs_skipped;
        continue;
      }
      ++out.pairs_used;
      const std::size_t n = std::max(a.x.size(), b.x.size());
      Interpolant ia(a.x);
      Interpolant ib(b.x);
      for (std::size_t j = 0; j < n; ++j) {
        const double x = j + 1 == n ? hi : lo + (hi - lo) * static_cast<double>(j) / static_cast<double>(n - 1);
        const auto pa = ia.locate(x / fx[i]);
        const auto pb = ib.locate(x / fx[k]);
        const double diff = fy[i] * lerp(a.y, pa) - fy[k] * lerp(b.y, pb);
        const double sa = fy[i] * lerp(a.sigma, pa);
        const double sb = fy[k] * lerp(b.sigma, pb);
        sum += diff * diff / (sa * sa + sb * sb);
        ++out.terms;
      }
    }
  }
  if (out.pairs_used == 0) throw CollapseError("cost_function: no pair of datasets overlaps");
  out.value = sum / static_cast<double>(out.terms);
  return out;
}

double cost_function(const std::vector<DataSet>& datasets, double d_x, double d_y) {
  const CostDetail c = cost_function_detail(datasets, d_x, d_y);
  if (c.pairs_skipped > 0) spdlog::warn("cost_function: {} dataset pairs without overlap skipped", c.pairs_skipped);
  return c.value;
}

Collapse2dResult optimize_collapse_2d(const std::vector<DataSet>& datasets, const Collapse2dOptions& opt) {
  if (opt.grid < 3) throw std::invalid_argument("optimize_collapse_2d: grid needs at least 3 points per axis");
  for (const auto& d : datasets) d.validate();
  // S(d_V, d_tau): x scaled by a_Z^{-d_tau}, y by a_Z^{-d_V}
  auto S = [&](double dv, double dt) { return safe_cost(datasets, -dt, -dv); };
  const double hv = (opt.d_V.hi - opt.d_V.lo) / (opt.grid - 1);
  const double ht = (opt.d_tau.hi - opt.d_tau.lo) / (opt.grid - 1);

  double best = kInf;
  std::array<double, 2> arg{0.0, 0.0};
  for (int i = 0; i < opt.grid; ++i) {
    for (int j = 0; j < opt.grid; ++j) {
      const double dv = opt.d_V.lo + i * hv;
      const double dt = opt.d_tau.lo + j * ht;
      const double s = S(dv, dt);
      if (s < best) {
        best = s;
        arg = {dv, dt};
      }
    }
  }
  if (!std::isfinite(best)) throw CollapseError("optimize_collapse_2d: no overlapping collapse in the window");

  auto clamp_to_window = [&](const std::array<double, 2>& p) {
    return std::array<double, 2>{std::clamp(p[0], opt.d_V.lo, opt.d_V.hi), std::clamp(p[1], opt.d_tau.lo, opt.d_tau.hi)};
  };
  const auto refined = clamp_to_window(nelder_mead(
      [&](const std::array<double, 2>& p) {
        const auto q = clamp_to_window(p);
        return (q == p) ? S(p[0], p[1]) : kInf;
      },
      arg, {0.5 * hv, 0.5 * ht}));

  Collapse2dResult r;
  r.d_V = refined[0];
  r.d_tau = refined[1];
  r.S_min = S(r.d_V, r.d_tau);
  if (r.S_min > best) {
    r.d_V = arg[0];
    r.d_tau = arg[1];
    r.S_min = best;
  }
  const double level = r.S_min + 1.0;
  auto along_v = [&](double dv) { return S(dv, r.d_tau); };
  auto along_t = [&](double dt) { return S(r.d_V, dt); };
  const auto vp = crossing(along_v, r.d_V, 1.0, opt.d_V.hi, level, 0.25 * hv);
  const auto vm = crossing(along_v, r.d_V, -1.0, opt.d_V.lo, level, 0.25 * hv);
  const auto tp = crossing(along_t, r.d_tau, 1.0, opt.d_tau.hi, level, 0.25 * ht);
  const auto tm = crossing(along_t, r.d_tau, -1.0, opt.d_tau.lo, level, 0.25 * ht);
  r.unc_d_V = 0.5 * (vp.first + vm.first);
  r.unc_d_tau = 0.5 * (tp.first + tm.first);
  r.d_V_bounded = vp.second && vm.second;
  r.d_tau_bounded = tp.second && tm.second;
  if (!r.d_V_bounded || !r.d_tau_bounded)
    spdlog::warn("optimize_collapse_2d: S_min + 1 region reaches the search window (flat landscape)");
  return r;
}

std::vector<DataSet> rescale_full(const std::vector<SizedDataSet>& datasets, double d_V, double d_tau, double delta,
                                  double p, int d) {
  if (d != 1 && d != 2) throw std::invalid_argument("rescale_full: d must be 1 or 2");
  std::vector<DataSet> out;
  out.reserve(datasets.size());
  for (const auto& s : datasets) {
    if (!(s.n > 0.0) || !(s.a_z > 0.0)) throw std::invalid_argument("rescale_full: N and a_Z must be positive");
    const double fx = std::pow(s.a_z, -d_tau) * std::pow(s.n, delta * d_tau / d);
    const double fy = std::pow(s.a_z, -d_V) * std::pow(s.n, d_V / d - p);
    DataSet r;
    r.label = s.n;
    r.x.reserve(s.data.x.size());
    for (double v : s.data.x) r.x.push_back(v * fx);
    for (double v : s.data.y) r.y.push_back(v * fy);
    for (double v : s.data.sigma) r.sigma.push_back(v * fy);
    out.push_back(std::move(r));
  }
  return out;
}

Collapse1dResult optimize_collapse_1d(const std::vector<SizedDataSet>& datasets, double d_V, double d_tau, double p,
                                      int d, const Collapse1dOptions& opt) {
  if (opt.grid < 3) throw std::invalid_argument("optimize_collapse_1d: grid needs at least 3 points");
  // Pre-scale by a_Z and the delta-independent N factor; delta then enters
  // only through the x exponent d_x = delta d_tau / d on labels N.
  const std::vector<DataSet> base = rescale_full(datasets, d_V, d_tau, 0.0, p, d);
  auto S = [&](double delta) { return safe_cost(base, delta * d_tau / d, 0.0); };

  const double h = (opt.delta.hi - opt.delta.lo) / (opt.grid - 1);
  double best = kInf;
  int arg = 0;
  for (int i = 0; i < opt.grid; ++i) {
    const double s = S(opt.delta.lo + i * h);
    if (s < best) {
      best = s;
      arg = i;
    }
  }
  if (!std::isfinite(best)) throw CollapseError("optimize_collapse_1d: no overlapping collapse in the window");

  const double a = opt.delta.lo + std::max(0, arg - 1) * h;
  const double b = opt.delta.lo + std::min(opt.grid - 1, arg + 1) * h;
  const auto [x_min, s_min] = boost::math::tools::brent_find_minima(S, a, b, 40);
  Collapse1dResult r;
  r.delta = s_min <= best ? x_min : opt.delta.lo + arg * h;
  r.S_min = std::min(s_min, best);
  const double level = r.S_min + 1.0;
  const auto up = crossing(S, r.delta, 1.0, opt.delta.hi, level, 0.25 * h);
  const auto dn = crossing(S, r.delta, -1.0, opt.delta.lo, level, 0.25 * h);
  r.unc_delta = 0.5 * (up.first + dn.first);
  r.bounded = up.second && dn.second;
  if (!r.bounded) spdlog::warn("optimize_collapse_1d: S_min + 1 region reaches the search window (flat landscape)");
  return r;
}

NuEstimate derive_nu(double p, double d_V, double delta, int d, double unc_p, double unc_d_V, double unc_delta) {
  if (d != 1 && d != 2) throw std::invalid_argument("derive_nu: d must be 1 or 2");
  const double dd = d;
  NuEstimate e;
  e.nu = p - d_V * (1.0 - delta) / dd;
  const double g_dv = -(1.0 - delta) / dd;
  const double g_delta = d_V / dd;
  e.uncertainty = std::sqrt(unc_p * unc_p + g_dv * g_dv * unc_d_V * unc_d_V + g_delta * g_delta * unc_delta * unc_delta);
  return e;
}

std::vector<double> default_sigma(const std::vector<double>& var_min, double factor) {
  if (!(factor > 0.0)) throw std::invalid_argument("default_sigma: factor must be positive");
  std::vector<double> out;
  out.reserve(var_min.size());
  for (double v : var_min) {
    if (!(v > 0.0)) throw std::invalid_argument("default_sigma: Var_min must be positive");
    out.push_back(factor * v);
  }
  return out;
}

}  // namespace bsq
