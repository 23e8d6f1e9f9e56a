#include "doctest.h"

#include <cmath>

#include "bilayer/bogoliubov.hpp"

using namespace bsq;

namespace {

LatticeSpec make(Geometry g, int L, double a_z = 1.0, double alpha = 3.0, double lambda = 1.0,
                 Boundary b = Boundary::Periodic) {
  LatticeSpec s;
  s.geometry = g;
  s.L = L;
  s.a_z = a_z;
  s.alpha = alpha;
  s.lambda = lambda;
  s.boundary = b;
  return s;
}

// Direct sums over the coupling table from site 0 of layer A.
struct DirectSums {
  double eps_tilde = 0.0;
  cplx omega{0.0, 0.0};
};

DirectSums direct(const LatticeSpec& s, const MomentumPoint& k) {
  const CouplingTable t = build_coupling_table(s);
  const SiteIndex origin = site_at(s, 0);
  DirectSums out;
  auto phase = [&](int j) {
    const Eigen::Vector3d d = displacement(s, origin, site_at(s, j));
    return std::exp(cplx(0.0, k.k.x() * d.x() + k.k.y() * d.y()));
  };
  for (const auto& c : t.intra)
    if (c.i == 0) out.eps_tilde += (c.strength * phase(c.j)).real();
  for (const auto& c : t.inter)
    if (c.i == 0) out.omega += c.strength * phase(c.j);
  return out;
}

}  // namespace

TEST_CASE("momentum grid") {
  const MomentumGrid g1 = momentum_grid(make(Geometry::Ladder1D, 12));
  CHECK(g1.points.size() == 12);
  CHECK(g1.points[0].abs_k == 0.0);
  CHECK(g1.points[g1.k1].abs_k == doctest::Approx(2 * M_PI / 12));
  const MomentumGrid g2 = momentum_grid(make(Geometry::TriangularBilayer, 6));
  CHECK(g2.points.size() == 36);
  for (const auto& p : g2.points)
    if (p.abs_k > 0) CHECK(p.abs_k >= g2.points[g2.k1].abs_k - 1e-12);
}

TEST_CASE("Fourier sums match direct sums over the coupling table") {
  for (Geometry g : {Geometry::Ladder1D, Geometry::SquareBilayer, Geometry::TriangularBilayer}) {
    CAPTURE(to_string(g));
    const LatticeSpec s = make(g, g == Geometry::Ladder1D ? 10 : 5, 1.4, 2.5, 0.7);
    for (const auto& k : momentum_grid(s).points) {
      const DirectSums d = direct(s, k);
      CHECK(fourier_intralayer(s, k) == doctest::Approx(d.eps_tilde).epsilon(1e-11));
      CHECK(std::abs(fourier_interlayer(s, k) - d.omega) < 1e-11);
    }
  }
}

TEST_CASE("intralayer sum at k = 0 is the row sum of one layer") {
  const LatticeSpec s = make(Geometry::SquareBilayer, 4, 1.0, 2.0);
  const CouplingTable t = build_coupling_table(s);
  double row = 0.0;
  for (const auto& c : t.intra)
    if (c.i == 0) row += c.strength;
  CHECK(fourier_intralayer(s, MomentumPoint{}) == doctest::Approx(row));
  CHECK(row > 0.0);
}

TEST_CASE("steep power law reduces to nearest-neighbour cosine") {
  const LatticeSpec s = make(Geometry::Ladder1D, 4, 1.0, 50.0);
  for (const auto& k : momentum_grid(s).points)
    CHECK(fourier_intralayer(s, k) == doctest::Approx(2.0 * std::cos(k.k.x())).epsilon(1e-12));
}

TEST_CASE("interlayer sum examples") {
  const LatticeSpec open = make(Geometry::Ladder1D, 2, 1.0, 2.0, 1.0, Boundary::Open);
  CHECK(fourier_interlayer(open, MomentumPoint{}).real() == doctest::Approx(1.5));
  const LatticeSpec off = make(Geometry::SquareBilayer, 4, 1.0, 2.0, 0.0);
  for (const auto& k : momentum_grid(off).points) CHECK(std::abs(fourier_interlayer(off, k)) == 0.0);
  // Single-sublattice transforms are real by inversion symmetry.
  const LatticeSpec sq = make(Geometry::SquareBilayer, 6, 1.3, 2.0);
  for (const auto& k : momentum_grid(sq).points) CHECK(std::abs(fourier_interlayer(sq, k).imag()) < 1e-10);
}

TEST_CASE("omega_0 ratio under doubling a_z approaches 2^(d - alpha)") {
  const double alpha = 3.5;
  const LatticeSpec a = make(Geometry::Ladder1D, 4096, 3.0, alpha);
  const LatticeSpec b = make(Geometry::Ladder1D, 4096, 6.0, alpha);
  const double ratio = std::abs(fourier_interlayer(b, MomentumPoint{})) / std::abs(fourier_interlayer(a, MomentumPoint{}));
  CHECK(ratio == doctest::Approx(std::pow(2.0, 1.0 - alpha)).epsilon(1e-3));
}

TEST_CASE("quasi energies") {
  const QuasiEnergy a = quasi_energy(5.0, cplx(3.0, 0.0));
  CHECK(a.energy == doctest::Approx(4.0));
  CHECK(a.growth_rate == 0.0);
  const QuasiEnergy b = quasi_energy(3.0, cplx(0.0, 5.0));
  CHECK(b.energy == 0.0);
  CHECK(b.growth_rate == doctest::Approx(4.0));
  const QuasiEnergy c = quasi_energy(0.0, cplx(2.5, 0.0));
  CHECK(c.growth_rate == doctest::Approx(2.5));
}

TEST_CASE("single-sublattice spectrum reduces to the quasi energy") {
  for (Geometry g : {Geometry::Ladder1D, Geometry::SquareBilayer, Geometry::TriangularBilayer}) {
    const LatticeSpec s = make(g, g == Geometry::Ladder1D ? 16 : 6, 0.8, 2.0);
    const double e0 = fourier_intralayer(s, MomentumPoint{});
    for (const auto& k : momentum_grid(s).points) {
      const auto rates = stability_spectrum(s, k);
      REQUIRE(rates.size() == 1);
      const QuasiEnergy q = quasi_energy(e0 - fourier_intralayer(s, k), fourier_interlayer(s, k));
      CHECK(std::abs(rates[0] - q.growth_rate) < 1e-12);
    }
  }
}

TEST_CASE("dispersion invariants") {
  for (Geometry g : {Geometry::Ladder1D, Geometry::SquareBilayer, Geometry::HoneycombBilayer}) {
    CAPTURE(to_string(g));
    const LatticeSpec s = make(g, g == Geometry::Ladder1D ? 20 : 6, 1.1, 2.0);
    const DispersionData d = dispersion(s);
    CHECK(d.points[0].eps == 0.0);
    CHECK(d.points[0].growth_rate == doctest::Approx(std::abs(d.points[0].omega)));
    CHECK(d.points[0].growth_rate > 0.0);
    for (const auto& p : d.points) CHECK(p.eps >= -1e-12);
    // k and -k give the same dispersion.
    for (const auto& p : d.points) {
      for (const auto& q : d.points) {
        if ((p.k.k + q.k.k).norm() < 1e-9 && p.k.abs_k > 0) {
          CHECK(p.eps == doctest::Approx(q.eps).epsilon(1e-10));
          CHECK(std::abs(p.omega) == doctest::Approx(std::abs(q.omega)).epsilon(1e-10));
        }
      }
    }
  }
}

TEST_CASE("honeycomb stability") {
  const LatticeSpec s = make(Geometry::HoneycombBilayer, 4, 1.0, 2.0);
  const auto at0 = stability_spectrum(s, MomentumPoint{});
  CHECK(at0.size() == 2);
  CHECK(at0[0] > 0.0);
  const LatticeSpec off = make(Geometry::HoneycombBilayer, 4, 1.0, 2.0, 0.0);
  for (const auto& k : momentum_grid(off).points)
    for (double r : stability_spectrum(off, k)) CHECK(r <= kGrowthTolerance);
}

TEST_CASE("unstable mode reports") {
  const StabilityReport none = unstable_modes(make(Geometry::Ladder1D, 16, 1.0, 2.0, 0.0));
  CHECK(none.unstable_k.empty());
  CHECK_FALSE(none.is_fully_collective);
  const StabilityReport far = unstable_modes(make(Geometry::Ladder1D, 32, 320.0, 3.0));
  CHECK(far.is_fully_collective);
  REQUIRE(far.unstable_k.size() == 1);
  CHECK(far.unstable_k[0].abs_k == 0.0);
  const StabilityReport near = unstable_modes(make(Geometry::Ladder1D, 100, 0.1, 2.0));
  CHECK(near.unstable_k.size() > 1);
  CHECK_FALSE(near.is_fully_collective);
}

TEST_CASE("critical a_z separates the two phases") {
  for (Geometry g : {Geometry::Ladder1D, Geometry::SquareBilayer, Geometry::HoneycombBilayer}) {
    CAPTURE(to_string(g));
    const int L = g == Geometry::Ladder1D ? 32 : 6;
    const double a = critical_a_z(g, L, 2.5, 1.0);
    CHECK(unstable_modes(make(g, L, a * 1.01, 2.5)).is_fully_collective);
    CHECK_FALSE(unstable_modes(make(g, L, a * 0.99, 2.5)).is_fully_collective);
  }
}

TEST_CASE("critical a_z grows with lambda") {
  double last = 0.0;
  for (double lambda : {0.25, 0.5, 1.0, 2.0}) {
    const double a = critical_a_z(Geometry::SquareBilayer, 8, 3.0, lambda);
    CHECK(a > last);
    last = a;
  }
}

TEST_CASE("dispersion exponent fit on planted data") {
  DispersionData d;
  for (int i = 1; i <= 10; ++i) {
    DispersionPoint p;
    p.k.abs_k = 0.1 * i;
    p.eps = 3.0 * std::pow(p.k.abs_k, 1.7);
    d.points.push_back(p);
  }
  const PowerLaw f = fit_dispersion_exponent(d, 1.0);
  CHECK(f.prefactor == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(f.exponent == doctest::Approx(1.7).epsilon(1e-12));
  CHECK_THROWS_AS(fit_dispersion_exponent(d, 0.35), std::invalid_argument);
}

TEST_CASE("predicted critical scaling") {
  CHECK(predicted_critical_scaling(3.0, 1).kind == ScalingKind::LogCorrected);
  CHECK(predicted_critical_scaling(3.0, 2).kind == ScalingKind::Linear);
  CHECK(predicted_critical_scaling(2.0, 1).kind == ScalingKind::Linear);
  const CriticalScaling p = predicted_critical_scaling(4.0, 1);
  CHECK(p.kind == ScalingKind::Power);
  CHECK(p.exponent == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(predicted_critical_scaling(1.0, 1), std::invalid_argument);
}

TEST_CASE("two-mode squeezing prediction") {
  const TmsPrediction p = tms_prediction(make(Geometry::Ladder1D, 16, 32.0, 2.0));
  CHECK(p.N == 16);
  CHECK(p.var_minus(0.0) == doctest::Approx(8.0));
  CHECK(p.var_plus(0.0) == doctest::Approx(8.0));
  for (double t : {0.1, 1.0, 7.0}) CHECK(p.var_minus(t) * p.var_plus(t) == doctest::Approx(64.0));
  // At alpha = 0 every interlayer pair couples with strength lambda.
  const TmsPrediction flat = tms_prediction(make(Geometry::Ladder1D, 6, 2.0, 0.0));
  CHECK(flat.rate() == doctest::Approx(6.0));
}
