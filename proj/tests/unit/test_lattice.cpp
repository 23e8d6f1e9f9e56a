#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "bilayer/lattice.hpp"

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

const Geometry kAll[] = {Geometry::Ladder1D, Geometry::SquareBilayer, Geometry::TriangularBilayer,
                         Geometry::HoneycombBilayer};

}  // namespace

TEST_CASE("dimension and sublattice counts") {
  CHECK(dimension(Geometry::Ladder1D) == 1);
  CHECK(dimension(Geometry::SquareBilayer) == 2);
  CHECK(sublattice_count(Geometry::HoneycombBilayer) == 2);
  CHECK(sublattice_count(Geometry::TriangularBilayer) == 1);
  CHECK(make(Geometry::HoneycombBilayer, 3).spins_per_layer() == 18);
  CHECK(make(Geometry::SquareBilayer, 3).total_spins() == 18);
  CHECK(make(Geometry::Ladder1D, 5).total_spins() == 10);
}

TEST_CASE("spec validation") {
  CHECK_THROWS_AS(make(Geometry::Ladder1D, 1).validate(), std::invalid_argument);
  CHECK_THROWS_AS(make(Geometry::Ladder1D, 4, 0.0).validate(), std::invalid_argument);
  CHECK_THROWS_AS(make(Geometry::Ladder1D, 4, 1.0, -1.0).validate(), std::invalid_argument);
  CHECK_THROWS_AS(make(Geometry::Ladder1D, 4, 1.0, 3.0, -0.5).validate(), std::invalid_argument);
  CHECK_NOTHROW(make(Geometry::Ladder1D, 4, 1.0, 0.0, 0.0).validate());
  CHECK_THROWS(parse_geometry("cubic"));
  CHECK_THROWS(parse_boundary("twisted"));
  for (Geometry g : kAll) CHECK(parse_geometry(to_string(g)) == g);
}

TEST_CASE("square bilayer L=2 positions") {
  const auto sites = build_positions(make(Geometry::SquareBilayer, 2));
  REQUIRE(sites.size() == 8);
  const double expect[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  for (int i = 0; i < 4; ++i) {
    CHECK(sites[i].index.layer == Layer::A);
    CHECK(sites[i].position.x() == doctest::Approx(expect[i][0]));
    CHECK(sites[i].position.y() == doctest::Approx(expect[i][1]));
    CHECK(sites[i].position.z() == 0.0);
  }
  for (int i = 4; i < 8; ++i) CHECK(sites[i].index.layer == Layer::B);
}

TEST_CASE("ladder L=3 puts layer B at z = a_z") {
  const auto sites = build_positions(make(Geometry::Ladder1D, 3, 2.0));
  REQUIRE(sites.size() == 6);
  for (int i = 3; i < 6; ++i) CHECK(sites[i].position.z() == 2.0);
}

TEST_CASE("flat index round trip and canonical ordering") {
  for (Geometry g : kAll) {
    const LatticeSpec s = make(g, 3);
    const auto sites = build_positions(s);
    for (int i = 0; i < s.total_spins(); ++i) {
      CHECK(flat_index(s, site_at(s, i)) == i);
      CHECK(sites[i].index == site_at(s, i));
    }
  }
  const LatticeSpec s = make(Geometry::HoneycombBilayer, 2);
  CHECK(site_at(s, 1).sublattice == 1);
  CHECK(site_at(s, 2).cell[0] == 1);
  CHECK(site_at(s, 8).layer == Layer::B);
}

TEST_CASE("nearest-neighbour spacing is one in every geometry") {
  for (Geometry g : kAll) {
    CAPTURE(to_string(g));
    const LatticeSpec s = make(g, 4, 1.0, 3.0, 1.0, Boundary::Open);
    const auto sites = build_positions(s);
    double best = 1e300;
    for (int i = 0; i < s.spins_per_layer(); ++i)
      for (int j = i + 1; j < s.spins_per_layer(); ++j) best = std::min(best, (sites[i].position - sites[j].position).norm());
    CHECK(best == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("honeycomb L=2: 16 sites with coordination three at unit distance") {
  const LatticeSpec s = make(Geometry::HoneycombBilayer, 2);
  const auto sites = build_positions(s);
  REQUIRE(sites.size() == 16);
  // Exhaustive scan over sites and periodic images of the Bravais lattice.
  const Eigen::Matrix2d B = bravais_basis(s.geometry);
  for (int i = 0; i < s.spins_per_layer(); ++i) {
    int neighbours = 0;
    double nearest = 1e300;
    for (int j = 0; j < s.spins_per_layer(); ++j) {
      for (int m = -2; m <= 2; ++m) {
        for (int n = -2; n <= 2; ++n) {
          if (i == j && m == 0 && n == 0) continue;
          const Eigen::Vector2d shift = B * Eigen::Vector2d(m * s.L, n * s.L);
          const Eigen::Vector2d d = sites[j].position.head<2>() + shift - sites[i].position.head<2>();
          nearest = std::min(nearest, d.norm());
          if (std::abs(d.norm() - 1.0) < 1e-9) ++neighbours;
        }
      }
    }
    CHECK(nearest == doctest::Approx(1.0));
    CHECK(neighbours == 3);
  }
}

TEST_CASE("displacement: minimum image against open boundaries") {
  LatticeSpec s = make(Geometry::SquareBilayer, 4);
  SiteIndex a{Layer::A, {0, 0}, 0};
  SiteIndex b{Layer::A, {3, 0}, 0};
  CHECK(displacement(s, a, b).norm() == doctest::Approx(1.0));
  s.boundary = Boundary::Open;
  CHECK(displacement(s, a, b).norm() == doctest::Approx(3.0));
  SiteIndex c{Layer::B, {0, 0}, 0};
  s.a_z = 2.5;
  CHECK(displacement(s, a, c).norm() == doctest::Approx(2.5));
  CHECK(displacement(s, a, c).z() == doctest::Approx(2.5));
}

TEST_CASE("displacement agrees with a brute-force image scan") {
  for (Geometry g : kAll) {
    CAPTURE(to_string(g));
    const LatticeSpec s = make(g, 5, 1.7);
    const auto sites = build_positions(s);
    const Eigen::Matrix2d B = bravais_basis(g);
    for (int i = 0; i < s.total_spins(); i += 3) {
      for (int j = 0; j < s.total_spins(); j += 2) {
        if (i == j) continue;
        double best = 1e300;
        for (int m = -1; m <= 1; ++m) {
          for (int n = (s.dim() == 1 ? 0 : -1); n <= (s.dim() == 1 ? 0 : 1); ++n) {
            Eigen::Vector3d d = sites[j].position - sites[i].position;
            d.head<2>() += B * Eigen::Vector2d(m * s.L, n * s.L);
            best = std::min(best, d.norm());
          }
        }
        CHECK(displacement(s, sites[i].index, sites[j].index).norm() == doctest::Approx(best).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("coupling strength") {
  CHECK(coupling_strength(1.0, 3.0) == 1.0);
  CHECK(coupling_strength(2.0, 3.0) == 0.125);
  CHECK(coupling_strength(2.0, 0.0) == 1.0);
  CHECK_THROWS_AS(coupling_strength(0.0, 2.0), std::invalid_argument);
}

TEST_CASE("ladder L=2 open coupling table by hand") {
  const CouplingTable t = build_coupling_table(make(Geometry::Ladder1D, 2, 1.0, 2.0, 1.0, Boundary::Open));
  REQUIRE(t.n_sites == 4);
  REQUIRE(t.intra.size() == 2);
  for (const auto& c : t.intra) CHECK(c.strength == doctest::Approx(1.0));
  std::multiset<double> inter;
  for (const auto& c : t.inter) inter.insert(std::round(c.strength * 1e12) / 1e12);
  CHECK(inter == std::multiset<double>{0.5, 0.5, 1.0, 1.0});
}

TEST_CASE("interlayer couplings are linear in lambda, intralayer ones are independent of it") {
  for (Geometry g : kAll) {
    const CouplingTable t1 = build_coupling_table(make(g, 3, 1.3, 2.5, 1.0));
    const CouplingTable t2 = build_coupling_table(make(g, 3, 1.3, 2.5, 2.0));
    const CouplingTable t0 = build_coupling_table(make(g, 3, 1.3, 2.5, 0.0));
    const CouplingTable tz = build_coupling_table(make(g, 3, 3.1, 2.5, 1.0));
    REQUIRE(t1.inter.size() == t2.inter.size());
    for (std::size_t k = 0; k < t1.inter.size(); ++k) {
      CHECK(t2.inter[k].strength == doctest::Approx(2.0 * t1.inter[k].strength).epsilon(1e-15));
      CHECK(t0.inter[k].strength == 0.0);
    }
    for (std::size_t k = 0; k < t1.intra.size(); ++k) {
      CHECK(t2.intra[k].strength == t1.intra[k].strength);
      CHECK(tz.intra[k].strength == t1.intra[k].strength);
    }
  }
}

TEST_CASE("table has no self couplings and lists each pair once") {
  for (Geometry g : kAll) {
    const LatticeSpec s = make(g, 3);
    const CouplingTable t = build_coupling_table(s);
    std::set<std::pair<int, int>> seen;
    auto visit = [&](const Coupling& c) {
      CHECK(c.i < c.j);
      CHECK(seen.insert({c.i, c.j}).second);
    };
    for (const auto& c : t.intra) visit(c);
    for (const auto& c : t.inter) visit(c);
    const int n = s.total_spins();
    CHECK(seen.size() == static_cast<std::size_t>(n * (n - 1) / 2));
  }
}

TEST_CASE("both layers carry the same multiset of intralayer couplings") {
  for (Geometry g : kAll) {
    for (Boundary b : {Boundary::Periodic, Boundary::Open}) {
      const LatticeSpec s = make(g, 4, 1.0, 2.0, 1.0, b);
      const CouplingTable t = build_coupling_table(s);
      std::multiset<long long> a, bb;
      for (const auto& c : t.intra) {
        const long long key = std::llround(c.strength * 1e12);
        (c.i < s.spins_per_layer() ? a : bb).insert(key);
      }
      CHECK(a == bb);
    }
  }
}

TEST_CASE("periodic table is invariant under a lattice translation") {
  const LatticeSpec s = make(Geometry::TriangularBilayer, 4, 1.5, 2.0);
  const CouplingTable t = build_coupling_table(s);
  std::map<std::pair<int, int>, double> table;
  for (const auto& c : t.intra) table[{c.i, c.j}] = c.strength;
  for (const auto& c : t.inter) table[{c.i, c.j}] = c.strength;
  auto shift = [&](int flat) {
    SiteIndex si = site_at(s, flat);
    si.cell = {(si.cell[0] + 1) % s.L, (si.cell[1] + 3) % s.L};
    return flat_index(s, si);
  };
  for (const auto& [key, v] : table) {
    int i = shift(key.first), j = shift(key.second);
    if (i > j) std::swap(i, j);
    CHECK(table.at({i, j}) == doctest::Approx(v).epsilon(1e-14));
  }
}

TEST_CASE("interlayer sum from one site scales as a_z^(d - alpha)") {
  const double alpha = 3.0;
  double last_err = 1e300;
  for (int L : {64, 256, 1024}) {
    auto row_sum = [&](double a_z) {
      const LatticeSpec s = make(Geometry::Ladder1D, L, a_z, alpha);
      double sum = 0.0;
      for (int j = 0; j < L; ++j) {
        const double r = displacement(s, SiteIndex{Layer::A, {0, 0}, 0}, SiteIndex{Layer::B, {j, 0}, 0}).norm();
        sum += coupling_strength(r, alpha);
      }
      return sum;
    };
    const double ratio = row_sum(8.0) / row_sum(4.0);
    const double err = std::abs(ratio - std::pow(2.0, 1.0 - alpha));
    CHECK(err < last_err);
    last_err = err;
  }
  CHECK(last_err < 5e-3);
}
