#include "bilayer/lattice.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace bsq {

namespace {

// Metric tensor in Bravais coordinates (a_i . a_j).
// Kept exact so that squared distances on the square and triangular lattices
// are integers.
Eigen::Matrix2d metric(Geometry g) {
  Eigen::Matrix2d m;
  switch (g) {
    case Geometry::Ladder1D:
      m << 1.0, 0.0, 0.0, 0.0;
      break;
    case Geometry::SquareBilayer:
      m << 1.0, 0.0, 0.0, 1.0;
      break;
    case Geometry::TriangularBilayer:
      m << 1.0, 0.5, 0.5, 1.0;
      break;
    case Geometry::HoneycombBilayer:
      m << 3.0, 1.5, 1.5, 3.0;
      break;
  }
  return m;
}

double length_sq(const Eigen::Matrix2d& g, double x0, double x1) {
  return g(0, 0) * x0 * x0 + 2.0 * g(0, 1) * x0 * x1 + g(1, 1) * x1 * x1;
}

int wrap(int c, int L) {
  int w = ((c % L) + L) % L;
  return (2 * w > L) ? w - L : w;
}

}  // namespace

int dimension(Geometry g) { return g == Geometry::Ladder1D ? 1 : 2; }

int sublattice_count(Geometry g) { return g == Geometry::HoneycombBilayer ? 2 : 1; }

std::string_view to_string(Geometry g) {
  switch (g) {
    case Geometry::Ladder1D: return "ladder";
    case Geometry::SquareBilayer: return "square";
    case Geometry::TriangularBilayer: return "triangular";
    case Geometry::HoneycombBilayer: return "honeycomb";
  }
  return "unknown";
}

std::string_view to_string(Boundary b) { return b == Boundary::Periodic ? "periodic" : "open"; }

Geometry parse_geometry(std::string_view name) {
  if (name == "ladder" || name == "ladder1d" || name == "1d") return Geometry::Ladder1D;
  if (name == "square") return Geometry::SquareBilayer;
  if (name == "triangular") return Geometry::TriangularBilayer;
  if (name == "honeycomb" || name == "hexagonal") return Geometry::HoneycombBilayer;
  throw std::invalid_argument("unknown geometry '" + std::string(name) + "'");
}

Boundary parse_boundary(std::string_view name) {
  if (name == "periodic") return Boundary::Periodic;
  if (name == "open") return Boundary::Open;
  throw std::invalid_argument("unknown boundary '" + std::string(name) + "'");
}

int LatticeSpec::cells_per_layer() const { return dim() == 1 ? L : L * L; }

void LatticeSpec::validate() const {
  if (L < 2) throw std::invalid_argument("L must be >= 2 (no nonzero momentum otherwise)");
  if (!(a_z > 0.0) || !std::isfinite(a_z)) throw std::invalid_argument("a_z must be positive");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("alpha must be non-negative");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be non-negative");
}

Eigen::Matrix2d bravais_basis(Geometry g) {
  Eigen::Matrix2d b;
  const double s3 = std::sqrt(3.0);
  switch (g) {
    case Geometry::Ladder1D:
    case Geometry::SquareBilayer:
      b << 1.0, 0.0, 0.0, 1.0;
      break;
    case Geometry::TriangularBilayer:
      b << 1.0, 0.5, 0.0, 0.5 * s3;
      break;
    case Geometry::HoneycombBilayer:
      // bond length 1, so the Bravais constant is sqrt(3)
      b << s3, 0.5 * s3, 0.0, 1.5;
      break;
  }
  return b;
}

std::array<double, 2> sublattice_offset(Geometry g, int sublattice) {
  if (g == Geometry::HoneycombBilayer && sublattice == 1) return {1.0 / 3.0, 1.0 / 3.0};
  return {0.0, 0.0};
}

int flat_index(const LatticeSpec& spec, const SiteIndex& site) {
  const int cell = spec.dim() == 1 ? site.cell[0] : site.cell[0] + spec.L * site.cell[1];
  return static_cast<int>(site.layer) * spec.spins_per_layer() + cell * spec.sublattices() +
         site.sublattice;
}

SiteIndex site_at(const LatticeSpec& spec, int flat) {
  SiteIndex s;
  const int per_layer = spec.spins_per_layer();
  s.layer = flat >= per_layer ? Layer::B : Layer::A;
  const int within = flat % per_layer;
  s.sublattice = within % spec.sublattices();
  const int cell = within / spec.sublattices();
  s.cell = {cell % spec.L, spec.dim() == 1 ? 0 : cell / spec.L};
  return s;
}

std::vector<Site> build_positions(const LatticeSpec& spec) {
  spec.validate();
  const Eigen::Matrix2d basis = bravais_basis(spec.geometry);
  std::vector<Site> sites;
  sites.reserve(static_cast<std::size_t>(spec.total_spins()));
  for (int flat = 0; flat < spec.total_spins(); ++flat) {
    const SiteIndex idx = site_at(spec, flat);
    const auto off = sublattice_offset(spec.geometry, idx.sublattice);
    const Eigen::Vector2d frac(idx.cell[0] + off[0], idx.cell[1] + off[1]);
    const Eigen::Vector2d xy = basis * frac;
    const double z = idx.layer == Layer::A ? 0.0 : spec.a_z;
    sites.push_back({idx, Eigen::Vector3d(xy.x(), xy.y(), z)});
  }
  return sites;
}

PlanarOffset planar_offset(const LatticeSpec& spec, const SiteIndex& i, const SiteIndex& j) {
  const Eigen::Matrix2d g = metric(spec.geometry);
  const auto oi = sublattice_offset(spec.geometry, i.sublattice);
  const auto oj = sublattice_offset(spec.geometry, j.sublattice);
  const std::array<double, 2> dfrac{oj[0] - oi[0], oj[1] - oi[1]};
  std::array<int, 2> dc{j.cell[0] - i.cell[0], j.cell[1] - i.cell[1]};
  if (spec.dim() == 1) dc[1] = 0;

  PlanarOffset best;
  best.frac = dfrac;
  if (spec.boundary == Boundary::Open) {
    best.cell = dc;
    best.length_sq = length_sq(g, dc[0] + dfrac[0], dc[1] + dfrac[1]);
    return best;
  }

  std::array<int, 2> base{wrap(dc[0], spec.L), spec.dim() == 1 ? 0 : wrap(dc[1], spec.L)};
  best.cell = base;
  best.length_sq = length_sq(g, base[0] + dfrac[0], base[1] + dfrac[1]);
  const int m1_range = spec.dim() == 1 ? 0 : 1;
  for (int m0 = -1; m0 <= 1; ++m0) {
    for (int m1 = -m1_range; m1 <= m1_range; ++m1) {
      if (m0 == 0 && m1 == 0) continue;
      const std::array<int, 2> c{base[0] + m0 * spec.L, base[1] + m1 * spec.L};
      const double r2 = length_sq(g, c[0] + dfrac[0], c[1] + dfrac[1]);
      if (r2 < best.length_sq - 1e-12) {
        best.cell = c;
        best.length_sq = r2;
      }
    }
  }
  return best;
}

Eigen::Vector3d displacement(const LatticeSpec& spec, const SiteIndex& i, const SiteIndex& j) {
  const PlanarOffset off = planar_offset(spec, i, j);
  const Eigen::Vector2d xy =
      bravais_basis(spec.geometry) *
      Eigen::Vector2d(off.cell[0] + off.frac[0], off.cell[1] + off.frac[1]);
  const double dz = (static_cast<int>(j.layer) - static_cast<int>(i.layer)) * spec.a_z;
  return {xy.x(), xy.y(), dz};
}

double coupling_strength(double r, double alpha) {
  if (!(r > 0.0)) throw std::invalid_argument("coupling_strength: coincident sites (r = 0)");
  return std::pow(r, -alpha);
}

CouplingTable build_coupling_table(const LatticeSpec& spec) {
  spec.validate();
  CouplingTable table;
  table.n_sites = spec.total_spins();
  table.sites_per_layer = spec.spins_per_layer();
  const int n = table.sites_per_layer;
  const double az2 = spec.a_z * spec.a_z;

  std::vector<SiteIndex> sites(static_cast<std::size_t>(table.n_sites));
  for (int f = 0; f < table.n_sites; ++f) sites[static_cast<std::size_t>(f)] = site_at(spec, f);

  table.intra.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1));
  for (int layer = 0; layer < 2; ++layer) {
    const int base = layer * n;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const PlanarOffset off = planar_offset(spec, sites[base + i], sites[base + j]);
        table.intra.push_back({base + i, base + j, coupling_strength(std::sqrt(off.length_sq), spec.alpha)});
      }
    }
  }

  table.inter.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const PlanarOffset off = planar_offset(spec, sites[i], sites[n + j]);
      const double v = coupling_strength(std::sqrt(off.length_sq + az2), spec.alpha);
      table.inter.push_back({i, n + j, spec.lambda * v});
    }
  }
  return table;
}

}  // namespace bsq
