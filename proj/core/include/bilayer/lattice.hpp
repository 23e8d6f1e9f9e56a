#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace bsq {

enum class Geometry { Ladder1D, SquareBilayer, TriangularBilayer, HoneycombBilayer };
enum class Boundary { Periodic, Open };
enum class Layer : std::uint8_t { A = 0, B = 1 };

/// Spatial dimension of one layer (1 for ladders, 2 for bilayers).
int dimension(Geometry g);
/// Sites per Bravais cell within one layer.
int sublattice_count(Geometry g);

std::string_view to_string(Geometry g);
std::string_view to_string(Boundary b);
Geometry parse_geometry(std::string_view name);
Boundary parse_boundary(std::string_view name);

/// Full parameter point of the bilayer model. The in-layer nearest-neighbour
/// spacing is 1 for every geometry.
struct LatticeSpec {
  Geometry geometry = Geometry::Ladder1D;
  int L = 2;
  double a_z = 1.0;
  double alpha = 3.0;
  double lambda = 1.0;
  Boundary boundary = Boundary::Periodic;

  int dim() const { return dimension(geometry); }
  int sublattices() const { return sublattice_count(geometry); }
  /// Number of Bravais cells in one layer, L^d.
  int cells_per_layer() const;
  /// Spins per layer N (L^d, or 2L^2 on the honeycomb).
  int spins_per_layer() const { return cells_per_layer() * sublattices(); }
  int total_spins() const { return 2 * spins_per_layer(); }

  /// Throws std::invalid_argument on L < 2, a_z <= 0, alpha < 0 or lambda < 0.
  void validate() const;

  bool operator==(const LatticeSpec&) const = default;
};

struct SiteIndex {
  Layer layer = Layer::A;
  std::array<int, 2> cell{0, 0};
  int sublattice = 0;

  bool operator==(const SiteIndex&) const = default;
};

/// Canonical ordering: layer, then cell (first coordinate fastest), then sublattice.
int flat_index(const LatticeSpec& spec, const SiteIndex& site);
SiteIndex site_at(const LatticeSpec& spec, int flat);

struct Site {
  SiteIndex index;
  Eigen::Vector3d position;
};

std::vector<Site> build_positions(const LatticeSpec& spec);

/// In-plane separation expressed in Bravais (fractional) coordinates together
/// with its squared Euclidean length. `cell` is the integer cell difference
/// after any periodic wrapping; `frac` adds the sublattice offset difference.
struct PlanarOffset {
  std::array<int, 2> cell{0, 0};
  std::array<double, 2> frac{0.0, 0.0};
  double length_sq = 0.0;
};

/// Offset from site i to site j within the plane; minimum image for periodic
/// boundaries, raw difference otherwise.
PlanarOffset planar_offset(const LatticeSpec& spec, const SiteIndex& i, const SiteIndex& j);

/// Cartesian vector r_j - r_i. The z component is never wrapped.
Eigen::Vector3d displacement(const LatticeSpec& spec, const SiteIndex& i, const SiteIndex& j);

/// Power-law coupling r^-alpha; rejects r <= 0.
double coupling_strength(double r, double alpha);

struct Coupling {
  int i = 0;
  int j = 0;
  double strength = 0.0;
};

/// Pairwise couplings with each unordered pair listed once (i < j).
/// Interlayer strengths already carry the factor lambda.
struct CouplingTable {
  std::vector<Coupling> intra;
  std::vector<Coupling> inter;
  int n_sites = 0;
  int sites_per_layer = 0;
};

CouplingTable build_coupling_table(const LatticeSpec& spec);

/// Cartesian Bravais vectors (columns) of the in-plane lattice; for d = 1 only
/// the first column is meaningful.
Eigen::Matrix2d bravais_basis(Geometry g);
/// Fractional position of a sublattice inside the Bravais cell.
std::array<double, 2> sublattice_offset(Geometry g, int sublattice);

}  // namespace bsq
