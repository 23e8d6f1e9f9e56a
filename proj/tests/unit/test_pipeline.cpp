#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <unistd.h>

#include "bilayer/bogoliubov.hpp"
#include "bilayer/pipeline.hpp"

using namespace bsq;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("bilayer_pipe_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

SweepPlan small_plan(const fs::path& out) {
  SweepPlan p;
  p.base.L = 4;
  p.base.alpha = 2.0;
  p.axis1 = {AxisKind::AZOverL, {0.5, 1.0}};
  p.axis2 = SweepAxis{AxisKind::L, {4, 6}};
  p.run.n_traj = 40;
  p.run.t_max = 3.0;
  p.run.output_stride = 0.25;
  p.run.master_seed = 4;
  p.out_dir = out;
  return p;
}

}  // namespace

TEST_CASE("sweep plan validation and ordering") {
  SweepPlan p = small_plan("unused");
  const auto pts = p.points();
  REQUIRE(pts.size() == 4);
  CHECK(pts[0].L == 4);
  CHECK(pts[0].a_z == 2.0);
  CHECK(pts[1].L == 6);
  CHECK(pts[1].a_z == 3.0);
  CHECK(pts[3].a_z == 6.0);

  CHECK(SweepPlan::from_json(p.to_json()).points() == pts);

  SweepPlan bad = p;
  bad.axis1.values = {1.0, 0.5, 0.7};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = p;
  bad.axis2->values = {4.5, 6};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = p;
  bad.axis2 = SweepAxis{AxisKind::AZ, {1, 2}};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = p;
  bad.axis2 = SweepAxis{AxisKind::AZOverL, {1, 2}};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = p;
  bad.budget = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = p;
  bad.axis1.values.clear();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  CHECK(parse_axis("lambda") == AxisKind::Lambda);
  CHECK_THROWS_AS(parse_axis("beta"), std::invalid_argument);
  CHECK_THROWS_AS(SweepPlan::from_json(json{{"axis1", {{"name", "L"}, {"values", {4}}}}}), SchemaError);
  CHECK_THROWS_AS(SweepPlan::from_json(json{{"base", json::object()}, {"axis1", {{"name", "L"}}}}), SchemaError);
}

TEST_CASE("sweep writes its layout and reuses finished points") {
  TempDir tmp("sweep");
  const SweepPlan p = small_plan(tmp.path);
  const SweepResult first = execute_sweep(p, 2);
  REQUIRE(first.points.size() == 4);
  for (const auto& pt : first.points) {
    CHECK(pt.ok);
    CHECK_FALSE(pt.cached);
    CHECK(fs::exists(tmp.path / pt.series_path));
    CHECK(fs::exists(tmp.path / "points" / pt.hash / "point.json"));
  }
  CHECK(read_csv(tmp.path / "minima.csv").header == kMinimaHeader);
  const json m = read_json(tmp.path / "manifest.json");
  CHECK(m["points"].size() == 4);
  CHECK(m["outputs"][0] == "minima.csv");
  CHECK(SweepPlan::from_json(m["plan"]).points() == p.points());

  const SweepResult second = execute_sweep(p, 1);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(second.points[i].cached);
    CHECK(second.points[i].hash == first.points[i].hash);
  }
  CHECK(second.minima.rows == first.minima.rows);

  const auto records = load_sweep_series(tmp.path);
  REQUIRE(records.size() == 4);
  CHECK(records[1].N == 6);
  CHECK(records[1].a_z == 3.0);
  CHECK(records[1].series.t.size() == 13);

  SweepPlan changed = p;
  changed.run.n_traj = 41;
  const SweepResult third = execute_sweep(changed, 2);
  CHECK_FALSE(third.points[0].cached);
  CHECK(third.points[0].hash != first.points[0].hash);
}

TEST_CASE("p exponent from a minima table") {
  CsvTable t;
  t.header = kMinimaHeader;
  for (double r : {0.25, 0.5})
    for (double L : {8.0, 16.0, 32.0})
      t.add_row({format_double(L), format_double(L), format_double(r * L), "1", "1", format_double(r * std::pow(L, 0.3)),
                 format_double(0.01 * r * std::pow(L, 0.3))});
  t.add_row({"64", "64", "64", "1", "1", "nan", "nan"});
  const PExponentReport rep = analyze_p(t);
  REQUIRE(rep.groups.size() == 2);
  CHECK(rep.groups[0].a_z_over_L == 0.25);
  CHECK(rep.groups[1].fit.exponent == doctest::Approx(0.3));
  CHECK(rep.joint.exponent == doctest::Approx(0.3));
  CHECK(rep.joint.points_used == 6);
  CHECK_THROWS_AS(analyze_p(t, 4), std::invalid_argument);

  CsvTable missing = t;
  missing.header[5] = "variance";
  try {
    analyze_p(missing);
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("var_min") != std::string::npos);
  }
}

TEST_CASE("planted family collapse end to end") {
  const double dV = 0.5, dtau = 0.4, p = 0.1, delta = 0.7;
  std::vector<SeriesRecord> recs;
  for (double L : {8.0, 16.0, 32.0}) {
    for (double r : {0.25, 0.5}) {
      const double az = r * L;
      const double xs = std::pow(az, -dtau) * std::pow(L, delta * dtau);
      const double ys = std::pow(az, dV) * std::pow(L, p - dV);
      SeriesRecord rec{L, L, az, {}};
      const double t_min = 2.0 / xs;
      for (int i = 0; i <= 80; ++i) {
        const double t = 2.0 * t_min * i / 80.0;
        const double u = (t - t_min) * xs;
        rec.series.t.push_back(t);
        rec.series.var_O_minus.push_back(ys * (1.0 + u * u));
      }
      recs.push_back(rec);
    }
  }
  const CollapseOutput out = collapse_family(recs, CollapsePlan{});
  const CollapseResult& r = out.result;
  CHECK(out.collapse_ok);
  CHECK(r.p == doctest::Approx(p).epsilon(1e-6));
  CHECK(r.d_V == doctest::Approx(dV).epsilon(0.02));
  CHECK(r.d_tau == doctest::Approx(dtau).epsilon(0.02));
  CHECK(r.delta == doctest::Approx(delta).epsilon(0.02));
  CHECK(r.nu == doctest::Approx(p - dV * (1 - delta)).epsilon(0.05));
  CHECK(out.rescaled.header == std::vector<std::string>{"N", "a_z", "x", "y", "sigma"});
  CHECK(out.rescaled.rows.size() == 6 * 81);

  const json j = to_json(r);
  for (const char* k : {"d_V", "d_tau", "delta", "nu", "p", "S_min_dVdtau", "S_min_delta", "S_min_p"})
    CHECK_MESSAGE(j.contains(k), k);

  CollapsePlan fixed;
  fixed.p = 0.2;
  CHECK(collapse_family(recs, fixed).result.p == 0.2);

  std::vector<SeriesRecord> lone{recs[0], recs[2], recs[5]};
  CHECK_THROWS_AS(collapse_family(lone, CollapsePlan{}), std::invalid_argument);
}

TEST_CASE("critical spacing scaling in one dimension") {
  ScalingPlan plan;
  plan.alphas = {2.0, 3.0, 4.0};
  plan.sizes = {128, 256, 512, 1024, 2048};
  const ScalingResult res = pipeline_scaling(plan);
  REQUIRE(res.fits.size() == 3);
  CHECK(res.table.rows.size() == 15);
  CHECK(res.fits[0].predicted_kind == "linear");
  CHECK(std::abs(res.fits[0].slope) < 0.03);
  CHECK(res.fits[1].predicted_kind == "log_corrected");
  CHECK(res.fits[1].log_corrected_residual < res.fits[1].power_residual);
  CHECK(res.fits[2].predicted_kind == "power");
  CHECK(res.fits[2].predicted_slope == doctest::Approx(-1.0 / 3.0));
  CHECK(res.fits[2].slope == doctest::Approx(-1.0 / 3.0).epsilon(0.15));

  plan.sizes = {64, 128, 256};
  CHECK_THROWS_AS(pipeline_scaling(plan), std::invalid_argument);
}

TEST_CASE("phase boundary from the Bogoliubov side only") {
  BoundaryPlan plan;
  plan.geometries = {Geometry::Ladder1D, Geometry::SquareBilayer};
  plan.alphas = {2.0};
  plan.lambdas = {1.0};
  plan.sizes = {16, 32};
  plan.bogoliubov_only = true;
  const CsvTable t = pipeline_phase_boundary(plan);
  CHECK(t.header == kBoundaryHeader);
  REQUIRE(t.rows.size() == 4);
  CHECK(t.strings("geometry")[2] == "square");
  const auto bogo = t.numbers("a_z_star_bogo");
  const auto dtwa = t.numbers("a_z_star_dtwa");
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(bogo[i] > 0.0);
    CHECK(std::isnan(dtwa[i]));
  }
  CHECK(bogo[1] > bogo[0]);
  CHECK(bogo[0] == doctest::Approx(critical_a_z(Geometry::Ladder1D, 16, 2.0, 1.0)));

  plan.bogoliubov_only = false;
  plan.a_z_over_L = {1.0};
  CHECK_THROWS_AS(pipeline_phase_boundary(plan), std::invalid_argument);
}
