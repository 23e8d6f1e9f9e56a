#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <unistd.h>

#include "bilayer/io.hpp"

using namespace bsq;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("bilayer_io_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("doubles survive a text round trip") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int i = 0; i < 1000; ++i) {
    const double v = std::exp(u(rng)) * (i % 2 ? 1 : -1);
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(2.0) == "2");
  CHECK(format_double(std::nan("")) == "nan");
}

TEST_CASE("csv tables") {
  TempDir tmp;
  CsvTable t;
  t.header = {"a", "b", "name"};
  t.add_row({format_double(1.5), format_double(-2e-300), "x"});
  t.add_row({"3", "4", "y"});
  CHECK_THROWS_AS(t.add_row({"1"}), std::invalid_argument);
  write_csv(tmp.path / "t.csv", t);
  const CsvTable r = read_csv(tmp.path / "t.csv");
  CHECK(r.header == t.header);
  CHECK(r.rows == t.rows);
  CHECK(r.numbers("b")[0] == -2e-300);
  CHECK(r.strings("name")[1] == "y");
  CHECK(to_csv(t) == "a,b,name\n1.5," + format_double(-2e-300) + ",x\n3,4,y\n");

  SUBCASE("schema errors name the column") {
    try {
      r.column("var_min");
      FAIL("expected a schema error");
    } catch (const SchemaError& e) {
      CHECK(std::string(e.what()).find("var_min") != std::string::npos);
    }
    try {
      require_columns(r, {"a", "t_min"}, "minima.csv");
      FAIL("expected a schema error");
    } catch (const SchemaError& e) {
      CHECK(std::string(e.what()) == "minima.csv: missing column 't_min'");
    }
    CHECK_THROWS_AS(r.numbers("name"), SchemaError);
  }
  SUBCASE("ragged rows and missing files") {
    std::ofstream(tmp.path / "bad.csv") << "a,b\n1,2\n3\n";
    CHECK_THROWS_AS(read_csv(tmp.path / "bad.csv"), SchemaError);
    CHECK_THROWS(read_csv(tmp.path / "absent.csv"));
  }
  SUBCASE("series files need every column") {
    CsvTable s;
    s.header = kSeriesHeader;
    s.header.pop_back();
    s.add_row(std::vector<std::string>(s.header.size(), "0"));
    write_csv(tmp.path / "series.csv", s);
    try {
      read_series(tmp.path / "series.csv");
      FAIL("expected a schema error");
    } catch (const SchemaError& e) {
      CHECK(std::string(e.what()).find("var_stderr") != std::string::npos);
    }
  }
}

TEST_CASE("series tables follow the shared schema") {
  EnsembleSeries es;
  es.t = {0.0, 0.5};
  es.mean_O_minus = {0.0, 0.01};
  es.var_O_minus = {4.0, 3.0};
  es.var_O_plus = {4.0, 5.0};
  es.sz_a = {4.0, 3.9};
  es.sz_b = {-4.0, -3.9};
  es.energy_mean = {-1.0, -1.0};
  es.var_stderr = {0.1, 0.1};
  const CsvTable t = series_table(es);
  CHECK(t.header == kSeriesHeader);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.numbers("var_O_plus")[1] == 5.0);

  TempDir tmp;
  write_csv(tmp.path / "series.csv", t);
  const SeriesColumns c = read_series(tmp.path / "series.csv");
  CHECK(c.t == es.t);
  CHECK(c.var_O_minus == es.var_O_minus);
  CHECK(c.energy == es.energy_mean);

  ExactSeries ex;
  ex.t = {0.0};
  ex.mean_O_minus = {0.0};
  ex.var_O_minus = {1.0};
  ex.var_O_plus = {1.0};
  ex.sz_a = {1.0};
  ex.sz_b = {-1.0};
  ex.energy = {0.25};
  const CsvTable e = series_table(ex);
  CHECK(e.header == kSeriesHeader);
  CHECK(e.numbers("var_stderr")[0] == 0.0);
}

TEST_CASE("spec and run config json") {
  LatticeSpec s;
  s.geometry = Geometry::TriangularBilayer;
  s.L = 12;
  s.a_z = 2.75;
  s.alpha = 1.5;
  s.lambda = 0.9;
  s.boundary = Boundary::Open;
  CHECK(spec_from_json(to_json(s)) == s);
  CHECK(to_json(s)["geometry"] == "triangular");
  CHECK(spec_from_json(json::object()) == LatticeSpec{});
  CHECK_THROWS_AS(spec_from_json(json::array()), SchemaError);
  CHECK_THROWS_AS(spec_from_json(json{{"geometry", "cubic"}}), std::invalid_argument);
  CHECK_THROWS_AS(spec_from_json(json{{"L", 1}}), std::invalid_argument);

  RunConfig r;
  r.n_traj = 77;
  r.master_seed = 1234567890123ull;
  r.rel_tol = 1e-10;
  CHECK(run_from_json(to_json(r)) == r);
  RunConfig d;
  d.t_max = 3.0;
  CHECK(run_from_json(json{{"n_traj", 5}}, d).t_max == 3.0);
  CHECK_THROWS_AS(run_from_json(json{{"n_traj", 1}}), std::invalid_argument);
}

TEST_CASE("content hash") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ull);
  const json a{{"x", 1}, {"y", {1, 2}}};
  const json b = json::parse(R"({"y":[1,2],"x":1})");
  CHECK(content_hash(a) == content_hash(b));
  CHECK(content_hash(a).size() == 16);
  CHECK(content_hash(a) != content_hash(json{{"x", 2}, {"y", {1, 2}}}));
}

TEST_CASE("manifests") {
  TempDir tmp;
  RunManifest m;
  m.spec = to_json(LatticeSpec{});
  m.run = to_json(RunConfig{});
  m.command = "dtwa run";
  m.started = utc_timestamp();
  m.finished = m.started;
  m.master_seed = 9;
  m.outputs = {"series.csv"};
  m.extra = {{"n_failed", 0}};
  write_manifest(tmp.path / "sub" / "manifest.json", m);
  const json j = read_json(tmp.path / "sub" / "manifest.json");
  for (const char* key : {"tool", "version", "revision", "command", "spec", "run", "master_seed", "started",
                          "finished", "wall_seconds", "outputs", "n_failed"})
    CHECK_MESSAGE(j.contains(key), key);
  CHECK(j["version"] == tool_version());
  CHECK(j["outputs"][0] == "series.csv");
  CHECK(m.started.size() == 20);
  CHECK(m.started.back() == 'Z');

  std::ofstream(tmp.path / "broken.json") << "{ not json";
  CHECK_THROWS_AS(read_json(tmp.path / "broken.json"), SchemaError);
}
