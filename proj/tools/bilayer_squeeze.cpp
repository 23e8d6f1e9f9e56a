#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "bilayer/analysis.hpp"
#include "bilayer/bogoliubov.hpp"
#include "bilayer/dtwa.hpp"
#include "bilayer/io.hpp"
#include "bilayer/lattice.hpp"
#include "bilayer/oracle.hpp"
#include "bilayer/parallel.hpp"
#include "bilayer/pipeline.hpp"

namespace fs = std::filesystem;
using namespace bsq;

namespace {

using Clock = std::chrono::steady_clock;

struct SpecOptions {
  std::string geometry = "ladder";
  std::string boundary = "periodic";
  int L = 8;
  double a_z = 1.0;
  double alpha = 3.0;
  double lambda = 1.0;

  LatticeSpec resolve() const {
    LatticeSpec s;
    s.geometry = parse_geometry(geometry);
    s.boundary = parse_boundary(boundary);
    s.L = L;
    s.a_z = a_z;
    s.alpha = alpha;
    s.lambda = lambda;
    s.validate();
    return s;
  }
};

void add_spec_options(CLI::App* app, SpecOptions& o, bool with_az = true) {
  app->add_option("--geometry", o.geometry, "ladder, square, triangular or honeycomb")->capture_default_str();
  app->add_option("--L", o.L, "linear size")->capture_default_str();
  if (with_az) app->add_option("--a-z", o.a_z, "layer spacing")->capture_default_str();
  app->add_option("--alpha", o.alpha, "power-law exponent")->capture_default_str();
  app->add_option("--lambda", o.lambda, "interlayer coupling ratio")->capture_default_str();
  app->add_option("--boundary", o.boundary, "periodic or open")->capture_default_str();
}

/// Accepts a bare plan or a manifest that embeds one under "plan".
json load_plan(const fs::path& path) {
  json j = read_json(path);
  if (j.is_object() && j.contains("tool") && j.contains("plan")) return j.at("plan");
  return j;
}

void print_json(const json& j) { std::cout << j.dump(2) << '\n'; }

struct Timer {
  std::string started = utc_timestamp();
  Clock::time_point t0 = Clock::now();

  void finish(RunManifest& m) const {
    m.started = started;
    m.finished = utc_timestamp();
    m.wall_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  }
};

int threads_from_env() { return worker_count(); }

// ---------------------------------------------------------------- lattice

void setup_lattice(CLI::App& app) {
  auto* lat = app.add_subcommand("lattice", "lattice geometry");
  lat->require_subcommand(1);
  auto* dump = lat->add_subcommand("dump", "print site positions or couplings as CSV");
  auto opts = std::make_shared<SpecOptions>();
  auto couplings = std::make_shared<bool>(false);
  auto dry = std::make_shared<bool>(false);
  add_spec_options(dump, *opts);
  dump->add_flag("--couplings", *couplings, "list pair couplings instead of positions");
  dump->add_flag("--dry-run", *dry, "print the resolved spec and exit");
  dump->callback([=] {
    const LatticeSpec spec = opts->resolve();
    if (*dry) return print_json(to_json(spec));
    CsvTable t;
    if (*couplings) {
      const CouplingTable table = build_coupling_table(spec);
      t.header = {"i", "j", "kind", "strength"};
      for (const auto& c : table.intra)
        t.add_row({std::to_string(c.i), std::to_string(c.j), "intra", format_double(c.strength)});
      for (const auto& c : table.inter)
        t.add_row({std::to_string(c.i), std::to_string(c.j), "inter", format_double(c.strength)});
    } else {
      t.header = {"site", "layer", "cell_x", "cell_y", "sublattice", "x", "y", "z"};
      const auto sites = build_positions(spec);
      for (std::size_t i = 0; i < sites.size(); ++i) {
        const auto& s = sites[i];
        t.add_row({std::to_string(i), s.index.layer == Layer::A ? "A" : "B", std::to_string(s.index.cell[0]),
                   std::to_string(s.index.cell[1]), std::to_string(s.index.sublattice), format_double(s.position.x()),
                   format_double(s.position.y()), format_double(s.position.z())});
      }
    }
    std::cout << to_csv(t);
  });
}

// ---------------------------------------------------------------- bogoliubov

void emit_table(const CsvTable& t, const std::optional<std::string>& out, const std::string& file, RunManifest m,
                const Timer& timer) {
  if (!out) {
    std::cout << to_csv(t);
    return;
  }
  const fs::path dir(*out);
  write_csv(dir / file, t);
  m.outputs = {file};
  timer.finish(m);
  write_manifest(dir / "manifest.json", m);
  spdlog::info("wrote {}", (dir / file).string());
}

void setup_bogoliubov(CLI::App& app) {
  auto* bog = app.add_subcommand("bogoliubov", "linear stability of the polarized state");
  bog->require_subcommand(1);

  {
    auto* disp = bog->add_subcommand("dispersion", "dispersion and growth rates on the momentum grid");
    auto opts = std::make_shared<SpecOptions>();
    auto out = std::make_shared<std::optional<std::string>>();
    auto dry = std::make_shared<bool>(false);
    add_spec_options(disp, *opts);
    disp->add_option("--out", *out, "output directory (stdout if omitted)");
    disp->add_flag("--dry-run", *dry, "print the resolved spec and exit");
    disp->callback([=] {
      const LatticeSpec spec = opts->resolve();
      if (*dry) return print_json(to_json(spec));
      Timer timer;
      const DispersionData d = dispersion(spec);
      CsvTable t;
      t.header = kDispersionHeader;
      for (const auto& p : d.points) {
        t.add_row({format_double(p.k.k.x()), format_double(p.k.k.y()), format_double(p.k.abs_k), format_double(p.eps),
                   format_double(p.omega.real()), format_double(p.omega.imag()), format_double(p.growth_rate)});
      }
      RunManifest m;
      m.command = "bogoliubov dispersion";
      m.spec = to_json(spec);
      m.run = nullptr;
      emit_table(t, *out, "dispersion.csv", m, timer);
    });
  }

  {
    auto* crit = bog->add_subcommand("critical-az", "critical layer spacing for each size");
    auto opts = std::make_shared<SpecOptions>();
    auto sizes = std::make_shared<std::vector<int>>();
    auto out = std::make_shared<std::optional<std::string>>();
    auto dry = std::make_shared<bool>(false);
    add_spec_options(crit, *opts, false);
    crit->add_option("--sizes", *sizes, "list of L")->required();
    crit->add_option("--out", *out, "output directory (stdout if omitted)");
    crit->add_flag("--dry-run", *dry, "print the resolved plan and exit");
    crit->callback([=] {
      const LatticeSpec base = opts->resolve();
      if (*dry) return print_json(json{{"spec", to_json(base)}, {"sizes", *sizes}});
      Timer timer;
      CsvTable t;
      t.header = kCriticalHeader;
      for (int L : *sizes) {
        double a = std::nan("");
        try {
          a = critical_a_z(base.geometry, L, base.alpha, base.lambda, base.boundary);
        } catch (const NoTransitionError& e) {
          spdlog::warn("L={}: {}", L, e.what());
        }
        t.add_row({std::to_string(L), format_double(a), format_double(a / L)});
      }
      RunManifest m;
      m.command = "bogoliubov critical-az";
      m.spec = to_json(base);
      m.run = nullptr;
      m.extra = json{{"sizes", *sizes}};
      emit_table(t, *out, "critical.csv", m, timer);
    });
  }
}

// ---------------------------------------------------------------- dtwa / oracle

struct RunOptions {
  std::size_t n_traj = RunConfig{}.n_traj;
  double t_max = RunConfig{}.t_max;
  double stride = RunConfig{}.output_stride;
  std::uint64_t seed = RunConfig{}.master_seed;
  double rel_tol = RunConfig{}.rel_tol;
  double abs_tol = RunConfig{}.abs_tol;

  RunConfig resolve() const {
    RunConfig r;
    r.n_traj = n_traj;
    r.t_max = t_max;
    r.output_stride = stride;
    r.master_seed = seed;
    r.rel_tol = rel_tol;
    r.abs_tol = abs_tol;
    r.validate();
    return r;
  }
};

void setup_dtwa(CLI::App& app) {
  auto* dtwa = app.add_subcommand("dtwa", "semiclassical ensemble dynamics");
  dtwa->require_subcommand(1);

  {
    auto* run = dtwa->add_subcommand("run", "one ensemble run");
    auto spec = std::make_shared<SpecOptions>();
    auto ro = std::make_shared<RunOptions>();
    auto out = std::make_shared<std::string>();
    auto replay = std::make_shared<std::string>();
    auto dry = std::make_shared<bool>(false);
    add_spec_options(run, *spec);
    run->add_option("--ntraj", ro->n_traj, "trajectories")->capture_default_str();
    run->add_option("--tmax", ro->t_max, "final time")->capture_default_str();
    run->add_option("--stride", ro->stride, "output spacing")->capture_default_str();
    run->add_option("--seed", ro->seed, "master seed")->capture_default_str();
    run->add_option("--rel-tol", ro->rel_tol, "relative integrator tolerance")->capture_default_str();
    run->add_option("--abs-tol", ro->abs_tol, "absolute integrator tolerance")->capture_default_str();
    run->add_option("--out", *out, "output directory")->required();
    run->add_option("--replay", *replay, "take spec and run config from an earlier manifest");
    run->add_flag("--dry-run", *dry, "print the resolved run and exit");
    run->callback([=] {
      LatticeSpec s;
      RunConfig r;
      if (!replay->empty()) {
        const json m = read_json(*replay);
        s = spec_from_json(m.at("spec"));
        r = run_from_json(m.at("run"));
      } else {
        s = spec->resolve();
        r = ro->resolve();
      }
      const int threads = threads_from_env();
      if (*dry) return print_json(json{{"spec", to_json(s)}, {"run", to_json(r)}, {"threads", threads}});
      Timer timer;
      spdlog::info("dtwa run: {} L={} N={} a_z={} n_traj={} threads={}", to_string(s.geometry), s.L,
                   s.spins_per_layer(), s.a_z, r.n_traj, threads);
      const EnsembleSeries es = run_ensemble(s, r, threads);
      const fs::path dir(*out);
      write_csv(dir / "series.csv", series_table(es));
      RunManifest m;
      m.command = "dtwa run";
      m.spec = to_json(s);
      m.run = to_json(r);
      m.master_seed = r.master_seed;
      m.outputs = {"series.csv"};
      m.extra = json{{"n_failed", es.n_failed}, {"max_norm_drift", es.max_norm_drift}};
      try {
        const MinimalVariance mv = minimal_variance(es);
        m.extra["t_min"] = mv.t_min;
        m.extra["var_min"] = mv.var_min;
        m.extra["var_min_stderr"] = mv.std_error;
        m.extra["at_window_end"] = mv.at_window_end;
      } catch (const std::exception& e) {
        spdlog::warn("no variance minimum: {}", e.what());
      }
      timer.finish(m);
      write_manifest(dir / "manifest.json", m);
      spdlog::info("wrote {} in {:.1f} s", (dir / "series.csv").string(), m.wall_seconds);
    });
  }

  {
    auto* sweep = dtwa->add_subcommand("sweep", "grid of ensemble runs from a JSON plan");
    auto plan_path = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto dry = std::make_shared<bool>(false);
    sweep->add_option("--plan", *plan_path, "sweep plan (or a sweep manifest)")->required()->check(CLI::ExistingFile);
    sweep->add_option("--out", *out, "output directory (overrides the plan)");
    sweep->add_flag("--dry-run", *dry, "print the resolved points and exit");
    sweep->callback([=] {
      SweepPlan plan = SweepPlan::from_json(load_plan(*plan_path));
      if (!out->empty()) plan.out_dir = *out;
      if (plan.out_dir.empty()) throw std::invalid_argument("dtwa sweep: no output directory");
      if (*dry) {
        json pts = json::array();
        for (const auto& p : plan.points()) pts.push_back(to_json(p));
        return print_json(json{{"plan", plan.to_json()}, {"points", pts}});
      }
      const SweepResult r = execute_sweep(plan, threads_from_env());
      std::size_t failed = 0;
      for (const auto& p : r.points) failed += p.ok ? 0 : 1;
      spdlog::info("sweep done: {} points, {} failed", r.points.size(), failed);
    });
  }
}

void setup_oracle(CLI::App& app) {
  auto* oracle = app.add_subcommand("oracle", "exact dynamics for small systems");
  oracle->require_subcommand(1);
  auto* run = oracle->add_subcommand("run", "exact time series");
  auto spec = std::make_shared<SpecOptions>();
  auto t_max = std::make_shared<double>(RunConfig{}.t_max);
  auto stride = std::make_shared<double>(RunConfig{}.output_stride);
  auto out = std::make_shared<std::string>();
  auto dry = std::make_shared<bool>(false);
  spec->L = 2;
  add_spec_options(run, *spec);
  run->add_option("--tmax", *t_max, "final time")->capture_default_str();
  run->add_option("--stride", *stride, "output spacing")->capture_default_str();
  run->add_option("--out", *out, "output directory")->required();
  run->add_flag("--dry-run", *dry, "print the resolved run and exit");
  run->callback([=] {
    const LatticeSpec s = spec->resolve();
    if (s.total_spins() > kMaxOracleSpins)
      throw OracleSizeError(std::to_string(s.total_spins()) + " spins exceed the oracle limit of " +
                            std::to_string(kMaxOracleSpins));
    if (*dry) return print_json(json{{"spec", to_json(s)}, {"t_max", *t_max}, {"output_stride", *stride}});
    Timer timer;
    const ExactSeries es = run_oracle(s, *t_max, *stride);
    const fs::path dir(*out);
    write_csv(dir / "series.csv", series_table(es));
    RunManifest m;
    m.command = "oracle run";
    m.spec = to_json(s);
    m.run = json{{"t_max", *t_max}, {"output_stride", *stride}};
    m.outputs = {"series.csv"};
    m.extra = json{{"max_norm_error", es.max_norm_error}};
    timer.finish(m);
    write_manifest(dir / "manifest.json", m);
  });
}

// ---------------------------------------------------------------- analyze

CsvTable filter_minima(const CsvTable& minima, const std::vector<double>& ratios) {
  require_columns(minima, kMinimaHeader, "minima");
  const auto L = minima.numbers("L");
  const auto az = minima.numbers("a_z");
  CsvTable out;
  out.header = minima.header;
  for (std::size_t i = 0; i < minima.rows.size(); ++i) {
    const double r = az[i] / L[i];
    for (double want : ratios)
      if (std::abs(r - want) <= 1e-9 * std::max(1.0, std::abs(want))) out.rows.push_back(minima.rows[i]);
  }
  return out;
}

json fit_json(const PowerLawFit& f) {
  return json{{"p", f.exponent}, {"unc", f.uncertainty}, {"points_used", f.points_used},
              {"chi2_reduced", f.chi2_reduced}};
}

std::vector<SeriesRecord> select_records(std::vector<SeriesRecord> all, const std::vector<double>& a_z) {
  std::vector<SeriesRecord> out;
  for (auto& r : all)
    for (double want : a_z)
      if (std::abs(r.a_z - want) <= 1e-9 * std::max(1.0, std::abs(want))) out.push_back(std::move(r));
  if (out.empty()) throw std::invalid_argument("no series matches the requested a_z values");
  return out;
}

struct CollapseCli {
  int d = 1;
  std::optional<double> p;
  double unc_p = 0.0;
  double sigma_factor = kDefaultSigmaFactor;
  double lo = SearchWindow{}.lo;
  double hi = SearchWindow{}.hi;

  void add(CLI::App* app) {
    app->add_option("--d", d, "spatial dimension of one layer")->check(CLI::IsMember({1, 2}))->capture_default_str();
    app->add_option("--p", p, "fix p instead of fitting it from the minima");
    app->add_option("--unc-p", unc_p, "uncertainty of a fixed p")->capture_default_str();
    app->add_option("--sigma-factor", sigma_factor, "sigma as a fraction of each curve's Var_min")
        ->capture_default_str();
    app->add_option("--window-lo", lo, "lower edge of the (d_V, d_tau) search window")->capture_default_str();
    app->add_option("--window-hi", hi, "upper edge of the (d_V, d_tau) search window")->capture_default_str();
  }

  CollapsePlan plan() const {
    CollapsePlan c;
    c.d = d;
    c.p = p;
    c.unc_p = unc_p;
    c.sigma_factor = sigma_factor;
    c.options_2d.d_V = {lo, hi};
    c.options_2d.d_tau = {lo, hi};
    return c;
  }

  json to_json() const {
    json j{{"d", d}, {"sigma_factor", sigma_factor}, {"window", {lo, hi}}};
    if (p) {
      j["p"] = *p;
      j["unc_p"] = unc_p;
    }
    return j;
  }
};

void write_collapse(const fs::path& dir, const CollapseOutput& c, RunManifest m, const Timer& timer) {
  json result = to_json(c.result);
  result["collapse_ok"] = c.collapse_ok;
  write_json(dir / "collapse.json", result);
  write_csv(dir / "rescaled.csv", c.rescaled);
  m.outputs = {"collapse.json", "rescaled.csv"};
  timer.finish(m);
  write_manifest(dir / "manifest.json", m);
  print_json(result);
}

void setup_analyze(CLI::App& app) {
  auto* an = app.add_subcommand("analyze", "exponent extraction from stored runs");
  an->require_subcommand(1);

  {
    auto* p = an->add_subcommand("p", "fit Var_min ~ N^p");
    auto minima = std::make_shared<std::string>();
    auto ratios = std::make_shared<std::vector<double>>();
    auto min_points = std::make_shared<std::size_t>(3);
    auto dry = std::make_shared<bool>(false);
    p->add_option("--minima", *minima, "minima.csv from a sweep")->required()->check(CLI::ExistingFile);
    p->add_option("--a-z-over-L", *ratios, "aspect ratios inside the fit window")->required();
    p->add_option("--min-points", *min_points, "sizes needed per aspect ratio")->capture_default_str();
    p->add_flag("--dry-run", *dry, "print the resolved inputs and exit");
    p->callback([=] {
      const CsvTable rows = filter_minima(read_csv(*minima), *ratios);
      if (*dry) return print_json(json{{"minima", *minima}, {"a_z_over_L", *ratios}, {"rows", rows.rows.size()}});
      const PExponentReport rep = analyze_p(rows, *min_points);
      json j = fit_json(rep.joint);
      j["groups"] = json::array();
      for (const auto& g : rep.groups) {
        json gj = fit_json(g.fit);
        gj["a_z_over_L"] = g.a_z_over_L;
        j["groups"].push_back(gj);
      }
      print_json(j);
    });
  }

  {
    auto* tr = an->add_subcommand("transition", "aspect ratio where p stops being significant");
    auto minima = std::make_shared<std::string>();
    auto threshold = std::make_shared<double>(kTransitionThreshold);
    auto min_points = std::make_shared<std::size_t>(2);
    auto dry = std::make_shared<bool>(false);
    tr->add_option("--minima", *minima, "minima.csv from an (a_z/L, L) sweep")->required()->check(CLI::ExistingFile);
    tr->add_option("--threshold", *threshold, "p threshold")->capture_default_str();
    tr->add_option("--min-points", *min_points, "sizes needed per aspect ratio")->capture_default_str();
    tr->add_flag("--dry-run", *dry, "print the resolved inputs and exit");
    tr->callback([=] {
      if (*dry) return print_json(json{{"minima", *minima}, {"threshold", *threshold}});
      const PExponentReport rep = analyze_p(read_csv(*minima), *min_points);
      std::vector<TransitionPoint> curve;
      json pts = json::array();
      for (const auto& g : rep.groups) {
        curve.push_back({g.a_z_over_L, g.fit.exponent, g.fit.uncertainty});
        pts.push_back({{"a_z_over_L", g.a_z_over_L}, {"p", g.fit.exponent}, {"unc", g.fit.uncertainty}});
      }
      print_json(json{{"a_z_over_L_star", detect_transition(curve, *threshold)}, {"points", pts}});
    });
  }

  {
    auto* co = an->add_subcommand("collapse", "finite-size collapse of a sweep's variance curves");
    auto dir = std::make_shared<std::string>();
    auto a_z = std::make_shared<std::vector<double>>();
    auto out = std::make_shared<std::string>();
    auto opts = std::make_shared<CollapseCli>();
    auto dry = std::make_shared<bool>(false);
    co->add_option("--series-dir", *dir, "sweep directory with manifest.json")->required()->check(CLI::ExistingDirectory);
    co->add_option("--a-z", *a_z, "layer spacings to include")->required();
    co->add_option("--out", *out, "output directory for collapse.json and rescaled.csv")->required();
    opts->add(co);
    co->add_flag("--dry-run", *dry, "print the resolved inputs and exit");
    co->callback([=] {
      const auto records = select_records(load_sweep_series(*dir), *a_z);
      if (*dry) {
        json sel = json::array();
        for (const auto& r : records) sel.push_back({{"L", r.L}, {"N", r.N}, {"a_z", r.a_z}});
        return print_json(json{{"series", sel}, {"options", opts->to_json()}});
      }
      Timer timer;
      const CollapseOutput c = collapse_family(records, opts->plan());
      RunManifest m;
      m.command = "analyze collapse";
      m.spec = nullptr;
      m.run = nullptr;
      m.extra = json{{"series_dir", *dir}, {"a_z", *a_z}, {"options", opts->to_json()}};
      write_collapse(*out, c, m, timer);
    });
  }
}

// ---------------------------------------------------------------- pipeline

BoundaryPlan boundary_from_json(const json& j) {
  BoundaryPlan p;
  for (const auto& g : j.at("geometries")) p.geometries.push_back(parse_geometry(g.get<std::string>()));
  p.alphas = j.value("alphas", std::vector<double>{});
  p.lambdas = j.value("lambdas", std::vector<double>{});
  p.sizes = j.at("sizes").get<std::vector<int>>();
  p.a_z_over_L = j.value("a_z_over_L", std::vector<double>{});
  p.boundary = parse_boundary(j.value("boundary", std::string("periodic")));
  if (j.contains("run")) p.run = run_from_json(j.at("run"));
  p.bogoliubov_only = j.value("bogoliubov_only", false);
  if (j.contains("out")) p.out_dir = j.at("out").get<std::string>();
  return p;
}

json to_json(const BoundaryPlan& p) {
  json g = json::array();
  for (auto x : p.geometries) g.push_back(std::string(to_string(x)));
  return json{{"geometries", g},         {"alphas", p.alphas},
              {"lambdas", p.lambdas},    {"sizes", p.sizes},
              {"a_z_over_L", p.a_z_over_L}, {"boundary", std::string(to_string(p.boundary))},
              {"run", to_json(p.run)},   {"bogoliubov_only", p.bogoliubov_only},
              {"out", p.out_dir.string()}};
}

void setup_pipeline(CLI::App& app) {
  auto* pl = app.add_subcommand("pipeline", "end-to-end data products");
  pl->require_subcommand(1);

  {
    auto* bd = pl->add_subcommand("boundary", "Bogoliubov and dTWA critical aspect ratios");
    auto plan_path = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto bogo_only = std::make_shared<bool>(false);
    auto dry = std::make_shared<bool>(false);
    bd->add_option("--plan", *plan_path, "boundary plan (or its manifest)")->required()->check(CLI::ExistingFile);
    bd->add_option("--out", *out, "output directory (overrides the plan)");
    bd->add_flag("--bogoliubov-only", *bogo_only, "skip the dTWA sweeps");
    bd->add_flag("--dry-run", *dry, "print the resolved plan and exit");
    bd->callback([=] {
      BoundaryPlan plan = boundary_from_json(load_plan(*plan_path));
      if (!out->empty()) plan.out_dir = *out;
      if (*bogo_only) plan.bogoliubov_only = true;
      if (plan.out_dir.empty()) throw std::invalid_argument("pipeline boundary: no output directory");
      if (plan.geometries.empty()) throw std::invalid_argument("pipeline boundary: empty geometry list");
      if (*dry) return print_json(to_json(plan));
      Timer timer;
      const CsvTable t = pipeline_phase_boundary(plan, threads_from_env());
      write_csv(plan.out_dir / "boundary.csv", t);
      RunManifest m;
      m.command = "pipeline boundary";
      m.spec = nullptr;
      m.run = to_json(plan.run);
      m.master_seed = plan.run.master_seed;
      m.outputs = {"boundary.csv"};
      m.extra = json{{"plan", to_json(plan)}};
      timer.finish(m);
      write_manifest(plan.out_dir / "manifest.json", m);
    });
  }

  {
    auto* sc = pl->add_subcommand("scaling", "size dependence of the critical aspect ratio");
    auto geometry = std::make_shared<std::string>("ladder");
    auto plan = std::make_shared<ScalingPlan>();
    auto out = std::make_shared<std::string>();
    auto dry = std::make_shared<bool>(false);
    sc->add_option("--geometry", *geometry)->capture_default_str();
    sc->add_option("--lambda", plan->lambda)->capture_default_str();
    sc->add_option("--alphas", plan->alphas, "list of alpha")->required();
    sc->add_option("--sizes", plan->sizes, "list of L (at least 4)")->required();
    sc->add_option("--out", *out, "output directory")->required();
    sc->add_flag("--dry-run", *dry, "print the resolved plan and exit");
    sc->callback([=] {
      ScalingPlan p = *plan;
      p.geometry = parse_geometry(*geometry);
      p.out_dir = *out;
      const json pj{{"geometry", *geometry}, {"lambda", p.lambda}, {"alphas", p.alphas}, {"sizes", p.sizes}};
      if (*dry) return print_json(pj);
      Timer timer;
      const ScalingResult r = pipeline_scaling(p);
      CsvTable fits;
      fits.header = {"alpha", "slope", "slope_uncertainty", "predicted_slope", "predicted_kind", "power_residual",
                     "log_corrected_residual"};
      for (const auto& f : r.fits) {
        fits.add_row({format_double(f.alpha), format_double(f.slope), format_double(f.slope_uncertainty),
                      format_double(f.predicted_slope), f.predicted_kind, format_double(f.power_residual),
                      format_double(f.log_corrected_residual)});
      }
      write_csv(p.out_dir / "scaling.csv", r.table);
      write_csv(p.out_dir / "fits.csv", fits);
      RunManifest m;
      m.command = "pipeline scaling";
      m.spec = nullptr;
      m.run = nullptr;
      m.outputs = {"scaling.csv", "fits.csv"};
      m.extra = json{{"plan", pj}};
      timer.finish(m);
      write_manifest(p.out_dir / "manifest.json", m);
      std::cout << to_csv(fits);
    });
  }

  {
    auto* co = pl->add_subcommand("collapse", "sweep a family and collapse it");
    auto plan_path = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto opts = std::make_shared<CollapseCli>();
    auto dry = std::make_shared<bool>(false);
    co->add_option("--plan", *plan_path, "family plan: base, a_z, sizes, run")->required()->check(CLI::ExistingFile);
    co->add_option("--out", *out, "output directory")->required();
    opts->add(co);
    co->add_flag("--dry-run", *dry, "print the resolved plan and exit");
    co->callback([=] {
      const json j = load_plan(*plan_path);
      SweepPlan sweep;
      sweep.base = spec_from_json(j.at("base"));
      sweep.axis1 = {AxisKind::AZ, j.at("a_z").get<std::vector<double>>()};
      sweep.axis2 = SweepAxis{AxisKind::L, j.at("sizes").get<std::vector<double>>()};
      if (j.contains("run")) sweep.run = run_from_json(j.at("run"));
      sweep.out_dir = fs::path(*out) / "sweep";
      sweep.validate();
      const json resolved{{"base", to_json(sweep.base)},
                          {"a_z", sweep.axis1.values},
                          {"sizes", sweep.axis2->values},
                          {"run", to_json(sweep.run)}};
      if (*dry) return print_json(json{{"plan", resolved}, {"options", opts->to_json()}});
      Timer timer;
      execute_sweep(sweep, threads_from_env());
      const CollapseOutput c = collapse_family(load_sweep_series(sweep.out_dir), opts->plan());
      RunManifest m;
      m.command = "pipeline collapse";
      m.spec = to_json(sweep.base);
      m.run = to_json(sweep.run);
      m.master_seed = sweep.run.master_seed;
      m.extra = json{{"plan", resolved}, {"options", opts->to_json()}, {"sweep", "sweep/manifest.json"}};
      write_collapse(*out, c, m, timer);
    });
  }
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("bilayer_squeeze");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");

  CLI::App app{"Spin squeezing in long-range interacting bilayers"};
  app.set_version_flag("--version", tool_version() + " (" + tool_revision() + ")");
  app.require_subcommand(1);
  bool quiet = false;
  bool verbose = false;
  app.add_flag("-q,--quiet", quiet, "warnings and errors only");
  app.add_flag("-v,--verbose", verbose, "debug output");
  app.parse_complete_callback([&] {
    if (quiet) spdlog::set_level(spdlog::level::warn);
    if (verbose) spdlog::set_level(spdlog::level::debug);
  });

  setup_lattice(app);
  setup_bogoliubov(app);
  setup_dtwa(app);
  setup_oracle(app);
  setup_analyze(app);
  setup_pipeline(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // help and version exit 0, everything else is a usage error
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const SchemaError& e) {
    spdlog::error("{}", e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const nlohmann::json::exception& e) {
    spdlog::error("bad JSON input: {}", e.what());
    return 3;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
