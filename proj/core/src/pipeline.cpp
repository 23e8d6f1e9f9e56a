#include "bilayer/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <sstream>

#include <spdlog/spdlog.h>

#include "bilayer/bogoliubov.hpp"

namespace bsq {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void apply_axis(LatticeSpec& s, AxisKind kind, double v) {
  switch (kind) {
    case AxisKind::AZ:
    case AxisKind::AZOverL:
      s.a_z = v;  // AZOverL is resolved once L is known
      break;
    case AxisKind::L:
      s.L = static_cast<int>(std::lround(v));
      break;
    case AxisKind::Lambda:
      s.lambda = v;
      break;
    case AxisKind::Alpha:
      s.alpha = v;
      break;
  }
}

json point_json(const LatticeSpec& spec, const RunConfig& run) { return json{{"spec", to_json(spec)}, {"run", to_json(run)}}; }

std::string key(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

}  // namespace

AxisKind parse_axis(std::string_view name) {
  if (name == "a_z") return AxisKind::AZ;
  if (name == "a_z_over_L") return AxisKind::AZOverL;
  if (name == "L") return AxisKind::L;
  if (name == "lambda") return AxisKind::Lambda;
  if (name == "alpha") return AxisKind::Alpha;
  throw std::invalid_argument("unknown sweep axis '" + std::string(name) + "'");
}

std::string_view to_string(AxisKind kind) {
  switch (kind) {
    case AxisKind::AZ: return "a_z";
    case AxisKind::AZOverL: return "a_z_over_L";
    case AxisKind::L: return "L";
    case AxisKind::Lambda: return "lambda";
    case AxisKind::Alpha: return "alpha";
  }
  return "unknown";
}

void SweepPlan::validate() const {
  run.validate();
  auto check = [](const SweepAxis& axis) {
    if (axis.values.empty()) throw std::invalid_argument("sweep axis '" + std::string(to_string(axis.kind)) + "' is empty");
    const bool up = axis.values.size() < 2 || axis.values[1] > axis.values[0];
    for (std::size_t i = 0; i + 1 < axis.values.size(); ++i) {
      const bool ok = up ? axis.values[i + 1] > axis.values[i] : axis.values[i + 1] < axis.values[i];
      if (!ok) throw std::invalid_argument("sweep axis '" + std::string(to_string(axis.kind)) + "' is not strictly monotone");
    }
    if (axis.kind == AxisKind::L) {
      for (double v : axis.values)
        if (v != std::round(v)) throw std::invalid_argument("sweep axis 'L' needs integer values");
    }
  };
  check(axis1);
  if (axis2) {
    check(*axis2);
    if (axis2->kind == axis1.kind) throw std::invalid_argument("sweep axes must differ");
    const bool both_az = (axis1.kind == AxisKind::AZ || axis1.kind == AxisKind::AZOverL) &&
                         (axis2->kind == AxisKind::AZ || axis2->kind == AxisKind::AZOverL);
    if (both_az) throw std::invalid_argument("a_z and a_z_over_L cannot both be swept");
  }
  const std::size_t total = axis1.values.size() * (axis2 ? axis2->values.size() : 1);
  if (total > budget)
    throw std::invalid_argument("sweep has " + std::to_string(total) + " points, budget is " + std::to_string(budget));
}

std::vector<LatticeSpec> SweepPlan::points() const {
  validate();
  std::vector<LatticeSpec> out;
  const std::vector<double> second = axis2 ? axis2->values : std::vector<double>{kNaN};
  for (double v1 : axis1.values) {
    for (double v2 : second) {
      LatticeSpec s = base;
      double ratio = kNaN;
      apply_axis(s, axis1.kind, v1);
      if (axis1.kind == AxisKind::AZOverL) ratio = v1;
      if (axis2) {
        apply_axis(s, axis2->kind, v2);
        if (axis2->kind == AxisKind::AZOverL) ratio = v2;
      }
      if (!std::isnan(ratio)) s.a_z = ratio * s.L;
      s.validate();
      out.push_back(s);
    }
  }
  return out;
}

json SweepPlan::to_json() const {
  auto axis_json = [](const SweepAxis& a) { return json{{"name", std::string(to_string(a.kind))}, {"values", a.values}}; };
  json j{{"base", bsq::to_json(base)}, {"axis1", axis_json(axis1)}, {"run", bsq::to_json(run)}, {"budget", budget}};
  if (axis2) j["axis2"] = axis_json(*axis2);
  if (!out_dir.empty()) j["out"] = out_dir.string();
  return j;
}

SweepPlan SweepPlan::from_json(const json& j) {
  if (!j.is_object()) throw SchemaError("sweep plan must be a JSON object");
  auto axis = [](const json& a) {
    if (!a.contains("name") || !a.contains("values")) throw SchemaError("sweep axis needs 'name' and 'values'");
    return SweepAxis{parse_axis(a.at("name").get<std::string>()), a.at("values").get<std::vector<double>>()};
  };
  SweepPlan p;
  if (!j.contains("base")) throw SchemaError("sweep plan: missing 'base'");
  if (!j.contains("axis1")) throw SchemaError("sweep plan: missing 'axis1'");
  p.base = spec_from_json(j.at("base"));
  p.axis1 = axis(j.at("axis1"));
  if (j.contains("axis2") && !j.at("axis2").is_null()) p.axis2 = axis(j.at("axis2"));
  if (j.contains("run")) p.run = run_from_json(j.at("run"));
  p.budget = j.value("budget", kDefaultRunBudget);
  if (j.contains("out")) p.out_dir = j.at("out").get<std::string>();
  p.validate();
  return p;
}

MinimalVariance minimum_of(const SeriesColumns& s) { return minimal_variance(s.t, s.var_O_minus, s.var_stderr); }

SweepResult execute_sweep(const SweepPlan& plan, int threads) {
  const std::vector<LatticeSpec> specs = plan.points();
  const auto started = std::chrono::steady_clock::now();
  RunManifest manifest;
  manifest.command = "dtwa sweep";
  manifest.started = utc_timestamp();
  manifest.run = to_json(plan.run);
  manifest.master_seed = plan.run.master_seed;
  manifest.spec = json::array();

  SweepResult result;
  result.minima.header = kMinimaHeader;
  json listing = json::array();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const LatticeSpec& spec = specs[i];
    SweepPoint pt;
    pt.spec = spec;
    const json pj = point_json(spec, plan.run);
    pt.hash = content_hash(pj);
    pt.series_path = fs::path("points") / pt.hash / "series.csv";
    const fs::path series_file = plan.out_dir / pt.series_path;
    const fs::path point_file = plan.out_dir / "points" / pt.hash / "point.json";

    spdlog::info("sweep point {}/{}: {} L={} a_z={} lambda={}", i + 1, specs.size(), to_string(spec.geometry), spec.L,
                 spec.a_z, spec.lambda);
    try {
      if (fs::exists(series_file) && fs::exists(point_file) && read_json(point_file) == pj) {
        pt.cached = true;
        pt.minimum = minimum_of(read_series(series_file));
      } else {
        const EnsembleSeries es = run_ensemble(spec, plan.run, threads);
        write_csv(series_file, series_table(es));
        write_json(point_file, pj);
        pt.minimum = minimal_variance(es);
      }
    } catch (const std::exception& e) {
      pt.ok = false;
      pt.error = e.what();
      pt.minimum = {kNaN, kNaN, kNaN, false};
      spdlog::warn("sweep point {} failed: {}", pt.hash, e.what());
    }

    result.minima.add_row({std::to_string(spec.L), std::to_string(spec.spins_per_layer()), format_double(spec.a_z),
                           format_double(spec.lambda), format_double(pt.minimum.t_min),
                           format_double(pt.minimum.var_min), format_double(pt.minimum.std_error)});
    manifest.spec.push_back(to_json(spec));
    if (fs::exists(series_file)) manifest.outputs.push_back(pt.series_path.generic_string());
    json entry{{"hash", pt.hash}, {"spec", to_json(spec)}, {"series", pt.series_path.generic_string()},
               {"N", spec.spins_per_layer()}, {"cached", pt.cached}, {"ok", pt.ok}};
    if (!pt.ok) entry["error"] = pt.error;
    listing.push_back(std::move(entry));
    result.points.push_back(std::move(pt));
  }

  write_csv(plan.out_dir / "minima.csv", result.minima);
  manifest.outputs.insert(manifest.outputs.begin(), "minima.csv");
  manifest.finished = utc_timestamp();
  manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  manifest.extra = json{{"plan", plan.to_json()}, {"points", listing}};
  write_manifest(plan.out_dir / "manifest.json", manifest);
  return result;
}

PExponentReport analyze_p(const CsvTable& minima, std::size_t min_points) {
  require_columns(minima, kMinimaHeader, "minima");
  const auto L = minima.numbers("L");
  const auto N = minima.numbers("N");
  const auto az = minima.numbers("a_z");
  const auto var = minima.numbers("var_min");
  const auto err = minima.numbers("var_min_stderr");

  std::map<std::string, std::pair<double, std::vector<PowerLawPoint>>> groups;
  for (std::size_t i = 0; i < L.size(); ++i) {
    if (!(var[i] > 0.0)) continue;
    const double ratio = az[i] / L[i];
    auto& g = groups[key(ratio)];
    g.first = ratio;
    g.second.push_back({N[i], var[i], std::isnan(err[i]) ? 0.0 : err[i]});
  }
  PExponentReport report;
  std::vector<std::pair<double, std::vector<PowerLawPoint>>> used;
  for (auto& [k, g] : groups) {
    if (g.second.size() < std::max<std::size_t>(2, min_points)) continue;
    std::sort(g.second.begin(), g.second.end(), [](const auto& a, const auto& b) { return a.n < b.n; });
    used.push_back(g);
  }
  std::sort(used.begin(), used.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::vector<PowerLawPoint>> all;
  for (const auto& [ratio, pts] : used) {
    report.groups.push_back({ratio, fit_common_power_law({pts})});
    all.push_back(pts);
  }
  if (all.empty()) throw std::invalid_argument("analyze_p: no aspect ratio has enough system sizes");
  report.joint = fit_common_power_law(all);
  return report;
}

CsvTable pipeline_phase_boundary(const BoundaryPlan& plan, int threads) {
  if (plan.geometries.empty()) throw std::invalid_argument("pipeline boundary: empty geometry list");
  if (plan.sizes.empty()) throw std::invalid_argument("pipeline boundary: empty size list");
  const std::vector<double> alphas = plan.alphas.empty() ? std::vector<double>{3.0} : plan.alphas;
  const std::vector<double> lambdas = plan.lambdas.empty() ? std::vector<double>{1.0} : plan.lambdas;
  if (!plan.bogoliubov_only && plan.a_z_over_L.size() < 2)
    throw std::invalid_argument("pipeline boundary: need at least two a_z/L values for the dTWA bracket");

  CsvTable table;
  table.header = kBoundaryHeader;
  for (Geometry g : plan.geometries) {
    for (double alpha : alphas) {
      for (double lambda : lambdas) {
        std::vector<double> bogo;
        for (int L : plan.sizes) {
          try {
            bogo.push_back(critical_a_z(g, L, alpha, lambda, plan.boundary));
          } catch (const std::exception& e) {
            spdlog::warn("critical_a_z {} alpha={} lambda={} L={}: {}", to_string(g), alpha, lambda, L, e.what());
            bogo.push_back(kNaN);
          }
        }

        double ratio_star = kNaN;
        if (!plan.bogoliubov_only) {
          try {
            SweepPlan sweep;
            sweep.base.geometry = g;
            sweep.base.alpha = alpha;
            sweep.base.lambda = lambda;
            sweep.base.boundary = plan.boundary;
            sweep.axis1 = {AxisKind::AZOverL, plan.a_z_over_L};
            std::vector<double> sizes(plan.sizes.begin(), plan.sizes.end());
            sweep.axis2 = SweepAxis{AxisKind::L, sizes};
            sweep.run = plan.run;
            std::ostringstream name;
            name << to_string(g) << "_alpha" << key(alpha) << "_lambda" << key(lambda);
            sweep.out_dir = plan.out_dir / "sweeps" / name.str();
            const SweepResult sr = execute_sweep(sweep, threads);
            const PExponentReport rep = analyze_p(sr.minima, 2);
            std::vector<TransitionPoint> curve;
            for (const auto& grp : rep.groups) curve.push_back({grp.a_z_over_L, grp.fit.exponent, grp.fit.uncertainty});
            ratio_star = detect_transition(curve);
          } catch (const std::exception& e) {
            spdlog::warn("dTWA boundary {} alpha={} lambda={}: {}", to_string(g), alpha, lambda, e.what());
          }
        }

        for (std::size_t i = 0; i < plan.sizes.size(); ++i) {
          const int L = plan.sizes[i];
          const double dtwa = ratio_star * L;
          if (!std::isnan(dtwa) && !std::isnan(bogo[i]) && bogo[i] > dtwa)
            spdlog::warn("Bogoliubov a_z* = {} exceeds dTWA a_z* = {} ({} alpha={} lambda={} L={})", bogo[i], dtwa,
                         to_string(g), alpha, lambda, L);
          table.add_row({std::string(to_string(g)), format_double(alpha), format_double(lambda), std::to_string(L),
                         format_double(bogo[i]), format_double(dtwa)});
        }
      }
    }
  }
  return table;
}

ScalingResult pipeline_scaling(const ScalingPlan& plan) {
  if (plan.sizes.size() < 4) throw std::invalid_argument("pipeline scaling: need at least 4 sizes");
  if (plan.alphas.empty()) throw std::invalid_argument("pipeline scaling: empty alpha list");
  ScalingResult out;
  out.table.header = {"alpha", "L", "a_z_star", "a_z_star_over_L"};
  const int d = dimension(plan.geometry);
  for (double alpha : plan.alphas) {
    std::vector<PowerLawPoint> pts;
    for (int L : plan.sizes) {
      double a = kNaN;
      try {
        a = critical_a_z(plan.geometry, L, alpha, plan.lambda);
        pts.push_back({static_cast<double>(L), a / L, 0.0});
      } catch (const std::exception& e) {
        spdlog::warn("critical_a_z alpha={} L={}: {}", alpha, L, e.what());
      }
      out.table.add_row({format_double(alpha), std::to_string(L), format_double(a), format_double(a / L)});
    }
    ScalingFit f;
    f.alpha = alpha;
    if (pts.size() >= 3) {
      const PowerLawFit fit = fit_power_law(pts);
      f.slope = fit.exponent;
      f.slope_uncertainty = fit.uncertainty;
      double ss_pow = 0.0;
      double c = 0.0;
      for (const auto& p : pts) c += std::log(p.y) + 0.5 * std::log(std::log(p.n));
      c /= static_cast<double>(pts.size());
      double ss_log = 0.0;
      for (const auto& p : pts) {
        const double r1 = std::log(p.y) - (std::log(fit.prefactor) + fit.exponent * std::log(p.n));
        const double r2 = std::log(p.y) - (c - 0.5 * std::log(std::log(p.n)));
        ss_pow += r1 * r1;
        ss_log += r2 * r2;
      }
      f.power_residual = std::sqrt(ss_pow / static_cast<double>(pts.size()));
      f.log_corrected_residual = std::sqrt(ss_log / static_cast<double>(pts.size()));
    } else {
      f.slope = f.slope_uncertainty = kNaN;
    }
    try {
      const CriticalScaling pred = predicted_critical_scaling(alpha, d);
      f.predicted_slope = pred.kind == ScalingKind::Power ? pred.exponent - 1.0 : 0.0;
      f.predicted_kind = pred.kind == ScalingKind::Linear ? "linear"
                         : pred.kind == ScalingKind::LogCorrected ? "log_corrected"
                                                                  : "power";
    } catch (const std::exception&) {
      f.predicted_slope = kNaN;
      f.predicted_kind = "none";
    }
    out.fits.push_back(f);
  }
  return out;
}

json to_json(const CollapseResult& r) {
  return json{{"d_V", r.d_V},           {"d_tau", r.d_tau},         {"delta", r.delta},
              {"nu", r.nu},             {"p", r.p},                 {"unc_d_V", r.unc_d_V},
              {"unc_d_tau", r.unc_d_tau}, {"unc_delta", r.unc_delta}, {"unc_nu", r.unc_nu},
              {"unc_p", r.unc_p},       {"S_min_dVdtau", r.S_min_dVdtau}, {"S_min_delta", r.S_min_delta},
              {"S_min_p", r.S_min_p}};
}

CollapseOutput collapse_family(const std::vector<SeriesRecord>& records, const CollapsePlan& plan) {
  if (records.size() < 2) throw std::invalid_argument("collapse: need at least two series");
  struct Curve {
    const SeriesRecord* rec;
    MinimalVariance min;
    DataSet data;
  };
  std::vector<Curve> curves;
  for (const auto& r : records) {
    Curve c{&r, minimum_of(r.series), {}};
    const double sigma = default_sigma({c.min.var_min}, plan.sigma_factor)[0];
    c.data.label = r.a_z;
    for (std::size_t i = 0; i < r.series.t.size(); ++i) {
      c.data.x.push_back(r.series.t[i] - c.min.t_min);
      c.data.y.push_back(r.series.var_O_minus[i]);
      c.data.sigma.push_back(sigma);
    }
    curves.push_back(std::move(c));
  }

  CollapseOutput out;
  CollapseResult& res = out.result;
  if (plan.p) {
    res.p = *plan.p;
    res.unc_p = plan.unc_p;
    res.S_min_p = kNaN;
  } else {
    CsvTable minima;
    minima.header = kMinimaHeader;
    for (const auto& c : curves)
      minima.add_row({format_double(c.rec->L), format_double(c.rec->N), format_double(c.rec->a_z), "1",
                      format_double(c.min.t_min), format_double(c.min.var_min), format_double(c.min.std_error)});
    const PExponentReport rep = analyze_p(minima, 2);
    res.p = rep.joint.exponent;
    res.unc_p = rep.joint.uncertainty;
    res.S_min_p = rep.joint.chi2_reduced;
  }

  const double n_max = std::max_element(records.begin(), records.end(), [](const auto& a, const auto& b) {
                         return a.N < b.N;
                       })->N;
  std::vector<DataSet> largest;
  for (const auto& c : curves)
    if (c.rec->N == n_max) largest.push_back(c.data);
  if (largest.size() < 2) throw std::invalid_argument("collapse: the largest system size needs at least two a_z values");
  const Collapse2dResult c2 = optimize_collapse_2d(largest, plan.options_2d);
  res.d_V = c2.d_V;
  res.d_tau = c2.d_tau;
  res.unc_d_V = c2.unc_d_V;
  res.unc_d_tau = c2.unc_d_tau;
  res.S_min_dVdtau = c2.S_min;

  std::vector<SizedDataSet> sized;
  for (const auto& c : curves) sized.push_back({c.rec->N, c.rec->a_z, c.data});
  const Collapse1dResult c1 = optimize_collapse_1d(sized, res.d_V, res.d_tau, res.p, plan.d, plan.options_1d);
  res.delta = c1.delta;
  res.unc_delta = c1.unc_delta;
  res.S_min_delta = c1.S_min;

  const NuEstimate nu = derive_nu(res.p, res.d_V, res.delta, plan.d, res.unc_p, res.unc_d_V, res.unc_delta);
  res.nu = nu.nu;
  res.unc_nu = nu.uncertainty;

  out.collapse_ok = res.S_min_dVdtau <= kFailedCollapseCost && res.S_min_delta <= kFailedCollapseCost;
  if (!out.collapse_ok) spdlog::warn("collapse failed: S_min above {}", kFailedCollapseCost);

  out.rescaled.header = {"N", "a_z", "x", "y", "sigma"};
  const std::vector<DataSet> full = rescale_full(sized, res.d_V, res.d_tau, res.delta, res.p, plan.d);
  for (std::size_t k = 0; k < full.size(); ++k) {
    for (std::size_t i = 0; i < full[k].x.size(); ++i) {
      out.rescaled.add_row({format_double(sized[k].n), format_double(sized[k].a_z), format_double(full[k].x[i]),
                            format_double(full[k].y[i]), format_double(full[k].sigma[i])});
    }
  }
  return out;
}

std::vector<SeriesRecord> load_sweep_series(const fs::path& dir) {
  const json manifest = read_json(dir / "manifest.json");
  if (!manifest.contains("points")) throw SchemaError((dir / "manifest.json").string() + ": missing 'points'");
  std::vector<SeriesRecord> out;
  for (const auto& p : manifest.at("points")) {
    if (!p.value("ok", true)) continue;
    const LatticeSpec spec = spec_from_json(p.at("spec"));
    SeriesRecord r;
    r.L = spec.L;
    r.N = spec.spins_per_layer();
    r.a_z = spec.a_z;
    r.series = read_series(dir / p.at("series").get<std::string>());
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace bsq
