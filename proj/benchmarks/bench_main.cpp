#include <benchmark/benchmark.h>

#include <cmath>

#include "bilayer/analysis.hpp"
#include "bilayer/bogoliubov.hpp"
#include "bilayer/dtwa.hpp"
#include "bilayer/oracle.hpp"

namespace {

bsq::LatticeSpec spec_for(bsq::Geometry g, int L) {
  bsq::LatticeSpec s;
  s.geometry = g;
  s.L = L;
  s.a_z = 2.0;
  s.alpha = 2.0;
  return s;
}

void BM_EomRhs(benchmark::State& state) {
  const auto spec = spec_for(bsq::Geometry::Ladder1D, static_cast<int>(state.range(0)));
  const bsq::SpinDynamics dyn(bsq::build_coupling_table(spec));
  const bsq::SpinConfiguration c = bsq::sample_initial(spec, 0, 1);
  bsq::SpinMatrix ds(c.s.rows(), 3);
  for (auto _ : state) {
    dyn.rhs(c.s, ds);
    benchmark::DoNotOptimize(ds.data());
  }
  state.SetItemsProcessed(state.iterations() * c.s.rows() * c.s.rows());
}
BENCHMARK(BM_EomRhs)->RangeMultiplier(2)->Range(16, 256);

void BM_SquareEomRhs(benchmark::State& state) {
  const auto spec = spec_for(bsq::Geometry::SquareBilayer, static_cast<int>(state.range(0)));
  const bsq::SpinDynamics dyn(bsq::build_coupling_table(spec));
  const bsq::SpinConfiguration c = bsq::sample_initial(spec, 0, 1);
  bsq::SpinMatrix ds(c.s.rows(), 3);
  for (auto _ : state) {
    dyn.rhs(c.s, ds);
    benchmark::DoNotOptimize(ds.data());
  }
}
BENCHMARK(BM_SquareEomRhs)->Arg(4)->Arg(8)->Arg(12);

void BM_Trajectory(benchmark::State& state) {
  const auto spec = spec_for(bsq::Geometry::Ladder1D, static_cast<int>(state.range(0)));
  const bsq::SpinDynamics dyn(bsq::build_coupling_table(spec));
  bsq::RunConfig run;
  run.t_max = 5.0;
  std::uint64_t k = 0;
  for (auto _ : state) {
    auto ts = bsq::integrate_trajectory(bsq::sample_initial(spec, k, 1), dyn, run, k);
    benchmark::DoNotOptimize(ts.values.data());
    ++k;
  }
}
BENCHMARK(BM_Trajectory)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_FourierSums(benchmark::State& state) {
  const auto spec = spec_for(bsq::Geometry::Ladder1D, static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto sums = bsq::FourierSums(spec);
    benchmark::DoNotOptimize(&sums);
  }
}
BENCHMARK(BM_FourierSums)->RangeMultiplier(4)->Range(64, 4096)->Unit(benchmark::kMicrosecond);

void BM_Dispersion(benchmark::State& state) {
  const auto spec = spec_for(bsq::Geometry::TriangularBilayer, static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto d = bsq::dispersion(spec);
    benchmark::DoNotOptimize(d.points.data());
  }
}
BENCHMARK(BM_Dispersion)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_CriticalSpacing(benchmark::State& state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(bsq::critical_a_z(bsq::Geometry::Ladder1D, static_cast<int>(state.range(0)), 2.0, 1.0));
}
BENCHMARK(BM_CriticalSpacing)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_OracleStep(benchmark::State& state) {
  const auto spec = spec_for(bsq::Geometry::Ladder1D, static_cast<int>(state.range(0)));
  const bsq::CouplingTable t = bsq::build_coupling_table(spec);
  const bsq::StateVector psi = bsq::initial_state(spec);
  for (auto _ : state) {
    auto es = bsq::evolve(psi, t, {0.0, 0.5});
    benchmark::DoNotOptimize(es.var_O_minus.data());
  }
}
BENCHMARK(BM_OracleStep)->Arg(4)->Arg(6)->Arg(7)->Unit(benchmark::kMillisecond);

std::vector<bsq::DataSet> planted(int curves, int points) {
  std::vector<bsq::DataSet> out;
  for (int c = 0; c < curves; ++c) {
    const double g = std::pow(2.0, c);
    bsq::DataSet d;
    d.label = g;
    for (int i = 0; i < points; ++i) {
      const double u = -3.0 + 6.0 * i / (points - 1);
      d.x.push_back(u * std::pow(g, 0.4));
      d.y.push_back(std::pow(g, 0.6) * (1.0 + std::exp(-u * u)));
      d.sigma.push_back(0.02 * d.y.back());
    }
    out.push_back(std::move(d));
  }
  return out;
}

void BM_CostFunction(benchmark::State& state) {
  const auto sets = planted(static_cast<int>(state.range(0)), 101);
  for (auto _ : state) benchmark::DoNotOptimize(bsq::cost_function(sets, -0.4, -0.6));
}
BENCHMARK(BM_CostFunction)->Arg(2)->Arg(4)->Arg(8);

void BM_Collapse2d(benchmark::State& state) {
  const auto sets = planted(4, 61);
  for (auto _ : state) benchmark::DoNotOptimize(bsq::optimize_collapse_2d(sets));
}
BENCHMARK(BM_Collapse2d)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
