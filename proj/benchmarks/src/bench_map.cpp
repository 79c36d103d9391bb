#include <benchmark/benchmark.h>

#include <random>

#include "mapdyn/dynamics.hpp"
#include "mapdyn/estimator.hpp"
#include "mapdyn/human_template.hpp"
#include "mapdyn/sensors.hpp"

namespace {

using namespace mapdyn;

struct Fixture {
  KinematicTreeModel model = build_human_template(reference_subject());
  Eigen::VectorXd q, qd, qdd;
  std::vector<SensorSpec> specs;

  Fixture() {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    const auto n = static_cast<Eigen::Index>(model.dof_count());
    q = Eigen::VectorXd::NullaryExpr(n, [&] { return u(rng); });
    qd = Eigen::VectorXd::NullaryExpr(n, [&] { return u(rng); });
    qdd = Eigen::VectorXd::NullaryExpr(n, [&] { return u(rng); });
    specs = imu_specs(model);
    for (auto& s : mandatory_specs(model)) specs.push_back(std::move(s));
    specs = order_specs(std::move(specs));
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

MapProblem template_problem(const Fixture& f, const MeasurementAssembler& ma) {
  const DynVector d = rnea(f.model, f.q, f.qd, f.qdd);
  const Eigen::VectorXd y = simulate_readings(ma, f.q, f.qd, d, 7);
  return make_map_problem(assemble_constraints(f.model, f.q, f.qd), ma.assemble(f.q, f.qd), y);
}

void BM_Rnea(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(rnea(f.model, f.q, f.qd, f.qdd));
}
BENCHMARK(BM_Rnea);

void BM_ConstraintAssembly(benchmark::State& state) {
  const Fixture& f = fixture();
  const ConstraintAssembler ca(f.model);
  for (auto _ : state) benchmark::DoNotOptimize(ca.assemble(f.q, f.qd));
}
BENCHMARK(BM_ConstraintAssembly);

void BM_MeasurementAssembly(benchmark::State& state) {
  const Fixture& f = fixture();
  const MeasurementAssembler ma(f.model, f.specs);
  for (auto _ : state) benchmark::DoNotOptimize(ma.assemble(f.q, f.qd));
}
BENCHMARK(BM_MeasurementAssembly);

// Numeric factorization and solve; the symbolic pattern is built once.
void BM_MapSolve(benchmark::State& state) {
  const Fixture& f = fixture();
  const MeasurementAssembler ma(f.model, f.specs);
  const MapProblem p = template_problem(f, ma);
  const MapSolver solver(p);
  for (auto _ : state) benchmark::DoNotOptimize(solver.solve(p));
}
BENCHMARK(BM_MapSolve)->Unit(benchmark::kMillisecond);

void BM_MapSolveWithTorqueMarginals(benchmark::State& state) {
  const Fixture& f = fixture();
  const MeasurementAssembler ma(f.model, f.specs);
  const MapProblem p = template_problem(f, ma);
  const MapSolver solver(p);
  const DynLayout layout(f.model);
  std::vector<Eigen::Index> torques;
  for (std::size_t i = 1; i < f.model.link_count(); ++i) torques.push_back(layout.tau(i));
  for (auto _ : state) benchmark::DoNotOptimize(solver.solve(p).posterior.marginal_variances(torques));
}
BENCHMARK(BM_MapSolveWithTorqueMarginals)->Unit(benchmark::kMillisecond);

void BM_MapSolverSetup(benchmark::State& state) {
  const Fixture& f = fixture();
  const MeasurementAssembler ma(f.model, f.specs);
  const MapProblem p = template_problem(f, ma);
  for (auto _ : state) benchmark::DoNotOptimize(MapSolver(p));
}
BENCHMARK(BM_MapSolverSetup)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
