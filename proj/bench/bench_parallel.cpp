// Serial vs OpenMP kernels: finite-difference Hessian of F* and an energy
// landscape grid. Thread count comes from PC_LANDSCAPE_THREADS.

#include <benchmark/benchmark.h>

#include "pcs/data.hpp"
#include "pcs/dln.hpp"
#include "pcs/landscape.hpp"
#include "pcs/parallel.hpp"
#include "pcs/pcn.hpp"

using namespace pcs;

namespace {

struct Problem {
  ArchSpec arch;
  Batch batch;
  Vector center;
};

Problem problem(int width) {
  Problem p;
  p.arch = ArchSpec::uniform(width, width, 2, width);
  data::DataConfig d;
  d.d_x = d.d_y = width;
  d.n_samples = 32;
  p.batch = data::generate(d);
  p.center = flatten(init_fan_in(p.arch, 0.5, 1));
  return p;
}

landscape::Objective fstar(const Problem& p) {
  return [&p](const Vector& th) { return dln::equilibrated_energy(unflatten(p.arch, th), p.batch); };
}

landscape::Objective pc_energy(const Problem& p) {
  pc::SolverConfig exact;
  exact.mode = pc::SolverMode::exact_linear;
  return [&p, exact](const Vector& th) {
    const Params w = unflatten(p.arch, th);
    return pc::energy(w, p.arch, pc::infer(w, p.arch, p.batch, exact));
  };
}

void hessian_parallel(benchmark::State& state) {
  const Problem p = problem(static_cast<int>(state.range(0)));
  const auto f = fstar(p);
  for (auto _ : state) benchmark::DoNotOptimize(landscape::numerical_hessian(f, p.center));
  state.counters["params"] = static_cast<double>(p.center.size());
  state.counters["threads"] = worker_threads();
}

void hessian_serial(benchmark::State& state) {
  const Problem p = problem(static_cast<int>(state.range(0)));
  const auto f = fstar(p);
  for (auto _ : state) benchmark::DoNotOptimize(landscape::numerical_hessian_serial(f, p.center));
  state.counters["params"] = static_cast<double>(p.center.size());
}

std::pair<Vector, Vector> directions(const Problem& p) {
  Rng rng(3);
  Vector a(p.center.size()), b(p.center.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = rng.normal(), b(i) = rng.normal();
  return {a.normalized(), b.normalized()};
}

void grid_parallel(benchmark::State& state) {
  const Problem p = problem(8);
  const auto f = pc_energy(p);
  const auto [a, b] = directions(p);
  const int res = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(landscape::landscape_grid(f, p.center, a, b, res, 1.0));
  state.counters["threads"] = worker_threads();
}

void grid_serial(benchmark::State& state) {
  const Problem p = problem(8);
  const auto f = pc_energy(p);
  const auto [a, b] = directions(p);
  const int res = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(landscape::landscape_grid_serial(f, p.center, a, b, res, 1.0));
}

}  // namespace

BENCHMARK(hessian_parallel)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(hessian_serial)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(grid_parallel)->Arg(15)->Arg(30)->Unit(benchmark::kMillisecond);
BENCHMARK(grid_serial)->Arg(15)->Arg(30)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
