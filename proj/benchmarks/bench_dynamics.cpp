#include <benchmark/benchmark.h>

#include <Eigen/Core>

#include "mpctune/dynamics.hpp"

using namespace mpctune;

static void BM_PendulumStep(benchmark::State& state) {
  const SystemSpec system = pendulum_spec(0.05);
  Eigen::VectorXd x(2);
  x << 0.3, 0.1;
  Eigen::VectorXd u(1);
  u << 0.5;
  for (auto _ : state) {
    x = step(system, x, u);
    benchmark::DoNotOptimize(x.data());
  }
}
BENCHMARK(BM_PendulumStep);

static void BM_CartpoleStep(benchmark::State& state) {
  const SystemSpec system = cartpole_spec(0.05);
  Eigen::VectorXd x(4);
  x << 0.0, 0.0, 0.3, 0.1;
  Eigen::VectorXd u(1);
  u << 2.0;
  for (auto _ : state) {
    x = step(system, x, u);
    benchmark::DoNotOptimize(x.data());
  }
}
BENCHMARK(BM_CartpoleStep);

static void BM_GenerateDataset(benchmark::State& state) {
  const SystemSpec system = pendulum_spec(0.05);
  const auto n_traj = static_cast<int>(state.range(0));
  for (auto _ : state) {
    const Dataset data = generate_dataset(system, n_traj, 50, 1, SplitFractions{}, 1);
    benchmark::DoNotOptimize(data.trajectories().data());
  }
  state.SetItemsProcessed(state.iterations() * n_traj * 50);
}
BENCHMARK(BM_GenerateDataset)->Arg(10)->Arg(50);

BENCHMARK_MAIN();
