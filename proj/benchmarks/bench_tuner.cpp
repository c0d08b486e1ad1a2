#include <benchmark/benchmark.h>

#include <Eigen/Core>
#include <cmath>

#include "mpctune/configspace.hpp"
#include "mpctune/surrogate.hpp"
#include "mpctune/sysid.hpp"
#include "mpctune/tuner.hpp"
#include "mpctune/util.hpp"

using namespace mpctune;

namespace {

// Encoded observations of a smooth function over the model space, enough to
// exercise the forest at realistic dimensionality.
void make_observations(int n, Eigen::MatrixXd& points, Eigen::VectorXd& scores) {
  const ConfigurationSpace space = model_space();
  points.resize(n, static_cast<Eigen::Index>(space.encoding_dim()));
  scores.resize(n);
  for (int i = 0; i < n; ++i) {
    const Configuration config = sample(space, static_cast<std::uint64_t>(i));
    points.row(i) = encode(space, config);
    double s = 0.0;
    for (Eigen::Index j = 0; j < points.cols(); ++j) {
      const double v = points(i, j);
      if (v >= 0.0) s += std::sin(3.0 * v + static_cast<double>(j));
    }
    scores[i] = s;
  }
}

}  // namespace

static void BM_ForestFit(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  Eigen::MatrixXd points;
  Eigen::VectorXd scores;
  make_observations(n, points, scores);
  for (auto _ : state) {
    const SurrogateState surrogate = fit_surrogate(points, scores, 1);
    benchmark::DoNotOptimize(surrogate.forest.n_trees());
  }
}
BENCHMARK(BM_ForestFit)->Arg(10)->Arg(40);

static void BM_ForestPredict(benchmark::State& state) {
  Eigen::MatrixXd points;
  Eigen::VectorXd scores;
  make_observations(40, points, scores);
  const SurrogateState surrogate = fit_surrogate(points, scores, 1);
  const Eigen::VectorXd query = points.row(7);
  for (auto _ : state) {
    const RandomForest::Prediction p = surrogate.forest.predict(query);
    benchmark::DoNotOptimize(p.mean);
  }
}
BENCHMARK(BM_ForestPredict);

static void BM_ProposeNext(benchmark::State& state) {
  const ConfigurationSpace space = model_space();
  Eigen::MatrixXd points;
  Eigen::VectorXd scores;
  make_observations(20, points, scores);
  const SurrogateState surrogate = fit_surrogate(points, scores, 1);
  Eigen::Index best = 0;
  scores.minCoeff(&best);
  const Configuration incumbent =
      sample(space, static_cast<std::uint64_t>(best));
  std::uint64_t seed = 0;
  for (auto _ : state) {
    const Configuration proposal = propose_next(space, surrogate, &incumbent, seed++);
    benchmark::DoNotOptimize(&proposal);
  }
}
BENCHMARK(BM_ProposeNext);

static void BM_TuneSynthetic(benchmark::State& state) {
  const ConfigurationSpace space = model_space();
  const Objective objective = [&](const Configuration& config, std::uint64_t) {
    const Eigen::VectorXd enc = encode(space, config);
    ModelScore s;
    s.rmse = enc.array().abs().sum();
    return s;
  };
  for (auto _ : state) {
    const TuneResult result =
        tune(space, objective, static_cast<int>(state.range(0)), {}, 1);
    benchmark::DoNotOptimize(result.incumbent_score.rmse);
  }
}
BENCHMARK(BM_TuneSynthetic)->Arg(10)->Arg(25)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
