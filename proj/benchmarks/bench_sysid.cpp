#include <benchmark/benchmark.h>

#include <string>

#include "mpctune/configspace.hpp"
#include "mpctune/dynamics.hpp"
#include "mpctune/sysid.hpp"

using namespace mpctune;

namespace {

Dataset bench_data() {
  static const Dataset data =
      generate_dataset(pendulum_spec(0.05), 20, 40, 7, SplitFractions{}, 1);
  return data;
}

Configuration class_config(const std::string& model_class) {
  const ConfigurationSpace space = model_space();
  Configuration config;
  config.space_name = space.name();
  config.values["model_class"] = model_class;
  for (const auto& spec : space.specs()) {
    if (spec.name == "model_class") continue;
    if (space.is_active(static_cast<std::size_t>(space.index_of(spec.name)),
                        config.values)) {
      config.values[spec.name] = spec.default_value;
    }
  }
  return config;
}

}  // namespace

static void BM_Train(benchmark::State& state, const std::string& model_class) {
  const Dataset data = bench_data();
  const Configuration config = class_config(model_class);
  for (auto _ : state) {
    const DynamicsModel model = train(config, data.train());
    benchmark::DoNotOptimize(&model);
  }
}
BENCHMARK_CAPTURE(BM_Train, linear, std::string("linear"));
BENCHMARK_CAPTURE(BM_Train, poly_ridge, std::string("poly_ridge"));
BENCHMARK_CAPTURE(BM_Train, knn, std::string("knn"));
BENCHMARK_CAPTURE(BM_Train, mlp, std::string("mlp"));

static void BM_Score(benchmark::State& state, const std::string& model_class) {
  const Dataset data = bench_data();
  const DynamicsModel model = train(class_config(model_class), data.train());
  for (auto _ : state) {
    const ModelScore s = score(model, data.valid());
    benchmark::DoNotOptimize(s.rmse);
  }
}
BENCHMARK_CAPTURE(BM_Score, linear, std::string("linear"));
BENCHMARK_CAPTURE(BM_Score, knn, std::string("knn"));

static void BM_CvScore(benchmark::State& state) {
  const Dataset data = bench_data();
  const Configuration config = class_config("linear");
  for (auto _ : state) {
    const ModelScore s = cv_score(config, data.train(), 4, 1);
    benchmark::DoNotOptimize(s.rmse);
  }
}
BENCHMARK(BM_CvScore);

BENCHMARK_MAIN();
