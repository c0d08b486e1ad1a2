// Desk-scale studies over the whole pipeline: paired pure-BO vs warmstart
// runs, the portfolio-size sweep, and the model-to-controller transfer study.
// Each study is driven by one config file and writes its artifacts into a
// directory tree that cmd_report can consume.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mpctune/dynamics.hpp"
#include "mpctune/portfolio.hpp"
#include "mpctune/report.hpp"

namespace mpctune {

struct DatasetSpec {
  std::string id;
  std::string system = "pendulum";  // pendulum or cartpole
  double gravity_scale = 1.0;
  double mass_scale = 1.0;
  double length_scale = 1.0;
  int n_traj = 100;
  int length = 200;
  double dt = 0.05;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  std::vector<DatasetSpec> meta;
  std::vector<DatasetSpec> test;
  int k_folds = 4;
  int budget = 40;
  std::vector<int> portfolio_sizes = {5, 10, 15, 20};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  double timeout_s = 600.0;
  std::string out_dir;
  int jobs = 1;
  std::string control_task = "cartpole-balance";
  int control_episodes = 3;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);
void save_experiment_config(const ExperimentConfig& config,
                            const std::filesystem::path& path);

// Seeds non-empty, budget covers the largest portfolio size, and meta/test
// dataset specs disjoint (no shared id, no identical generation tuple).
void validate_experiment_config(const ExperimentConfig& config);

Dataset dataset_from_spec(const DatasetSpec& spec, int jobs = 1);

struct PairedRunResult {
  std::string dataset_id;
  // Indexed by seed position; pairs share the seed.
  std::vector<double> pure_bo_finals;
  std::vector<double> portfolio_finals;
  double threshold = 0.0;  // median of the pure-BO finals
  std::vector<int> pure_bo_iters_to_threshold;    // -1 when never reached
  std::vector<int> portfolio_iters_to_threshold;
  int portfolio_size = 0;
};

// Pure BO vs portfolio-warmstarted BO with paired seeds and equal budgets on
// every test dataset; emits the comparison table, iterations-to-threshold
// file, and tuning curves under config.out_dir.
std::vector<PairedRunResult> run_warmstart_study(const ExperimentConfig& config);

struct SizeSweepRow {
  int size = 0;  // 0 means pure BO
  std::string dataset_id;
  std::vector<double> finals;
  double mean = 0.0;
  double std_dev = 0.0;
  double gain = 0.0;  // vs the size-0 rows, 0 for the baseline itself
};

// One shared candidate matrix, one portfolio per size (prefixes of each
// other), paired runs per size; per-size gains table with the best size per
// dataset marked.
std::vector<SizeSweepRow> run_size_sweep(const ExperimentConfig& config,
                                         const std::vector<int>& sizes);

struct ControlStudyRow {
  int size = 0;
  std::vector<double> scores;
  double mean = 0.0;
  double std_dev = 0.0;
  double gain = 0.0;
  WelchResult test;  // vs the size-0 row
};

// Tunes models at several portfolio sizes (0 = pure BO) with paired seeds,
// runs each incumbent through the fixed CEM controller on the configured
// task, and reports mean control score and gain per size.
std::vector<ControlStudyRow> run_control_study(const ExperimentConfig& config,
                                               const std::vector<int>& sizes);

}  // namespace mpctune
