// Portfolio construction: tune each meta dataset independently to harvest
// candidate configurations, score every candidate on every meta dataset, and
// greedily pick the subset that covers the datasets best. The portfolio then
// serves as the initial design for warmstarted tuning.
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mpctune/configspace.hpp"
#include "mpctune/dynamics.hpp"

namespace mpctune {

inline constexpr int kPortfolioSizes[] = {5, 10, 15, 20};
inline constexpr int kDefaultPortfolioSize = 10;

struct CandidateSet {
  std::vector<Configuration> configs;
  // Parallel to configs: ids of the meta datasets whose tuning produced each
  // one (more than one after deduplication).
  std::vector<std::vector<std::string>> provenance;
  std::vector<std::string> warnings;
};

struct PerformanceMatrix {
  std::vector<std::string> dataset_ids;       // rows
  std::vector<Configuration> configs;         // columns
  std::vector<std::vector<std::string>> provenance;
  Eigen::MatrixXd scores;                     // finite after imputation
  std::vector<std::uint8_t> imputed;          // row-major mask of imputed cells
  std::vector<std::string> warnings;

  bool was_imputed(std::size_t row, std::size_t col) const {
    return imputed[row * configs.size() + col] != 0;
  }
};

struct Portfolio {
  std::vector<Configuration> configs;  // selection order
  std::vector<std::vector<std::string>> provenance;
  std::vector<int> selected_columns;
  std::vector<double> selection_trace;  // aggregate objective after each step
  int size_requested = 0;
  std::string matrix_hash;  // filled when saved/loaded
};

struct HarvestOptions {
  int budget = 25;
  int k_folds = 4;
  std::uint64_t seed = 0;
  double timeout_s = 600.0;
  int jobs = 1;
};

// One tuning run (random initial design) per meta dataset; incumbents become
// candidates, deduplicated by value map with provenance merged in dataset
// order. A dataset where every evaluation fails contributes nothing beyond a
// warning.
CandidateSet harvest(const std::vector<const Dataset*>& meta,
                     const std::vector<std::string>& ids, const HarvestOptions& options);

struct MatrixOptions {
  int k_folds = 4;
  std::uint64_t seed = 0;
  double timeout_s = 600.0;
  int jobs = 1;
};

// Cross-evaluation of every candidate on every meta dataset's training split.
// Failed cells are imputed at twice the row's worst finite value; rows with
// no finite value are dropped with a warning. Cells may evaluate concurrently
// and the result is identical to serial evaluation.
PerformanceMatrix build_matrix(const CandidateSet& candidates,
                               const std::vector<const Dataset*>& meta,
                               const std::vector<std::string>& ids,
                               const MatrixOptions& options);

// Per-row min-max rescale to [0,1]; constant rows become all zeros.
PerformanceMatrix normalize_rows(const PerformanceMatrix& matrix);

// Greedy coverage: repeatedly add the column minimizing the mean over rows of
// the per-row minimum, ties to the lowest column index, until p columns are
// chosen or the candidates run out.
Portfolio greedy_select(const PerformanceMatrix& normalized, int p);

std::vector<Configuration> portfolio_to_initial_design(const Portfolio& portfolio);

std::string matrix_hash(const PerformanceMatrix& matrix);

void save_matrix(const PerformanceMatrix& matrix, const std::filesystem::path& path);
PerformanceMatrix load_matrix(const std::filesystem::path& path, const ConfigurationSpace& space);

void save_portfolio(const Portfolio& portfolio, const PerformanceMatrix& matrix,
                    const std::filesystem::path& path);
Portfolio load_portfolio(const std::filesystem::path& path, const ConfigurationSpace& space);

}  // namespace mpctune
