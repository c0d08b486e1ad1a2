// Sequential model-based tuning over a ConfigurationSpace: evaluate an
// initial design (random or a portfolio), then loop propose -> evaluate under
// a fixed budget, tracking the incumbent (lowest finite score, earliest wins).
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mpctune/configspace.hpp"
#include "mpctune/surrogate.hpp"
#include "mpctune/sysid.hpp"

namespace mpctune {

// (config, seed) -> score. Must be total: failures come back as the failed
// sentinel, never as exceptions.
using Objective = std::function<ModelScore(const Configuration&, std::uint64_t)>;

struct TraceEntry {
  int iteration = 0;
  Configuration config;
  ModelScore score;
  double wallclock_s = 0.0;
  double incumbent_score = std::numeric_limits<double>::quiet_NaN();
};

struct TuningTrace {
  std::vector<TraceEntry> entries;
  std::uint64_t seed = 0;
  std::string initial_design_kind = "random";  // "random" or "portfolio"
  int budget_iterations = 0;
  std::string space_name;
};

struct TuneResult {
  Configuration incumbent;
  ModelScore incumbent_score = ModelScore::failure();
  bool has_incumbent = false;
  TuningTrace trace;
};

struct TuneOptions {
  int budget = 50;
  std::uint64_t seed = 0;
  std::vector<Configuration> initial;  // empty: random init below
  int n_random_init = 5;
  ForestParams forest;
  // Streaming sink, invoked after each evaluation (for append-as-you-go trace
  // files that survive interruption).
  std::function<void(const TraceEntry&)> on_entry;
};

// Observations live in encoded space; scores are normalized to zero mean and
// unit variance inside fit_surrogate (the trace always stores raw scores).
struct SurrogateState {
  Eigen::MatrixXd points;
  Eigen::VectorXd scores_norm;
  double score_mean = 0.0;
  double score_std = 1.0;
  RandomForest forest;
  int n_observations() const { return static_cast<int>(points.rows()); }
};

// Requires >= 2 points. Scores must already be finite (failed evaluations are
// imputed by the caller before reaching here).
SurrogateState fit_surrogate(const Eigen::MatrixXd& points, const Eigen::VectorXd& scores,
                             std::uint64_t seed, ForestParams params = {});

// One proposal. With fewer than 2 observations this falls back to a plain
// random sample. Otherwise: a seeded coin returns a random sample with
// probability 0.1; else the expected-improvement argmax over a pool of 1000
// random samples plus 10 perturbations of the incumbent (first-seen wins
// ties). incumbent_encoded must be the encoding of the row with the lowest
// normalized score.
Configuration propose_next(const ConfigurationSpace& space, const SurrogateState& surrogate,
                           const Configuration* incumbent, std::uint64_t rng_seed);

// Perturbation operator used for the local pool entries: jitter each active
// numeric parameter by 0.1 of its encoded range (clamped), resample each
// active categorical with probability 0.2. Children activated by a changed
// parent are drawn fresh.
Configuration perturb(const ConfigurationSpace& space, const Configuration& base, Rng& rng);

TuneResult tune(const ConfigurationSpace& space, const Objective& objective,
                const TuneOptions& options);

// Spec'd argument order, for call sites that need nothing extra.
TuneResult tune(const ConfigurationSpace& space, const Objective& objective, int budget,
                const std::vector<Configuration>& initial, std::uint64_t seed);

// Line-oriented trace file: a header line, one record per iteration appended
// as the run progresses, and a final summary record with the incumbent.
// canonical=true writes zeros for wallclock fields so equal runs produce
// byte-identical files.
class TraceWriter {
 public:
  TraceWriter(const std::filesystem::path& path, const std::string& space_name,
              std::uint64_t seed, int budget, const std::string& initial_design_kind,
              bool canonical);
  void write_entry(const TraceEntry& entry);
  void finish(const TuneResult& result);

 private:
  std::string path_;
  bool canonical_ = false;
  bool finished_ = false;
};

TuneResult load_trace(const std::filesystem::path& path, const ConfigurationSpace& space);

}  // namespace mpctune
