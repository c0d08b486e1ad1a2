// Sampling-based MPC on top of a learned one-step model, plus closed-loop
// evaluation against the true simulator with a 0-10 score (lower is better).
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mpctune/configspace.hpp"
#include "mpctune/dynamics.hpp"
#include "mpctune/sysid.hpp"

namespace mpctune {

struct ControlTask {
  std::string name;
  SystemSpec system;
  Eigen::VectorXd start_state;
  Eigen::VectorXd goal_state;
  Eigen::VectorXd q_weights;  // per state dim, >= 0
  Eigen::VectorXd r_weights;  // per control dim, >= 0
  int episode_length = 100;
  double success_threshold = 1.0;  // cost mapped to score 0
};

struct MPCConfig {
  int horizon = 20;
  int samples = 200;
  double elite_fraction = 0.1;
  int cem_iterations = 4;
  Eigen::VectorXd control_noise_std;  // per control dim; empty means range/4
};

struct ControlScore {
  double score = 0.0;  // in [0, 10], lower is better
  double raw_cost = 0.0;
  int episodes = 0;
  std::vector<double> episode_costs;
};

// Batch one-step predictor: (states S x n, controls S x m) -> next states.
// Lets the planner run on either a learned model or the simulator itself.
using BatchPredictor =
    std::function<Eigen::MatrixXd(const Eigen::MatrixXd&, const Eigen::MatrixXd&)>;

BatchPredictor predictor_from_model(DynamicsModel model);
BatchPredictor predictor_from_simulator(const SystemSpec& system);

ControlTask make_task(const std::string& name);
std::vector<std::string> task_names();

// Cross-entropy planning: sample control sequences around a per-step Gaussian
// (clamped to bounds), roll out under the predictor, keep the elite fraction,
// refit, repeat; the first action of the final mean comes back. Samples whose
// rollout goes non-finite get infinite cost. Deterministic given seed.
Eigen::VectorXd mpc_plan(const BatchPredictor& predict, const Eigen::VectorXd& state,
                         const ControlTask& task, const MPCConfig& cfg,
                         std::uint64_t rng_seed);

// Episode cost of the do-nothing controller, the score-10 reference point.
double zero_controller_cost(const ControlTask& task);

// The 0-10 mapping on its own: 0 at or below the success threshold, 10 at or
// above the zero-controller reference, log-interpolated between.
double control_score_from_cost(double raw_cost, double success_threshold, double worst_ref);

// Closed-loop episodes on the true simulator, replanning each step. Score is
// 10 * clamp(log(raw_cost / success_threshold) / log(worst_ref /
// success_threshold), 0, 1) with worst_ref the zero-controller cost.
ControlScore evaluate_controller(const BatchPredictor& predict, const ControlTask& task,
                                 const MPCConfig& cfg, int episodes, std::uint64_t seed);

// Optional second tuning stage over the planner's own knobs, reusing the
// tuner unchanged.
ConfigurationSpace control_space();
MPCConfig mpc_config_from(const Configuration& config, const ControlTask& task);

struct ControlEvalRecord {
  std::string task;
  std::string model_id;
  MPCConfig config;
  ControlScore result;
};

// Results file consumed by the report stage; one JSON record per line,
// appended so repeated evaluations accumulate.
void append_control_record(const std::filesystem::path& path, const ControlEvalRecord& record);
std::vector<ControlEvalRecord> load_control_records(const std::filesystem::path& path);

}  // namespace mpctune
