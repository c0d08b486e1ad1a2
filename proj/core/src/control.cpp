#include "mpctune/control.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mpctune/util.hpp"

namespace mpctune {
namespace {

using json = nlohmann::json;

void check_task(const ControlTask& task) {
  const int n = task.system.state_dim;
  const int m = task.system.control_dim;
  if (task.start_state.size() != n || task.goal_state.size() != n ||
      task.q_weights.size() != n || task.r_weights.size() != m) {
    throw std::invalid_argument("control task: dimension mismatch");
  }
  if (task.q_weights.minCoeff() < 0.0 || task.r_weights.minCoeff() < 0.0) {
    throw std::invalid_argument("control task: negative cost weights");
  }
  if (task.episode_length < 1) throw std::invalid_argument("control task: empty episode");
  if (!(task.success_threshold > 0.0)) {
    throw std::invalid_argument("control task: success threshold must be positive");
  }
}

Eigen::VectorXd noise_std_for(const MPCConfig& cfg, const ControlTask& task) {
  if (cfg.control_noise_std.size() > 0) {
    if (cfg.control_noise_std.size() != task.system.control_dim) {
      throw std::invalid_argument("mpc config: noise std dimension mismatch");
    }
    return cfg.control_noise_std;
  }
  return 0.25 * (task.system.control_hi - task.system.control_lo);
}

double step_cost(const ControlTask& task, const Eigen::VectorXd& next_state,
                 const Eigen::VectorXd& control) {
  const Eigen::VectorXd dx = next_state - task.goal_state;
  return (task.q_weights.array() * dx.array().square()).sum() +
         (task.r_weights.array() * control.array().square()).sum();
}

}  // namespace

BatchPredictor predictor_from_model(DynamicsModel model) {
  auto shared = std::make_shared<DynamicsModel>(std::move(model));
  return [shared](const Eigen::MatrixXd& X, const Eigen::MatrixXd& U) {
    return shared->predict_batch(X, U);
  };
}

BatchPredictor predictor_from_simulator(const SystemSpec& system) {
  return [system](const Eigen::MatrixXd& X, const Eigen::MatrixXd& U) {
    Eigen::MatrixXd next(X.rows(), X.cols());
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
      next.row(r) = step(system, X.row(r).transpose(), U.row(r).transpose()).transpose();
    }
    return next;
  };
}

ControlTask make_task(const std::string& name) {
  ControlTask task;
  task.name = name;
  if (name == "pendulum-balance" || name == "pendulum-swingup") {
    task.system = pendulum_spec();
    task.goal_state = Eigen::VectorXd::Zero(2);
    task.q_weights = Eigen::VectorXd(2);
    task.q_weights << 1.0, 0.1;
    task.r_weights = Eigen::VectorXd(1);
    task.r_weights << 0.01;
    if (name == "pendulum-balance") {
      task.start_state = Eigen::VectorXd(2);
      task.start_state << 0.15, 0.0;
      task.episode_length = 60;
      task.success_threshold = 0.2;
    } else {
      task.start_state = Eigen::VectorXd(2);
      task.start_state << M_PI, 0.0;
      task.episode_length = 120;
      task.success_threshold = 60.0;
    }
  } else if (name == "cartpole-balance" || name == "cartpole-swingup") {
    task.system = cartpole_spec();
    task.goal_state = Eigen::VectorXd::Zero(4);
    task.q_weights = Eigen::VectorXd(4);
    task.q_weights << 1.0, 0.1, 5.0, 0.1;
    task.r_weights = Eigen::VectorXd(1);
    task.r_weights << 0.001;
    if (name == "cartpole-balance") {
      task.start_state = Eigen::VectorXd(4);
      task.start_state << 0.0, 0.0, 0.15, 0.0;
      task.episode_length = 60;
      task.success_threshold = 1.0;
    } else {
      task.start_state = Eigen::VectorXd(4);
      task.start_state << 0.0, 0.0, M_PI, 0.0;
      task.episode_length = 120;
      task.success_threshold = 400.0;
    }
  } else {
    throw std::invalid_argument("unknown control task: " + name);
  }
  check_task(task);
  return task;
}

std::vector<std::string> task_names() {
  return {"pendulum-balance", "pendulum-swingup", "cartpole-balance", "cartpole-swingup"};
}

Eigen::VectorXd mpc_plan(const BatchPredictor& predict, const Eigen::VectorXd& state,
                         const ControlTask& task, const MPCConfig& cfg,
                         std::uint64_t rng_seed) {
  check_task(task);
  if (cfg.horizon < 1 || cfg.samples < 2 || cfg.cem_iterations < 1) {
    throw std::invalid_argument("mpc config: bad horizon/samples/iterations");
  }
  if (!(cfg.elite_fraction > 0.0 && cfg.elite_fraction <= 1.0)) {
    throw std::invalid_argument("mpc config: elite fraction out of range");
  }
  if (state.size() != task.system.state_dim) {
    throw std::invalid_argument("mpc_plan: state dimension mismatch");
  }

  const int horizon = cfg.horizon;
  const int samples = cfg.samples;
  const int m = task.system.control_dim;
  const int n_elite = std::max(
      1, static_cast<int>(std::ceil(cfg.elite_fraction * static_cast<double>(samples))));
  const Eigen::VectorXd& lo = task.system.control_lo;
  const Eigen::VectorXd& hi = task.system.control_hi;

  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(horizon, m);
  Eigen::MatrixXd std_dev =
      noise_std_for(cfg, task).transpose().replicate(horizon, 1);

  Rng rng(rng_seed);
  // controls[t] holds step t for every sample (samples x m).
  std::vector<Eigen::MatrixXd> controls(
      static_cast<std::size_t>(horizon), Eigen::MatrixXd(samples, m));
  std::vector<int> order(static_cast<std::size_t>(samples));

  for (int it = 0; it < cfg.cem_iterations; ++it) {
    for (int s = 0; s < samples; ++s) {
      for (int t = 0; t < horizon; ++t) {
        for (int d = 0; d < m; ++d) {
          const double u = mean(t, d) + std_dev(t, d) * rng.normal();
          controls[static_cast<std::size_t>(t)](s, d) = std::clamp(u, lo[d], hi[d]);
        }
      }
    }

    Eigen::MatrixXd states = state.transpose().replicate(samples, 1);
    Eigen::VectorXd costs = Eigen::VectorXd::Zero(samples);
    for (int t = 0; t < horizon; ++t) {
      const Eigen::MatrixXd& u_t = controls[static_cast<std::size_t>(t)];
      states = predict(states, u_t);
      const Eigen::MatrixXd dx = states.rowwise() - task.goal_state.transpose();
      costs += (dx.array().square().matrix() * task.q_weights) +
               (u_t.array().square().matrix() * task.r_weights);
    }
    for (int s = 0; s < samples; ++s) {
      if (!std::isfinite(costs[s])) costs[s] = std::numeric_limits<double>::infinity();
    }
    if (!states.allFinite()) {
      for (int s = 0; s < samples; ++s) {
        if (!states.row(s).allFinite()) costs[s] = std::numeric_limits<double>::infinity();
      }
    }

    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + n_elite, order.end(),
                      [&](int a, int b) {
                        if (costs[a] != costs[b]) return costs[a] < costs[b];
                        return a < b;
                      });

    Eigen::MatrixXd new_mean = Eigen::MatrixXd::Zero(horizon, m);
    Eigen::MatrixXd second = Eigen::MatrixXd::Zero(horizon, m);
    for (int e = 0; e < n_elite; ++e) {
      const int s = order[static_cast<std::size_t>(e)];
      for (int t = 0; t < horizon; ++t) {
        new_mean.row(t) += controls[static_cast<std::size_t>(t)].row(s);
        second.row(t) +=
            controls[static_cast<std::size_t>(t)].row(s).array().square().matrix();
      }
    }
    new_mean /= static_cast<double>(n_elite);
    mean = new_mean;
    for (int t = 0; t < horizon; ++t) {
      for (int d = 0; d < m; ++d) {
        const double var =
            second(t, d) / static_cast<double>(n_elite) - mean(t, d) * mean(t, d);
        std_dev(t, d) = std::sqrt(std::max(var, 0.0));
        if (std_dev(t, d) < 1e-6) std_dev(t, d) = 1e-6;
      }
    }
  }

  Eigen::VectorXd action = mean.row(0).transpose();
  for (int d = 0; d < m; ++d) action[d] = std::clamp(action[d], lo[d], hi[d]);
  return action;
}

double zero_controller_cost(const ControlTask& task) {
  check_task(task);
  Eigen::VectorXd x = task.start_state;
  const Eigen::VectorXd u = Eigen::VectorXd::Zero(task.system.control_dim);
  double cost = 0.0;
  for (int t = 0; t < task.episode_length; ++t) {
    x = step(task.system, x, u);
    cost += step_cost(task, x, u);
  }
  return cost;
}

ControlScore evaluate_controller(const BatchPredictor& predict, const ControlTask& task,
                                 const MPCConfig& cfg, int episodes, std::uint64_t seed) {
  check_task(task);
  if (episodes < 1) throw std::invalid_argument("evaluate_controller: episodes must be >= 1");

  const double worst_ref = zero_controller_cost(task);

  ControlScore out;
  out.episodes = episodes;
  for (int e = 0; e < episodes; ++e) {
    const std::uint64_t episode_seed = derive_seed(seed, static_cast<std::uint64_t>(e));
    Eigen::VectorXd x = task.start_state;
    double cost = 0.0;
    for (int t = 0; t < task.episode_length; ++t) {
      const Eigen::VectorXd u = mpc_plan(
          predict, x, task, cfg, derive_seed(episode_seed, static_cast<std::uint64_t>(t)));
      x = step(task.system, x, u);
      cost += step_cost(task, x, u);
    }
    out.episode_costs.push_back(cost);
  }
  out.raw_cost = std::accumulate(out.episode_costs.begin(), out.episode_costs.end(), 0.0) /
                 static_cast<double>(episodes);
  out.score = control_score_from_cost(out.raw_cost, task.success_threshold, worst_ref);
  return out;
}

double control_score_from_cost(double raw_cost, double success_threshold, double worst_ref) {
  if (!(success_threshold > 0.0)) {
    throw std::invalid_argument("control score: success threshold must be positive");
  }
  if (raw_cost <= success_threshold) return 0.0;
  if (worst_ref <= success_threshold) {
    // Degenerate task where doing nothing already succeeds; anything above
    // the threshold is as bad as it gets.
    return 10.0;
  }
  const double t =
      std::log(raw_cost / success_threshold) / std::log(worst_ref / success_threshold);
  return 10.0 * std::clamp(t, 0.0, 1.0);
}

ConfigurationSpace control_space() {
  auto integer = [](std::string name, double lo, double hi, bool log_scale,
                    std::int64_t def) {
    HyperparameterSpec s;
    s.name = std::move(name);
    s.kind = ParamKind::Integer;
    s.lo = lo;
    s.hi = hi;
    s.log_scale = log_scale;
    s.default_value = def;
    return s;
  };
  auto cont = [](std::string name, double lo, double hi, bool log_scale, double def) {
    HyperparameterSpec s;
    s.name = std::move(name);
    s.kind = ParamKind::Continuous;
    s.lo = lo;
    s.hi = hi;
    s.log_scale = log_scale;
    s.default_value = def;
    return s;
  };
  std::vector<HyperparameterSpec> specs;
  specs.push_back(integer("horizon", 5, 40, false, 20));
  specs.push_back(integer("samples", 50, 400, true, 200));
  specs.push_back(cont("elite_fraction", 0.05, 0.5, false, 0.1));
  specs.push_back(integer("cem_iterations", 2, 8, false, 4));
  specs.push_back(cont("noise_scale", 0.05, 0.5, false, 0.25));
  return ConfigurationSpace("mpc-control-v1", std::move(specs));
}

MPCConfig mpc_config_from(const Configuration& config, const ControlTask& task) {
  const ConfigurationSpace space = control_space();
  if (auto violations = validate(space, config); !violations.empty()) {
    throw ConfigError(std::move(violations));
  }
  MPCConfig cfg;
  cfg.horizon = static_cast<int>(std::get<std::int64_t>(config.values.at("horizon")));
  cfg.samples = static_cast<int>(std::get<std::int64_t>(config.values.at("samples")));
  cfg.elite_fraction = std::get<double>(config.values.at("elite_fraction"));
  cfg.cem_iterations =
      static_cast<int>(std::get<std::int64_t>(config.values.at("cem_iterations")));
  const double scale = std::get<double>(config.values.at("noise_scale"));
  cfg.control_noise_std = scale * (task.system.control_hi - task.system.control_lo);
  return cfg;
}

void append_control_record(const std::filesystem::path& path,
                           const ControlEvalRecord& record) {
  json rec;
  rec["task"] = record.task;
  rec["model_id"] = record.model_id;
  rec["mpc"] = {{"horizon", record.config.horizon},
                {"samples", record.config.samples},
                {"elite_fraction", record.config.elite_fraction},
                {"cem_iterations", record.config.cem_iterations}};
  rec["episode_costs"] = record.result.episode_costs;
  rec["raw_cost"] = record.result.raw_cost;
  rec["score"] = record.result.score;
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to results file: " + path.string());
  out << rec.dump() << "\n";
}

std::vector<ControlEvalRecord> load_control_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open results file: " + path.string());
  std::vector<ControlEvalRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    ControlEvalRecord r;
    r.task = rec.at("task").get<std::string>();
    r.model_id = rec.at("model_id").get<std::string>();
    r.config.horizon = rec.at("mpc").at("horizon").get<int>();
    r.config.samples = rec.at("mpc").at("samples").get<int>();
    r.config.elite_fraction = rec.at("mpc").at("elite_fraction").get<double>();
    r.config.cem_iterations = rec.at("mpc").at("cem_iterations").get<int>();
    r.result.episode_costs = rec.at("episode_costs").get<std::vector<double>>();
    r.result.raw_cost = rec.at("raw_cost").get<double>();
    r.result.score = rec.at("score").get<double>();
    r.result.episodes = static_cast<int>(r.result.episode_costs.size());
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace mpctune
