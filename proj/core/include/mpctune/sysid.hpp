// One-step dynamics model learning. Models are trained on (x_t, u_t) ->
// x_{t+1} pairs drawn within trajectories, predict the state difference
// internally, and are scored by pooled one-step RMSE.
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

#include "mpctune/configspace.hpp"
#include "mpctune/dynamics.hpp"
#include "mpctune/util.hpp"

namespace mpctune {

// The tunable model space: a top-level model_class with per-class children.
//   linear:     ridge regression on [1, z] features
//   poly_ridge: ridge regression on all monomials up to poly_degree
//   knn:        k nearest neighbours in normalized input space
//   mlp:        tanh MLP trained by full-batch gradient descent
ConfigurationSpace model_space();

struct ModelScore {
  double rmse = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  std::vector<double> per_fold;
  std::size_t n_points = 0;

  static ModelScore failure() {
    ModelScore s;
    s.failed = true;
    return s;
  }
  bool ok() const { return !failed; }
};

enum class ModelKind { Linear, PolyRidge, Knn, Mlp };

// Tanh MLP with linear output, exposed so the analytic gradient can be checked
// against finite differences. Hidden layers use tanh; loss is the mean over
// samples and output dimensions of the squared error.
struct MlpNet {
  std::vector<Eigen::MatrixXd> w;  // w[l]: in x out
  std::vector<Eigen::VectorXd> b;

  static MlpNet init(int input_dim, int hidden, int layers, int output_dim, Rng& rng);
  Eigen::MatrixXd forward(const Eigen::MatrixXd& X) const;
  double loss(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) const;
  // Returns the loss; fills dw/db with the analytic gradient.
  double loss_and_gradient(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                           std::vector<Eigen::MatrixXd>& dw,
                           std::vector<Eigen::VectorXd>& db) const;
};

class DynamicsModel {
 public:
  const Configuration& config() const { return config_; }
  ModelKind kind() const { return kind_; }
  int input_dim() const { return static_cast<int>(in_mean_.size()); }
  int output_dim() const { return output_dim_; }
  const Eigen::VectorXd& norm_mean() const { return in_mean_; }
  const Eigen::VectorXd& norm_std() const { return in_std_; }

  // x_{t+1} prediction (the learned state difference added back onto x).
  Eigen::VectorXd predict(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
  // Row-wise batch form; X is samples x n, U is samples x m.
  Eigen::MatrixXd predict_batch(const Eigen::MatrixXd& X, const Eigen::MatrixXd& U) const;

  friend DynamicsModel train(const Configuration&, std::span<const Trajectory>,
                             const Deadline*);
  friend void save_model(const DynamicsModel&, const std::filesystem::path&);
  friend DynamicsModel load_model(const std::filesystem::path&);

 private:
  Eigen::MatrixXd predict_delta(const Eigen::MatrixXd& Z) const;  // normalized inputs

  ModelKind kind_ = ModelKind::Linear;
  Configuration config_;
  int output_dim_ = 0;
  Eigen::VectorXd in_mean_, in_std_;
  // linear / poly_ridge
  int poly_degree_ = 1;
  Eigen::MatrixXd weights_;  // n_features x output_dim
  // knn
  Eigen::MatrixXd knn_inputs_, knn_targets_;
  int knn_k_ = 1;
  bool knn_inverse_distance_ = false;
  // mlp
  MlpNet mlp_;
  Eigen::VectorXd target_mean_, target_std_;
};

// Deterministic given (config, data): every stochastic piece runs on the fixed
// internal seed 0. Throws ConfigError for configs invalid in model_space() and
// TimedOut when the deadline expires mid-training.
DynamicsModel train(const Configuration& config, std::span<const Trajectory> data,
                    const Deadline* deadline = nullptr);

// Pooled one-step RMSE: sqrt(mean over pairs and state dims of squared error).
ModelScore score(const DynamicsModel& model, std::span<const Trajectory> data);

// Trajectory-level K-fold CV: seeded shuffle, interleaved fold assignment,
// mean of per-fold RMSE. Folds may evaluate concurrently (jobs > 1) with
// results identical to serial evaluation.
ModelScore cv_score(const Configuration& config, std::span<const Trajectory> data,
                    int k_folds, std::uint64_t seed,
                    const Deadline* deadline = nullptr, int jobs = 1);

// cv_score under a wallclock budget; timeouts and training crashes come back
// as the failed sentinel, never as exceptions.
ModelScore evaluate_with_timeout(const Configuration& config,
                                 std::span<const Trajectory> data, int k_folds,
                                 std::uint64_t seed, double budget_s, int jobs = 1);

// Self-describing model document: config echo, normalization stats, parameters.
void save_model(const DynamicsModel& model, const std::filesystem::path& path);
DynamicsModel load_model(const std::filesystem::path& path);

// Training pairs of a trajectory set, flattened: rows of X are [x_t, u_t],
// rows of Y are x_{t+1} - x_t. Pairs never cross a trajectory boundary.
void build_pairs(std::span<const Trajectory> data, Eigen::MatrixXd& X, Eigen::MatrixXd& Y);

}  // namespace mpctune
