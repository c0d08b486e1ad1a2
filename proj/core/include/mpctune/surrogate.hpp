// Random-forest surrogate over encoded configurations plus the expected
// improvement acquisition. The forest recipe is fully pinned (bootstrap draw
// order, feature-subset draw order, midpoint thresholds, tie handling) so a
// fit is reproducible from the seed alone.
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace mpctune {

struct ForestParams {
  int n_trees = 30;
  int min_leaf = 3;
  double variance_floor = 1e-6;
};

// Regression forest. Per tree t, an Rng seeded with derive_seed(seed, t)
// first draws N bootstrap row indices (uniform_int(0, N-1), in order), then
// the tree is grown depth-first, left before right. Every node that still has
// 2*min_leaf rows draws its feature subset (partial Fisher-Yates over all
// features, ceil(D/3) draws) before any split is evaluated, so RNG
// consumption does not depend on which split wins. Candidate thresholds are
// midpoints of consecutive distinct sorted feature values; the best split
// minimizes summed child SSE, first-seen winning ties. Prediction variance is
// the population variance of per-tree means, floored at variance_floor.
class RandomForest {
 public:
  struct Prediction {
    double mean = 0.0;
    double variance = 0.0;
  };

  void fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, std::uint64_t seed,
           ForestParams params = {});
  Prediction predict(const Eigen::VectorXd& x) const;
  bool fitted() const { return !trees_.empty(); }
  int n_trees() const { return static_cast<int>(trees_.size()); }

 private:
  struct Node {
    int feature = -1;  // negative means leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };
  struct Tree {
    std::vector<Node> nodes;
    double predict_row(const Eigen::VectorXd& x) const;
  };

  std::vector<Tree> trees_;
  ForestParams params_;
};

double normal_pdf(double z);
double normal_cdf(double z);

// Expected improvement for minimization: how much lower than `best` a draw
// from N(mu, sigma^2) is expected to land. Nonnegative; sigma <= 0 degrades
// to max(best - mu, 0).
double expected_improvement(double mu, double sigma, double best);

}  // namespace mpctune
