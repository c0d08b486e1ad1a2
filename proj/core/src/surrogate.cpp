#include "mpctune/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "mpctune/util.hpp"

namespace mpctune {
namespace {

double mean_of(const Eigen::VectorXd& y, const std::vector<int>& rows) {
  double sum = 0.0;
  for (int r : rows) sum += y[r];
  return sum / static_cast<double>(rows.size());
}

}  // namespace

double RandomForest::Tree::predict_row(const Eigen::VectorXd& x) const {
  int idx = 0;
  while (true) {
    const Node& node = nodes[static_cast<std::size_t>(idx)];
    if (node.feature < 0) return node.value;
    idx = x[node.feature] <= node.threshold ? node.left : node.right;
  }
}

void RandomForest::fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       std::uint64_t seed, ForestParams params) {
  const int n = static_cast<int>(X.rows());
  const int dims = static_cast<int>(X.cols());
  if (n == 0 || dims == 0) throw std::invalid_argument("forest fit: empty data");
  if (y.size() != n) throw std::invalid_argument("forest fit: row/label mismatch");
  if (params.n_trees < 1 || params.min_leaf < 1) {
    throw std::invalid_argument("forest fit: bad params");
  }
  params_ = params;
  trees_.assign(static_cast<std::size_t>(params.n_trees), Tree{});

  const int m_try = std::max(1, (dims + 2) / 3);

  for (int t = 0; t < params.n_trees; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    std::vector<int> rows(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      rows[static_cast<std::size_t>(i)] =
          static_cast<int>(rng.uniform_int(0, n - 1));
    }

    Tree& tree = trees_[static_cast<std::size_t>(t)];
    std::vector<int> pool(static_cast<std::size_t>(dims));

    // Depth-first growth; the node reserves its slot before children so the
    // layout (and RNG draw order) is parent, left subtree, right subtree.
    auto grow = [&](auto&& self, std::vector<int> node_rows) -> int {
      const int my_index = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      tree.nodes.back().value = mean_of(y, node_rows);

      if (static_cast<int>(node_rows.size()) < 2 * params.min_leaf) return my_index;

      std::iota(pool.begin(), pool.end(), 0);
      for (int j = 0; j < m_try; ++j) {
        const auto pick = static_cast<std::size_t>(rng.uniform_int(j, dims - 1));
        std::swap(pool[static_cast<std::size_t>(j)], pool[pick]);
      }

      int best_feature = -1;
      double best_threshold = 0.0;
      double best_sse = std::numeric_limits<double>::infinity();
      std::vector<double> values;
      for (int j = 0; j < m_try; ++j) {
        const int f = pool[static_cast<std::size_t>(j)];
        values.clear();
        for (int r : node_rows) values.push_back(X(r, f));
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        for (std::size_t v = 0; v + 1 < values.size(); ++v) {
          const double thr = 0.5 * (values[v] + values[v + 1]);
          int n_left = 0;
          double sum_left = 0.0, sum_right = 0.0;
          for (int r : node_rows) {
            if (X(r, f) <= thr) {
              ++n_left;
              sum_left += y[r];
            } else {
              sum_right += y[r];
            }
          }
          const int n_right = static_cast<int>(node_rows.size()) - n_left;
          if (n_left < params.min_leaf || n_right < params.min_leaf) continue;
          const double mean_left = sum_left / n_left;
          const double mean_right = sum_right / n_right;
          double sse = 0.0;
          for (int r : node_rows) {
            const double d = y[r] - (X(r, f) <= thr ? mean_left : mean_right);
            sse += d * d;
          }
          if (sse < best_sse) {
            best_sse = sse;
            best_feature = f;
            best_threshold = thr;
          }
        }
      }
      if (best_feature < 0) return my_index;

      std::vector<int> left_rows, right_rows;
      for (int r : node_rows) {
        if (X(r, best_feature) <= best_threshold) {
          left_rows.push_back(r);
        } else {
          right_rows.push_back(r);
        }
      }
      tree.nodes[static_cast<std::size_t>(my_index)].feature = best_feature;
      tree.nodes[static_cast<std::size_t>(my_index)].threshold = best_threshold;
      const int left_index = self(self, std::move(left_rows));
      tree.nodes[static_cast<std::size_t>(my_index)].left = left_index;
      const int right_index = self(self, std::move(right_rows));
      tree.nodes[static_cast<std::size_t>(my_index)].right = right_index;
      return my_index;
    };
    grow(grow, std::move(rows));
  }
}

RandomForest::Prediction RandomForest::predict(const Eigen::VectorXd& x) const {
  if (trees_.empty()) throw std::logic_error("forest predict before fit");
  const auto b = static_cast<double>(trees_.size());
  double sum = 0.0;
  std::vector<double> per_tree;
  per_tree.reserve(trees_.size());
  for (const auto& tree : trees_) {
    const double p = tree.predict_row(x);
    per_tree.push_back(p);
    sum += p;
  }
  Prediction out;
  out.mean = sum / b;
  double var = 0.0;
  for (double p : per_tree) var += (p - out.mean) * (p - out.mean);
  var /= b;
  out.variance = std::max(var, params_.variance_floor);
  return out;
}

double normal_pdf(double z) {
  static const double inv_sqrt_2pi = 0.3989422804014326779;
  return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double expected_improvement(double mu, double sigma, double best) {
  if (!(sigma > 0.0)) return std::max(best - mu, 0.0);
  const double z = (best - mu) / sigma;
  const double ei = (best - mu) * normal_cdf(z) + sigma * normal_pdf(z);
  return std::max(ei, 0.0);
}

}  // namespace mpctune
