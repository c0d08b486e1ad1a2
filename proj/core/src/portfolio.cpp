#include "mpctune/portfolio.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "mpctune/sysid.hpp"
#include "mpctune/tuner.hpp"
#include "mpctune/util.hpp"

namespace mpctune {
namespace {

using json = nlohmann::json;

json matrix_to_json(const PerformanceMatrix& m) {
  json doc;
  doc["format"] = "mpctune-matrix";
  doc["version"] = 1;
  doc["dataset_ids"] = m.dataset_ids;
  json configs = json::array();
  for (const auto& c : m.configs) configs.push_back(to_flat_string(c));
  doc["configs"] = std::move(configs);
  doc["provenance"] = m.provenance;
  json scores = json::array();
  for (Eigen::Index r = 0; r < m.scores.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.scores.cols(); ++c) row.push_back(m.scores(r, c));
    scores.push_back(std::move(row));
  }
  doc["scores"] = std::move(scores);
  json mask = json::array();
  for (std::size_t r = 0; r < m.dataset_ids.size(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < m.configs.size(); ++c) {
      row.push_back(m.was_imputed(r, c));
    }
    mask.push_back(std::move(row));
  }
  doc["imputed"] = std::move(mask);
  doc["warnings"] = m.warnings;
  return doc;
}

}  // namespace

CandidateSet harvest(const std::vector<const Dataset*>& meta,
                     const std::vector<std::string>& ids, const HarvestOptions& options) {
  if (meta.empty()) throw std::invalid_argument("harvest: need at least one meta dataset");
  if (meta.size() != ids.size()) throw std::invalid_argument("harvest: ids/datasets mismatch");

  const ConfigurationSpace space = model_space();
  std::vector<TuneResult> results(meta.size());
  parallel_for(meta.size(), options.jobs, [&](std::size_t i) {
    const Dataset& data = *meta[i];
    Objective objective = [&data, &options](const Configuration& config,
                                            std::uint64_t seed) {
      return evaluate_with_timeout(config, data.train(), options.k_folds, seed,
                                   options.timeout_s);
    };
    TuneOptions tune_options;
    tune_options.budget = options.budget;
    tune_options.seed = derive_seed(options.seed, i);
    results[i] = tune(space, objective, tune_options);
  });

  CandidateSet out;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (!results[i].has_incumbent) {
      out.warnings.push_back("no finite evaluation on dataset " + ids[i] +
                             "; it contributes no candidate");
      continue;
    }
    const Configuration& incumbent = results[i].incumbent;
    auto existing = std::find(out.configs.begin(), out.configs.end(), incumbent);
    if (existing == out.configs.end()) {
      out.configs.push_back(incumbent);
      out.provenance.push_back({ids[i]});
    } else {
      out.provenance[static_cast<std::size_t>(existing - out.configs.begin())]
          .push_back(ids[i]);
    }
  }
  return out;
}

PerformanceMatrix build_matrix(const CandidateSet& candidates,
                               const std::vector<const Dataset*>& meta,
                               const std::vector<std::string>& ids,
                               const MatrixOptions& options) {
  if (candidates.configs.empty()) {
    throw std::invalid_argument("build_matrix: empty candidate set");
  }
  if (meta.empty() || meta.size() != ids.size()) {
    throw std::invalid_argument("build_matrix: ids/datasets mismatch");
  }
  const std::size_t rows = meta.size();
  const std::size_t cols = candidates.configs.size();

  Eigen::MatrixXd raw(rows, cols);
  std::vector<std::uint8_t> failed(rows * cols, 0);
  parallel_for(rows * cols, options.jobs, [&](std::size_t cell) {
    const std::size_t i = cell / cols;
    const std::size_t j = cell % cols;
    const ModelScore s =
        evaluate_with_timeout(candidates.configs[j], meta[i]->train(), options.k_folds,
                              options.seed, options.timeout_s);
    if (s.ok()) {
      raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s.rmse;
    } else {
      raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          std::numeric_limits<double>::quiet_NaN();
      failed[cell] = 1;
    }
  });

  PerformanceMatrix out;
  out.configs = candidates.configs;
  out.provenance = candidates.provenance;
  std::vector<Eigen::Index> kept_rows;
  for (std::size_t i = 0; i < rows; ++i) {
    double worst = -std::numeric_limits<double>::infinity();
    bool any_finite = false;
    for (std::size_t j = 0; j < cols; ++j) {
      if (!failed[i * cols + j]) {
        any_finite = true;
        worst = std::max(worst, raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      }
    }
    if (!any_finite) {
      out.warnings.push_back("dataset " + ids[i] +
                             ": every candidate failed; row dropped");
      continue;
    }
    kept_rows.push_back(static_cast<Eigen::Index>(i));
    out.dataset_ids.push_back(ids[i]);
  }

  out.scores.resize(static_cast<Eigen::Index>(kept_rows.size()),
                    static_cast<Eigen::Index>(cols));
  out.imputed.assign(kept_rows.size() * cols, 0);
  for (std::size_t r = 0; r < kept_rows.size(); ++r) {
    const auto i = static_cast<std::size_t>(kept_rows[r]);
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j) {
      if (!failed[i * cols + j]) {
        worst = std::max(worst, raw(kept_rows[r], static_cast<Eigen::Index>(j)));
      }
    }
    for (std::size_t j = 0; j < cols; ++j) {
      if (failed[i * cols + j]) {
        out.scores(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = 2.0 * worst;
        out.imputed[r * cols + j] = 1;
      } else {
        out.scores(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
            raw(kept_rows[r], static_cast<Eigen::Index>(j));
      }
    }
  }
  return out;
}

PerformanceMatrix normalize_rows(const PerformanceMatrix& matrix) {
  PerformanceMatrix out = matrix;
  for (Eigen::Index r = 0; r < out.scores.rows(); ++r) {
    const double lo = out.scores.row(r).minCoeff();
    const double hi = out.scores.row(r).maxCoeff();
    if (hi - lo < 1e-300) {
      out.scores.row(r).setZero();
    } else {
      out.scores.row(r) = (out.scores.row(r).array() - lo) / (hi - lo);
    }
  }
  return out;
}

Portfolio greedy_select(const PerformanceMatrix& normalized, int p) {
  if (p < 1) throw std::invalid_argument("greedy_select: size must be >= 1");
  const Eigen::Index rows = normalized.scores.rows();
  const Eigen::Index cols = normalized.scores.cols();
  if (rows == 0 || cols == 0) {
    throw std::invalid_argument("greedy_select: empty performance matrix");
  }

  Portfolio out;
  out.size_requested = p;
  Eigen::VectorXd current_min =
      Eigen::VectorXd::Constant(rows, std::numeric_limits<double>::infinity());
  std::vector<bool> taken(static_cast<std::size_t>(cols), false);

  const int steps = std::min<Eigen::Index>(p, cols);
  for (int step = 0; step < steps; ++step) {
    int best_col = -1;
    double best_value = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (taken[static_cast<std::size_t>(j)]) continue;
      const double value =
          current_min.cwiseMin(normalized.scores.col(j)).mean();
      if (value < best_value) {
        best_value = value;
        best_col = static_cast<int>(j);
      }
    }
    taken[static_cast<std::size_t>(best_col)] = true;
    current_min = current_min.cwiseMin(normalized.scores.col(best_col));
    out.selected_columns.push_back(best_col);
    out.selection_trace.push_back(best_value);
    out.configs.push_back(normalized.configs[static_cast<std::size_t>(best_col)]);
    out.provenance.push_back(normalized.provenance[static_cast<std::size_t>(best_col)]);
  }
  return out;
}

std::vector<Configuration> portfolio_to_initial_design(const Portfolio& portfolio) {
  return portfolio.configs;
}

std::string matrix_hash(const PerformanceMatrix& matrix) {
  return to_hex(fnv1a64(matrix_to_json(matrix).dump()));
}

void save_matrix(const PerformanceMatrix& matrix, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << matrix_to_json(matrix).dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

PerformanceMatrix load_matrix(const std::filesystem::path& path,
                              const ConfigurationSpace& space) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open matrix file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  json doc = json::parse(buf.str());
  if (doc.at("format").get<std::string>() != "mpctune-matrix") {
    throw std::runtime_error("not a matrix file: " + path.string());
  }
  PerformanceMatrix m;
  m.dataset_ids = doc.at("dataset_ids").get<std::vector<std::string>>();
  for (const auto& flat : doc.at("configs")) {
    m.configs.push_back(from_flat_string(space, flat.get<std::string>()));
  }
  m.provenance = doc.at("provenance").get<std::vector<std::vector<std::string>>>();
  const auto& scores = doc.at("scores");
  const auto rows = static_cast<Eigen::Index>(m.dataset_ids.size());
  const auto cols = static_cast<Eigen::Index>(m.configs.size());
  if (static_cast<Eigen::Index>(scores.size()) != rows) {
    throw std::runtime_error("matrix file: row count mismatch");
  }
  m.scores.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = scores[static_cast<std::size_t>(r)];
    if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw std::runtime_error("matrix file: column count mismatch");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      m.scores(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  }
  m.imputed.assign(static_cast<std::size_t>(rows * cols), 0);
  const auto& mask = doc.at("imputed");
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m.imputed[static_cast<std::size_t>(r * cols + c)] =
          mask[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<bool>() ? 1 : 0;
    }
  }
  m.warnings = doc.at("warnings").get<std::vector<std::string>>();
  return m;
}

void save_portfolio(const Portfolio& portfolio, const PerformanceMatrix& matrix,
                    const std::filesystem::path& path) {
  json doc;
  doc["format"] = "mpctune-portfolio";
  doc["version"] = 1;
  doc["size_requested"] = portfolio.size_requested;
  json configs = json::array();
  for (const auto& c : portfolio.configs) configs.push_back(to_flat_string(c));
  doc["configs"] = std::move(configs);
  doc["provenance"] = portfolio.provenance;
  doc["selected_columns"] = portfolio.selected_columns;
  doc["selection_trace"] = portfolio.selection_trace;
  doc["matrix_hash"] = matrix_hash(matrix);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << doc.dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Portfolio load_portfolio(const std::filesystem::path& path, const ConfigurationSpace& space) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open portfolio file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  json doc = json::parse(buf.str());
  if (doc.at("format").get<std::string>() != "mpctune-portfolio") {
    throw std::runtime_error("not a portfolio file: " + path.string());
  }
  Portfolio p;
  p.size_requested = doc.at("size_requested").get<int>();
  for (const auto& flat : doc.at("configs")) {
    p.configs.push_back(from_flat_string(space, flat.get<std::string>()));
  }
  p.provenance = doc.at("provenance").get<std::vector<std::vector<std::string>>>();
  p.selected_columns = doc.at("selected_columns").get<std::vector<int>>();
  p.selection_trace = doc.at("selection_trace").get<std::vector<double>>();
  p.matrix_hash = doc.at("matrix_hash").get<std::string>();
  return p;
}

}  // namespace mpctune
