#include "mpctune/sysid.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace mpctune {
namespace {

using json = nlohmann::json;

constexpr double kStdFloor = 1e-12;

double get_d(const Configuration& c, const std::string& name) {
  return std::get<double>(c.values.at(name));
}

std::int64_t get_i(const Configuration& c, const std::string& name) {
  return std::get<std::int64_t>(c.values.at(name));
}

const std::string& get_s(const Configuration& c, const std::string& name) {
  return std::get<std::string>(c.values.at(name));
}

void check_deadline(const Deadline* deadline) {
  if (deadline != nullptr && deadline->expired()) throw TimedOut{};
}

// All exponent vectors with total degree <= max_degree, ordered by total
// degree, then with earlier variables taking higher exponents first. The
// degree<=1 prefix is exactly [1, z_0, ..., z_{D-1}], which is what the
// linear model uses.
void monomials_rec(int dims, int pos, int left, std::vector<int>& cur,
                   std::vector<std::vector<int>>& out) {
  if (pos == dims - 1) {
    cur[pos] = left;
    out.push_back(cur);
    return;
  }
  for (int e = left; e >= 0; --e) {
    cur[pos] = e;
    monomials_rec(dims, pos + 1, left - e, cur, out);
  }
}

std::vector<std::vector<int>> monomials(int dims, int max_degree) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(static_cast<std::size_t>(dims), 0);
  for (int g = 0; g <= max_degree; ++g) monomials_rec(dims, 0, g, cur, out);
  return out;
}

Eigen::MatrixXd poly_features(const Eigen::MatrixXd& Z, int max_degree) {
  const auto expo = monomials(static_cast<int>(Z.cols()), max_degree);
  Eigen::MatrixXd phi(Z.rows(), static_cast<Eigen::Index>(expo.size()));
  for (std::size_t j = 0; j < expo.size(); ++j) {
    Eigen::VectorXd col = Eigen::VectorXd::Ones(Z.rows());
    for (int i = 0; i < Z.cols(); ++i) {
      for (int rep = 0; rep < expo[j][static_cast<std::size_t>(i)]; ++rep) {
        col.array() *= Z.col(i).array();
      }
    }
    phi.col(static_cast<Eigen::Index>(j)) = col;
  }
  return phi;
}

Eigen::MatrixXd ridge_solve(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& Y,
                            double lambda) {
  Eigen::MatrixXd gram = phi.transpose() * phi;
  gram.diagonal().array() += lambda;
  return gram.ldlt().solve(phi.transpose() * Y);
}

json mat_to_json(const Eigen::MatrixXd& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Eigen::MatrixXd mat_from_json(const json& j) {
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw std::runtime_error("model file: matrix payload size mismatch");
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
  }
  return m;
}

json vec_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::VectorXd vec_from_json(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

std::string kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::Linear: return "linear";
    case ModelKind::PolyRidge: return "poly_ridge";
    case ModelKind::Knn: return "knn";
    case ModelKind::Mlp: return "mlp";
  }
  throw std::logic_error("unreachable model kind");
}

ModelKind kind_from_name(const std::string& s) {
  if (s == "linear") return ModelKind::Linear;
  if (s == "poly_ridge") return ModelKind::PolyRidge;
  if (s == "knn") return ModelKind::Knn;
  if (s == "mlp") return ModelKind::Mlp;
  throw std::runtime_error("model file: unknown kind '" + s + "'");
}

}  // namespace

ConfigurationSpace model_space() {
  auto cont = [](std::string name, double lo, double hi, bool log_scale, double def,
                 std::optional<Condition> cond) {
    HyperparameterSpec s;
    s.name = std::move(name);
    s.kind = ParamKind::Continuous;
    s.lo = lo;
    s.hi = hi;
    s.log_scale = log_scale;
    s.default_value = def;
    s.condition = std::move(cond);
    return s;
  };
  auto integer = [](std::string name, double lo, double hi, bool log_scale,
                    std::int64_t def, std::optional<Condition> cond) {
    HyperparameterSpec s;
    s.name = std::move(name);
    s.kind = ParamKind::Integer;
    s.lo = lo;
    s.hi = hi;
    s.log_scale = log_scale;
    s.default_value = def;
    s.condition = std::move(cond);
    return s;
  };

  HyperparameterSpec model_class;
  model_class.name = "model_class";
  model_class.kind = ParamKind::Categorical;
  model_class.choices = {"linear", "poly_ridge", "knn", "mlp"};
  model_class.default_value = std::string("linear");

  HyperparameterSpec knn_weighting;
  knn_weighting.name = "knn_weighting";
  knn_weighting.kind = ParamKind::Categorical;
  knn_weighting.choices = {"uniform", "inverse_distance"};
  knn_weighting.default_value = std::string("uniform");
  knn_weighting.condition = Condition{"model_class", {"knn"}};

  auto on = [](const char* cls) { return Condition{"model_class", {cls}}; };

  std::vector<HyperparameterSpec> specs;
  specs.push_back(model_class);
  specs.push_back(cont("linear_ridge_lambda", 1e-8, 1.0, true, 1e-4, on("linear")));
  specs.push_back(integer("poly_degree", 2, 4, false, 3, on("poly_ridge")));
  specs.push_back(cont("poly_ridge_lambda", 1e-6, 10.0, true, 1e-3, on("poly_ridge")));
  specs.push_back(integer("knn_k", 1, 25, false, 5, on("knn")));
  specs.push_back(knn_weighting);
  specs.push_back(integer("mlp_hidden_units", 8, 128, true, 32, on("mlp")));
  specs.push_back(integer("mlp_layers", 1, 2, false, 1, on("mlp")));
  specs.push_back(cont("mlp_learning_rate", 1e-4, 1e-1, true, 1e-2, on("mlp")));
  specs.push_back(integer("mlp_epochs", 10, 200, true, 50, on("mlp")));
  return ConfigurationSpace("sysid-model-v1", std::move(specs));
}

void build_pairs(std::span<const Trajectory> data, Eigen::MatrixXd& X, Eigen::MatrixXd& Y) {
  if (data.empty()) throw std::invalid_argument("build_pairs: no trajectories");
  const Eigen::Index n = data[0].states.cols();
  const Eigen::Index m = data[0].controls.cols();
  Eigen::Index total = 0;
  for (const auto& traj : data) total += traj.controls.rows();
  X.resize(total, n + m);
  Y.resize(total, n);
  Eigen::Index row = 0;
  for (const auto& traj : data) {
    const Eigen::Index steps = traj.controls.rows();
    X.block(row, 0, steps, n) = traj.states.topRows(steps);
    X.block(row, n, steps, m) = traj.controls;
    Y.middleRows(row, steps) =
        traj.states.bottomRows(steps) - traj.states.topRows(steps);
    row += steps;
  }
}

MlpNet MlpNet::init(int input_dim, int hidden, int layers, int output_dim, Rng& rng) {
  MlpNet net;
  std::vector<int> sizes;
  sizes.push_back(input_dim);
  for (int l = 0; l < layers; ++l) sizes.push_back(hidden);
  sizes.push_back(output_dim);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int fan_in = sizes[l];
    const int fan_out = sizes[l + 1];
    const double scale = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd w(fan_in, fan_out);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = rng.uniform(-scale, scale);
    }
    net.w.push_back(std::move(w));
    net.b.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return net;
}

Eigen::MatrixXd MlpNet::forward(const Eigen::MatrixXd& X) const {
  Eigen::MatrixXd a = X;
  for (std::size_t l = 0; l < w.size(); ++l) {
    a = (a * w[l]).rowwise() + b[l].transpose();
    if (l + 1 < w.size()) a = a.array().tanh();
  }
  return a;
}

double MlpNet::loss(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) const {
  const Eigen::MatrixXd err = forward(X) - Y;
  return err.squaredNorm() / static_cast<double>(X.rows() * Y.cols());
}

double MlpNet::loss_and_gradient(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                                 std::vector<Eigen::MatrixXd>& dw,
                                 std::vector<Eigen::VectorXd>& db) const {
  const std::size_t n_layers = w.size();
  std::vector<Eigen::MatrixXd> acts(n_layers + 1);
  acts[0] = X;
  for (std::size_t l = 0; l < n_layers; ++l) {
    acts[l + 1] = (acts[l] * w[l]).rowwise() + b[l].transpose();
    if (l + 1 < n_layers) acts[l + 1] = acts[l + 1].array().tanh();
  }
  const double denom = static_cast<double>(X.rows() * Y.cols());
  const Eigen::MatrixXd err = acts[n_layers] - Y;
  const double loss_value = err.squaredNorm() / denom;

  dw.assign(n_layers, Eigen::MatrixXd());
  db.assign(n_layers, Eigen::VectorXd());
  Eigen::MatrixXd grad = 2.0 * err / denom;
  for (std::size_t l = n_layers; l-- > 0;) {
    dw[l] = acts[l].transpose() * grad;
    db[l] = grad.colwise().sum().transpose();
    if (l > 0) {
      grad = (grad * w[l].transpose()).array() *
             (1.0 - acts[l].array().square());
    }
  }
  return loss_value;
}

DynamicsModel train(const Configuration& config, std::span<const Trajectory> data,
                    const Deadline* deadline) {
  const ConfigurationSpace space = model_space();
  if (auto violations = validate(space, config); !violations.empty()) {
    throw ConfigError(std::move(violations));
  }
  check_deadline(deadline);

  Eigen::MatrixXd X, Y;
  build_pairs(data, X, Y);

  DynamicsModel model;
  model.config_ = config;
  model.output_dim_ = static_cast<int>(Y.cols());
  model.in_mean_ = X.colwise().mean();
  Eigen::MatrixXd centered = X.rowwise() - model.in_mean_.transpose();
  model.in_std_ =
      (centered.array().square().colwise().mean()).sqrt().matrix().transpose();
  for (Eigen::Index i = 0; i < model.in_std_.size(); ++i) {
    if (model.in_std_[i] < kStdFloor) model.in_std_[i] = 1.0;
  }
  const Eigen::MatrixXd Z = centered.array().rowwise() / model.in_std_.transpose().array();

  const std::string& cls = get_s(config, "model_class");
  if (cls == "linear") {
    model.kind_ = ModelKind::Linear;
    model.poly_degree_ = 1;
    model.weights_ = ridge_solve(poly_features(Z, 1), Y, get_d(config, "linear_ridge_lambda"));
  } else if (cls == "poly_ridge") {
    model.kind_ = ModelKind::PolyRidge;
    model.poly_degree_ = static_cast<int>(get_i(config, "poly_degree"));
    check_deadline(deadline);
    model.weights_ = ridge_solve(poly_features(Z, model.poly_degree_), Y,
                                 get_d(config, "poly_ridge_lambda"));
  } else if (cls == "knn") {
    model.kind_ = ModelKind::Knn;
    model.knn_inputs_ = Z;
    model.knn_targets_ = Y;
    model.knn_k_ = static_cast<int>(get_i(config, "knn_k"));
    model.knn_inverse_distance_ = get_s(config, "knn_weighting") == "inverse_distance";
  } else {
    model.kind_ = ModelKind::Mlp;
    model.target_mean_ = Y.colwise().mean();
    Eigen::MatrixXd y_centered = Y.rowwise() - model.target_mean_.transpose();
    model.target_std_ =
        (y_centered.array().square().colwise().mean()).sqrt().matrix().transpose();
    for (Eigen::Index i = 0; i < model.target_std_.size(); ++i) {
      if (model.target_std_[i] < kStdFloor) model.target_std_[i] = 1.0;
    }
    const Eigen::MatrixXd Yn =
        y_centered.array().rowwise() / model.target_std_.transpose().array();

    const int hidden = static_cast<int>(get_i(config, "mlp_hidden_units"));
    const int layers = static_cast<int>(get_i(config, "mlp_layers"));
    const double lr = get_d(config, "mlp_learning_rate");
    const int epochs = static_cast<int>(get_i(config, "mlp_epochs"));

    Rng rng(0);
    MlpNet net = MlpNet::init(static_cast<int>(Z.cols()), hidden, layers,
                              model.output_dim_, rng);
    std::vector<Eigen::MatrixXd> dw;
    std::vector<Eigen::VectorXd> db;
    for (int epoch = 0; epoch < epochs; ++epoch) {
      check_deadline(deadline);
      MlpNet snapshot = net;
      const double loss_value = net.loss_and_gradient(Z, Yn, dw, db);
      bool finite = std::isfinite(loss_value);
      if (finite) {
        for (std::size_t l = 0; l < net.w.size(); ++l) {
          net.w[l] -= lr * dw[l];
          net.b[l] -= lr * db[l];
          if (!net.w[l].allFinite() || !net.b[l].allFinite()) finite = false;
        }
      }
      if (!finite) {
        net = std::move(snapshot);
        break;
      }
    }
    model.mlp_ = std::move(net);
  }
  return model;
}

Eigen::MatrixXd DynamicsModel::predict_delta(const Eigen::MatrixXd& Z) const {
  switch (kind_) {
    case ModelKind::Linear:
    case ModelKind::PolyRidge:
      return poly_features(Z, poly_degree_) * weights_;
    case ModelKind::Knn: {
      const int stored = static_cast<int>(knn_inputs_.rows());
      const int k = std::min(knn_k_, stored);
      Eigen::MatrixXd out(Z.rows(), knn_targets_.cols());
      std::vector<int> order(static_cast<std::size_t>(stored));
      for (Eigen::Index q = 0; q < Z.rows(); ++q) {
        Eigen::VectorXd d2 =
            (knn_inputs_.rowwise() - Z.row(q)).rowwise().squaredNorm();
        std::iota(order.begin(), order.end(), 0);
        std::partial_sort(order.begin(), order.begin() + k, order.end(),
                          [&](int a, int b) {
                            if (d2[a] != d2[b]) return d2[a] < d2[b];
                            return a < b;
                          });
        Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(knn_targets_.cols());
        double total_w = 0.0;
        for (int j = 0; j < k; ++j) {
          const int idx = order[static_cast<std::size_t>(j)];
          const double w = knn_inverse_distance_
                               ? 1.0 / (std::sqrt(d2[idx]) + 1e-8)
                               : 1.0;
          acc += w * knn_targets_.row(idx);
          total_w += w;
        }
        out.row(q) = acc / total_w;
      }
      return out;
    }
    case ModelKind::Mlp: {
      Eigen::MatrixXd yn = mlp_.forward(Z);
      return (yn.array().rowwise() * target_std_.transpose().array()).matrix()
                 .rowwise() +
             target_mean_.transpose();
    }
  }
  throw std::logic_error("unreachable model kind");
}

Eigen::VectorXd DynamicsModel::predict(const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& u) const {
  Eigen::MatrixXd X(1, x.size());
  Eigen::MatrixXd U(1, u.size());
  X.row(0) = x.transpose();
  U.row(0) = u.transpose();
  return predict_batch(X, U).row(0).transpose();
}

Eigen::MatrixXd DynamicsModel::predict_batch(const Eigen::MatrixXd& X,
                                             const Eigen::MatrixXd& U) const {
  if (X.rows() != U.rows()) {
    throw std::invalid_argument("predict_batch: row count mismatch");
  }
  const Eigen::Index n = X.cols();
  if (n + U.cols() != in_mean_.size()) {
    throw std::invalid_argument("predict_batch: input dimension mismatch");
  }
  Eigen::MatrixXd raw(X.rows(), in_mean_.size());
  raw.leftCols(n) = X;
  raw.rightCols(U.cols()) = U;
  const Eigen::MatrixXd Z =
      (raw.rowwise() - in_mean_.transpose()).array().rowwise() /
      in_std_.transpose().array();
  return X + predict_delta(Z);
}

ModelScore score(const DynamicsModel& model, std::span<const Trajectory> data) {
  double sse = 0.0;
  std::size_t count = 0;
  for (const auto& traj : data) {
    const Eigen::Index steps = traj.controls.rows();
    if (steps == 0) continue;
    const Eigen::MatrixXd pred =
        model.predict_batch(traj.states.topRows(steps), traj.controls);
    sse += (pred - traj.states.bottomRows(steps)).squaredNorm();
    count += static_cast<std::size_t>(steps * traj.states.cols());
  }
  if (count == 0) throw std::invalid_argument("score: no transition pairs");
  ModelScore s;
  s.rmse = std::sqrt(sse / static_cast<double>(count));
  s.n_points = count;
  return s;
}

ModelScore cv_score(const Configuration& config, std::span<const Trajectory> data,
                    int k_folds, std::uint64_t seed, const Deadline* deadline,
                    int jobs) {
  const std::size_t n = data.size();
  if (k_folds < 2) throw std::invalid_argument("cv_score: k_folds must be >= 2");
  if (n < static_cast<std::size_t>(k_folds)) {
    throw std::invalid_argument("cv_score: fewer trajectories than folds");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0xCF));
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)));
    std::swap(order[i], order[j]);
  }

  ModelScore result;
  result.per_fold.assign(static_cast<std::size_t>(k_folds), 0.0);
  std::vector<std::size_t> fold_points(static_cast<std::size_t>(k_folds), 0);

  parallel_for(static_cast<std::size_t>(k_folds), jobs, [&](std::size_t f) {
    check_deadline(deadline);
    std::vector<Trajectory> train_set, valid_set;
    for (std::size_t p = 0; p < n; ++p) {
      const Trajectory& t = data[order[p]];
      if (p % static_cast<std::size_t>(k_folds) == f) {
        valid_set.push_back(t);
      } else {
        train_set.push_back(t);
      }
    }
    const DynamicsModel model = train(config, train_set, deadline);
    const ModelScore fold = score(model, valid_set);
    result.per_fold[f] = fold.rmse;
    fold_points[f] = fold.n_points;
  });

  result.rmse = std::accumulate(result.per_fold.begin(), result.per_fold.end(), 0.0) /
                static_cast<double>(k_folds);
  result.n_points = std::accumulate(fold_points.begin(), fold_points.end(), std::size_t{0});
  return result;
}

ModelScore evaluate_with_timeout(const Configuration& config,
                                 std::span<const Trajectory> data, int k_folds,
                                 std::uint64_t seed, double budget_s, int jobs) {
  if (!(budget_s > 0.0)) {
    throw std::invalid_argument("evaluate_with_timeout: budget must be positive");
  }
  const Deadline deadline = Deadline::after_seconds(budget_s);
  try {
    return cv_score(config, data, k_folds, seed, &deadline, jobs);
  } catch (const TimedOut&) {
    return ModelScore::failure();
  } catch (const std::exception&) {
    return ModelScore::failure();
  }
}

void save_model(const DynamicsModel& model, const std::filesystem::path& path) {
  json doc;
  doc["format"] = "mpctune-model";
  doc["version"] = 1;
  doc["kind"] = kind_name(model.kind_);
  doc["config"] = json::parse(config_to_json_text(model.config_));
  doc["output_dim"] = model.output_dim_;
  doc["in_mean"] = vec_to_json(model.in_mean_);
  doc["in_std"] = vec_to_json(model.in_std_);
  switch (model.kind_) {
    case ModelKind::Linear:
    case ModelKind::PolyRidge:
      doc["poly_degree"] = model.poly_degree_;
      doc["weights"] = mat_to_json(model.weights_);
      break;
    case ModelKind::Knn:
      doc["inputs"] = mat_to_json(model.knn_inputs_);
      doc["targets"] = mat_to_json(model.knn_targets_);
      doc["k"] = model.knn_k_;
      doc["inverse_distance"] = model.knn_inverse_distance_;
      break;
    case ModelKind::Mlp: {
      json layers = json::array();
      for (std::size_t l = 0; l < model.mlp_.w.size(); ++l) {
        layers.push_back(json{{"w", mat_to_json(model.mlp_.w[l])},
                              {"b", vec_to_json(model.mlp_.b[l])}});
      }
      doc["layers"] = std::move(layers);
      doc["target_mean"] = vec_to_json(model.target_mean_);
      doc["target_std"] = vec_to_json(model.target_std_);
      break;
    }
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << doc.dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

DynamicsModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  json doc = json::parse(buf.str());
  if (doc.at("format").get<std::string>() != "mpctune-model") {
    throw std::runtime_error("not a model file: " + path.string());
  }

  DynamicsModel model;
  model.kind_ = kind_from_name(doc.at("kind").get<std::string>());
  model.config_ = config_from_json_text(doc.at("config").dump());
  model.output_dim_ = doc.at("output_dim").get<int>();
  model.in_mean_ = vec_from_json(doc.at("in_mean"));
  model.in_std_ = vec_from_json(doc.at("in_std"));
  switch (model.kind_) {
    case ModelKind::Linear:
    case ModelKind::PolyRidge:
      model.poly_degree_ = doc.at("poly_degree").get<int>();
      model.weights_ = mat_from_json(doc.at("weights"));
      break;
    case ModelKind::Knn:
      model.knn_inputs_ = mat_from_json(doc.at("inputs"));
      model.knn_targets_ = mat_from_json(doc.at("targets"));
      model.knn_k_ = doc.at("k").get<int>();
      model.knn_inverse_distance_ = doc.at("inverse_distance").get<bool>();
      break;
    case ModelKind::Mlp: {
      for (const auto& layer : doc.at("layers")) {
        model.mlp_.w.push_back(mat_from_json(layer.at("w")));
        model.mlp_.b.push_back(vec_from_json(layer.at("b")));
      }
      model.target_mean_ = vec_from_json(doc.at("target_mean"));
      model.target_std_ = vec_from_json(doc.at("target_std"));
      break;
    }
  }
  return model;
}

}  // namespace mpctune
