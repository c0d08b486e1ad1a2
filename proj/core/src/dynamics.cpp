#include "mpctune/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mpctune/util.hpp"

namespace mpctune {

namespace {

// Base physical parameters before variant scaling.
constexpr double kPendulumMass = 1.0;     // kg
constexpr double kPendulumLength = 1.0;   // m
constexpr double kCartMass = 1.0;         // kg
constexpr double kPoleMass = 0.1;         // kg
constexpr double kPoleHalfLength = 0.5;   // m

void check_finite(const Eigen::VectorXd& x, const char* what) {
  if (!x.allFinite()) throw std::invalid_argument(std::string(what) + " is not finite");
}

Eigen::VectorXd clamp_control(const SystemSpec& s, const Eigen::VectorXd& u) {
  return u.cwiseMax(s.control_lo).cwiseMin(s.control_hi);
}

}  // namespace

std::string family_name(SystemFamily f) {
  return f == SystemFamily::Pendulum ? "pendulum" : "cartpole";
}

SystemFamily family_from_name(const std::string& name) {
  if (name == "pendulum") return SystemFamily::Pendulum;
  if (name == "cartpole") return SystemFamily::Cartpole;
  throw std::invalid_argument("unknown system family: " + name);
}

SystemSpec pendulum_spec(double dt) {
  SystemSpec s;
  s.family = SystemFamily::Pendulum;
  s.gravity = 9.81;
  s.damping = 0.1;
  s.dt = dt;
  s.state_dim = 2;
  s.control_dim = 1;
  s.control_lo = Eigen::VectorXd::Constant(1, -2.0);
  s.control_hi = Eigen::VectorXd::Constant(1, 2.0);
  return s;
}

SystemSpec cartpole_spec(double dt) {
  SystemSpec s;
  s.family = SystemFamily::Cartpole;
  s.gravity = 9.81;
  s.damping = 0.01;
  s.dt = dt;
  s.state_dim = 4;
  s.control_dim = 1;
  s.control_lo = Eigen::VectorXd::Constant(1, -10.0);
  s.control_hi = Eigen::VectorXd::Constant(1, 10.0);
  return s;
}

SystemSpec make_variant(const SystemSpec& base, double gravity_scale,
                        double mass_scale, double length_scale) {
  if (!(gravity_scale > 0.0) || !(mass_scale > 0.0) || !(length_scale > 0.0))
    throw std::invalid_argument("variant scales must be positive");
  SystemSpec v = base;
  v.gravity = base.gravity * gravity_scale;
  v.mass_scale = base.mass_scale * mass_scale;
  v.length_scale = base.length_scale * length_scale;
  return v;
}

Eigen::VectorXd stable_state(const SystemSpec& system) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(system.state_dim);
  if (system.family == SystemFamily::Pendulum) {
    x[0] = 3.14159265358979323846;
  } else {
    x[2] = 3.14159265358979323846;
  }
  return x;
}

double pendulum_angular_acceleration(const SystemSpec& s, double theta,
                                     double theta_dot, double torque) {
  const double m = kPendulumMass * s.mass_scale;
  const double l = kPendulumLength * s.length_scale;
  return (s.gravity / l) * std::sin(theta) +
         (torque - s.damping * theta_dot) / (m * l * l);
}

Eigen::VectorXd step(const SystemSpec& s, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& u) {
  if (x.size() != s.state_dim || u.size() != s.control_dim)
    throw std::invalid_argument("state/control dimension mismatch");
  check_finite(x, "state");
  const Eigen::VectorXd uc = clamp_control(s, u);
  Eigen::VectorXd out(s.state_dim);

  if (s.family == SystemFamily::Pendulum) {
    const double theta = x[0], theta_dot = x[1];
    const double acc = pendulum_angular_acceleration(s, theta, theta_dot, uc[0]);
    const double theta_dot_next = theta_dot + s.dt * acc;
    out[0] = theta + s.dt * theta_dot_next;
    out[1] = theta_dot_next;
  } else {
    const double pos = x[0], vel = x[1], theta = x[2], theta_dot = x[3];
    const double mc = kCartMass * s.mass_scale;
    const double mp = kPoleMass * s.mass_scale;
    const double l = kPoleHalfLength * s.length_scale;
    const double total = mc + mp;
    const double sin_t = std::sin(theta), cos_t = std::cos(theta);
    const double temp = (uc[0] + mp * l * theta_dot * theta_dot * sin_t) / total;
    const double theta_acc =
        (s.gravity * sin_t - cos_t * temp - s.damping * theta_dot / (mp * l)) /
        (l * (4.0 / 3.0 - mp * cos_t * cos_t / total));
    const double x_acc = temp - mp * l * theta_acc * cos_t / total;
    const double vel_next = vel + s.dt * x_acc;
    const double theta_dot_next = theta_dot + s.dt * theta_acc;
    out[0] = pos + s.dt * vel_next;
    out[1] = vel_next;
    out[2] = theta + s.dt * theta_dot_next;
    out[3] = theta_dot_next;
  }
  return out;
}

Dataset::Dataset(std::vector<Trajectory> trajectories, SystemSpec system,
                 std::uint64_t seed, SplitFractions split)
    : trajectories_(std::move(trajectories)),
      system_(std::move(system)),
      seed_(seed),
      split_(split) {
  const double sum = split_.train + split_.valid + split_.test;
  if (!(split_.train > 0.0) || !(split_.valid > 0.0) || !(split_.test > 0.0) ||
      std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must be positive and sum to 1");
  if (trajectories_.empty()) throw std::invalid_argument("dataset has no trajectories");
  for (const auto& t : trajectories_) {
    if (t.states.rows() != t.controls.rows() + 1 ||
        t.states.cols() != system_.state_dim ||
        t.controls.cols() != system_.control_dim)
      throw std::invalid_argument("trajectory shape inconsistent with system");
    if (!t.states.allFinite() || !t.controls.allFinite())
      throw std::invalid_argument("trajectory contains non-finite values");
  }
  const auto n = trajectories_.size();
  n_train_ = static_cast<std::size_t>(std::llround(split_.train * static_cast<double>(n)));
  n_valid_ = static_cast<std::size_t>(std::llround(split_.valid * static_cast<double>(n)));
  n_train_ = std::clamp<std::size_t>(n_train_, 1, n);
  if (n_train_ + n_valid_ > n) n_valid_ = n - n_train_;
}

std::span<const Trajectory> Dataset::train() const {
  return {trajectories_.data(), n_train_};
}
std::span<const Trajectory> Dataset::valid() const {
  return {trajectories_.data() + n_train_, n_valid_};
}
std::span<const Trajectory> Dataset::test() const {
  return {trajectories_.data() + n_train_ + n_valid_,
          trajectories_.size() - n_train_ - n_valid_};
}

Dataset generate_dataset(const SystemSpec& system, int n_traj, int length,
                         std::uint64_t seed, SplitFractions split, int jobs) {
  if (n_traj < 1 || length < 1)
    throw std::invalid_argument("need at least one trajectory of one step");
  std::vector<Trajectory> trajs(static_cast<std::size_t>(n_traj));
  const Eigen::VectorXd x0_center = stable_state(system);

  parallel_for(static_cast<std::size_t>(n_traj), jobs, [&](std::size_t i) {
    Rng rng(derive_seed(seed, i));
    Trajectory t;
    t.dt = system.dt;
    t.states.resize(length + 1, system.state_dim);
    t.controls.resize(length, system.control_dim);

    Eigen::VectorXd x = x0_center;
    if (system.family == SystemFamily::Pendulum) {
      x[0] += rng.uniform(-0.05, 0.05);
      x[1] += rng.uniform(-0.05, 0.05);
    } else {
      x[0] += rng.uniform(-0.05, 0.05);  // cart offset
      x[2] += rng.uniform(-0.05, 0.05);
      x[3] += rng.uniform(-0.05, 0.05);
    }
    t.states.row(0) = x;
    for (int j = 0; j < length; ++j) {
      Eigen::VectorXd u(system.control_dim);
      for (int d = 0; d < system.control_dim; ++d)
        u[d] = rng.uniform(system.control_lo[d], system.control_hi[d]);
      t.controls.row(j) = u;
      x = step(system, x, u);
      t.states.row(j + 1) = x;
    }
    trajs[i] = std::move(t);
  });

  return Dataset(std::move(trajs), system, seed, split);
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path.string());
  const auto& s = dataset.system();
  out << "header," << family_name(s.family) << ',' << fmt17(s.gravity) << ','
      << fmt17(s.mass_scale) << ',' << fmt17(s.length_scale) << ','
      << fmt17(s.damping) << ',' << fmt17(s.dt) << ',' << s.state_dim << ','
      << s.control_dim << ',' << dataset.seed() << ','
      << fmt17(dataset.split().train) << ',' << fmt17(dataset.split().valid)
      << ',' << fmt17(dataset.split().test) << '\n';
  const auto& trajs = dataset.trajectories();
  for (std::size_t id = 0; id < trajs.size(); ++id) {
    const auto& t = trajs[id];
    for (Eigen::Index j = 0; j <= t.length(); ++j) {
      out << "traj," << id << ',' << j;
      for (Eigen::Index d = 0; d < t.states.cols(); ++d)
        out << ',' << fmt17(t.states(j, d));
      for (Eigen::Index d = 0; d < t.controls.cols(); ++d) {
        out << ',';
        if (j < t.length()) out << fmt17(t.controls(j, d));
      }
      out << '\n';
    }
  }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(pos));
      break;
    }
    fields.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return fields;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty dataset file");
  auto header = split_csv(line);
  if (header.size() != 13 || header[0] != "header")
    throw std::runtime_error("malformed dataset header");

  SystemSpec base = family_from_name(header[1]) == SystemFamily::Pendulum
                        ? pendulum_spec()
                        : cartpole_spec();
  SystemSpec s = base;
  s.gravity = std::stod(header[2]);
  s.mass_scale = std::stod(header[3]);
  s.length_scale = std::stod(header[4]);
  s.damping = std::stod(header[5]);
  s.dt = std::stod(header[6]);
  const int n = std::stoi(header[7]);
  const int m = std::stoi(header[8]);
  if (n != s.state_dim || m != s.control_dim)
    throw std::runtime_error("dataset dims inconsistent with family");
  const std::uint64_t seed = std::stoull(header[9]);
  SplitFractions split{std::stod(header[10]), std::stod(header[11]), std::stod(header[12])};

  // First pass: rows per trajectory id (ids are contiguous and ordered).
  std::vector<std::vector<std::string>> rows_by_traj;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv(line);
    if (fields[0] != "traj" || fields.size() != static_cast<std::size_t>(3 + n + m))
      throw std::runtime_error("malformed dataset row: " + line);
    const auto id = static_cast<std::size_t>(std::stoull(fields[1]));
    if (id >= rows_by_traj.size()) rows_by_traj.resize(id + 1);
    rows_by_traj[id].push_back(line);
  }

  std::vector<Trajectory> trajs;
  trajs.reserve(rows_by_traj.size());
  for (auto& rows : rows_by_traj) {
    if (rows.size() < 2) throw std::runtime_error("trajectory with fewer than 2 rows");
    Trajectory t;
    t.dt = s.dt;
    const auto steps = static_cast<Eigen::Index>(rows.size()) - 1;
    t.states.resize(steps + 1, n);
    t.controls.resize(steps, m);
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(rows.size()); ++j) {
      auto fields = split_csv(rows[static_cast<std::size_t>(j)]);
      if (std::stoll(fields[2]) != j)
        throw std::runtime_error("non-contiguous step index in dataset");
      for (int d = 0; d < n; ++d)
        t.states(j, d) = std::stod(fields[static_cast<std::size_t>(3 + d)]);
      if (j < steps)
        for (int d = 0; d < m; ++d)
          t.controls(j, d) = std::stod(fields[static_cast<std::size_t>(3 + n + d)]);
    }
    trajs.push_back(std::move(t));
  }
  return Dataset(std::move(trajs), s, seed, split);
}

}  // namespace mpctune
