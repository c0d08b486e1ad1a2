// Ground-truth benchmark systems x_{t+1} = f(x_t, u_t): torque-limited
// pendulum and cartpole with gravity/morphology scaling, plus trajectory
// dataset generation under uniform random controls.
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace mpctune {

enum class SystemFamily { Pendulum, Cartpole };

std::string family_name(SystemFamily f);
SystemFamily family_from_name(const std::string& name);

// Angles are measured from the upright position, so the hanging equilibrium
// sits at theta = pi for both families.
//   pendulum state: (theta, theta_dot), control: shoulder torque
//   cartpole state: (x, x_dot, theta, theta_dot), control: cart force
struct SystemSpec {
  SystemFamily family = SystemFamily::Pendulum;
  double gravity = 9.81;     // m/s^2, after any variant scaling
  double mass_scale = 1.0;   // multiplier on the family's base masses
  double length_scale = 1.0; // multiplier on the family's base lengths
  double damping = 0.0;      // N*m*s at the pivot
  double dt = 0.05;
  Eigen::VectorXd control_lo, control_hi;
  int state_dim = 0;
  int control_dim = 0;
};

SystemSpec pendulum_spec(double dt = 0.05);
SystemSpec cartpole_spec(double dt = 0.05);

// Copy with gravity/mass/length multiplied by the given positive scales.
SystemSpec make_variant(const SystemSpec& base, double gravity_scale,
                        double mass_scale, double length_scale);

// The stable hanging fixed point, used as the reset center.
Eigen::VectorXd stable_state(const SystemSpec& system);

// Semi-implicit Euler over one dt; the control is clamped to bounds first.
Eigen::VectorXd step(const SystemSpec& system, const Eigen::VectorXd& x,
                     const Eigen::VectorXd& u);

// (theta, theta_dot, u) -> theta_dotdot for the pendulum, exposed so tests can
// check gravity scaling against the closed-form ODE.
double pendulum_angular_acceleration(const SystemSpec& system, double theta,
                                     double theta_dot, double torque);

struct Trajectory {
  Eigen::MatrixXd states;    // (L+1) x n
  Eigen::MatrixXd controls;  // L x m
  double dt = 0.0;

  Eigen::Index length() const { return controls.rows(); }
};

struct SplitFractions {
  double train = 0.7;
  double valid = 0.15;
  double test = 0.15;
};

class Dataset {
 public:
  Dataset(std::vector<Trajectory> trajectories, SystemSpec system,
          std::uint64_t seed, SplitFractions split);

  const std::vector<Trajectory>& trajectories() const { return trajectories_; }
  const SystemSpec& system() const { return system_; }
  std::uint64_t seed() const { return seed_; }
  const SplitFractions& split() const { return split_; }

  // Whole-trajectory split, in generation order: [train | valid | test].
  std::span<const Trajectory> train() const;
  std::span<const Trajectory> valid() const;
  std::span<const Trajectory> test() const;
  std::size_t n_train() const { return n_train_; }
  std::size_t n_valid() const { return n_valid_; }

 private:
  std::vector<Trajectory> trajectories_;
  SystemSpec system_;
  std::uint64_t seed_;
  SplitFractions split_;
  std::size_t n_train_ = 0, n_valid_ = 0;
};

// Each trajectory starts from the hanging fixed point plus a small uniform
// perturbation (+-0.05 on angle, angular rate and cart offset) and applies
// i.i.d. uniform controls. Trajectory i uses the seed stream derive_seed(seed,
// i), so parallel and serial generation agree bit-exactly.
Dataset generate_dataset(const SystemSpec& system, int n_traj, int length,
                         std::uint64_t seed, SplitFractions split = {},
                         int jobs = 1);

// Delimited text format, 17 significant digits, exact round-trip:
//   header,<family>,<gravity>,<mass_scale>,<length_scale>,<damping>,<dt>,<n>,<m>,<seed>,<train>,<valid>,<test>
//   traj,<id>,<step>,x[0..n),u[0..m)     (control fields empty on the final row)
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace mpctune
