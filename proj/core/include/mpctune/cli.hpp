// Command implementations behind the mpctune binary. Each command takes a
// plain argument struct (so tests can call them without a process boundary)
// and returns a process exit code.
#pragma once

#include <cstdint>
#include <string>

namespace mpctune {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalidConfig = 2;
inline constexpr int kExitMissingInput = 3;
inline constexpr int kExitAllFailed = 4;

// Output paths are relative to $MPCTUNE_OUT_ROOT when that is set and the
// path is not absolute.
std::string resolve_out_path(const std::string& path);

struct GenDataArgs {
  std::string system = "pendulum";
  double gravity_scale = 1.0;
  double mass_scale = 1.0;
  double length_scale = 1.0;
  int n_traj = 100;
  int length = 200;
  double dt = 0.05;
  std::uint64_t seed = 0;
  std::string out;
  int jobs = 1;
};
int cmd_gen_data(const GenDataArgs& args);

struct TuneArgs {
  std::string data;
  std::string init = "random";  // "random" or "portfolio:PATH"
  int budget = 40;
  int k_folds = 4;
  std::uint64_t seed = 0;
  double timeout_s = 600.0;
  std::string out;        // trace file; incumbent lands beside it
  std::string out_model;  // optional: train the incumbent and save it
  bool canonical = false;
  int jobs = 1;
};
int cmd_tune(const TuneArgs& args);

struct PortfolioArgs {
  std::string candidates_dir;  // trace files of per-dataset tuning runs
  std::string meta_dir;        // dataset files
  int size = 10;
  int k_folds = 4;
  std::uint64_t seed = 0;
  double timeout_s = 600.0;
  std::string out;  // portfolio file; the matrix lands beside it
  int jobs = 1;
};
int cmd_portfolio(const PortfolioArgs& args);

struct ControlEvalArgs {
  std::string model;
  std::string task;
  int episodes = 5;
  std::uint64_t seed = 0;
  std::string out;  // results file, appended
  int jobs = 1;
};
int cmd_control_eval(const ControlEvalArgs& args);

struct ReportArgs {
  std::string dir;
  std::string format = "table";  // "table" or "csv"
  bool plot = false;
};
int cmd_report(const ReportArgs& args);

int run_cli(int argc, const char* const* argv);

}  // namespace mpctune
