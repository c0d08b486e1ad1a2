// Batch driver for the desk-scale studies. Point it at an experiment config
// and it runs the whole pipeline (datasets, harvest, matrix, paired tuning
// runs) for one of the three study kinds.
#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mpctune/cli.hpp"
#include "mpctune/configspace.hpp"
#include "mpctune/experiments.hpp"

namespace {

int run_study(const std::string& kind, const std::string& config_path,
              const std::vector<int>& sizes, int jobs_override) {
  mpctune::ExperimentConfig config =
      mpctune::load_experiment_config(config_path);
  if (jobs_override > 0) config.jobs = jobs_override;
  mpctune::validate_experiment_config(config);

  if (kind == "warmstart") {
    auto results = mpctune::run_warmstart_study(config);
    std::cout << "warmstart study: " << results.size()
              << " dataset(s), outputs under " << config.out_dir << "\n";
  } else if (kind == "size-sweep") {
    std::vector<int> use = sizes.empty() ? std::vector<int>{0, 5, 10, 15, 20}
                                         : sizes;
    auto rows = mpctune::run_size_sweep(config, use);
    std::cout << "size sweep: " << rows.size() << " row(s), outputs under "
              << config.out_dir << "\n";
  } else {
    std::vector<int> use = sizes.empty() ? std::vector<int>{0, 5, 10} : sizes;
    auto rows = mpctune::run_control_study(config, use);
    std::cout << "control study: " << rows.size() << " row(s), outputs under "
              << config.out_dir << "\n";
  }
  return mpctune::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mpctune-study: batch experiment driver"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<int> sizes;
  int jobs = 0;
  int rc = mpctune::kExitOk;

  for (const std::string kind : {"warmstart", "size-sweep", "control"}) {
    CLI::App* sub = app.add_subcommand(kind);
    sub->add_option("--config", config_path, "experiment config JSON")
        ->required();
    sub->add_option("--sizes", sizes, "portfolio sizes (0 = pure BO)");
    sub->add_option("--jobs", jobs, "worker threads override");
    sub->callback([&rc, kind, &config_path, &sizes, &jobs] {
      try {
        rc = run_study(kind, config_path, sizes, jobs);
      } catch (const mpctune::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        rc = mpctune::kExitInvalidConfig;
      } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        rc = mpctune::kExitInvalidConfig;
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        rc = mpctune::kExitMissingInput;
      }
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? mpctune::kExitOk : mpctune::kExitInvalidConfig;
  }
  return rc;
}
