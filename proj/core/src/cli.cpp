#include "mpctune/cli.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <vector>

#include "mpctune/configspace.hpp"
#include "mpctune/control.hpp"
#include "mpctune/dynamics.hpp"
#include "mpctune/portfolio.hpp"
#include "mpctune/report.hpp"
#include "mpctune/sysid.hpp"
#include "mpctune/tuner.hpp"
#include "mpctune/util.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace mpctune {
namespace {

// Exceptions map onto the exit-code contract: validation problems are exit 2,
// missing or unreadable stage inputs are exit 3.
template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalidConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalidConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitMissingInput;
  }
}

void require_input(const std::string& path) {
  if (!fs::exists(path)) {
    throw std::runtime_error("input not found: " + path);
  }
}

std::vector<fs::path> sorted_files_with_extension(const fs::path& dir,
                                                  const std::string& ext) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ext) {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::string resolve_out_path(const std::string& path) {
  if (path.empty()) return path;
  if (fs::path(path).is_absolute()) return path;
  const char* root = std::getenv("MPCTUNE_OUT_ROOT");
  if (root == nullptr || *root == '\0') return path;
  return (fs::path(root) / path).string();
}

int cmd_gen_data(const GenDataArgs& args) {
  return guarded([&]() {
    if (args.out.empty()) throw std::invalid_argument("gen-data: --out is required");
    SystemSpec base;
    if (args.system == "pendulum") {
      base = pendulum_spec(args.dt);
    } else if (args.system == "cartpole") {
      base = cartpole_spec(args.dt);
    } else {
      throw std::invalid_argument("gen-data: unknown system '" + args.system + "'");
    }
    const SystemSpec system =
        make_variant(base, args.gravity_scale, args.mass_scale, args.length_scale);
    const Dataset data = generate_dataset(system, args.n_traj, args.length, args.seed,
                                          SplitFractions{}, args.jobs);
    const std::string out = resolve_out_path(args.out);
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    save_dataset(data, out);
    std::cout << "gen-data: " << args.system << " g*" << args.gravity_scale << " m*"
              << args.mass_scale << " l*" << args.length_scale << ", " << args.n_traj
              << " trajectories x " << args.length << " steps -> " << out << "\n";
    return kExitOk;
  });
}

int cmd_tune(const TuneArgs& args) {
  return guarded([&]() {
    if (args.out.empty()) throw std::invalid_argument("tune: --out is required");
    if (args.budget < 1) throw std::invalid_argument("tune: --budget must be >= 1");
    require_input(args.data);
    const Dataset data = load_dataset(args.data);
    const ConfigurationSpace space = model_space();

    std::vector<Configuration> initial;
    std::string kind = "random";
    if (args.init != "random") {
      if (args.init.rfind("portfolio:", 0) != 0) {
        throw std::invalid_argument(
            "tune: --init must be 'random' or 'portfolio:PATH'");
      }
      const std::string portfolio_path = args.init.substr(10);
      require_input(portfolio_path);
      const Portfolio portfolio = load_portfolio(portfolio_path, space);
      initial = portfolio_to_initial_design(portfolio);
      kind = "portfolio";
    }

    const std::string out = resolve_out_path(args.out);
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    TraceWriter writer(out, space.name(), args.seed, args.budget, kind, args.canonical);

    Objective objective = [&](const Configuration& config, std::uint64_t seed) {
      return evaluate_with_timeout(config, data.train(), args.k_folds, seed,
                                   args.timeout_s, args.jobs);
    };
    TuneOptions options;
    options.budget = args.budget;
    options.seed = args.seed;
    options.initial = std::move(initial);
    options.on_entry = [&writer](const TraceEntry& entry) { writer.write_entry(entry); };
    const TuneResult result = tune(space, objective, options);
    writer.finish(result);

    json incumbent_doc;
    incumbent_doc["format"] = "mpctune-incumbent";
    incumbent_doc["seed"] = to_hex(args.seed);
    incumbent_doc["evaluations"] = result.trace.entries.size();
    if (result.has_incumbent) {
      incumbent_doc["config"] = to_flat_string(result.incumbent);
      incumbent_doc["rmse"] = result.incumbent_score.rmse;
    } else {
      incumbent_doc["config"] = nullptr;
      incumbent_doc["rmse"] = nullptr;
    }
    const fs::path incumbent_path = fs::path(out).string() + ".incumbent.json";
    std::ofstream inc(incumbent_path);
    if (!inc) throw std::runtime_error("cannot write: " + incumbent_path.string());
    inc << incumbent_doc.dump(2) << "\n";

    if (!result.has_incumbent) {
      std::cerr << "tune: every evaluation failed\n";
      return kExitAllFailed;
    }

    if (!args.out_model.empty()) {
      const std::string model_out = resolve_out_path(args.out_model);
      if (fs::path(model_out).has_parent_path()) {
        fs::create_directories(fs::path(model_out).parent_path());
      }
      const DynamicsModel model = train(result.incumbent, data.train());
      save_model(model, model_out);
      std::cout << "tune: incumbent model -> " << model_out << "\n";
    }
    std::cout << "tune: " << result.trace.entries.size() << " evaluations, incumbent rmse "
              << fmt17(result.incumbent_score.rmse) << " -> " << out << "\n";
    return kExitOk;
  });
}

int cmd_portfolio(const PortfolioArgs& args) {
  return guarded([&]() {
    if (args.out.empty()) throw std::invalid_argument("portfolio: --out is required");
    if (args.size < 1) throw std::invalid_argument("portfolio: --size must be >= 1");
    require_input(args.candidates_dir);
    require_input(args.meta_dir);
    const ConfigurationSpace space = model_space();

    CandidateSet candidates;
    for (const auto& path : sorted_files_with_extension(args.candidates_dir, ".trace")) {
      const TuneResult run = load_trace(path, space);
      if (!run.has_incumbent) {
        candidates.warnings.push_back("trace " + path.filename().string() +
                                      " has no incumbent; skipped");
        continue;
      }
      const std::string id = path.stem().string();
      auto existing = std::find(candidates.configs.begin(), candidates.configs.end(),
                                run.incumbent);
      if (existing == candidates.configs.end()) {
        candidates.configs.push_back(run.incumbent);
        candidates.provenance.push_back({id});
      } else {
        candidates.provenance[static_cast<std::size_t>(
            existing - candidates.configs.begin())].push_back(id);
      }
    }
    if (candidates.configs.empty()) {
      std::cerr << "portfolio: no usable candidates in " << args.candidates_dir << "\n";
      return kExitAllFailed;
    }

    std::vector<Dataset> datasets;
    std::vector<std::string> ids;
    for (const auto& path : sorted_files_with_extension(args.meta_dir, ".csv")) {
      datasets.push_back(load_dataset(path));
      ids.push_back(path.stem().string());
    }
    if (datasets.empty()) {
      throw std::runtime_error("portfolio: no dataset files in " + args.meta_dir);
    }
    std::vector<const Dataset*> meta;
    for (const auto& d : datasets) meta.push_back(&d);

    MatrixOptions options;
    options.k_folds = args.k_folds;
    options.seed = args.seed;
    options.timeout_s = args.timeout_s;
    options.jobs = args.jobs;
    const PerformanceMatrix matrix = build_matrix(candidates, meta, ids, options);
    for (const auto& warning : matrix.warnings) std::cerr << "portfolio: " << warning << "\n";
    if (matrix.scores.rows() == 0) {
      std::cerr << "portfolio: every candidate failed on every dataset\n";
      return kExitAllFailed;
    }

    const Portfolio portfolio = greedy_select(normalize_rows(matrix), args.size);

    const std::string out = resolve_out_path(args.out);
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    const fs::path matrix_path =
        fs::path(out).parent_path() / (fs::path(out).stem().string() + ".matrix.json");
    save_matrix(matrix, matrix_path);
    save_portfolio(portfolio, matrix, out);
    std::cout << "portfolio: " << portfolio.configs.size() << " of " << args.size
              << " requested configs from " << candidates.configs.size()
              << " candidates -> " << out << "\n";
    return kExitOk;
  });
}

int cmd_control_eval(const ControlEvalArgs& args) {
  return guarded([&]() {
    if (args.out.empty()) throw std::invalid_argument("control-eval: --out is required");
    if (args.episodes < 1) {
      throw std::invalid_argument("control-eval: --episodes must be >= 1");
    }
    const ControlTask task = make_task(args.task);  // unknown task -> exit 2
    require_input(args.model);
    const DynamicsModel model = load_model(args.model);

    ControlEvalRecord record;
    record.task = args.task;
    record.model_id = fs::path(args.model).stem().string();
    record.config = MPCConfig{};
    record.result = evaluate_controller(predictor_from_model(model), task, record.config,
                                        args.episodes, args.seed);

    const std::string out = resolve_out_path(args.out);
    if (fs::path(out).has_parent_path()) fs::create_directories(fs::path(out).parent_path());
    append_control_record(out, record);
    std::cout << "control-eval: task " << args.task << ", model " << record.model_id
              << ", score " << fmt17(record.result.score) << " (raw cost "
              << fmt17(record.result.raw_cost) << ") -> " << out << "\n";
    return kExitOk;
  });
}

int cmd_report(const ReportArgs& args) {
  return guarded([&]() {
    if (args.format != "table" && args.format != "csv") {
      throw std::invalid_argument("report: --format must be 'table' or 'csv'");
    }
    require_input(args.dir);
    const ConfigurationSpace space = model_space();

    // Trace files named <dataset>__<method>__seed<k>.trace group into method
    // summaries per dataset.
    std::map<std::string, std::map<std::string, std::vector<TuningTrace>>> groups;
    std::vector<fs::path> trace_files;
    for (const auto& entry : fs::recursive_directory_iterator(args.dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".trace") {
        trace_files.push_back(entry.path());
      }
    }
    std::sort(trace_files.begin(), trace_files.end());
    const std::regex name_re("(.+)__(.+)__seed([0-9]+)");
    for (const auto& path : trace_files) {
      std::smatch match;
      const std::string stem = path.stem().string();
      if (!std::regex_match(stem, match, name_re)) continue;
      const TuneResult run = load_trace(path, space);
      groups[match[1]][match[2]].push_back(run.trace);
    }

    std::vector<TableRow> rows;
    for (const auto& [dataset, methods] : groups) {
      const auto baseline_it = methods.find("pure_bo");
      if (baseline_it == methods.end()) continue;
      const RunSummary baseline = summarize(baseline_it->second, dataset);
      for (const auto& [method, traces] : methods) {
        if (method == "pure_bo") continue;
        const RunSummary summary = summarize(traces, dataset);
        TableRow row;
        if (baseline.finals.size() >= 2 && summary.finals.size() >= 2) {
          row = make_table_row(dataset + "/" + method, baseline, summary, 0.1);
        } else {
          row.dataset = dataset + "/" + method;
          row.baseline = baseline;
          row.method = summary;
          row.gain = gain_percent(baseline.mean, summary.mean);
        }
        rows.push_back(std::move(row));
      }
    }

    const fs::path dir(args.dir);
    std::string rendered;
    if (args.format == "csv") {
      rendered = format_csv(rows, "pure_bo", "portfolio");
      std::ofstream out(dir / "summary.csv");
      if (!out) throw std::runtime_error("cannot write summary.csv");
      out << rendered;
    } else {
      rendered = format_table(rows, "pure_bo", "portfolio");
      std::ofstream out(dir / "summary.txt");
      if (!out) throw std::runtime_error("cannot write summary.txt");
      out << rendered;
    }
    std::cout << rendered;

    fs::create_directories(dir / "curves");
    for (const auto& [dataset, methods] : groups) {
      for (const auto& [method, traces] : methods) {
        const std::string base = dataset + "__" + method;
        export_curves(traces, dir / "curves" / (base + ".csv"));
        if (args.plot) {
          render_curves_svg(traces, dir / "curves" / (base + ".svg"));
        }
      }
    }

    const fs::path control_file = dir / "control.jsonl";
    if (fs::exists(control_file)) {
      const auto records = load_control_records(control_file);
      std::map<std::string, std::map<std::string, std::vector<double>>> by_task;
      for (const auto& record : records) {
        by_task[record.task][record.model_id].push_back(record.result.score);
      }
      std::ostringstream control_out;
      control_out << "\ncontrol scores (mean over evaluations, lower is better)\n";
      for (const auto& [task, models] : by_task) {
        for (const auto& [model_id, scores] : models) {
          control_out << "  " << task << "  " << model_id << "  "
                      << sample_mean(scores) << "\n";
        }
      }
      std::cout << control_out.str();
    }
    return kExitOk;
  });
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"portfolio-warmstarted tuning for data-driven MPC"};
  app.require_subcommand(0, 1);
  int rc = kExitOk;

  GenDataArgs gen_args;
  auto* gen = app.add_subcommand("gen-data", "generate a trajectory dataset");
  gen->add_option("--system", gen_args.system, "pendulum or cartpole");
  gen->add_option("--gravity-scale", gen_args.gravity_scale);
  gen->add_option("--mass-scale", gen_args.mass_scale);
  gen->add_option("--length-scale", gen_args.length_scale);
  gen->add_option("--n-traj", gen_args.n_traj);
  gen->add_option("--length", gen_args.length, "steps per trajectory");
  gen->add_option("--dt", gen_args.dt);
  gen->add_option("--seed", gen_args.seed);
  gen->add_option("--out", gen_args.out)->required();
  gen->add_option("--jobs", gen_args.jobs);
  gen->callback([&]() { rc = cmd_gen_data(gen_args); });

  TuneArgs tune_args;
  auto* tune_cmd = app.add_subcommand("tune", "tune a dynamics model on a dataset");
  tune_cmd->add_option("--data", tune_args.data)->required();
  tune_cmd->add_option("--init", tune_args.init, "random or portfolio:PATH");
  tune_cmd->add_option("--budget", tune_args.budget);
  tune_cmd->add_option("--k-folds", tune_args.k_folds);
  tune_cmd->add_option("--seed", tune_args.seed);
  tune_cmd->add_option("--timeout-s", tune_args.timeout_s, "per-evaluation budget");
  tune_cmd->add_option("--out", tune_args.out, "trace file")->required();
  tune_cmd->add_option("--out-model", tune_args.out_model,
                       "also train and save the incumbent model");
  tune_cmd->add_flag("--canonical", tune_args.canonical, "zero wallclock fields");
  tune_cmd->add_option("--jobs", tune_args.jobs);
  tune_cmd->callback([&]() { rc = cmd_tune(tune_args); });

  PortfolioArgs portfolio_args;
  auto* portfolio_cmd =
      app.add_subcommand("portfolio", "build a warmstart portfolio from tuning runs");
  portfolio_cmd->add_option("--candidates-dir", portfolio_args.candidates_dir)->required();
  portfolio_cmd->add_option("--meta-dir", portfolio_args.meta_dir)->required();
  portfolio_cmd->add_option("--size", portfolio_args.size);
  portfolio_cmd->add_option("--k-folds", portfolio_args.k_folds);
  portfolio_cmd->add_option("--seed", portfolio_args.seed);
  portfolio_cmd->add_option("--timeout-s", portfolio_args.timeout_s);
  portfolio_cmd->add_option("--out", portfolio_args.out)->required();
  portfolio_cmd->add_option("--jobs", portfolio_args.jobs);
  portfolio_cmd->callback([&]() { rc = cmd_portfolio(portfolio_args); });

  ControlEvalArgs control_args;
  auto* control_cmd =
      app.add_subcommand("control-eval", "closed-loop MPC evaluation of a saved model");
  control_cmd->add_option("--model", control_args.model)->required();
  control_cmd->add_option("--task", control_args.task)->required();
  control_cmd->add_option("--episodes", control_args.episodes);
  control_cmd->add_option("--seed", control_args.seed);
  control_cmd->add_option("--out", control_args.out, "results file (appended)")->required();
  control_cmd->add_option("--jobs", control_args.jobs);
  control_cmd->callback([&]() { rc = cmd_control_eval(control_args); });

  ReportArgs report_args;
  auto* report_cmd =
      app.add_subcommand("report", "aggregate traces and control results");
  report_cmd->add_option("--dir", report_args.dir)->required();
  report_cmd->add_option("--format", report_args.format, "table or csv");
  report_cmd->add_flag("--plot", report_args.plot, "also render SVG curves");
  report_cmd->callback([&]() { rc = cmd_report(report_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalidConfig;
  }
  if (app.get_subcommands().empty()) {
    std::cout << app.help();
    return kExitInvalidConfig;
  }
  return rc;
}

}  // namespace mpctune
