#include "mpctune/experiments.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "mpctune/control.hpp"
#include "mpctune/sysid.hpp"
#include "mpctune/tuner.hpp"
#include "mpctune/util.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace mpctune {
namespace {

json spec_to_json(const DatasetSpec& s) {
  return json{{"id", s.id},
              {"system", s.system},
              {"gravity_scale", s.gravity_scale},
              {"mass_scale", s.mass_scale},
              {"length_scale", s.length_scale},
              {"n_traj", s.n_traj},
              {"length", s.length},
              {"dt", s.dt},
              {"seed", to_hex(s.seed)}};
}

DatasetSpec spec_from_json(const json& j) {
  DatasetSpec s;
  s.id = j.at("id").get<std::string>();
  s.system = j.at("system").get<std::string>();
  s.gravity_scale = j.at("gravity_scale").get<double>();
  s.mass_scale = j.at("mass_scale").get<double>();
  s.length_scale = j.at("length_scale").get<double>();
  s.n_traj = j.at("n_traj").get<int>();
  s.length = j.at("length").get<int>();
  s.dt = j.at("dt").get<double>();
  s.seed = std::stoull(j.at("seed").get<std::string>(), nullptr, 16);
  return s;
}

auto generation_tuple(const DatasetSpec& s) {
  return std::make_tuple(s.system, s.gravity_scale, s.mass_scale, s.length_scale,
                         s.n_traj, s.length, s.dt, s.seed);
}

double median_of(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

int iterations_to_threshold(const TuningTrace& trace, double threshold) {
  for (const auto& entry : trace.entries) {
    if (std::isfinite(entry.incumbent_score) && entry.incumbent_score <= threshold) {
      return entry.iteration;
    }
  }
  return -1;
}

Objective objective_for(const Dataset& data, int k_folds, double timeout_s, int jobs) {
  return [&data, k_folds, timeout_s, jobs](const Configuration& config,
                                           std::uint64_t seed) {
    return evaluate_with_timeout(config, data.train(), k_folds, seed, timeout_s, jobs);
  };
}

void write_trace_file(const fs::path& dir, const std::string& stem,
                      const TuneResult& result) {
  TraceWriter writer(dir / (stem + ".trace"), result.trace.space_name, result.trace.seed,
                     result.trace.budget_iterations, result.trace.initial_design_kind,
                     /*canonical=*/true);
  for (const auto& entry : result.trace.entries) writer.write_entry(entry);
  writer.finish(result);
}

struct StudySetup {
  std::vector<Dataset> meta_data;
  std::vector<std::string> meta_ids;
  std::vector<Dataset> test_data;
  std::vector<std::string> test_ids;
  PerformanceMatrix matrix;       // raw scores
  PerformanceMatrix normalized;   // greedy input
};

// Shared first half of every study: generate datasets, harvest candidates
// from the meta sets, cross-evaluate into the performance matrix.
StudySetup prepare(const ExperimentConfig& config) {
  validate_experiment_config(config);
  const fs::path out(config.out_dir);
  fs::create_directories(out / "datasets");

  StudySetup setup;
  for (const auto& spec : config.meta) {
    setup.meta_data.push_back(dataset_from_spec(spec, config.jobs));
    setup.meta_ids.push_back(spec.id);
    save_dataset(setup.meta_data.back(), out / "datasets" / (spec.id + ".csv"));
  }
  for (const auto& spec : config.test) {
    setup.test_data.push_back(dataset_from_spec(spec, config.jobs));
    setup.test_ids.push_back(spec.id);
    save_dataset(setup.test_data.back(), out / "datasets" / (spec.id + ".csv"));
  }

  std::vector<const Dataset*> meta_ptrs;
  for (const auto& d : setup.meta_data) meta_ptrs.push_back(&d);

  HarvestOptions harvest_options;
  harvest_options.budget = config.budget;
  harvest_options.k_folds = config.k_folds;
  harvest_options.seed = config.seeds.front();
  harvest_options.timeout_s = config.timeout_s;
  harvest_options.jobs = config.jobs;
  const CandidateSet candidates = harvest(meta_ptrs, setup.meta_ids, harvest_options);
  for (const auto& warning : candidates.warnings) {
    std::cerr << "study: " << warning << "\n";
  }
  if (candidates.configs.empty()) {
    throw std::runtime_error("study: harvesting produced no candidates");
  }

  MatrixOptions matrix_options;
  matrix_options.k_folds = config.k_folds;
  matrix_options.seed = config.seeds.front();
  matrix_options.timeout_s = config.timeout_s;
  matrix_options.jobs = config.jobs;
  setup.matrix = build_matrix(candidates, meta_ptrs, setup.meta_ids, matrix_options);
  if (setup.matrix.scores.rows() == 0) {
    throw std::runtime_error("study: every candidate failed on every meta dataset");
  }
  setup.normalized = normalize_rows(setup.matrix);
  save_matrix(setup.matrix, out / "matrix.json");
  return setup;
}

}  // namespace

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open experiment config: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  json doc = json::parse(buf.str());
  ExperimentConfig config;
  for (const auto& j : doc.at("meta")) config.meta.push_back(spec_from_json(j));
  for (const auto& j : doc.at("test")) config.test.push_back(spec_from_json(j));
  config.k_folds = doc.at("k_folds").get<int>();
  config.budget = doc.at("budget").get<int>();
  config.portfolio_sizes = doc.at("portfolio_sizes").get<std::vector<int>>();
  config.seeds.clear();
  for (const auto& s : doc.at("seeds")) {
    config.seeds.push_back(std::stoull(s.get<std::string>(), nullptr, 16));
  }
  config.timeout_s = doc.at("timeout_s").get<double>();
  config.out_dir = doc.at("out_dir").get<std::string>();
  if (doc.contains("jobs")) config.jobs = doc.at("jobs").get<int>();
  if (doc.contains("control_task")) {
    config.control_task = doc.at("control_task").get<std::string>();
  }
  if (doc.contains("control_episodes")) {
    config.control_episodes = doc.at("control_episodes").get<int>();
  }
  return config;
}

void save_experiment_config(const ExperimentConfig& config, const fs::path& path) {
  json doc;
  doc["meta"] = json::array();
  for (const auto& s : config.meta) doc["meta"].push_back(spec_to_json(s));
  doc["test"] = json::array();
  for (const auto& s : config.test) doc["test"].push_back(spec_to_json(s));
  doc["k_folds"] = config.k_folds;
  doc["budget"] = config.budget;
  doc["portfolio_sizes"] = config.portfolio_sizes;
  doc["seeds"] = json::array();
  for (auto s : config.seeds) doc["seeds"].push_back(to_hex(s));
  doc["timeout_s"] = config.timeout_s;
  doc["out_dir"] = config.out_dir;
  doc["jobs"] = config.jobs;
  doc["control_task"] = config.control_task;
  doc["control_episodes"] = config.control_episodes;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write experiment config: " + path.string());
  out << doc.dump(2) << "\n";
}

void validate_experiment_config(const ExperimentConfig& config) {
  if (config.seeds.empty()) {
    throw std::invalid_argument("experiment config: seeds must be non-empty");
  }
  if (config.meta.empty() || config.test.empty()) {
    throw std::invalid_argument("experiment config: need meta and test datasets");
  }
  if (config.out_dir.empty()) {
    throw std::invalid_argument("experiment config: out_dir is required");
  }
  int max_size = 0;
  for (int p : config.portfolio_sizes) max_size = std::max(max_size, p);
  if (config.budget < max_size) {
    throw std::invalid_argument(
        "experiment config: budget must cover the largest portfolio size");
  }
  for (const auto& meta_spec : config.meta) {
    for (const auto& test_spec : config.test) {
      if (meta_spec.id == test_spec.id) {
        throw std::invalid_argument("experiment config: meta/test share id " +
                                    meta_spec.id);
      }
      if (generation_tuple(meta_spec) == generation_tuple(test_spec)) {
        throw std::invalid_argument(
            "experiment config: meta and test dataset " + meta_spec.id + "/" +
            test_spec.id + " are the same generated dataset");
      }
    }
  }
}

Dataset dataset_from_spec(const DatasetSpec& spec, int jobs) {
  SystemSpec base;
  if (spec.system == "pendulum") {
    base = pendulum_spec(spec.dt);
  } else if (spec.system == "cartpole") {
    base = cartpole_spec(spec.dt);
  } else {
    throw std::invalid_argument("dataset spec: unknown system '" + spec.system + "'");
  }
  const SystemSpec system =
      make_variant(base, spec.gravity_scale, spec.mass_scale, spec.length_scale);
  return generate_dataset(system, spec.n_traj, spec.length, spec.seed, SplitFractions{},
                          jobs);
}

std::vector<PairedRunResult> run_warmstart_study(const ExperimentConfig& config) {
  const StudySetup setup = prepare(config);
  const fs::path out(config.out_dir);
  fs::create_directories(out / "runs");

  const int portfolio_size = config.portfolio_sizes.empty()
                                 ? kDefaultPortfolioSize
                                 : config.portfolio_sizes.front();
  const Portfolio portfolio = greedy_select(setup.normalized, portfolio_size);
  save_portfolio(portfolio, setup.matrix, out / "portfolio.json");
  const std::vector<Configuration> initial = portfolio_to_initial_design(portfolio);
  const ConfigurationSpace space = model_space();

  std::vector<PairedRunResult> results;
  std::vector<TableRow> rows;
  std::ofstream thresholds(out / "thresholds.csv");
  thresholds << "dataset,method,seed,iterations_to_threshold,threshold\n";

  for (std::size_t d = 0; d < setup.test_data.size(); ++d) {
    const Dataset& data = setup.test_data[d];
    const std::string& id = setup.test_ids[d];
    const Objective objective =
        objective_for(data, config.k_folds, config.timeout_s, config.jobs);

    std::vector<TuneResult> pure_runs, warm_runs;
    for (std::size_t k = 0; k < config.seeds.size(); ++k) {
      const std::uint64_t seed = config.seeds[k];
      pure_runs.push_back(tune(space, objective, config.budget, {}, seed));
      warm_runs.push_back(tune(space, objective, config.budget, initial, seed));
      write_trace_file(out / "runs", id + "__pure_bo__seed" + std::to_string(k),
                       pure_runs.back());
      write_trace_file(out / "runs", id + "__portfolio__seed" + std::to_string(k),
                       warm_runs.back());
    }

    PairedRunResult result;
    result.dataset_id = id;
    result.portfolio_size = static_cast<int>(initial.size());
    std::vector<TuningTrace> pure_traces, warm_traces;
    for (std::size_t k = 0; k < config.seeds.size(); ++k) {
      result.pure_bo_finals.push_back(pure_runs[k].trace.entries.back().incumbent_score);
      result.portfolio_finals.push_back(warm_runs[k].trace.entries.back().incumbent_score);
      pure_traces.push_back(pure_runs[k].trace);
      warm_traces.push_back(warm_runs[k].trace);
    }
    result.threshold = median_of(result.pure_bo_finals);
    for (std::size_t k = 0; k < config.seeds.size(); ++k) {
      result.pure_bo_iters_to_threshold.push_back(
          iterations_to_threshold(pure_runs[k].trace, result.threshold));
      result.portfolio_iters_to_threshold.push_back(
          iterations_to_threshold(warm_runs[k].trace, result.threshold));
      thresholds << id << ",pure_bo," << k << ","
                 << result.pure_bo_iters_to_threshold.back() << ","
                 << fmt17(result.threshold) << "\n";
      thresholds << id << ",portfolio," << k << ","
                 << result.portfolio_iters_to_threshold.back() << ","
                 << fmt17(result.threshold) << "\n";
    }

    const RunSummary pure_summary = summarize(pure_traces, id);
    const RunSummary warm_summary = summarize(warm_traces, id);
    if (pure_summary.finals.size() >= 2) {
      rows.push_back(make_table_row(id, pure_summary, warm_summary, 0.1));
    }
    results.push_back(std::move(result));
  }

  std::ofstream table(out / "summary.txt");
  table << format_table(rows, "pure_bo", "portfolio");
  std::ofstream csv(out / "summary.csv");
  csv << format_csv(rows, "pure_bo", "portfolio");
  return results;
}

std::vector<SizeSweepRow> run_size_sweep(const ExperimentConfig& config,
                                         const std::vector<int>& sizes) {
  const StudySetup setup = prepare(config);
  const fs::path out(config.out_dir);
  const ConfigurationSpace space = model_space();

  // Portfolios per size come from one shared matrix; greedy selection makes
  // each one a prefix of the next, asserted here.
  std::map<int, Portfolio> portfolios;
  for (int p : sizes) {
    if (p <= 0) continue;
    portfolios[p] = greedy_select(setup.normalized, p);
  }
  {
    const Portfolio* prev = nullptr;
    for (const auto& [p, portfolio] : portfolios) {
      if (prev != nullptr) {
        for (std::size_t i = 0; i < prev->configs.size(); ++i) {
          if (!(portfolio.configs[i] == prev->configs[i])) {
            throw std::logic_error("size sweep: portfolios are not prefix-nested");
          }
        }
      }
      prev = &portfolio;
      save_portfolio(portfolio, setup.matrix,
                     out / ("portfolio_p" + std::to_string(p) + ".json"));
    }
  }

  std::vector<SizeSweepRow> rows;
  std::map<std::pair<int, std::string>, std::vector<double>> finals;
  for (std::size_t d = 0; d < setup.test_data.size(); ++d) {
    const Dataset& data = setup.test_data[d];
    const std::string& id = setup.test_ids[d];
    const Objective objective =
        objective_for(data, config.k_folds, config.timeout_s, config.jobs);
    for (int p : sizes) {
      std::vector<Configuration> initial;
      if (p > 0) initial = portfolio_to_initial_design(portfolios.at(p));
      for (std::uint64_t seed : config.seeds) {
        const TuneResult run = tune(space, objective, config.budget, initial, seed);
        finals[{p, id}].push_back(run.trace.entries.back().incumbent_score);
      }
    }
  }

  std::ofstream csv(out / "size_sweep.csv");
  csv << "size,dataset,mean,std,gain_percent,best_for_dataset\n";
  for (const auto& id : setup.test_ids) {
    double best_mean = std::numeric_limits<double>::infinity();
    int best_size = 0;
    for (int p : sizes) {
      const double m = sample_mean(finals.at({p, id}));
      if (m < best_mean) {
        best_mean = m;
        best_size = p;
      }
    }
    const double baseline_mean =
        finals.count({0, id}) ? sample_mean(finals.at({0, id})) : best_mean;
    for (int p : sizes) {
      SizeSweepRow row;
      row.size = p;
      row.dataset_id = id;
      row.finals = finals.at({p, id});
      row.mean = sample_mean(row.finals);
      row.std_dev = row.finals.size() >= 2 ? sample_std(row.finals) : 0.0;
      row.gain = p == 0 ? 0.0 : gain_percent(baseline_mean, row.mean);
      csv << p << "," << id << "," << fmt17(row.mean) << "," << fmt17(row.std_dev) << ","
          << fmt17(row.gain) << "," << (p == best_size ? 1 : 0) << "\n";
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<ControlStudyRow> run_control_study(const ExperimentConfig& config,
                                               const std::vector<int>& sizes) {
  const StudySetup setup = prepare(config);
  const fs::path out(config.out_dir);
  const ConfigurationSpace space = model_space();
  const ControlTask task = make_task(config.control_task);
  const MPCConfig mpc_config{};

  const Dataset& data = setup.test_data.front();
  const Objective objective =
      objective_for(data, config.k_folds, config.timeout_s, config.jobs);

  std::vector<ControlStudyRow> rows;
  for (int p : sizes) {
    std::vector<Configuration> initial;
    if (p > 0) {
      initial = portfolio_to_initial_design(greedy_select(setup.normalized, p));
    }
    ControlStudyRow row;
    row.size = p;
    for (std::size_t k = 0; k < config.seeds.size(); ++k) {
      const std::uint64_t seed = config.seeds[k];
      const TuneResult run = tune(space, objective, config.budget, initial, seed);
      if (!run.has_incumbent) {
        throw std::runtime_error("control study: tuning produced no incumbent");
      }
      const DynamicsModel model = train(run.incumbent, data.train());
      const ControlScore score =
          evaluate_controller(predictor_from_model(model), task, mpc_config,
                              config.control_episodes, seed);
      row.scores.push_back(score.score);

      ControlEvalRecord record;
      record.task = config.control_task;
      record.model_id = "size" + std::to_string(p) + "_seed" + std::to_string(k);
      record.config = mpc_config;
      record.result = score;
      append_control_record(out / "control.jsonl", record);
    }
    row.mean = sample_mean(row.scores);
    row.std_dev = row.scores.size() >= 2 ? sample_std(row.scores) : 0.0;
    rows.push_back(std::move(row));
  }

  const auto baseline_it =
      std::find_if(rows.begin(), rows.end(), [](const auto& r) { return r.size == 0; });
  std::ofstream csv(out / "control_summary.csv");
  csv << "size,mean_score,std,gain_percent,p_value,significant\n";
  for (auto& row : rows) {
    if (baseline_it != rows.end() && row.size != 0 && baseline_it->mean > 0.0) {
      row.gain = gain_percent(baseline_it->mean, row.mean);
      if (baseline_it->scores.size() >= 2 && row.scores.size() >= 2) {
        row.test = welch_t_test(baseline_it->scores, row.scores, 0.1);
      }
    }
    csv << row.size << "," << fmt17(row.mean) << "," << fmt17(row.std_dev) << ","
        << fmt17(row.gain) << "," << fmt17(row.test.p) << ","
        << (row.test.significant ? 1 : 0) << "\n";
  }
  return rows;
}

}  // namespace mpctune
