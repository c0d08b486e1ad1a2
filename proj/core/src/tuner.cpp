#include "mpctune/tuner.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mpctune/util.hpp"

namespace mpctune {
namespace {

using json = nlohmann::json;

constexpr double kExplorationProb = 0.1;
constexpr int kPoolRandom = 1000;
constexpr int kPoolPerturbed = 10;
constexpr double kNumericJitter = 0.1;
constexpr double kCategoricalFlipProb = 0.2;

double round_half_up(double x) { return std::floor(x + 0.5); }

double to_unit(const HyperparameterSpec& s, double v) {
  if (s.log_scale) return (std::log(v) - std::log(s.lo)) / (std::log(s.hi) - std::log(s.lo));
  return (v - s.lo) / (s.hi - s.lo);
}

double from_unit(const HyperparameterSpec& s, double t) {
  t = std::clamp(t, 0.0, 1.0);
  const double v = s.log_scale
                       ? std::exp(std::log(s.lo) + t * (std::log(s.hi) - std::log(s.lo)))
                       : s.lo + t * (s.hi - s.lo);
  return std::clamp(v, s.lo, s.hi);
}

// Imputation policy for the surrogate: failed evaluations count as twice the
// worst finite score seen so far. Requires at least one finite score.
Eigen::VectorXd imputed_scores(const std::vector<TraceEntry>& entries, double worst_finite) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(entries.size()));
  const double imputed = 2.0 * worst_finite;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    y[static_cast<Eigen::Index>(i)] = entries[i].score.ok() ? entries[i].score.rmse : imputed;
  }
  return y;
}

json entry_to_json(const TraceEntry& entry, bool canonical) {
  json rec;
  rec["iteration"] = entry.iteration;
  rec["config"] = to_flat_string(entry.config);
  if (entry.score.ok()) {
    rec["rmse"] = entry.score.rmse;
  } else {
    rec["rmse"] = nullptr;
  }
  rec["failed"] = entry.score.failed;
  rec["n_points"] = entry.score.n_points;
  if (std::isfinite(entry.incumbent_score)) {
    rec["incumbent"] = entry.incumbent_score;
  } else {
    rec["incumbent"] = nullptr;
  }
  rec["wallclock_s"] = canonical ? 0.0 : entry.wallclock_s;
  return rec;
}

}  // namespace

SurrogateState fit_surrogate(const Eigen::MatrixXd& points, const Eigen::VectorXd& scores,
                             std::uint64_t seed, ForestParams params) {
  if (points.rows() < 2) throw std::invalid_argument("fit_surrogate: need >= 2 points");
  if (points.rows() != scores.size()) {
    throw std::invalid_argument("fit_surrogate: point/score count mismatch");
  }
  if (!scores.allFinite()) {
    throw std::invalid_argument("fit_surrogate: scores must be finite (impute first)");
  }
  SurrogateState state;
  state.points = points;
  state.score_mean = scores.mean();
  const Eigen::VectorXd centered = scores.array() - state.score_mean;
  state.score_std = std::sqrt(centered.squaredNorm() / static_cast<double>(scores.size()));
  if (state.score_std < 1e-12) state.score_std = 1.0;
  state.scores_norm = centered / state.score_std;
  state.forest.fit(state.points, state.scores_norm, seed, params);
  return state;
}

Configuration perturb(const ConfigurationSpace& space, const Configuration& base, Rng& rng) {
  Configuration out;
  out.space_name = space.name();
  for (std::size_t i = 0; i < space.specs().size(); ++i) {
    const HyperparameterSpec& spec = space.specs()[i];
    if (!space.is_active(i, out.values)) continue;
    const auto it = base.values.find(spec.name);
    const bool have_base = it != base.values.end();
    switch (spec.kind) {
      case ParamKind::Categorical: {
        if (have_base) {
          const std::string& cur = std::get<std::string>(it->second);
          if (rng.uniform() < kCategoricalFlipProb) {
            const auto idx = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(spec.choices.size()) - 1));
            out.values[spec.name] = spec.choices[idx];
          } else {
            out.values[spec.name] = cur;
          }
        } else {
          const auto idx = static_cast<std::size_t>(
              rng.uniform_int(0, static_cast<std::int64_t>(spec.choices.size()) - 1));
          out.values[spec.name] = spec.choices[idx];
        }
        break;
      }
      case ParamKind::Continuous: {
        if (have_base) {
          const double t = to_unit(spec, std::get<double>(it->second));
          out.values[spec.name] = from_unit(spec, t + kNumericJitter * rng.normal());
        } else {
          out.values[spec.name] =
              spec.log_scale ? rng.log_uniform(spec.lo, spec.hi) : rng.uniform(spec.lo, spec.hi);
        }
        break;
      }
      case ParamKind::Integer: {
        if (have_base) {
          const double t =
              to_unit(spec, static_cast<double>(std::get<std::int64_t>(it->second)));
          const double v = from_unit(spec, t + kNumericJitter * rng.normal());
          const auto rounded = static_cast<std::int64_t>(round_half_up(v));
          out.values[spec.name] = std::clamp(rounded, static_cast<std::int64_t>(spec.lo),
                                             static_cast<std::int64_t>(spec.hi));
        } else {
          if (spec.log_scale) {
            const auto rounded =
                static_cast<std::int64_t>(round_half_up(rng.log_uniform(spec.lo, spec.hi)));
            out.values[spec.name] = std::clamp(rounded, static_cast<std::int64_t>(spec.lo),
                                               static_cast<std::int64_t>(spec.hi));
          } else {
            out.values[spec.name] = rng.uniform_int(static_cast<std::int64_t>(spec.lo),
                                                    static_cast<std::int64_t>(spec.hi));
          }
        }
        break;
      }
    }
  }
  return out;
}

Configuration propose_next(const ConfigurationSpace& space, const SurrogateState& surrogate,
                           const Configuration* incumbent, std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  if (surrogate.n_observations() < 2 || !surrogate.forest.fitted() || incumbent == nullptr) {
    return sample(space, rng);
  }
  if (rng.uniform() < kExplorationProb) return sample(space, rng);

  std::vector<Configuration> pool;
  pool.reserve(kPoolRandom + kPoolPerturbed);
  for (int i = 0; i < kPoolRandom; ++i) pool.push_back(sample(space, rng));
  for (int i = 0; i < kPoolPerturbed; ++i) pool.push_back(perturb(space, *incumbent, rng));

  const double best_norm = surrogate.scores_norm.minCoeff();
  std::size_t best_idx = 0;
  double best_ei = -1.0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const Eigen::VectorXd enc = encode(space, pool[i]);
    const auto pred = surrogate.forest.predict(enc);
    const double ei = expected_improvement(pred.mean, std::sqrt(pred.variance), best_norm);
    if (ei > best_ei) {
      best_ei = ei;
      best_idx = i;
    }
  }
  return pool[best_idx];
}

TuneResult tune(const ConfigurationSpace& space, const Objective& objective,
                const TuneOptions& options) {
  if (options.budget < 1) throw std::invalid_argument("tune: budget must be >= 1");
  if (static_cast<int>(options.initial.size()) > options.budget) {
    throw std::invalid_argument("tune: initial design longer than budget");
  }
  for (const auto& cfg : options.initial) {
    if (auto violations = validate(space, cfg); !violations.empty()) {
      throw ConfigError(std::move(violations));
    }
  }

  TuneResult result;
  result.trace.seed = options.seed;
  result.trace.budget_iterations = options.budget;
  result.trace.space_name = space.name();
  result.trace.initial_design_kind = options.initial.empty() ? "random" : "portfolio";

  std::vector<Configuration> initial = options.initial;
  if (initial.empty()) {
    Rng init_rng(derive_seed(options.seed, 1));
    const int n_init = std::min(options.n_random_init, options.budget);
    for (int i = 0; i < n_init; ++i) initial.push_back(sample(space, init_rng));
  }

  for (int iter = 0; iter < options.budget; ++iter) {
    Configuration config;
    if (iter < static_cast<int>(initial.size())) {
      config = initial[static_cast<std::size_t>(iter)];
    } else {
      int n_finite = 0;
      double worst_finite = -std::numeric_limits<double>::infinity();
      for (const auto& e : result.trace.entries) {
        if (e.score.ok()) {
          ++n_finite;
          worst_finite = std::max(worst_finite, e.score.rmse);
        }
      }
      const std::uint64_t prop_seed =
          derive_seed(options.seed, 100 + static_cast<std::uint64_t>(iter));
      if (result.trace.entries.size() >= 2 && n_finite >= 1) {
        Eigen::MatrixXd X(static_cast<Eigen::Index>(result.trace.entries.size()),
                          static_cast<Eigen::Index>(space.encoding_dim()));
        for (std::size_t i = 0; i < result.trace.entries.size(); ++i) {
          X.row(static_cast<Eigen::Index>(i)) =
              encode(space, result.trace.entries[i].config).transpose();
        }
        const Eigen::VectorXd y = imputed_scores(result.trace.entries, worst_finite);
        const SurrogateState surrogate = fit_surrogate(
            X, y, derive_seed(options.seed, 0x5A00 + static_cast<std::uint64_t>(iter)),
            options.forest);
        config = propose_next(space, surrogate, &result.incumbent, prop_seed);
      } else {
        Rng rng(prop_seed);
        config = sample(space, rng);
      }
    }

    const auto t0 = std::chrono::steady_clock::now();
    ModelScore score = objective(config, options.seed);
    const auto t1 = std::chrono::steady_clock::now();

    if (score.ok() && (!result.has_incumbent || score.rmse < result.incumbent_score.rmse)) {
      result.incumbent = config;
      result.incumbent_score = score;
      result.has_incumbent = true;
    }

    TraceEntry entry;
    entry.iteration = iter;
    entry.config = config;
    entry.score = std::move(score);
    entry.wallclock_s = std::chrono::duration<double>(t1 - t0).count();
    entry.incumbent_score = result.has_incumbent
                                ? result.incumbent_score.rmse
                                : std::numeric_limits<double>::quiet_NaN();
    result.trace.entries.push_back(entry);
    if (options.on_entry) options.on_entry(result.trace.entries.back());
  }

  if (!result.has_incumbent && !result.trace.entries.empty()) {
    result.incumbent = result.trace.entries.front().config;
    result.incumbent_score = ModelScore::failure();
  }
  return result;
}

TuneResult tune(const ConfigurationSpace& space, const Objective& objective, int budget,
                const std::vector<Configuration>& initial, std::uint64_t seed) {
  TuneOptions options;
  options.budget = budget;
  options.initial = initial;
  options.seed = seed;
  return tune(space, objective, options);
}

TraceWriter::TraceWriter(const std::filesystem::path& path, const std::string& space_name,
                         std::uint64_t seed, int budget,
                         const std::string& initial_design_kind, bool canonical)
    : path_(path.string()), canonical_(canonical) {
  json header;
  header["format"] = "mpctune-trace";
  header["version"] = 1;
  header["record"] = "header";
  header["space"] = space_name;
  header["seed"] = to_hex(seed);
  header["budget"] = budget;
  header["initial_design"] = initial_design_kind;
  std::ofstream out(path_, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open trace file: " + path_);
  out << header.dump() << "\n";
}

void TraceWriter::write_entry(const TraceEntry& entry) {
  json rec = entry_to_json(entry, canonical_);
  rec["record"] = "entry";
  std::ofstream out(path_, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to trace file: " + path_);
  out << rec.dump() << "\n";
  out.flush();
}

void TraceWriter::finish(const TuneResult& result) {
  if (finished_) return;
  finished_ = true;
  json rec;
  rec["record"] = "summary";
  rec["evaluations"] = result.trace.entries.size();
  if (result.has_incumbent) {
    rec["incumbent_config"] = to_flat_string(result.incumbent);
    rec["incumbent_rmse"] = result.incumbent_score.rmse;
  } else {
    rec["incumbent_config"] = nullptr;
    rec["incumbent_rmse"] = nullptr;
  }
  std::ofstream out(path_, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to trace file: " + path_);
  out << rec.dump() << "\n";
}

TuneResult load_trace(const std::filesystem::path& path, const ConfigurationSpace& space) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file: " + path.string());
  TuneResult result;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    const std::string kind = rec.at("record").get<std::string>();
    if (kind == "header") {
      if (rec.at("format").get<std::string>() != "mpctune-trace") {
        throw std::runtime_error("not a trace file: " + path.string());
      }
      result.trace.space_name = rec.at("space").get<std::string>();
      result.trace.seed = std::stoull(rec.at("seed").get<std::string>(), nullptr, 16);
      result.trace.budget_iterations = rec.at("budget").get<int>();
      result.trace.initial_design_kind = rec.at("initial_design").get<std::string>();
      have_header = true;
    } else if (kind == "entry") {
      TraceEntry entry;
      entry.iteration = rec.at("iteration").get<int>();
      entry.config = from_flat_string(space, rec.at("config").get<std::string>());
      if (rec.at("rmse").is_null()) {
        entry.score = ModelScore::failure();
      } else {
        entry.score.rmse = rec.at("rmse").get<double>();
        entry.score.failed = false;
      }
      entry.score.n_points = rec.at("n_points").get<std::size_t>();
      entry.incumbent_score = rec.at("incumbent").is_null()
                                  ? std::numeric_limits<double>::quiet_NaN()
                                  : rec.at("incumbent").get<double>();
      entry.wallclock_s = rec.at("wallclock_s").get<double>();
      result.trace.entries.push_back(std::move(entry));
    }
    // summary records are ignored; the incumbent is recomputed below so
    // partial (interrupted) traces load the same way as complete ones.
  }
  if (!have_header) throw std::runtime_error("trace file missing header: " + path.string());
  for (const auto& entry : result.trace.entries) {
    if (entry.score.ok() &&
        (!result.has_incumbent || entry.score.rmse < result.incumbent_score.rmse)) {
      result.incumbent = entry.config;
      result.incumbent_score = entry.score;
      result.has_incumbent = true;
    }
  }
  if (!result.has_incumbent && !result.trace.entries.empty()) {
    result.incumbent = result.trace.entries.front().config;
    result.incumbent_score = ModelScore::failure();
  }
  return result;
}

}  // namespace mpctune
