#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mpctune/report.hpp"
#include "mpctune/tuner.hpp"
#include "mpctune/util.hpp"

using namespace mpctune;

namespace {

std::filesystem::path scratch_dir() {
  auto dir = std::filesystem::temp_directory_path() / "mpctune_test_report";
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TuningTrace trace_of(std::vector<double> incumbents, const std::string& kind) {
  TuningTrace trace;
  trace.initial_design_kind = kind;
  int iter = 0;
  for (double v : incumbents) {
    TraceEntry e;
    e.iteration = iter++;
    e.incumbent_score = v;
    trace.entries.push_back(e);
  }
  trace.budget_iterations = static_cast<int>(incumbents.size());
  return trace;
}

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t pos = hay.find(needle); pos != std::string::npos;
       pos = hay.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("gain percentages match hand-computed references") {
  // Mean-score pairs with their improvement percentages, checked to 1e-4.
  struct Row {
    double baseline, method, gain;
  };
  const Row rows[] = {
      {0.5987, 0.5944, 0.7182},  {12.9722, 12.7447, 1.7538},
      {1.2506, 1.2395, 0.8876},  {2.5899, 2.5499, 1.5445},
      {0.8803, 0.8573, 2.6127},  {5.5249, 5.4808, 0.7982},
      {2.5504, 2.5358, 0.5725},  {0.8194, 0.8090, 1.2692},
      {0.8656, 0.8085, 6.5966},  {8.4, 7.16, 14.7619},
      {8.4, 7.71, 8.2143},
  };
  for (const auto& row : rows) {
    CHECK(std::abs(gain_percent(row.baseline, row.method) - row.gain) < 1e-4);
  }

  CHECK(gain_percent(2.0, 2.0) == 0.0);
  CHECK(gain_percent(2.0, 3.0) == -50.0);  // regression shows up negative
  CHECK_THROWS_AS((void)gain_percent(0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS((void)gain_percent(-1.0, 1.0), std::invalid_argument);
}

TEST_CASE("sample mean and standard deviation") {
  const std::vector<double> xs = {2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0};
  CHECK(sample_mean(xs) == 5.0);
  // Sum of squared deviations is 32 over n-1 = 7.
  CHECK(sample_std(xs) == doctest::Approx(std::sqrt(32.0 / 7.0)).epsilon(1e-15));
  CHECK(sample_std({3.0, 3.0, 3.0}) == 0.0);
  CHECK_THROWS_AS((void)sample_mean({}), std::invalid_argument);
  CHECK_THROWS_AS((void)sample_std({1.0}), std::invalid_argument);
}

TEST_CASE("regularized incomplete beta agrees with closed forms and references") {
  CHECK(regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0);
  CHECK(regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0);
  CHECK_THROWS_AS((void)regularized_incomplete_beta(0.0, 1.0, 0.5),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)regularized_incomplete_beta(1.0, -1.0, 0.5),
                  std::invalid_argument);

  // I_x(1, b) = 1 - (1-x)^b and I_x(a, 1) = x^a.
  for (double x : {0.1, 0.37, 0.5, 0.83}) {
    CHECK(regularized_incomplete_beta(1.0, 2.5, x) ==
          doctest::Approx(1.0 - std::pow(1.0 - x, 2.5)).epsilon(1e-13));
    CHECK(regularized_incomplete_beta(3.0, 1.0, x) ==
          doctest::Approx(std::pow(x, 3.0)).epsilon(1e-13));
    // Arcsine closed form at a = b = 1/2.
    CHECK(regularized_incomplete_beta(0.5, 0.5, x) ==
          doctest::Approx(2.0 / M_PI * std::asin(std::sqrt(x))).epsilon(1e-13));
    // Complement identity.
    CHECK(regularized_incomplete_beta(2.0, 3.0, x) +
              regularized_incomplete_beta(3.0, 2.0, 1.0 - x) ==
          doctest::Approx(1.0).epsilon(1e-13));
  }

  // Two-sided t-tail probabilities go through I_{df/(df+t^2)}(df/2, 1/2);
  // these three reference points come from the t distribution.
  const double p1 = regularized_incomplete_beta(2.5, 0.5, 5.0 / 9.0);
  CHECK(p1 == doctest::Approx(2.0 * (1.0 - 0.9490302605850709)).epsilon(1e-12));
  const double p2 =
      regularized_incomplete_beta(3.6, 0.5, 7.2 / (7.2 + 1.3 * 1.3));
  CHECK(p2 == doctest::Approx(2.0 * 0.11683460391731776).epsilon(1e-12));
  const double p3 =
      regularized_incomplete_beta(1.25, 0.5, 2.5 / (2.5 + 0.25));
  CHECK(p3 == doctest::Approx(2.0 * (1.0 - 0.6711510400651426)).epsilon(1e-12));

  // Monotone in x.
  double prev = -1.0;
  for (double x = 0.0; x <= 1.0; x += 0.05) {
    const double v = regularized_incomplete_beta(1.7, 2.9, x);
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("welch t-test reproduces reference statistics") {
  const std::vector<double> a1 = {0.82, 0.91, 0.78, 0.88, 0.85};
  const std::vector<double> b1 = {0.71, 0.69, 0.74, 0.7, 0.72};
  const WelchResult w1 = welch_t_test(a1, b1, 0.1);
  CHECK(w1.t == doctest::Approx(5.608545472127788).epsilon(1e-12));
  CHECK(w1.df == doctest::Approx(5.128363345100717).epsilon(1e-12));
  CHECK(w1.p == doctest::Approx(0.0022967372572716568).epsilon(1e-12));
  CHECK(w1.significant);

  const std::vector<double> a2 = {12.9, 13.4, 12.7, 13.1, 12.8, 13.0};
  const std::vector<double> b2 = {12.6, 12.9, 12.5, 12.7};
  const WelchResult w2 = welch_t_test(a2, b2, 0.1);
  CHECK(w2.t == doctest::Approx(2.3261700698091468).epsilon(1e-12));
  CHECK(w2.df == doctest::Approx(7.945703716576875).epsilon(1e-12));
  CHECK(w2.p == doctest::Approx(0.04866238742317603).epsilon(1e-12));
  CHECK(w2.significant);
  // The same data fails a stricter bar.
  CHECK_FALSE(welch_t_test(a2, b2, 0.01).significant);

  // Equal means with unequal spreads: t is exactly zero, p exactly one.
  const std::vector<double> a3 = {1.0, 2.0, 3.0, 4.0};
  const std::vector<double> b3 = {2.5, 2.6, 2.4, 2.55, 2.45};
  const WelchResult w3 = welch_t_test(a3, b3, 0.1);
  CHECK(w3.t == 0.0);
  CHECK(w3.df == doctest::Approx(3.0180066284552574).epsilon(1e-12));
  CHECK(w3.p == 1.0);
  CHECK_FALSE(w3.significant);

  const std::vector<double> a4 = {5.0, 5.1};
  const std::vector<double> b4 = {4.2, 6.3, 5.5};
  const WelchResult w4 = welch_t_test(a4, b4, 0.1);
  CHECK(w4.t == doctest::Approx(-0.46148649632821753).epsilon(1e-12));
  CHECK(w4.df == doctest::Approx(2.0266147058273254).epsilon(1e-12));
  CHECK(w4.p == doctest::Approx(0.6892533961464575).epsilon(1e-12));
  CHECK_FALSE(w4.significant);

  // Antisymmetric in the argument order.
  const WelchResult fwd = welch_t_test(a1, b1, 0.1);
  const WelchResult rev = welch_t_test(b1, a1, 0.1);
  CHECK(fwd.t == -rev.t);
  CHECK(fwd.df == rev.df);
  CHECK(fwd.p == rev.p);
}

TEST_CASE("welch t-test edge cases") {
  // A sample against itself: same means, p = 1 exactly.
  const std::vector<double> a = {0.82, 0.91, 0.78, 0.88, 0.85};
  const WelchResult self = welch_t_test(a, a, 0.1);
  CHECK(self.t == 0.0);
  CHECK(self.p == 1.0);
  CHECK_FALSE(self.significant);

  // Two constant samples, equal and unequal.
  const WelchResult flat = welch_t_test({3.0, 3.0, 3.0}, {3.0, 3.0}, 0.1);
  CHECK(flat.t == 0.0);
  CHECK(flat.p == 1.0);
  CHECK(flat.df == 3.0);
  const WelchResult apart = welch_t_test({1.0, 1.0}, {2.0, 2.0}, 0.1);
  CHECK(apart.t == -std::numeric_limits<double>::infinity());
  CHECK(apart.p == 0.0);
  CHECK(apart.significant);

  // Clearly separated near-constant samples: overwhelming evidence.
  std::vector<double> zeros(5, 0.0);
  std::vector<double> ones;
  for (int k = 0; k < 5; ++k) ones.push_back(1.0 + 1e-9 * k);
  const WelchResult sep = welch_t_test(zeros, ones, 0.1);
  CHECK(sep.p < 1e-6);
  CHECK(sep.significant);

  CHECK_THROWS_AS((void)welch_t_test({1.0}, {1.0, 2.0}, 0.1), std::invalid_argument);
  CHECK_THROWS_AS((void)welch_t_test({1.0, 2.0}, {}, 0.1), std::invalid_argument);
}

TEST_CASE("summarize extracts final incumbents per method") {
  std::vector<TuningTrace> bo = {
      trace_of({5.0, 3.0, 3.0, 2.5}, "random"),
      trace_of({4.0, 4.0, 3.5}, "random"),
      trace_of({6.0, 2.0}, "random"),
  };
  const RunSummary s = summarize(bo, "pendulum-g1.0");
  CHECK(s.dataset_id == "pendulum-g1.0");
  CHECK(s.method == "pure_bo");
  REQUIRE(s.finals.size() == 3);
  CHECK(s.finals[0] == 2.5);
  CHECK(s.finals[1] == 3.5);
  CHECK(s.finals[2] == 2.0);
  CHECK(s.mean == doctest::Approx((2.5 + 3.5 + 2.0) / 3.0).epsilon(1e-15));
  CHECK(s.std_dev == doctest::Approx(sample_std({2.5, 3.5, 2.0})).epsilon(1e-15));

  std::vector<TuningTrace> port = {trace_of({1.0, 0.5}, "portfolio")};
  const RunSummary sp = summarize(port, "d");
  CHECK(sp.method == "portfolio");
  REQUIRE(sp.finals.size() == 1);
  CHECK(sp.finals[0] == 0.5);
  CHECK(sp.std_dev == 0.0);  // single run has no spread

  // A trace with no entries contributes a missing final.
  std::vector<TuningTrace> with_empty = {trace_of({2.0}, "random"),
                                         trace_of({}, "random")};
  const RunSummary se = summarize(with_empty, "d");
  CHECK(std::isnan(se.finals[1]));
  CHECK(std::isnan(se.mean));

  std::vector<TuningTrace> mixed = {trace_of({1.0}, "random"),
                                    trace_of({1.0}, "portfolio")};
  CHECK_THROWS_AS((void)summarize(mixed, "d"), std::invalid_argument);
  CHECK_THROWS_AS((void)summarize({}, "d"), std::invalid_argument);
}

TEST_CASE("curve export carries incumbents forward and aggregates per iteration") {
  std::vector<TuningTrace> traces = {
      trace_of({4.0, 2.0, 1.0, 1.0, 0.5}, "random"),
      trace_of({3.0, 3.0, 2.5}, "random"),
  };
  const auto path = scratch_dir() / "curves.csv";
  export_curves(traces, path);
  const std::string text = slurp(path);

  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  REQUIRE(lines.size() == 6);
  CHECK(lines[0] == "iteration,run0,run1,median,best");

  auto row = [](int iter, double r0, double r1, double med, double best) {
    std::ostringstream ss;
    ss << iter << "," << fmt17(r0) << "," << fmt17(r1) << "," << fmt17(med)
       << "," << fmt17(best);
    return ss.str();
  };
  CHECK(lines[1] == row(0, 4.0, 3.0, 3.5, 3.0));
  CHECK(lines[2] == row(1, 2.0, 3.0, 2.5, 2.0));
  CHECK(lines[3] == row(2, 1.0, 2.5, 1.75, 1.0));
  // The shorter run holds its last incumbent to the end.
  CHECK(lines[4] == row(3, 1.0, 2.5, 1.75, 1.0));
  CHECK(lines[5] == row(4, 0.5, 2.5, 1.5, 0.5));

  // Missing incumbents show up as empty cells and drop out of the medians.
  std::vector<TuningTrace> with_gap = {trace_of({2.0}, "random"),
                                       trace_of({}, "random")};
  const auto gap_path = scratch_dir() / "gap.csv";
  export_curves(with_gap, gap_path);
  const std::string gap = slurp(gap_path);
  CHECK(gap == "iteration,run0,run1,median,best\n0," + fmt17(2.0) + ",," +
                   fmt17(2.0) + "," + fmt17(2.0) + "\n");

  CHECK_THROWS_AS(export_curves({}, path), std::invalid_argument);
  CHECK_THROWS_AS(export_curves({trace_of({}, "random")}, path),
                  std::invalid_argument);
}

TEST_CASE("svg rendering produces one curve per run plus a median") {
  std::vector<TuningTrace> traces = {
      trace_of({4.0, 2.0, 1.0}, "random"),
      trace_of({3.0, 2.8, 2.5}, "random"),
      trace_of({5.0, 1.5, 1.5}, "random"),
  };
  const auto path = scratch_dir() / "curves.svg";
  render_curves_svg(traces, path);
  const std::string svg = slurp(path);

  CHECK(svg.find("<svg") == 0);
  CHECK(count_occurrences(svg, "<polyline") == 4);
  CHECK(svg.find("iteration") != std::string::npos);
  CHECK(svg.find("incumbent score") != std::string::npos);
  // Axis endpoints are labeled with the observed extremes.
  CHECK(svg.find(">5<") != std::string::npos);
  CHECK(svg.find(">1<") != std::string::npos);

  CHECK_THROWS_AS(render_curves_svg({}, path), std::invalid_argument);
}

TEST_CASE("table rows combine gains with the significance test") {
  RunSummary base;
  base.dataset_id = "d1";
  base.method = "pure_bo";
  base.finals = {0.82, 0.91, 0.78, 0.88, 0.85};
  base.mean = sample_mean(base.finals);
  base.std_dev = sample_std(base.finals);

  RunSummary port;
  port.dataset_id = "d1";
  port.method = "portfolio";
  port.finals = {0.71, 0.69, 0.74, 0.7, 0.72};
  port.mean = sample_mean(port.finals);
  port.std_dev = sample_std(port.finals);

  const TableRow row = make_table_row("d1", base, port, 0.1);
  CHECK(row.gain == gain_percent(base.mean, port.mean));
  const WelchResult direct = welch_t_test(base.finals, port.finals, 0.1);
  CHECK(row.test.t == direct.t);
  CHECK(row.test.p == direct.p);
  CHECK(row.test.significant);

  RunSummary close = base;
  close.finals = {0.84, 0.86, 0.83, 0.89, 0.85};
  close.mean = sample_mean(close.finals);
  close.std_dev = sample_std(close.finals);
  const TableRow quiet = make_table_row("d2", base, close, 0.1);

  const std::string table = format_table({row, quiet}, "pure_bo", "portfolio");
  CHECK(table.find("dataset") != std::string::npos);
  CHECK(table.find("pure_bo mean (std)") != std::string::npos);
  CHECK(table.find("portfolio mean (std)") != std::string::npos);
  CHECK(table.find("gain %") != std::string::npos);
  // Exactly the significant row is starred; the legend mentions the test.
  CHECK(count_occurrences(table, " *") == 1);
  CHECK(table.find("* significant (Welch t-test)") != std::string::npos);
  CHECK(table.find("d1") != std::string::npos);
  CHECK(table.find("d2") != std::string::npos);

  const std::string csv = format_csv({row}, "pure_bo", "portfolio");
  std::istringstream in(csv);
  std::string header, data;
  REQUIRE(std::getline(in, header));
  REQUIRE(std::getline(in, data));
  CHECK(header ==
        "dataset,pure_bo_mean,pure_bo_std,portfolio_mean,portfolio_std,"
        "gain_percent,p_value,significant");
  std::vector<std::string> fields;
  std::istringstream ds(data);
  for (std::string f; std::getline(ds, f, ',');) fields.push_back(f);
  REQUIRE(fields.size() == 8);
  CHECK(fields[0] == "d1");
  CHECK(fields[1] == fmt17(base.mean));
  CHECK(fields[2] == fmt17(base.std_dev));
  CHECK(fields[3] == fmt17(port.mean));
  CHECK(fields[4] == fmt17(port.std_dev));
  CHECK(fields[6] == fmt17(row.test.p));
  CHECK(fields[7] == "1");
}
