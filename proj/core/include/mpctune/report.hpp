// Aggregation of multi-seed runs: summary statistics, gain percentages,
// Welch t-tests, tuning-curve exports, and the aligned comparison table.
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mpctune/tuner.hpp"

namespace mpctune {

struct RunSummary {
  std::string dataset_id;
  std::string method;  // "pure_bo" or "portfolio"
  std::vector<double> finals;
  double mean = 0.0;
  double std_dev = 0.0;  // sample std, n-1 denominator
};

// 100 * (baseline - method) / baseline; positive when the method improves on
// the baseline. Baseline must be positive.
double gain_percent(double baseline_mean, double method_mean);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  bool significant = false;
};

// Two-sided unequal-variance t-test with Welch-Satterthwaite degrees of
// freedom. Identical constant samples give t=0, p=1.
WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b,
                         double alpha);

// Regularized incomplete beta I_x(a, b), the kernel behind the t-distribution
// tail probability.
double regularized_incomplete_beta(double a, double b, double x);

double sample_mean(const std::vector<double>& xs);
double sample_std(const std::vector<double>& xs);  // n-1 denominator

// Final incumbent score per trace. All traces must share one initial-design
// kind; "random" maps to method pure_bo, "portfolio" stays portfolio.
RunSummary summarize(const std::vector<TuningTrace>& traces, const std::string& dataset_id);

// Delimited tuning-curve file: per iteration, each trace's incumbent so far,
// their median, and the best. Optionally an SVG rendering of the same curves.
void export_curves(const std::vector<TuningTrace>& traces, const std::filesystem::path& path);
void render_curves_svg(const std::vector<TuningTrace>& traces,
                       const std::filesystem::path& path);

struct TableRow {
  std::string dataset;
  RunSummary baseline;
  RunSummary method;
  double gain = 0.0;
  WelchResult test;
};

TableRow make_table_row(const std::string& dataset, const RunSummary& baseline,
                        const RunSummary& method, double alpha);

// Aligned human-readable table (significance starred on the method column)
// and its delimited twin.
std::string format_table(const std::vector<TableRow>& rows, const std::string& baseline_name,
                         const std::string& method_name);
std::string format_csv(const std::vector<TableRow>& rows, const std::string& baseline_name,
                       const std::string& method_name);

}  // namespace mpctune
