#include "mpctune/report.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "mpctune/util.hpp"

namespace mpctune {
namespace {

// Continued-fraction evaluation of the incomplete beta (modified Lentz).
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-15;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

double incumbent_at(const TuningTrace& trace, std::size_t iter) {
  if (trace.entries.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t idx = std::min(iter, trace.entries.size() - 1);
  return trace.entries[idx].incumbent_score;
}

std::string cell(double v) {
  if (!std::isfinite(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

// Four significant digits; keeps sub-1e-4 RMSE values readable where %.4f
// would print 0.0000.
std::string sig4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

}  // namespace

double gain_percent(double baseline_mean, double method_mean) {
  if (!(baseline_mean > 0.0)) {
    throw std::invalid_argument("gain_percent: baseline must be positive");
  }
  return 100.0 * (baseline_mean - method_mean) / baseline_mean;
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) {
    throw std::invalid_argument("incomplete beta: a, b must be positive");
  }
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log(1.0 - x);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(ln_front) * beta_cf(a, b, x) / a;
  }
  return 1.0 - std::exp(ln_front) * beta_cf(b, a, 1.0 - x) / b;
}

double sample_mean(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean of empty sample");
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) throw std::invalid_argument("std of fewer than 2 samples");
  const double m = sample_mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

WelchResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b,
                         double alpha) {
  if (a.size() < 2 || b.size() < 2) {
    throw std::invalid_argument("welch_t_test: need >= 2 samples per side");
  }
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double ma = sample_mean(a);
  const double mb = sample_mean(b);
  const double sa = sample_std(a);
  const double sb = sample_std(b);
  const double va = sa * sa / na;
  const double vb = sb * sb / nb;

  WelchResult out;
  if (va + vb == 0.0) {
    if (ma == mb) {
      out.t = 0.0;
      out.p = 1.0;
      out.df = na + nb - 2.0;
    } else {
      out.t = ma > mb ? std::numeric_limits<double>::infinity()
                      : -std::numeric_limits<double>::infinity();
      out.p = 0.0;
      out.df = na + nb - 2.0;
      out.significant = out.p < alpha;
    }
    return out;
  }

  out.t = (ma - mb) / std::sqrt(va + vb);
  out.df = (va + vb) * (va + vb) /
           (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  const double x = out.df / (out.df + out.t * out.t);
  out.p = regularized_incomplete_beta(out.df / 2.0, 0.5, x);
  out.significant = out.p < alpha;
  return out;
}

RunSummary summarize(const std::vector<TuningTrace>& traces, const std::string& dataset_id) {
  if (traces.empty()) throw std::invalid_argument("summarize: no traces");
  const std::string& kind = traces.front().initial_design_kind;
  for (const auto& trace : traces) {
    if (trace.initial_design_kind != kind) {
      throw std::invalid_argument("summarize: mixed initial-design kinds");
    }
  }
  RunSummary out;
  out.dataset_id = dataset_id;
  out.method = kind == "random" ? "pure_bo" : "portfolio";
  for (const auto& trace : traces) {
    out.finals.push_back(trace.entries.empty()
                             ? std::numeric_limits<double>::quiet_NaN()
                             : trace.entries.back().incumbent_score);
  }
  out.mean = sample_mean(out.finals);
  out.std_dev = out.finals.size() >= 2 ? sample_std(out.finals) : 0.0;
  return out;
}

void export_curves(const std::vector<TuningTrace>& traces, const std::filesystem::path& path) {
  if (traces.empty()) throw std::invalid_argument("export_curves: no traces");
  std::size_t max_len = 0;
  for (const auto& trace : traces) max_len = std::max(max_len, trace.entries.size());
  if (max_len == 0) throw std::invalid_argument("export_curves: traces are empty");

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "iteration";
  for (std::size_t s = 0; s < traces.size(); ++s) out << ",run" << s;
  out << ",median,best\n";
  for (std::size_t iter = 0; iter < max_len; ++iter) {
    out << iter;
    std::vector<double> finite;
    for (const auto& trace : traces) {
      const double v = incumbent_at(trace, iter);
      out << "," << cell(v);
      if (std::isfinite(v)) finite.push_back(v);
    }
    if (finite.empty()) {
      out << ",,\n";
      continue;
    }
    std::sort(finite.begin(), finite.end());
    const std::size_t n = finite.size();
    const double median = n % 2 == 1
                              ? finite[n / 2]
                              : 0.5 * (finite[n / 2 - 1] + finite[n / 2]);
    out << "," << cell(median) << "," << cell(finite.front()) << "\n";
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void render_curves_svg(const std::vector<TuningTrace>& traces,
                       const std::filesystem::path& path) {
  if (traces.empty()) throw std::invalid_argument("render_curves_svg: no traces");
  std::size_t max_len = 0;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& trace : traces) {
    max_len = std::max(max_len, trace.entries.size());
    for (const auto& entry : trace.entries) {
      if (std::isfinite(entry.incumbent_score)) {
        lo = std::min(lo, entry.incumbent_score);
        hi = std::max(hi, entry.incumbent_score);
      }
    }
  }
  if (!(lo <= hi)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi - lo < 1e-12) hi = lo + 1e-12;

  const double width = 640.0, height = 420.0;
  const double ml = 60.0, mr = 20.0, mt = 20.0, mb = 45.0;
  const double px = width - ml - mr, py = height - mt - mb;
  const auto x_of = [&](std::size_t iter) {
    return max_len <= 1 ? ml
                        : ml + px * static_cast<double>(iter) /
                                   static_cast<double>(max_len - 1);
  };
  const auto y_of = [&](double v) { return mt + py * (1.0 - (v - lo) / (hi - lo)); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt + py << "\" x2=\"" << ml + px
      << "\" y2=\"" << mt + py << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
      << mt + py << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << ml + px / 2 << "\" y=\"" << height - 10
      << "\" text-anchor=\"middle\" font-size=\"13\">iteration</text>\n";
  svg << "<text x=\"15\" y=\"" << mt + py / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 15 "
      << mt + py / 2 << ")\">incumbent score</text>\n";
  svg << "<text x=\"" << ml - 6 << "\" y=\"" << mt + 4
      << "\" text-anchor=\"end\" font-size=\"11\">" << sig4(hi) << "</text>\n";
  svg << "<text x=\"" << ml - 6 << "\" y=\"" << mt + py + 4
      << "\" text-anchor=\"end\" font-size=\"11\">" << sig4(lo) << "</text>\n";

  auto polyline = [&](const std::vector<double>& ys, const char* stroke, double w) {
    svg << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"" << w
        << "\" points=\"";
    for (std::size_t i = 0; i < ys.size(); ++i) {
      if (!std::isfinite(ys[i])) continue;
      svg << x_of(i) << "," << y_of(ys[i]) << " ";
    }
    svg << "\"/>\n";
  };

  std::vector<std::vector<double>> per_iter(max_len);
  for (const auto& trace : traces) {
    std::vector<double> ys;
    for (std::size_t i = 0; i < max_len; ++i) {
      const double v = incumbent_at(trace, i);
      ys.push_back(v);
      if (std::isfinite(v)) per_iter[i].push_back(v);
    }
    polyline(ys, "#9aa5b1", 1.0);
  }
  std::vector<double> median_curve;
  for (auto& vals : per_iter) {
    if (vals.empty()) {
      median_curve.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    std::sort(vals.begin(), vals.end());
    const std::size_t n = vals.size();
    median_curve.push_back(n % 2 == 1 ? vals[n / 2]
                                      : 0.5 * (vals[n / 2 - 1] + vals[n / 2]));
  }
  polyline(median_curve, "#1f6feb", 2.5);
  svg << "</svg>\n";

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << svg.str();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

TableRow make_table_row(const std::string& dataset, const RunSummary& baseline,
                        const RunSummary& method, double alpha) {
  TableRow row;
  row.dataset = dataset;
  row.baseline = baseline;
  row.method = method;
  row.gain = gain_percent(baseline.mean, method.mean);
  row.test = welch_t_test(baseline.finals, method.finals, alpha);
  return row;
}

std::string format_table(const std::vector<TableRow>& rows, const std::string& baseline_name,
                         const std::string& method_name) {
  std::vector<std::array<std::string, 4>> cells;
  for (const auto& row : rows) {
    std::array<std::string, 4> c;
    c[0] = row.dataset;
    c[1] = sig4(row.baseline.mean) + " (" + sig4(row.baseline.std_dev) + ")";
    c[2] = sig4(row.method.mean) + " (" + sig4(row.method.std_dev) + ")";
    if (row.test.significant) c[2] += " *";
    c[3] = fixed4(row.gain);
    cells.push_back(std::move(c));
  }
  std::array<std::string, 4> header = {"dataset", baseline_name + " mean (std)",
                                       method_name + " mean (std)", "gain %"};
  std::array<std::size_t, 4> widths;
  for (std::size_t j = 0; j < 4; ++j) {
    widths[j] = header[j].size();
    for (const auto& c : cells) widths[j] = std::max(widths[j], c[j].size());
  }
  std::ostringstream out;
  auto emit_row = [&](const std::array<std::string, 4>& c) {
    for (std::size_t j = 0; j < 4; ++j) {
      out << c[j] << std::string(widths[j] - c[j].size(), ' ');
      out << (j + 1 < 4 ? "  " : "");
    }
    out << "\n";
  };
  emit_row(header);
  std::size_t total = 0;
  for (std::size_t j = 0; j < 4; ++j) total += widths[j] + (j + 1 < 4 ? 2 : 0);
  out << std::string(total, '-') << "\n";
  for (const auto& c : cells) emit_row(c);
  out << "* significant (Welch t-test)\n";
  return out.str();
}

std::string format_csv(const std::vector<TableRow>& rows, const std::string& baseline_name,
                       const std::string& method_name) {
  std::ostringstream out;
  out << "dataset," << baseline_name << "_mean," << baseline_name << "_std,"
      << method_name << "_mean," << method_name << "_std,gain_percent,p_value,significant\n";
  for (const auto& row : rows) {
    out << row.dataset << "," << fmt17(row.baseline.mean) << ","
        << fmt17(row.baseline.std_dev) << "," << fmt17(row.method.mean) << ","
        << fmt17(row.method.std_dev) << "," << fixed4(row.gain) << ","
        << fmt17(row.test.p) << "," << (row.test.significant ? 1 : 0) << "\n";
  }
  return out.str();
}

}  // namespace mpctune
