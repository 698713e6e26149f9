#include "cotforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace cotforge {

namespace {

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string signed_fixed(double v, int decimals) { return (v >= 0 ? "+" : "") + fixed(v, decimals); }

double round_to(double v, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(v * scale) / scale;
}

}  // namespace

std::string_view to_string(Benchmark b) { return b == Benchmark::cobsat ? "cobsat" : "dreambench"; }

Benchmark benchmark_from_string(std::string_view s) {
  if (s == "cobsat") return Benchmark::cobsat;
  if (s == "dreambench") return Benchmark::dreambench;
  fail(ErrorKind::invalid_input, "unknown benchmark '" + std::string(s) + "'");
}

double aggregate_cobsat(const TaskScores& scores) {
  require(scores.benchmark == Benchmark::cobsat, ErrorKind::invalid_input, "scores are not CoBSAT scores");
  double sum = 0.0;
  for (auto task : kCobsatTasks) {
    auto it = scores.per_task.find(std::string(task));
    require(it != scores.per_task.end(), ErrorKind::invalid_input, "missing CoBSAT task " + std::string(task));
    require(std::isfinite(it->second), ErrorKind::invalid_input, "non-finite score for " + std::string(task));
    sum += it->second;
  }
  require(scores.per_task.size() == kCobsatTasks.size(), ErrorKind::invalid_input,
          "CoBSAT scores carry tasks outside the ten-task set");
  return sum / static_cast<double>(kCobsatTasks.size());
}

std::string render_truncated(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  // The epsilon absorbs representation error such as 0.29 == 0.28999...
  double t = std::trunc(value * scale + std::copysign(1e-9, value)) / scale;
  auto s = fixed(t, decimals);
  if (s.starts_with("0.")) return s.substr(1);
  if (s.starts_with("-0.")) return "-" + s.substr(2);
  return s;
}

DreamBenchAggregate aggregate_dreambench(std::span<const SampleCPPF> samples) {
  require(!samples.empty(), ErrorKind::invalid_input, "aggregate_dreambench needs at least one sample");
  DreamBenchAggregate a;
  for (const auto& s : samples) {
    require(std::isfinite(s.cp) && std::isfinite(s.pf), ErrorKind::invalid_input, "non-finite CP/PF sample");
    a.cp_mean += s.cp;
    a.pf_mean += s.pf;
    a.cp_pf += s.cp * s.pf;
  }
  const auto n = static_cast<double>(samples.size());
  a.cp_mean /= n;
  a.pf_mean /= n;
  a.cp_pf /= n;
  a.product_of_means = a.cp_mean * a.pf_mean;
  return a;
}

CpPfRowCheck check_cp_pf_row(std::string label, double cp, double pf, double displayed, double tolerance) {
  CpPfRowCheck c{std::move(label), cp, pf, displayed, cp * pf, false};
  c.consistent = std::abs(c.product - displayed) <= tolerance + 1e-12;
  return c;
}

AblationReport ablation_report(const std::map<std::string, double>& with_refine,
                               const std::map<std::string, double>& without_refine,
                               const std::vector<std::string>& order) {
  require(!with_refine.empty(), ErrorKind::invalid_input, "ablation report needs at least one metric");
  std::set<std::string> a, b;
  for (const auto& [k, v] : with_refine) a.insert(k);
  for (const auto& [k, v] : without_refine) b.insert(k);
  require(a == b, ErrorKind::invalid_input, "ablation inputs carry different metric keys");

  AblationReport r;
  r.with_refine = with_refine;
  r.without_refine = without_refine;
  for (const auto& m : order)
    if (a.contains(m)) r.metrics.push_back(m);
  for (const auto& m : a)
    if (std::find(r.metrics.begin(), r.metrics.end(), m) == r.metrics.end()) r.metrics.push_back(m);
  for (const auto& m : r.metrics) r.delta[m] = round_to(with_refine.at(m) - without_refine.at(m), 3);
  return r;
}

std::string AblationReport::render_markdown() const {
  std::ostringstream out;
  out << "| Method |";
  for (const auto& m : metrics) out << ' ' << m << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < metrics.size(); ++i) out << "---|";
  out << "\n| without refinement |";
  for (const auto& m : metrics) out << ' ' << fixed(without_refine.at(m), 3) << " |";
  out << "\n| with refinement |";
  for (const auto& m : metrics) out << ' ' << fixed(with_refine.at(m), 3) << " |";
  out << "\n| delta |";
  for (const auto& m : metrics) out << ' ' << signed_fixed(delta.at(m), 3) << " |";
  out << '\n';
  return out.str();
}

json AblationReport::to_json() const {
  json rows = json::array();
  for (const auto& m : metrics)
    rows.push_back({{"metric", m},
                    {"without_refine", without_refine.at(m)},
                    {"with_refine", with_refine.at(m)},
                    {"delta", delta.at(m)}});
  return json{{"metrics", rows}};
}

std::string render_cobsat_table(const std::vector<std::pair<std::string, TaskScores>>& rows, std::string_view format) {
  std::ostringstream out;
  const bool md = format == "md";
  const char* sep = md ? " | " : ",";
  if (md) out << "| ";
  out << "Method";
  for (auto t : kCobsatTasks) out << sep << t;
  out << sep << "Avg";
  if (md) {
    out << " |\n|";
    for (std::size_t i = 0; i < kCobsatTasks.size() + 2; ++i) out << "---|";
  }
  out << '\n';
  for (const auto& [label, scores] : rows) {
    if (md) out << "| ";
    out << label;
    for (auto t : kCobsatTasks) out << sep << render_truncated(scores.per_task.at(std::string(t)));
    out << sep << render_truncated(aggregate_cobsat(scores));
    if (md) out << " |";
    out << '\n';
  }
  return out.str();
}

std::string render_dreambench_table(const std::vector<std::pair<std::string, DreamBenchAggregate>>& rows,
                                    std::string_view format) {
  std::ostringstream out;
  const bool md = format == "md";
  const char* sep = md ? " | " : ",";
  if (md) out << "| ";
  out << "Method" << sep << "CP" << sep << "PF" << sep << "CP*PF (per-sample)" << sep << "CP*PF (product of means)";
  if (md) out << " |\n|---|---|---|---|---|";
  out << '\n';
  for (const auto& [label, a] : rows) {
    if (md) out << "| ";
    out << label << sep << render_truncated(a.cp_mean) << sep << render_truncated(a.pf_mean) << sep
        << render_truncated(a.cp_pf) << sep << render_truncated(a.product_of_means);
    if (md) out << " |";
    out << '\n';
  }
  return out.str();
}

}  // namespace cotforge
