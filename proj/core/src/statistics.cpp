#include <algorithm>
#include <cmath>

#include "aptness/error.hpp"
#include "aptness/eval.hpp"

namespace aptness::eval {

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw Error(ErrorKind::kStatistics, "pearson: length mismatch (" + std::to_string(x.size()) +
                                            " vs " + std::to_string(y.size()) + ")");
  }
  const std::size_t n = x.size();
  if (n < 2) throw Error(ErrorKind::kStatistics, "pearson: need at least 2 points");
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw Error(ErrorKind::kStatistics, "pearson: constant series");
  }
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

CorrelationTable correlation_table(const std::vector<std::pair<std::string, MetricVector>>& rows) {
  CorrelationTable t;
  for (const auto& [name, _] : rows) t.methods.push_back(name);
  if (rows.size() < 2) {
    t.note = "correlation needs at least 2 method runs; got " + std::to_string(rows.size());
    return t;
  }
  std::vector<double> emp;
  for (const auto& [_, sc] : rows) emp.push_back(sc.empathy());
  if (std::all_of(emp.begin(), emp.end(), [&](double v) { return v == emp.front(); })) {
    t.note = "Empathy is identical across methods; correlation undefined";
    return t;
  }
  std::vector<std::string> skipped;
  for (std::size_t m = 1; m < kMetricCount; ++m) {
    std::vector<double> col;
    for (const auto& [_, sc] : rows) col.push_back(sc[m]);
    try {
      t.r[m] = pearson(col, emp);
    } catch (const Error&) {
      skipped.emplace_back(kMetricShort[m]);
    }
  }
  t.available = true;
  if (!skipped.empty()) {
    t.note = "undefined (constant column):";
    for (const auto& s : skipped) t.note += " " + s;
  }
  return t;
}

nlohmann::json CorrelationTable::to_json() const {
  nlohmann::json j{{"methods", methods}, {"available", available}};
  if (!note.empty()) j["note"] = note;
  if (available) {
    nlohmann::json r_obj = nlohmann::json::object();
    for (std::size_t m = 1; m < kMetricCount; ++m) {
      r_obj[std::string(kMetricShort[m])] = r[m] ? nlohmann::json(*r[m]) : nlohmann::json();
    }
    j["pearson_with_emp"] = r_obj;
  }
  return j;
}

}  // namespace aptness::eval
