#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "sglpanel/design.hpp"
#include "sglpanel/estimators.hpp"
#include "sglpanel/inference.hpp"

namespace sglpanel::io {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Panel CSV: entity,period,subperiod,variable,value
//
// The response is the variable `y` at subperiod 1. Covariate k at
// high-frequency lag j (1 = most recent) is stored at subperiod j, so m_k is
// the largest subperiod seen for that variable. Every entity must carry the
// same periods and every (entity, period, variable, subperiod) cell exactly
// once.

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t k = 0; k <= line.size(); ++k) {
    if (k == line.size() || line[k] == ',') {
      out.push_back(trim(line.substr(start, k - start)));
      start = k + 1;
    }
  }
  return out;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct Record {
  std::size_t entity;
  long long period;
  std::size_t variable;  // 0 = y, k + 1 = covariate k
  int sub;
  double value;
  std::size_t line;
};

}  // namespace detail

/// Parses the long-format panel. Errors name the offending line; missing
/// cells name the entity, period, variable and subperiod.
inline PanelDataset read_panel_csv(std::istream& in, int horizon = 0, int response_lags = 0) {
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line);
    if (f.size() != 5 || f[0] != "entity" || f[1] != "period" || f[2] != "subperiod" || f[3] != "variable" ||
        f[4] != "value")
      throw InputError("expected header 'entity,period,subperiod,variable,value'", lineno);
    header = true;
    break;
  }
  if (!header) throw InputError("empty input: no header");

  std::vector<std::string> entities;
  std::map<std::string, std::size_t, std::less<>> entity_index;
  std::vector<std::string> variables{"y"};
  std::map<std::string, std::size_t, std::less<>> variable_index{{"y", 0}};
  std::vector<int> max_sub{1};
  std::vector<detail::Record> records;
  std::map<long long, std::size_t> period_index;

  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(line);
    if (f.size() != 5) throw InputError("expected 5 comma-separated fields, got " + std::to_string(f.size()), lineno);
    if (f[0].empty()) throw InputError("empty entity", lineno);
    if (f[3].empty()) throw InputError("empty variable name", lineno);
    detail::Record r{};
    r.line = lineno;
    if (!detail::parse_number(f[1], r.period)) throw InputError("period '" + std::string(f[1]) + "' is not an integer", lineno);
    if (!detail::parse_number(f[2], r.sub) || r.sub < 1)
      throw InputError("subperiod '" + std::string(f[2]) + "' is not a positive integer", lineno);
    if (!detail::parse_number(f[4], r.value) || !std::isfinite(r.value))
      throw InputError("value '" + std::string(f[4]) + "' is not a finite number", lineno);
    auto e = entity_index.find(f[0]);
    if (e == entity_index.end()) {
      e = entity_index.emplace(std::string(f[0]), entities.size()).first;
      entities.emplace_back(f[0]);
    }
    r.entity = e->second;
    auto v = variable_index.find(f[3]);
    if (v == variable_index.end()) {
      v = variable_index.emplace(std::string(f[3]), variables.size()).first;
      variables.emplace_back(f[3]);
      max_sub.push_back(0);
    }
    r.variable = v->second;
    if (r.variable == 0 && r.sub != 1) throw InputError("response 'y' must use subperiod 1", lineno);
    max_sub[r.variable] = std::max(max_sub[r.variable], r.sub);
    period_index.emplace(r.period, 0);
    records.push_back(r);
  }
  if (records.empty()) throw InputError("no data rows");

  std::vector<long long> periods;
  for (auto& [label, idx] : period_index) {
    idx = periods.size();
    periods.push_back(label);
  }
  const Index N = static_cast<Index>(entities.size());
  const Index T = static_cast<Index>(periods.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();

  PanelDataset data;
  data.entities = entities;
  data.periods = periods;
  data.horizon = horizon;
  data.response_lags = response_lags;
  data.y = Eigen::MatrixXd::Constant(N, T, nan);
  for (std::size_t k = 1; k < variables.size(); ++k) {
    Covariate c;
    c.name = variables[k];
    c.m = max_sub[k];
    c.lags.assign(static_cast<std::size_t>(N), Eigen::MatrixXd::Constant(T, c.m, nan));
    data.covariates.push_back(std::move(c));
  }
  for (const auto& r : records) {
    const Index t = static_cast<Index>(period_index.at(r.period));
    double& slot = r.variable == 0 ? data.y(static_cast<Index>(r.entity), t)
                                   : data.covariates[r.variable - 1].lags[r.entity](t, r.sub - 1);
    if (!std::isnan(slot))
      throw InputError("duplicate cell (" + entities[r.entity] + ", " + std::to_string(r.period) + ", " +
                           variables[r.variable] + ", " + std::to_string(r.sub) + ")",
                       r.line);
    slot = r.value;
  }
  auto missing = [&](Index i, Index t, const std::string& var, int sub) {
    return InputError("incomplete panel: missing (" + entities[i] + ", " + std::to_string(periods[t]) + ", " + var +
                      ", " + std::to_string(sub) + ")");
  };
  for (Index i = 0; i < N; ++i)
    for (Index t = 0; t < T; ++t) {
      if (std::isnan(data.y(i, t))) throw missing(i, t, "y", 1);
      for (const auto& c : data.covariates)
        for (int j = 0; j < c.m; ++j)
          if (std::isnan(c.lags[i](t, j))) throw missing(i, t, c.name, j + 1);
    }
  data.validate();
  return data;
}

inline PanelDataset read_panel_csv_file(const std::string& path, int horizon = 0, int response_lags = 0) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return read_panel_csv(in, horizon, response_lags);
}

inline void write_panel_csv(std::ostream& out, const PanelDataset& data) {
  data.validate();
  auto entity = [&](Index i) { return data.entities.empty() ? std::to_string(i + 1) : data.entities[i]; };
  auto period = [&](Index t) { return data.periods.empty() ? static_cast<long long>(t + 1) : data.periods[t]; };
  out << "entity,period,subperiod,variable,value\n";
  for (Index i = 0; i < data.N(); ++i)
    for (Index t = 0; t < data.T(); ++t) {
      out << entity(i) << ',' << period(t) << ",1,y," << detail::format_double(data.y(i, t)) << '\n';
      for (const auto& c : data.covariates)
        for (int j = 0; j < c.m; ++j)
          out << entity(i) << ',' << period(t) << ',' << j + 1 << ',' << c.name << ','
              << detail::format_double(c.lags[i](t, j)) << '\n';
    }
}

// ---------------------------------------------------------------------------
// JSON artifacts. Each artifact struct is what gets written; reading it back
// reproduces the struct exactly (doubles are written in shortest round-trip
// form).

struct CoefficientEntry {
  std::string name;
  std::string group;
  double value = 0.0;
  friend bool operator==(const CoefficientEntry&, const CoefficientEntry&) = default;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(CoefficientEntry, name, group, value)

struct GroupEntry {
  std::string label;
  std::vector<std::string> columns;
  friend bool operator==(const GroupEntry&, const GroupEntry&) = default;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(GroupEntry, label, columns)

struct Diagnostics {
  bool converged = false;
  int iterations = 0;
  double objective = 0.0;
  double kkt_residual = 0.0;
  friend bool operator==(const Diagnostics&, const Diagnostics&) = default;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Diagnostics, converged, iterations, objective, kkt_residual)

struct ResidualSummary {
  long long n = 0;
  double rss = 0.0;
  double mse = 0.0;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  friend bool operator==(const ResidualSummary&, const ResidualSummary&) = default;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ResidualSummary, n, rss, mse, mean, min, max)

struct FitArtifact {
  int schema_version = kSchemaVersion;
  std::string estimator;
  std::string intercept_mode;
  double lambda = 0.0;
  double gamma = 0.0;
  double penalty = 0.0;  ///< Omega at the solution on the solver scale
  std::vector<double> intercepts;
  std::vector<CoefficientEntry> coefficients;  ///< original scale
  std::vector<GroupEntry> groups;
  Diagnostics diagnostics;
  ResidualSummary residuals;
  friend bool operator==(const FitArtifact&, const FitArtifact&) = default;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(FitArtifact, schema_version, estimator, intercept_mode, lambda, gamma, penalty,
                                   intercepts, coefficients, groups, diagnostics, residuals)

inline const char* intercept_mode_name(InterceptMode m) {
  switch (m) {
    case InterceptMode::kPooled: return "pooled";
    case InterceptMode::kFixedEffects: return "fixed-effects";
    case InterceptMode::kNone: return "none";
  }
  return "none";
}

inline FitArtifact make_fit_artifact(const DesignProblem& problem, const SgLassoFit& fit, const std::string& estimator) {
  FitArtifact a;
  a.estimator = estimator;
  a.intercept_mode = intercept_mode_name(fit.mode);
  a.lambda = fit.lambda;
  a.gamma = fit.gamma;
  a.intercepts.assign(fit.intercepts.data(), fit.intercepts.data() + fit.intercepts.size());
  std::vector<std::string> owner(static_cast<std::size_t>(problem.p()));
  for (std::size_t g = 0; g < problem.groups.sets.size(); ++g)
    for (Index j : problem.groups.sets[g]) owner[j] = problem.groups.labels[g];
  auto name = [&](Index j) {
    return j < static_cast<Index>(problem.column_names.size()) ? problem.column_names[j] : "x" + std::to_string(j);
  };
  for (Index j = 0; j < problem.p(); ++j) a.coefficients.push_back({name(j), owner[j], fit.slopes(j)});
  for (std::size_t g = 0; g < problem.groups.sets.size(); ++g) {
    GroupEntry e{problem.groups.labels[g], {}};
    for (Index j : problem.groups.sets[g]) e.columns.push_back(name(j));
    a.groups.push_back(std::move(e));
  }
  PenaltyConfig slope_layout;
  slope_layout.gamma = fit.gamma;
  slope_layout.groups = problem.groups;
  slope_layout.penalized.assign(static_cast<std::size_t>(problem.p()), true);
  a.penalty = penalty_value(fit.slopes_standardized, slope_layout);
  a.diagnostics = {fit.diagnostics.converged, fit.diagnostics.iterations, fit.diagnostics.objective,
                   fit.diagnostics.kkt_residual};
  const auto& u = fit.residuals;
  a.residuals.n = u.size();
  if (u.size() > 0) {
    a.residuals.rss = u.squaredNorm();
    a.residuals.mse = a.residuals.rss / static_cast<double>(u.size());
    a.residuals.mean = u.mean();
    a.residuals.min = u.minCoeff();
    a.residuals.max = u.maxCoeff();
  }
  return a;
}

struct CvCellEntry {
  double lambda = 0.0;
  double gamma = 0.0;
  double mse = 0.0;
  std::vector<double> fold_mse;
  friend bool operator==(const CvCellEntry&, const CvCellEntry&) = default;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(CvCellEntry, lambda, gamma, mse, fold_mse)

struct CvArtifact {
  int schema_version = kSchemaVersion;
  std::string estimator;
  int n_folds = 0;
  double best_lambda = 0.0;
  double best_gamma = 0.0;
  double best_mse = 0.0;
  int nonconverged = 0;
  std::vector<CvCellEntry> table;
  friend bool operator==(const CvArtifact&, const CvArtifact&) = default;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(CvArtifact, schema_version, estimator, n_folds, best_lambda, best_gamma, best_mse,
                                   nonconverged, table)

inline CvArtifact make_cv_artifact(const CvResult& r, const std::string& estimator, int n_folds) {
  CvArtifact a;
  a.estimator = estimator;
  a.n_folds = n_folds;
  a.best_lambda = r.best_lambda;
  a.best_gamma = r.best_gamma;
  a.best_mse = r.best_mse;
  a.nonconverged = r.nonconverged;
  for (const auto& c : r.table) a.table.push_back({c.lambda, c.gamma, c.mse, c.fold_mse});
  return a;
}

struct TestCell {
  std::string covariate;
  std::string kernel;
  double bandwidth = 0.0;
  std::string status;  ///< "ok" or "singular"
  double statistic = 0.0;
  int df = 0;
  double p_value = 0.0;
  std::vector<double> estimate;
  std::vector<double> debiased;
  std::vector<std::vector<double>> covariance;
  std::vector<std::string> warnings;
  friend bool operator==(const TestCell&, const TestCell&) = default;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TestCell, covariate, kernel, bandwidth, status, statistic, df, p_value, estimate,
                                   debiased, covariance, warnings)

struct TestArtifact {
  int schema_version = kSchemaVersion;
  std::string estimator;
  double lambda = 0.0;
  double gamma = 0.0;
  bool converged = true;  ///< main fit and every nodewise regression
  std::vector<TestCell> cells;
  friend bool operator==(const TestArtifact&, const TestArtifact&) = default;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TestArtifact, schema_version, estimator, lambda, gamma, converged, cells)

inline TestCell make_test_cell(const InferenceReport& r) {
  TestCell c;
  c.covariate = r.group;
  c.kernel = kernel_name(r.kernel);
  c.bandwidth = r.bandwidth;
  c.status = "ok";
  c.statistic = r.wald.statistic;
  c.df = r.wald.df;
  c.p_value = r.wald.p_value;
  c.estimate.assign(r.estimate.data(), r.estimate.data() + r.estimate.size());
  c.debiased.assign(r.debiased.data(), r.debiased.data() + r.debiased.size());
  for (Index i = 0; i < r.covariance.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(r.covariance.cols()));
    for (Index j = 0; j < r.covariance.cols(); ++j) row[j] = r.covariance(i, j);
    c.covariance.push_back(std::move(row));
  }
  c.warnings = r.warnings;
  return c;
}

/// p-values with covariates as rows and kernel x bandwidth as columns.
inline std::string test_table(const TestArtifact& a) {
  std::vector<std::pair<std::string, double>> cols;
  std::vector<std::string> rows;
  for (const auto& c : a.cells) {
    const std::pair<std::string, double> key{c.kernel, c.bandwidth};
    if (std::find(cols.begin(), cols.end(), key) == cols.end()) cols.push_back(key);
    if (std::find(rows.begin(), rows.end(), c.covariate) == rows.end()) rows.push_back(c.covariate);
  }
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-16s", "covariate");
  os << buf;
  for (const auto& [k, bw] : cols) {
    std::snprintf(buf, sizeof buf, " %7s", (k + "/" + detail::format_double(bw)).c_str());
    os << buf;
  }
  os << "\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-16s", r.c_str());
    os << buf;
    for (const auto& key : cols) {
      for (const auto& c : a.cells)
        if (c.covariate == r && c.kernel == key.first && c.bandwidth == key.second) {
          if (c.status == "ok") std::snprintf(buf, sizeof buf, " %7.3f", c.p_value);
          else std::snprintf(buf, sizeof buf, " %7s", "sing.");
          os << buf;
        }
    }
    os << "\n";
  }
  return os.str();
}

template <class Artifact>
std::string to_json_text(const Artifact& a) {
  return json(a).dump(2) + "\n";
}

template <class Artifact>
Artifact from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("invalid JSON: ") + e.what());
  }
  try {
    if (j.at("schema_version").get<int>() != kSchemaVersion)
      throw InputError("unsupported schema_version " + j.at("schema_version").dump());
    return j.get<Artifact>();
  } catch (const json::exception& e) {
    throw InputError(std::string("artifact schema: ") + e.what());
  }
}

}  // namespace sglpanel::io
