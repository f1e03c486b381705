#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sglpanel/estimators.hpp"
#include "sglpanel/inference.hpp"
#include "sglpanel/simulate.hpp"

namespace sglpanel::config {

using nlohmann::json;

/// The complete configuration tree with defaults. A user file may only
/// contain keys that appear here; `null` leaves are optional numbers.
inline json defaults() {
  return json::parse(R"({
  "seed": null,
  "threads": 1,
  "data": {"horizon": 0, "response_lags": 1, "dictionary_size": 4},
  "model": {
    "estimator": "pooled-sgl",
    "standardize": true,
    "penalize_intercept": false,
    "lambda": null,
    "gamma": null
  },
  "cv": {"n_folds": 10, "n_lambda": 20, "lambda_ratio": 0.01, "gammas": [0, 0.25, 0.5, 0.75, 1]},
  "solver": {"max_iterations": 10000, "tolerance": 1e-8, "kkt_tolerance": 1e-6, "initial_step": 0, "shrink": 0.5, "acceleration": true},
  "test": {
    "covariates": [],
    "kernels": ["parzen", "qs"],
    "bandwidths": [10, 20, 30],
    "nodewise_lambda": null,
    "level": 0.05
  },
  "simulate": {
    "replications": 500,
    "estimators": ["sg-LASSO-MIDAS", "LASSO-UMIDAS"],
    "poolings": ["pooled", "individual"],
    "kernels": ["parzen", "qs"],
    "bandwidths": [10, 20, 30],
    "scales": ["0", "1/5", "1/4", "1/3"],
    "level": 0.05,
    "dgp": {
      "N": 30, "T": 50, "K": 21, "m": 12,
      "rho_y": 0.15, "rho_x": 0.7, "sigma2_u": 4,
      "intercept_range": [-4, 4],
      "common_intercept": false,
      "relevant_covariate": 1,
      "beta_shape": [3, 3],
      "beta_grid": "endpoints",
      "hf_burnin": 200,
      "y_burnin": 50
    }
  }
})");
}

namespace detail {

inline void merge_checked(json& base, const json& overlay, const std::string& path) {
  if (!overlay.is_object()) throw InputError("config: '" + (path.empty() ? "<root>" : path) + "' must be an object");
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw InputError("config: unknown key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_checked(slot, it.value(), key);
    } else {
      if (it.value().is_object()) throw InputError("config: '" + key + "' is not a section");
      slot = it.value();
    }
  }
}

/// "1/3" or a plain number.
inline double real(const json& v, const std::string& key) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    const auto slash = s.find('/');
    try {
      std::size_t used = 0;
      if (slash == std::string::npos) {
        const double x = std::stod(s, &used);
        if (used == s.size()) return x;
      } else {
        const double a = std::stod(s.substr(0, slash), &used);
        if (used == slash) {
          const std::string den = s.substr(slash + 1);
          const double b = std::stod(den, &used);
          if (used == den.size() && b != 0.0) return a / b;
        }
      }
    } catch (const std::exception&) {
    }
  }
  throw InputError("config: '" + key + "' must be a number or a fraction like \"1/3\"");
}

inline std::vector<double> reals(const json& v, const std::string& key) {
  if (!v.is_array()) throw InputError("config: '" + key + "' must be a list");
  std::vector<double> out;
  for (const auto& x : v) out.push_back(real(x, key));
  return out;
}

template <class T>
T get(const json& tree, const std::string& dotted) {
  const json* node = &tree;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) node = &node->at(part);
  try {
    return node->get<T>();
  } catch (const json::exception&) {
    throw InputError("config: '" + dotted + "' has the wrong type (" + node->dump() + ")");
  }
}

inline const json& at(const json& tree, const std::string& dotted) {
  const json* node = &tree;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) node = &node->at(part);
  return *node;
}

}  // namespace detail

/// Merges a user document into the defaults, rejecting unknown keys.
inline void merge(json& tree, const json& overlay) { detail::merge_checked(tree, overlay, ""); }

inline json load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError("config '" + path + "': " + e.what());
  }
}

/// Applies `a.b.c=value`. The value is read as JSON when it parses (numbers,
/// booleans, lists, null) and as a plain string otherwise.
inline void apply_set(json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw InputError("--set expects key.path=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  auto scalar = [](const std::string& s) {
    try {
      return json::parse(s);
    } catch (const json::parse_error&) {
      return json(s);
    }
  };
  json value = scalar(text);
  // [a,b] without inner quotes (as left behind by the shell): element-wise
  if (value.is_string() && text.size() >= 2 && text.front() == '[' && text.back() == ']') {
    value = json::array();
    std::stringstream items(text.substr(1, text.size() - 2));
    for (std::string item; std::getline(items, item, ',');) {
      const auto b = item.find_first_not_of(' '), e = item.find_last_not_of(' ');
      if (b != std::string::npos) value.push_back(scalar(item.substr(b, e - b + 1)));
    }
  }
  json overlay = value;
  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) overlay = json{{*it, overlay}};
  merge(tree, overlay);
}

/// Typed view of a merged configuration tree.
struct RunConfig {
  json tree;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  int horizon = 0;
  int response_lags = 1;
  int dictionary_size = 4;
  std::string estimator = "pooled-sgl";
  FitOptions fit_options;
  std::optional<double> lambda;
  std::optional<double> gamma;
  CvConfig cv;
  SolverConfig solver;
  std::vector<std::string> test_covariates;
  std::vector<Kernel> kernels;
  std::vector<double> bandwidths;
  NodewiseLambdaRule nodewise;
  double level = 0.05;
  ExperimentGrid grid;
};

inline RunConfig parse(const json& tree) {
  using detail::get;
  RunConfig c;
  c.tree = tree;
  try {
    if (!tree.at("seed").is_null()) c.seed = get<std::uint64_t>(tree, "seed");
    c.threads = get<int>(tree, "threads");
    if (c.threads < 1) throw InputError("config: threads must be >= 1");
    c.horizon = get<int>(tree, "data.horizon");
    c.response_lags = get<int>(tree, "data.response_lags");
    c.dictionary_size = get<int>(tree, "data.dictionary_size");
    c.estimator = get<std::string>(tree, "model.estimator");
    if (c.estimator != "pooled-sgl" && c.estimator != "fe-sgl" && c.estimator != "lasso-umidas")
      throw InputError("config: model.estimator must be pooled-sgl, fe-sgl or lasso-umidas");
    c.fit_options.standardize = get<bool>(tree, "model.standardize");
    c.fit_options.penalize_intercept = get<bool>(tree, "model.penalize_intercept");
    if (!tree.at("model").at("lambda").is_null()) c.lambda = detail::real(tree["model"]["lambda"], "model.lambda");
    if (!tree.at("model").at("gamma").is_null()) c.gamma = detail::real(tree["model"]["gamma"], "model.gamma");

    c.cv.n_folds = get<int>(tree, "cv.n_folds");
    c.cv.n_lambda = get<int>(tree, "cv.n_lambda");
    c.cv.lambda_ratio = detail::real(detail::at(tree, "cv.lambda_ratio"), "cv.lambda_ratio");
    c.cv.gammas = detail::reals(detail::at(tree, "cv.gammas"), "cv.gammas");
    c.cv.threads = c.threads;

    c.solver.max_iterations = get<int>(tree, "solver.max_iterations");
    c.solver.tolerance = detail::real(detail::at(tree, "solver.tolerance"), "solver.tolerance");
    c.solver.kkt_target = detail::real(detail::at(tree, "solver.kkt_tolerance"), "solver.kkt_tolerance");
    c.solver.step.initial_step = detail::real(detail::at(tree, "solver.initial_step"), "solver.initial_step");
    c.solver.step.shrink = detail::real(detail::at(tree, "solver.shrink"), "solver.shrink");
    c.solver.acceleration = get<bool>(tree, "solver.acceleration");

    c.test_covariates = get<std::vector<std::string>>(tree, "test.covariates");
    for (const auto& k : get<std::vector<std::string>>(tree, "test.kernels")) c.kernels.push_back(parse_kernel(k));
    c.bandwidths = detail::reals(detail::at(tree, "test.bandwidths"), "test.bandwidths");
    c.level = detail::real(detail::at(tree, "test.level"), "test.level");
    const json& nl = detail::at(tree, "test.nodewise_lambda");
    if (!nl.is_null()) {
      c.nodewise.kind = NodewiseLambdaRule::Kind::kFixed;
      c.nodewise.lambda = detail::real(nl, "test.nodewise_lambda");
    }
    c.nodewise.cv = c.cv;

    auto& g = c.grid;
    g.replications = get<int>(tree, "simulate.replications");
    g.estimators.clear();
    for (const auto& s : get<std::vector<std::string>>(tree, "simulate.estimators")) g.estimators.push_back(parse_estimator(s));
    g.poolings.clear();
    for (const auto& s : get<std::vector<std::string>>(tree, "simulate.poolings")) g.poolings.push_back(parse_pooling(s));
    g.kernels.clear();
    for (const auto& s : get<std::vector<std::string>>(tree, "simulate.kernels")) g.kernels.push_back(parse_kernel(s));
    g.bandwidths = detail::reals(detail::at(tree, "simulate.bandwidths"), "simulate.bandwidths");
    g.scales = detail::reals(detail::at(tree, "simulate.scales"), "simulate.scales");
    g.level = detail::real(detail::at(tree, "simulate.level"), "simulate.level");
    g.threads = c.threads;
    g.dictionary_size = c.dictionary_size;
    g.cv = c.cv;
    g.cv.threads = 1;
    g.nodewise = c.nodewise;
    g.solver = c.solver;
    if (c.seed) g.base_seed = *c.seed;
    auto& d = g.dgp;
    d.N = get<int>(tree, "simulate.dgp.N");
    d.T = get<int>(tree, "simulate.dgp.T");
    d.K = get<int>(tree, "simulate.dgp.K");
    d.m = get<int>(tree, "simulate.dgp.m");
    d.rho_y = detail::real(detail::at(tree, "simulate.dgp.rho_y"), "simulate.dgp.rho_y");
    d.rho_x = detail::real(detail::at(tree, "simulate.dgp.rho_x"), "simulate.dgp.rho_x");
    d.sigma2_u = detail::real(detail::at(tree, "simulate.dgp.sigma2_u"), "simulate.dgp.sigma2_u");
    const auto range = detail::reals(detail::at(tree, "simulate.dgp.intercept_range"), "simulate.dgp.intercept_range");
    if (range.size() != 2) throw InputError("config: simulate.dgp.intercept_range must have two entries");
    d.intercept_low = range[0];
    d.intercept_high = range[1];
    d.common_intercept = get<bool>(tree, "simulate.dgp.common_intercept");
    d.relevant_covariate = get<int>(tree, "simulate.dgp.relevant_covariate") - 1;
    const auto shape = detail::reals(detail::at(tree, "simulate.dgp.beta_shape"), "simulate.dgp.beta_shape");
    if (shape.size() != 2) throw InputError("config: simulate.dgp.beta_shape must have two entries");
    d.beta_p1 = shape[0];
    d.beta_p2 = shape[1];
    const auto grid_name = get<std::string>(tree, "simulate.dgp.beta_grid");
    if (grid_name == "endpoints") d.beta_grid = BetaGrid::kEndpoints;
    else if (grid_name == "left-aligned") d.beta_grid = BetaGrid::kLeftAligned;
    else throw InputError("config: simulate.dgp.beta_grid must be 'endpoints' or 'left-aligned'");
    d.hf_burnin = get<int>(tree, "simulate.dgp.hf_burnin");
    d.y_burnin = get<int>(tree, "simulate.dgp.y_burnin");
    d.response_lags = c.response_lags;

    c.cv.validate();
    c.solver.validate();
  } catch (const InvalidArgument& e) {
    throw InputError(std::string("config: ") + e.what());
  } catch (const json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  return c;
}

}  // namespace sglpanel::config
