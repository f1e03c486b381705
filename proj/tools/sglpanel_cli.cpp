// sglpanel command-line entry point: fit, cv, test, simulate.
//
// Exit codes: 0 success, 1 input/config error, 2 numerical non-convergence.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sglpanel/sglpanel.hpp"

namespace {

using namespace sglpanel;
namespace cfgns = sglpanel::config;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitNumerical = 2;

struct Options {
  std::string input;
  std::string output;
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> estimator;
  std::optional<double> lambda;
  std::optional<double> gamma;
  std::vector<std::string> kernels;
  std::vector<double> bandwidths;
};

cfgns::RunConfig load_config(const Options& o) {
  auto tree = cfgns::defaults();
  if (!o.config_path.empty()) cfgns::merge(tree, cfgns::load_file(o.config_path));
  for (const auto& s : o.sets) cfgns::apply_set(tree, s);
  if (o.seed) tree["seed"] = *o.seed;
  if (o.threads) tree["threads"] = *o.threads;
  if (o.estimator) tree["model"]["estimator"] = *o.estimator;
  if (o.lambda) tree["model"]["lambda"] = *o.lambda;
  if (o.gamma) tree["model"]["gamma"] = *o.gamma;
  if (!o.kernels.empty()) tree["test"]["kernels"] = o.kernels;
  if (!o.bandwidths.empty()) tree["test"]["bandwidths"] = o.bandwidths;
  return cfgns::parse(tree);
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << text;
  if (!out) throw InputError("write to '" + path + "' failed");
}

struct Prepared {
  PanelDataset data;
  DesignProblem problem;
  bool umidas = false;
};

Prepared prepare(const cfgns::RunConfig& c, const std::string& input) {
  if (input.empty()) throw InputError("--input is required");
  Prepared p;
  p.data = io::read_panel_csv_file(input, c.horizon, c.response_lags);
  if (c.estimator == "lasso-umidas") {
    p.umidas = true;
    if (c.gamma && *c.gamma != 1.0) throw InputError("lasso-umidas fixes gamma = 1");
    p.problem = build_umidas_design(p.data, InterceptMode::kPooled);
  } else {
    p.problem = build_midas_design(p.data, c.dictionary_size,
                                   c.estimator == "fe-sgl" ? InterceptMode::kFixedEffects : InterceptMode::kPooled);
  }
  return p;
}

CvConfig cv_for(const cfgns::RunConfig& c, const Prepared& p) {
  CvConfig cv = c.cv;
  if (p.umidas) cv.gammas = {1.0};
  else if (c.gamma) cv.gammas = {*c.gamma};
  return cv;
}

/// (lambda, gamma): the override when given, otherwise the CV minimizer.
std::pair<double, double> tune(const cfgns::RunConfig& c, const Prepared& p) {
  if (c.lambda) return {*c.lambda, p.umidas ? 1.0 : c.gamma.value_or(0.5)};
  const CvResult r = cross_validate(p.problem, cv_for(c, p), c.solver, c.fit_options);
  return {r.best_lambda, r.best_gamma};
}

int cmd_fit(const Options& o) {
  const auto c = load_config(o);
  const auto p = prepare(c, o.input);
  const auto [lambda, gamma] = tune(c, p);
  const SgLassoFit f = fit(p.problem, lambda, gamma, c.solver, c.fit_options);
  emit(o.output, io::to_json_text(io::make_fit_artifact(p.problem, f, c.estimator)));
  if (!f.diagnostics.converged) {
    std::cerr << "warning: solver did not converge (kkt residual " << f.diagnostics.kkt_residual << ")\n";
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_cv(const Options& o) {
  const auto c = load_config(o);
  const auto p = prepare(c, o.input);
  const CvResult r = cross_validate(p.problem, cv_for(c, p), c.solver, c.fit_options);
  emit(o.output, io::to_json_text(io::make_cv_artifact(r, c.estimator, c.cv.n_folds)));
  if (r.nonconverged > 0) {
    std::cerr << "warning: " << r.nonconverged << " CV solves did not converge\n";
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_test(const Options& o) {
  const auto c = load_config(o);
  if (c.estimator == "fe-sgl") throw InputError("test: debiased inference is available for pooled estimators only");
  const auto p = prepare(c, o.input);
  const auto [lambda, gamma] = tune(c, p);
  const SgLassoFit f = fit(p.problem, lambda, gamma, c.solver, c.fit_options);

  std::vector<std::string> targets = c.test_covariates;
  if (targets.empty())
    for (const auto& cov : p.data.covariates) targets.push_back(cov.name);
  std::vector<int> blocks;
  for (const auto& name : targets) {
    const int b = p.problem.blocks.find(name);
    if (b < 0) throw InputError("test: unknown covariate '" + name + "'");
    blocks.push_back(b);
  }

  NodewiseLambdaRule rule = c.nodewise;
  rule.cv.threads = c.threads;
  io::TestArtifact art;
  art.estimator = c.estimator;
  art.lambda = lambda;
  art.gamma = gamma;
  art.converged = f.diagnostics.converged;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const GrangerTest g(p.problem, f, p.problem.blocks.sets[blocks[t]], targets[t], rule, c.solver);
    if (g.precision().nonconverged > 0) art.converged = false;
    for (Kernel k : c.kernels)
      for (double bw : c.bandwidths) {
        try {
          art.cells.push_back(io::make_test_cell(g.test(HacConfig{k, bw})));
        } catch (const SingularCovariance& e) {
          io::TestCell cell;
          cell.covariate = targets[t];
          cell.kernel = kernel_name(k);
          cell.bandwidth = bw;
          cell.status = "singular";
          cell.df = static_cast<int>(p.problem.blocks.sets[blocks[t]].size());
          cell.p_value = 1.0;
          cell.warnings.push_back(e.what());
          art.cells.push_back(std::move(cell));
        }
      }
  }
  emit(o.output, io::to_json_text(art));
  if (!o.output.empty() && o.output != "-") std::cout << io::test_table(art);
  if (!art.converged) {
    std::cerr << "warning: a solver run did not converge\n";
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_simulate(const Options& o) {
  if (!o.seed) throw InputError("simulate: --seed is required");
  const auto c = load_config(o);
  const ExperimentResult r = run_experiment(c.grid);
  emit(o.output, experiment_csv(r));
  if (!o.output.empty() && o.output != "-") {
    const std::string table = experiment_table(r, c.grid);
    emit(o.output + ".txt", table);
    std::cout << table;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-group LASSO MIDAS panel regression and debiased Granger tests"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--output,-o", o.output, "Output path (default: stdout)");
    sub->add_option("--config,-c", o.config_path, "JSON configuration file");
    sub->add_option("--set", o.sets, "Override a config key: key.path=value (repeatable)");
    sub->add_option("--seed", o.seed, "Random seed");
    sub->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
  };
  auto model = [&](CLI::App* sub) {
    sub->add_option("--input,-i", o.input, "Long-format panel CSV")->required();
    sub->add_option("--estimator", o.estimator, "pooled-sgl | fe-sgl | lasso-umidas")
        ->check(CLI::IsMember({"pooled-sgl", "fe-sgl", "lasso-umidas"}));
    sub->add_option("--lambda", o.lambda, "Fixed penalty level (skips CV)")->check(CLI::NonNegativeNumber);
    sub->add_option("--gamma", o.gamma, "Fixed sparse-group mixing weight")->check(CLI::Range(0.0, 1.0));
  };

  auto* fit_cmd = app.add_subcommand("fit", "Fit an estimator (CV-tuned unless --lambda is given)");
  common(fit_cmd);
  model(fit_cmd);
  auto* cv_cmd = app.add_subcommand("cv", "Time-blocked cross-validation table");
  common(cv_cmd);
  model(cv_cmd);
  auto* test_cmd = app.add_subcommand("test", "Debiased HAC Granger-causality tests per covariate");
  common(test_cmd);
  model(test_cmd);
  test_cmd->add_option("--kernel", o.kernels, "parzen | qs (repeatable)")->check(CLI::IsMember({"parzen", "qs"}));
  test_cmd->add_option("--bandwidth", o.bandwidths, "HAC bandwidth M_T (repeatable)")->check(CLI::PositiveNumber);
  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo rejection frequencies");
  common(sim_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*fit_cmd) return cmd_fit(o);
    if (*cv_cmd) return cmd_cv(o);
    if (*test_cmd) return cmd_test(o);
    if (*sim_cmd) return cmd_simulate(o);
  } catch (const NearSingularDesign& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const SingularCovariance& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
