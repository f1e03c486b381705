#pragma once

#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "sglpanel/design.hpp"
#include "sglpanel/moments.hpp"
#include "sglpanel/parallel.hpp"
#include "sglpanel/solver.hpp"

namespace sglpanel {

struct FitOptions {
  bool standardize = true;
  /// Penalize the pooled intercept as its own singleton group instead of
  /// leaving it free.
  bool penalize_intercept = false;
};

/// A fitted pooled, fixed-effects or intercept-free sg-LASSO regression.
struct SgLassoFit {
  InterceptMode mode = InterceptMode::kPooled;
  Eigen::VectorXd intercepts;           ///< 1 pooled, N fixed effects, 0 otherwise
  Eigen::VectorXd slopes;               ///< on the scale of the input design
  Eigen::VectorXd slopes_standardized;  ///< on the solver scale
  Eigen::VectorXd column_scales;        ///< slopes = slopes_standardized / column_scales
  double lambda = 0.0;
  double gamma = 1.0;
  PenaltyConfig penalty;  ///< layout handed to the solver
  Eigen::VectorXd residuals;
  SolverResult diagnostics;
};

namespace detail {

inline PenaltyConfig slope_penalty(const DesignProblem& problem, double lambda, double gamma) {
  PenaltyConfig cfg;
  cfg.lambda = lambda;
  cfg.gamma = gamma;
  cfg.groups = problem.groups;
  cfg.penalized.assign(static_cast<std::size_t>(problem.p()), true);
  return cfg;
}

/// Fits slopes on the intercept-profiled data (pooled centring or within
/// transform) and recovers the intercepts from the normal equations.
inline SgLassoFit fit_profiled(const DesignProblem& problem, double lambda, double gamma, const SolverConfig& cfg,
                               const FitOptions& opts, const std::optional<Eigen::VectorXd>& warm) {
  problem.validate();
  const Eigen::VectorXd scales = opts.standardize ? Eigen::VectorXd(standardize(problem).column_scales.cwiseQuotient(problem.column_scales))
                                                  : Eigen::VectorXd(Eigen::VectorXd::Ones(problem.p()));
  const Eigen::MatrixXd Xs = problem.X * scales.cwiseInverse().asDiagonal();
  Eigen::MatrixXd Xr = Xs;
  Eigen::VectorXd yr = problem.y;
  const Index T = problem.T;
  Eigen::MatrixXd entity_mean_x(problem.N, problem.p());
  Eigen::VectorXd entity_mean_y(problem.N);
  if (problem.intercept_mode == InterceptMode::kPooled) {
    const Eigen::RowVectorXd mx = Xs.colwise().mean();
    Xr.rowwise() -= mx;
    yr.array() -= problem.y.mean();
  } else if (problem.intercept_mode == InterceptMode::kFixedEffects) {
    for (Index i = 0; i < problem.N; ++i) {
      entity_mean_x.row(i) = Xs.middleRows(i * T, T).colwise().mean();
      entity_mean_y(i) = problem.y.segment(i * T, T).mean();
      Xr.middleRows(i * T, T).rowwise() -= entity_mean_x.row(i);
      yr.segment(i * T, T).array() -= entity_mean_y(i);
    }
  }
  SgLassoFit fit;
  fit.mode = problem.intercept_mode;
  fit.lambda = lambda;
  fit.gamma = gamma;
  fit.penalty = slope_penalty(problem, lambda, gamma);
  const QuadraticModel model = QuadraticModel::from_data(Xr, yr);
  fit.diagnostics = solve(model, fit.penalty, cfg, warm);
  fit.slopes_standardized = fit.diagnostics.coefficients;
  fit.column_scales = scales.cwiseProduct(problem.column_scales);
  fit.slopes = fit.slopes_standardized.cwiseQuotient(fit.column_scales);
  const Eigen::VectorXd xb = Xs * fit.slopes_standardized;
  switch (problem.intercept_mode) {
    case InterceptMode::kPooled:
      fit.intercepts = Eigen::VectorXd::Constant(1, (problem.y - xb).mean());
      fit.residuals = problem.y - xb - Eigen::VectorXd::Constant(problem.n(), fit.intercepts(0));
      break;
    case InterceptMode::kFixedEffects:
      fit.intercepts.resize(problem.N);
      fit.residuals.resize(problem.n());
      for (Index i = 0; i < problem.N; ++i) {
        fit.intercepts(i) = (problem.y.segment(i * T, T) - xb.segment(i * T, T)).mean();
        fit.residuals.segment(i * T, T) =
            (problem.y.segment(i * T, T) - xb.segment(i * T, T)).array() - fit.intercepts(i);
      }
      break;
    case InterceptMode::kNone:
      fit.intercepts = Eigen::VectorXd();
      fit.residuals = problem.y - xb;
      break;
  }
  fit.diagnostics.objective = fit.residuals.squaredNorm() / static_cast<double>(problem.n()) +
                              2.0 * lambda * penalty_value(fit.slopes_standardized, fit.penalty);
  return fit;
}

/// Joint minimisation over [intercepts, slopes] with the generic solver.
inline SgLassoFit fit_joint(const DesignProblem& problem, double lambda, double gamma, const SolverConfig& cfg,
                            const FitOptions& opts) {
  const DesignProblem prob = opts.standardize ? standardize(problem) : problem;
  SgLassoFit fit;
  fit.mode = problem.intercept_mode;
  fit.lambda = lambda;
  fit.gamma = gamma;
  fit.penalty = make_penalty(prob, lambda, gamma, opts.penalize_intercept);
  fit.diagnostics = solve(prob, fit.penalty, cfg);
  const Index k = intercept_count(prob);
  fit.intercepts = fit.diagnostics.coefficients.head(k);
  fit.slopes_standardized = fit.diagnostics.coefficients.tail(prob.p());
  fit.column_scales = prob.column_scales;
  fit.slopes = fit.slopes_standardized.cwiseQuotient(fit.column_scales);
  fit.residuals = prob.y - full_design(prob) * fit.diagnostics.coefficients;
  return fit;
}

}  // namespace detail

/// Pooled sg-LASSO with a single intercept. The intercept is profiled out
/// unless `opts.penalize_intercept`, in which case the joint problem with the
/// intercept as a penalized singleton group is solved.
inline SgLassoFit fit_pooled(const DesignProblem& problem, double lambda, double gamma, const SolverConfig& cfg = {},
                             const FitOptions& opts = {},
                             const std::optional<Eigen::VectorXd>& warm = std::nullopt) {
  if (problem.intercept_mode != InterceptMode::kPooled) throw InvalidArgument("fit_pooled: problem is not pooled");
  if (opts.penalize_intercept) return detail::fit_joint(problem, lambda, gamma, cfg, opts);
  return detail::fit_profiled(problem, lambda, gamma, cfg, opts, warm);
}

/// Fixed-effects sg-LASSO: slopes from the within-transformed problem,
/// fixed effects a_i = mean_t(y_it - x_it'b).
inline SgLassoFit fit_fixed_effects(const DesignProblem& problem, double lambda, double gamma,
                                    const SolverConfig& cfg = {}, const FitOptions& opts = {},
                                    const std::optional<Eigen::VectorXd>& warm = std::nullopt) {
  if (problem.intercept_mode != InterceptMode::kFixedEffects)
    throw InvalidArgument("fit_fixed_effects: problem is not in fixed-effects mode");
  FitOptions o = opts;
  o.penalize_intercept = false;
  return detail::fit_profiled(problem, lambda, gamma, cfg, o, warm);
}

/// Fixed-effects sg-LASSO solved jointly over (a, b) with the N fixed effects
/// as free coefficients. Same minimiser as fit_fixed_effects.
inline SgLassoFit fit_fixed_effects_joint(const DesignProblem& problem, double lambda, double gamma,
                                          const SolverConfig& cfg = {}, const FitOptions& opts = {}) {
  if (problem.intercept_mode != InterceptMode::kFixedEffects)
    throw InvalidArgument("fit_fixed_effects_joint: problem is not in fixed-effects mode");
  FitOptions o = opts;
  o.penalize_intercept = false;
  return detail::fit_joint(problem, lambda, gamma, cfg, o);
}

/// Dispatches on the problem's intercept mode.
inline SgLassoFit fit(const DesignProblem& problem, double lambda, double gamma, const SolverConfig& cfg = {},
                      const FitOptions& opts = {}) {
  if (problem.intercept_mode == InterceptMode::kFixedEffects) return fit_fixed_effects(problem, lambda, gamma, cfg, opts);
  if (problem.intercept_mode == InterceptMode::kPooled) return fit_pooled(problem, lambda, gamma, cfg, opts);
  return detail::fit_profiled(problem, lambda, gamma, cfg, opts, std::nullopt);
}

/// LASSO on the unrestricted MIDAS design (gamma = 1, singleton groups).
inline SgLassoFit fit_lasso_umidas(const PanelDataset& data, double lambda, const SolverConfig& cfg = {},
                                   const FitOptions& opts = {}) {
  return fit_pooled(build_umidas_design(data, InterceptMode::kPooled), lambda, 1.0, cfg, opts);
}

// ---------------------------------------------------------------------------
// Time-blocked cross-validation

struct CvConfig {
  int n_folds = 10;
  int n_lambda = 20;
  double lambda_ratio = 1e-2;
  std::vector<double> gammas{0.0, 0.25, 0.5, 0.75, 1.0};
  int threads = 1;

  void validate() const {
    if (n_folds < 2) throw InvalidArgument("cv: n_folds must be >= 2");
    if (gammas.empty()) throw InvalidArgument("cv: empty gamma grid");
    for (double g : gammas)
      if (!(g >= 0.0 && g <= 1.0)) throw InvalidArgument("cv: gamma outside [0,1]");
    lambda_grid(1.0, n_lambda, lambda_ratio);
  }
};

struct CvCell {
  double lambda = 0.0;
  double gamma = 0.0;
  double mse = 0.0;
  std::vector<double> fold_mse;
};

struct CvResult {
  double best_lambda = 0.0;
  double best_gamma = 0.0;
  double best_mse = 0.0;
  std::vector<CvCell> table;
  int nonconverged = 0;  ///< solver runs that hit max_iterations
};

/// Adjacent period blocks [begin, end) covering 0..T-1.
inline std::vector<std::pair<Index, Index>> time_folds(Index T, int n_folds) {
  if (n_folds < 2) throw InvalidArgument("time_folds: n_folds must be >= 2");
  if (T < n_folds) throw InvalidArgument("time_folds: fold too small (T < n_folds)");
  std::vector<std::pair<Index, Index>> folds;
  for (int k = 0; k < n_folds; ++k) folds.emplace_back(k * T / n_folds, (k + 1) * T / n_folds);
  return folds;
}

/// Cross-validation on moment statistics. `folds` holds the held-out block
/// moments; training moments are their complement. Predictors are
/// standardized per training fold when `standardize`; the lambda grid is
/// shared across folds and derived from the full-sample lambda_max per gamma.
/// Ties in mean MSE go to the larger lambda, then the larger gamma.
inline CvResult cross_validate_moments(const std::vector<MomentStats>& folds, const RegressionView& view,
                                       InterceptMode mode, const GroupStructure& groups, bool standardize,
                                       const CvConfig& cv, const SolverConfig& cfg) {
  cv.validate();
  MomentStats total = folds.front();
  for (std::size_t k = 1; k < folds.size(); ++k) {
    total.n += folds[k].n;
    total.cross += folds[k].cross;
    total.sum += folds[k].sum;
    total.n_entity += folds[k].n_entity;
    total.sum_entity += folds[k].sum_entity;
  }
  const Index p = static_cast<Index>(view.predictors.size());
  PenaltyConfig layout;
  layout.groups = groups;
  layout.penalized.assign(static_cast<std::size_t>(p), true);

  const Eigen::VectorXd full_scales = standardize ? predictor_norms(total, view) : Eigen::VectorXd::Ones(p);
  const ReducedRegression full = reduce(total, view, mode, full_scales);
  std::vector<std::vector<double>> grids;
  for (double g : cv.gammas) {
    layout.gamma = g;
    grids.push_back(lambda_grid(lambda_max(full.model, layout), cv.n_lambda, cv.lambda_ratio));
  }

  const std::size_t n_folds = folds.size();
  const std::size_t n_gamma = cv.gammas.size();
  std::vector<std::vector<double>> mse(n_gamma * n_folds);
  std::vector<int> failures(n_gamma * n_folds, 0);
  parallel_for(n_gamma * n_folds, cv.threads, [&](std::size_t task) {
    const std::size_t gi = task / n_folds;
    const std::size_t k = task % n_folds;
    const MomentStats train = total - folds[k];
    const Eigen::VectorXd scales = standardize ? predictor_norms(train, view) : Eigen::VectorXd::Ones(p);
    const ReducedRegression red = reduce(train, view, mode, scales);
    PenaltyConfig pen = layout;
    pen.gamma = cv.gammas[gi];
    std::optional<Eigen::VectorXd> warm;
    auto& out = mse[task];
    for (double lam : grids[gi]) {
      pen.lambda = lam;
      SolverResult r = solve(red.model, pen, cfg, warm);
      failures[task] += !r.converged;
      const Eigen::VectorXd slopes = r.coefficients.cwiseQuotient(scales);
      const Eigen::VectorXd a = red.intercepts(mode, slopes);
      out.push_back(residual_sum_of_squares(folds[k], view, mode, slopes, a) / folds[k].n);
      warm = std::move(r.coefficients);
    }
  });

  CvResult res;
  res.best_mse = std::numeric_limits<double>::infinity();
  for (std::size_t gi = 0; gi < n_gamma; ++gi) {
    for (std::size_t li = 0; li < grids[gi].size(); ++li) {
      CvCell cell;
      cell.lambda = grids[gi][li];
      cell.gamma = cv.gammas[gi];
      double sum = 0.0;
      for (std::size_t k = 0; k < n_folds; ++k) {
        cell.fold_mse.push_back(mse[gi * n_folds + k][li]);
        sum += cell.fold_mse.back();
      }
      cell.mse = sum / static_cast<double>(n_folds);
      const bool better = cell.mse < res.best_mse ||
                          (cell.mse == res.best_mse &&
                           (cell.lambda > res.best_lambda || (cell.lambda == res.best_lambda && cell.gamma > res.best_gamma)));
      if (better) {
        res.best_mse = cell.mse;
        res.best_lambda = cell.lambda;
        res.best_gamma = cell.gamma;
      }
      res.table.push_back(std::move(cell));
    }
  }
  for (int f : failures) res.nonconverged += f;
  return res;
}

/// Per-fold moments of A over the adjacent period blocks of every entity.
inline std::vector<MomentStats> fold_moments(const Eigen::MatrixXd& A, Index N, Index T, int n_folds) {
  std::vector<MomentStats> out;
  for (const auto& [b, e] : time_folds(T, n_folds)) out.push_back(MomentStats::of_periods(A, N, T, b, e));
  return out;
}

/// Time-blocked K-fold cross-validation of (lambda, gamma) for the problem's
/// estimator. Folds are the same period blocks for every entity; held-out
/// predictions use intercepts/fixed effects estimated on the training periods.
inline CvResult cross_validate(const DesignProblem& problem, const CvConfig& cv, const SolverConfig& cfg = {},
                               const FitOptions& opts = {}) {
  problem.validate();
  cv.validate();
  if (opts.penalize_intercept)
    throw InvalidArgument("cross_validate: a penalized intercept is not supported, use the free intercept");
  Eigen::MatrixXd A(problem.n(), problem.p() + 1);
  A.leftCols(problem.p()) = problem.X;
  A.col(problem.p()) = problem.y;
  RegressionView view;
  view.response = problem.p();
  for (Index j = 0; j < problem.p(); ++j) view.predictors.push_back(j);
  return cross_validate_moments(fold_moments(A, problem.N, problem.T, cv.n_folds), view, problem.intercept_mode,
                                problem.groups, opts.standardize, cv, cfg);
}

}  // namespace sglpanel
