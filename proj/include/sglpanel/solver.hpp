#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sglpanel/design.hpp"
#include "sglpanel/errors.hpp"

namespace sglpanel {

/// Sparse-group penalty 2*lambda*(gamma*|b|_1 + (1-gamma)*sum_G |b_G|_2).
///
/// `groups` partitions exactly the penalized coefficients; coefficients with
/// `penalized[j] == false` belong to no group and are left free.
struct PenaltyConfig {
  double lambda = 0.0;
  double gamma = 1.0;
  GroupStructure groups;
  std::vector<bool> penalized;

  Index size() const { return static_cast<Index>(penalized.size()); }

  void validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("penalty: lambda must be finite and >= 0");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidArgument("penalty: gamma must lie in [0,1]");
    std::vector<char> seen(penalized.size(), 0);
    for (const auto& g : groups.sets) {
      if (g.empty()) throw InvalidArgument("penalty: empty group");
      for (Index j : g) {
        if (j < 0 || j >= size() || !penalized[j]) throw InvalidArgument("penalty: group member is not a penalized coefficient");
        if (seen[j]++) throw InvalidArgument("penalty: coefficient in more than one group");
      }
    }
    for (std::size_t j = 0; j < penalized.size(); ++j)
      if (penalized[j] && !seen[j]) throw InvalidArgument("penalty: penalized coefficient outside every group");
  }
};

struct StepRule {
  double initial_step = 0.0;  ///< 0 selects 1/L from a power-iteration estimate of L
  double shrink = 0.5;
};

struct SolverConfig {
  int max_iterations = 10000;
  double tolerance = 1e-8;  ///< relative objective change
  double kkt_target = 1e-6;  ///< lower it for high-accuracy solves
  StepRule step;
  bool acceleration = true;

  /// Bound on the KKT residual required for convergence; never above
  /// max(10 * tolerance, 1e-6) while kkt_target <= 1e-6.
  double kkt_tolerance() const { return std::max(10.0 * tolerance, kkt_target); }

  void validate() const {
    if (max_iterations < 1) throw InvalidArgument("solver: max_iterations must be >= 1");
    if (!(tolerance > 0.0)) throw InvalidArgument("solver: tolerance must be > 0");
    if (!(kkt_target > 0.0)) throw InvalidArgument("solver: kkt_target must be > 0");
    if (!(step.shrink > 0.0 && step.shrink < 1.0)) throw InvalidArgument("solver: shrink must lie in (0,1)");
  }
};

struct SolverResult {
  Eigen::VectorXd coefficients;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  double kkt_residual = 0.0;
};

/// Least-squares loss |y - Xb|^2 / n held through its sufficient statistics.
struct QuadraticModel {
  Eigen::MatrixXd gram;  ///< X'X
  Eigen::VectorXd xty;   ///< X'y
  double yty = 0.0;
  double n = 1.0;
  double max_eigenvalue = 0.0;  ///< estimate of the top eigenvalue of gram

  Index p() const { return gram.rows(); }

  double loss(const Eigen::VectorXd& b, const Eigen::VectorXd& gram_b) const {
    return (yty - 2.0 * xty.dot(b) + b.dot(gram_b)) / n;
  }

  /// Power iteration from a fixed start vector; deterministic.
  void estimate_max_eigenvalue(int iterations = 60) {
    if (p() == 0) {
      max_eigenvalue = 0.0;
      return;
    }
    Eigen::VectorXd v = Eigen::VectorXd::Ones(p()) / std::sqrt(static_cast<double>(p()));
    double est = 0.0;
    for (int k = 0; k < iterations; ++k) {
      Eigen::VectorXd w = gram * v;
      const double norm = w.norm();
      if (norm == 0.0) break;
      est = v.dot(w);
      v = w / norm;
    }
    max_eigenvalue = std::max(est, gram.diagonal().maxCoeff());
  }

  static QuadraticModel from_data(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    if (X.rows() != y.size()) throw DimensionMismatch("quadratic model: X rows differ from y length");
    QuadraticModel m;
    m.gram = Eigen::MatrixXd::Zero(X.cols(), X.cols());
    m.gram.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose());
    m.gram.triangularView<Eigen::StrictlyUpper>() = m.gram.transpose();
    m.xty = X.transpose() * y;
    m.yty = y.squaredNorm();
    m.n = static_cast<double>(X.rows());
    m.estimate_max_eigenvalue();
    return m;
  }
};

/// gamma*|b|_1 + (1-gamma)*sum_G |b_G|_2 over the penalized coefficients.
inline double penalty_value(const Eigen::VectorXd& b, const PenaltyConfig& cfg) {
  if (b.size() != cfg.size()) throw DimensionMismatch("penalty_value: coefficient length differs from penalty layout");
  double l1 = 0.0;
  double l21 = 0.0;
  for (const auto& g : cfg.groups.sets) {
    double sq = 0.0;
    for (Index j : g) {
      l1 += std::abs(b(j));
      sq += b(j) * b(j);
    }
    l21 += std::sqrt(sq);
  }
  return cfg.gamma * l1 + (1.0 - cfg.gamma) * l21;
}

namespace detail {

inline double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

inline void prox_in_place(Eigen::VectorXd& v, double eta_lambda, double gamma, const GroupStructure& groups) {
  const double l1_t = gamma * eta_lambda;
  const double l2_t = (1.0 - gamma) * eta_lambda;
  for (const auto& g : groups.sets) {
    double sq = 0.0;
    for (Index j : g) {
      v(j) = soft_threshold(v(j), l1_t);
      sq += v(j) * v(j);
    }
    const double norm = std::sqrt(sq);
    const double factor = norm > l2_t ? 1.0 - l2_t / norm : 0.0;
    for (Index j : g) v(j) *= factor;
  }
}

/// gram * b exploiting sparsity of b.
inline void gram_times(const Eigen::MatrixXd& gram, const Eigen::VectorXd& b, Eigen::VectorXd& out) {
  const Index p = b.size();
  Index nnz = 0;
  for (Index j = 0; j < p; ++j) nnz += b(j) != 0.0;
  if (2 * nnz > p) {
    out.noalias() = gram * b;
    return;
  }
  out.setZero(p);
  for (Index j = 0; j < p; ++j)
    if (b(j) != 0.0) out.noalias() += b(j) * gram.col(j);
}

/// Largest per-coefficient violation of 0 in grad + 2*lambda*dOmega(b).
inline double kkt_residual(const Eigen::VectorXd& b, const Eigen::VectorXd& grad, const PenaltyConfig& cfg) {
  double worst = 0.0;
  for (Index j = 0; j < cfg.size(); ++j)
    if (!cfg.penalized[j]) worst = std::max(worst, std::abs(grad(j)));
  const double t1 = 2.0 * cfg.lambda * cfg.gamma;
  const double t2 = 2.0 * cfg.lambda * (1.0 - cfg.gamma);
  for (const auto& g : cfg.groups.sets) {
    double bnorm = 0.0;
    for (Index j : g) bnorm += b(j) * b(j);
    bnorm = std::sqrt(bnorm);
    if (bnorm == 0.0) {
      double sq = 0.0;
      for (Index j : g) {
        const double s = soft_threshold(grad(j), t1);
        sq += s * s;
      }
      worst = std::max(worst, std::sqrt(sq) - t2);
      continue;
    }
    for (Index j : g) {
      if (b(j) != 0.0) {
        const double sign = b(j) > 0.0 ? 1.0 : -1.0;
        worst = std::max(worst, std::abs(grad(j) + t1 * sign + t2 * b(j) / bnorm));
      } else {
        worst = std::max(worst, std::abs(grad(j)) - t1);
      }
    }
  }
  return std::max(worst, 0.0);
}

inline std::vector<Index> free_indices(const PenaltyConfig& cfg) {
  std::vector<Index> f;
  for (Index j = 0; j < cfg.size(); ++j)
    if (!cfg.penalized[j]) f.push_back(j);
  return f;
}

/// Minimiser over the free coefficients with every penalized one at zero.
inline Eigen::VectorXd null_fit(const QuadraticModel& model, const std::vector<Index>& free) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(model.p());
  if (free.empty()) return b;
  const Index k = static_cast<Index>(free.size());
  Eigen::MatrixXd A(k, k);
  Eigen::VectorXd c(k);
  for (Index a = 0; a < k; ++a) {
    c(a) = model.xty(free[a]);
    for (Index r = 0; r < k; ++r) A(a, r) = model.gram(free[a], free[r]);
  }
  const Eigen::VectorXd sol = A.ldlt().solve(c);
  for (Index a = 0; a < k; ++a) b(free[a]) = sol(a);
  return b;
}

}  // namespace detail

/// Proximal map of eta_lambda * (gamma*|.|_1 + (1-gamma)*sum_G |._G|_2):
/// elementwise soft-thresholding at gamma*eta_lambda followed by groupwise
/// shrinkage of the thresholded block at (1-gamma)*eta_lambda. Coordinates
/// outside every group pass through unchanged.
inline Eigen::VectorXd prox_sg(const Eigen::VectorXd& v, double eta_lambda, double gamma,
                               const GroupStructure& groups) {
  if (eta_lambda < 0.0) throw InvalidArgument("prox_sg: eta_lambda must be >= 0");
  Eigen::VectorXd out = v;
  detail::prox_in_place(out, eta_lambda, gamma, groups);
  return out;
}

/// Smallest lambda for which every penalized coefficient is zero at the
/// optimum, for the given gamma. Per group, the threshold solves
/// |S(u, lambda*gamma)|_2 = lambda*(1-gamma) with u = |grad_G|/2 at the null
/// fit; it is bracketed by min(|u|_2, |u|_inf/gamma) and refined by bisection.
inline double lambda_max(const QuadraticModel& model, const PenaltyConfig& layout) {
  const auto free = detail::free_indices(layout);
  const Eigen::VectorXd b0 = detail::null_fit(model, free);
  const Eigen::VectorXd grad = 2.0 * (model.gram * b0 - model.xty) / model.n;
  const double gamma = layout.gamma;
  double result = 0.0;
  for (const auto& g : layout.groups.sets) {
    Eigen::VectorXd u(static_cast<Index>(g.size()));
    for (std::size_t k = 0; k < g.size(); ++k) u(static_cast<Index>(k)) = std::abs(grad(g[k])) / 2.0;
    const double l2 = u.norm();
    const double linf = u.maxCoeff();
    double hi = l2;
    if (gamma > 0.0) hi = std::min(hi, linf / gamma);
    if (gamma == 1.0 || gamma == 0.0 || hi == 0.0) {
      result = std::max(result, hi);
      continue;
    }
    auto feasible = [&](double lam) {
      double sq = 0.0;
      for (Index k = 0; k < u.size(); ++k) {
        const double s = std::max(u(k) - lam * gamma, 0.0);
        sq += s * s;
      }
      return std::sqrt(sq) <= lam * (1.0 - gamma);
    };
    double lo = 0.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (feasible(mid) ? hi : lo) = mid;
    }
    result = std::max(result, hi);
  }
  return result;
}

/// Proximal gradient descent on |y - Xb|^2/n + 2*lambda*Omega(b).
///
/// Free coefficients are internally rescaled to unit Gram diagonal. The step
/// starts at 1/L (L from a power-iteration estimate) and is halved whenever the
/// quadratic majorisation test fails. With acceleration, FISTA momentum is
/// reset whenever the objective increases. Iteration stops once the relative
/// objective change is below `tolerance` and the KKT residual is below
/// `kkt_tolerance()`. The Gram product uses a fixed column order, so results
/// are bit-reproducible.
inline SolverResult solve(const QuadraticModel& model, const PenaltyConfig& penalty, const SolverConfig& cfg,
                          const std::optional<Eigen::VectorXd>& warm_start = std::nullopt) {
  penalty.validate();
  cfg.validate();
  const Index p = model.p();
  if (penalty.size() != p) throw DimensionMismatch("solve: penalty layout length differs from coefficient count");
  SolverResult res;
  if (p == 0) {
    res.coefficients = Eigen::VectorXd();
    res.objective = model.yty / model.n;
    res.converged = true;
    return res;
  }

  // Diagonal rescaling of free coefficients: b = D * b_scaled.
  Eigen::VectorXd d = Eigen::VectorXd::Ones(p);
  const auto free = detail::free_indices(penalty);
  for (Index j : free) {
    const double gjj = model.gram(j, j) / model.n;
    if (gjj > 0.0) d(j) = 1.0 / std::sqrt(gjj);
  }
  const bool rescale = !free.empty();
  QuadraticModel scaled_storage;
  if (rescale) {
    scaled_storage.gram = d.asDiagonal() * model.gram * d.asDiagonal();
    scaled_storage.xty = d.cwiseProduct(model.xty);
    scaled_storage.yty = model.yty;
    scaled_storage.n = model.n;
    scaled_storage.estimate_max_eigenvalue();
  }
  const QuadraticModel& m = rescale ? scaled_storage : model;

  const double lambda = penalty.lambda;
  const double gamma = penalty.gamma;
  auto objective = [&](const Eigen::VectorXd& b, double loss) {
    return loss + 2.0 * lambda * penalty_value(b, penalty);
  };

  Eigen::VectorXd b;
  if (warm_start) {
    if (warm_start->size() != p) throw DimensionMismatch("solve: warm start length differs from coefficient count");
    b = warm_start->cwiseQuotient(d);
  } else {
    b = detail::null_fit(m, free);
  }
  Eigen::VectorXd gb(p);
  detail::gram_times(m.gram, b, gb);
  double loss = m.loss(b, gb);
  double obj = objective(b, loss);

  double eta = cfg.step.initial_step > 0.0 ? cfg.step.initial_step
                                           : (m.max_eigenvalue > 0.0 ? m.n / (2.0 * 1.02 * m.max_eigenvalue) : 1.0);
  const double kkt_tol = cfg.kkt_tolerance();

  Eigen::VectorXd yv = b, gy = gb, b_new(p), gb_new(p), grad(p), diff(p);
  double t = 1.0;
  double kkt = std::numeric_limits<double>::infinity();
  int it = 0;
  for (; it < cfg.max_iterations; ++it) {
    grad.noalias() = (2.0 / m.n) * (gy - m.xty);
    const double loss_y = m.loss(yv, gy);
    double loss_new = 0.0;
    for (int bt = 0; bt < 60; ++bt) {
      b_new = yv - eta * grad;
      detail::prox_in_place(b_new, 2.0 * eta * lambda, gamma, penalty.groups);
      diff = b_new - yv;
      detail::gram_times(m.gram, b_new, gb_new);
      loss_new = m.loss(b_new, gb_new);
      const double bound = loss_y + grad.dot(diff) + diff.squaredNorm() / (2.0 * eta);
      if (loss_new <= bound + 1e-13 * std::max(1.0, std::abs(loss_y))) break;
      eta *= cfg.step.shrink;
    }
    const double obj_new = objective(b_new, loss_new);
    if (cfg.acceleration) {
      if (obj_new > obj) {
        t = 1.0;
        yv = b_new;
        gy = gb_new;
      } else {
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        const double beta = (t - 1.0) / t_next;
        yv = b_new + beta * (b_new - b);
        gy = gb_new + beta * (gb_new - gb);
        t = t_next;
      }
    } else {
      yv = b_new;
      gy = gb_new;
    }
    const double rel = std::abs(obj - obj_new) / std::max(1.0, std::abs(obj_new));
    b.swap(b_new);
    gb.swap(gb_new);
    obj = obj_new;
    grad.noalias() = (2.0 / m.n) * (gb - m.xty);
    if (rel < cfg.tolerance) {
      kkt = detail::kkt_residual(b, grad.cwiseQuotient(d), penalty);
      if (kkt <= kkt_tol) {
        ++it;
        res.converged = true;
        break;
      }
    }
  }

  res.coefficients = b.cwiseProduct(d);
  Eigen::VectorXd g_orig(p);
  detail::gram_times(model.gram, res.coefficients, g_orig);
  res.objective = objective(res.coefficients, model.loss(res.coefficients, g_orig));
  if (!free.empty()) {
    // Re-solve the free block exactly given the penalized coefficients.
    const Index f = static_cast<Index>(free.size());
    Eigen::MatrixXd gff(f, f);
    Eigen::VectorXd rhs(f);
    for (Index a = 0; a < f; ++a) {
      rhs(a) = model.xty(free[a]) - g_orig(free[a]);
      for (Index c = 0; c < f; ++c) {
        gff(a, c) = model.gram(free[a], free[c]);
        rhs(a) += gff(a, c) * res.coefficients(free[c]);
      }
    }
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(gff);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.vectorD().minCoeff() > 0.0) {
      Eigen::VectorXd cand = res.coefficients;
      const Eigen::VectorXd bf = ldlt.solve(rhs);
      for (Index a = 0; a < f; ++a) cand(free[a]) = bf(a);
      Eigen::VectorXd g_cand(p);
      detail::gram_times(model.gram, cand, g_cand);
      const double obj_cand = objective(cand, model.loss(cand, g_cand));
      if (obj_cand <= res.objective) {
        res.coefficients = cand;
        res.objective = obj_cand;
        g_orig = g_cand;
      }
    }
  }
  g_orig = (2.0 / model.n) * (g_orig - model.xty);
  res.kkt_residual = detail::kkt_residual(res.coefficients, g_orig, penalty);
  res.iterations = it;
  return res;
}

/// Coefficient layout of `solve(DesignProblem, ...)`: intercept columns first
/// (one pooled intercept or N fixed effects), then the slopes of X.
inline Index intercept_count(const DesignProblem& problem) {
  switch (problem.intercept_mode) {
    case InterceptMode::kPooled: return 1;
    case InterceptMode::kFixedEffects: return problem.N;
    case InterceptMode::kNone: return 0;
  }
  return 0;
}

/// Penalty over [intercepts, slopes] with the problem's slope groups. The
/// pooled intercept is free unless `penalize_intercept`, in which case it is
/// its own singleton group. Fixed effects are never penalized.
inline PenaltyConfig make_penalty(const DesignProblem& problem, double lambda, double gamma,
                                  bool penalize_intercept = false) {
  const Index k = intercept_count(problem);
  PenaltyConfig cfg;
  cfg.lambda = lambda;
  cfg.gamma = gamma;
  cfg.penalized.assign(static_cast<std::size_t>(k + problem.p()), true);
  for (Index j = 0; j < k; ++j) cfg.penalized[j] = false;
  if (penalize_intercept && problem.intercept_mode == InterceptMode::kPooled) {
    cfg.penalized[0] = true;
    cfg.groups.sets.push_back({0});
    cfg.groups.labels.push_back("(intercept)");
  }
  for (std::size_t g = 0; g < problem.groups.sets.size(); ++g) {
    std::vector<Index> shifted;
    for (Index j : problem.groups.sets[g]) shifted.push_back(j + k);
    cfg.groups.sets.push_back(std::move(shifted));
    cfg.groups.labels.push_back(g < problem.groups.labels.size() ? problem.groups.labels[g] : std::to_string(g));
  }
  return cfg;
}

/// The full design [intercept columns, X].
inline Eigen::MatrixXd full_design(const DesignProblem& problem) {
  const Index k = intercept_count(problem);
  Eigen::MatrixXd Z(problem.n(), k + problem.p());
  if (problem.intercept_mode == InterceptMode::kPooled) {
    Z.col(0).setOnes();
  } else if (problem.intercept_mode == InterceptMode::kFixedEffects) {
    Z.leftCols(k).setZero();
    for (Index i = 0; i < problem.N; ++i) Z.block(i * problem.T, i, problem.T, 1).setOnes();
  }
  Z.rightCols(problem.p()) = problem.X;
  return Z;
}

/// Solves the stacked problem jointly over intercepts and slopes. The
/// reported objective is recomputed from the data at the solution.
inline SolverResult solve(const DesignProblem& problem, const PenaltyConfig& penalty, const SolverConfig& cfg,
                          const std::optional<Eigen::VectorXd>& warm_start = std::nullopt) {
  problem.validate();
  const Eigen::MatrixXd Z = full_design(problem);
  const QuadraticModel model = QuadraticModel::from_data(Z, problem.y);
  SolverResult res = solve(model, penalty, cfg, warm_start);
  const Eigen::VectorXd resid = problem.y - Z * res.coefficients;
  res.objective = resid.squaredNorm() / model.n + 2.0 * penalty.lambda * penalty_value(res.coefficients, penalty);
  return res;
}

/// Geometric grid lambda_max * ratio^(k/(n-1)), k = 0..n-1, strictly decreasing.
inline std::vector<double> lambda_grid(double lambda_max_value, int n_lambda, double ratio) {
  if (n_lambda < 1) throw InvalidArgument("lambda_grid: n_lambda must be >= 1");
  if (!(ratio > 0.0 && ratio < 1.0)) throw InvalidArgument("lambda_grid: ratio must lie in (0,1)");
  std::vector<double> grid(static_cast<std::size_t>(n_lambda));
  for (int k = 0; k < n_lambda; ++k)
    grid[k] = n_lambda == 1 ? lambda_max_value : lambda_max_value * std::pow(ratio, static_cast<double>(k) / (n_lambda - 1));
  return grid;
}

/// Warm-started fits along the descending grid from lambda_max. The lambda of
/// `penalty_template` is ignored.
inline std::vector<std::pair<double, SolverResult>> lambda_path(const QuadraticModel& model,
                                                                const PenaltyConfig& penalty_template, int n_lambda,
                                                                double ratio, const SolverConfig& cfg = {}) {
  PenaltyConfig penalty = penalty_template;
  penalty.lambda = 0.0;
  penalty.validate();
  const auto grid = lambda_grid(lambda_max(model, penalty), n_lambda, ratio);
  std::vector<std::pair<double, SolverResult>> path;
  std::optional<Eigen::VectorXd> warm;
  for (double lam : grid) {
    penalty.lambda = lam;
    SolverResult r = solve(model, penalty, cfg, warm);
    warm = r.coefficients;
    path.emplace_back(lam, std::move(r));
  }
  return path;
}

inline std::vector<std::pair<double, SolverResult>> lambda_path(const DesignProblem& problem,
                                                                const PenaltyConfig& penalty_template, int n_lambda,
                                                                double ratio, const SolverConfig& cfg = {}) {
  problem.validate();
  const QuadraticModel model = QuadraticModel::from_data(full_design(problem), problem.y);
  return lambda_path(model, penalty_template, n_lambda, ratio, cfg);
}

}  // namespace sglpanel
