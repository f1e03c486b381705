#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "sglpanel/design.hpp"
#include "sglpanel/solver.hpp"

namespace sglpanel {

/// Cross-product moments of a stacked matrix A (rows entity-major), pooled
/// and per entity. Moments of disjoint row sets add, so training-fold moments
/// are total minus held-out block.
struct MomentStats {
  double n = 0.0;
  Eigen::MatrixXd cross;       ///< A'A
  Eigen::VectorXd sum;         ///< column sums
  Eigen::VectorXd n_entity;    ///< rows per entity
  Eigen::MatrixXd sum_entity;  ///< q x N column sums per entity

  Index q() const { return cross.rows(); }
  Index N() const { return n_entity.size(); }

  /// Moments of the rows of entity i whose period lies in [t_begin, t_end).
  static MomentStats of_periods(const Eigen::MatrixXd& A, Index N, Index T, Index t_begin, Index t_end) {
    MomentStats s;
    const Index q = A.cols();
    const Index len = t_end - t_begin;
    s.n = static_cast<double>(N * len);
    s.cross = Eigen::MatrixXd::Zero(q, q);
    s.sum = Eigen::VectorXd::Zero(q);
    s.n_entity = Eigen::VectorXd::Constant(N, static_cast<double>(len));
    s.sum_entity = Eigen::MatrixXd::Zero(q, N);
    if (len <= 0) return s;
    for (Index i = 0; i < N; ++i) {
      const auto block = A.middleRows(i * T + t_begin, len);
      s.cross.selfadjointView<Eigen::Lower>().rankUpdate(block.transpose());
      s.sum_entity.col(i) = block.colwise().sum().transpose();
    }
    s.cross.triangularView<Eigen::StrictlyUpper>() = s.cross.transpose();
    s.sum = s.sum_entity.rowwise().sum();
    return s;
  }

  MomentStats operator-(const MomentStats& o) const {
    MomentStats s;
    s.n = n - o.n;
    s.cross = cross - o.cross;
    s.sum = sum - o.sum;
    s.n_entity = n_entity - o.n_entity;
    s.sum_entity = sum_entity - o.sum_entity;
    return s;
  }
};

/// Which column of A is the response and which are predictors.
struct RegressionView {
  Index response = 0;
  std::vector<Index> predictors;
};

/// Regression quantities derived from moments: the loss of the problem with
/// intercepts profiled out (centred pooled or within-entity), on the scale
/// X / scales.
struct ReducedRegression {
  QuadraticModel model;
  Eigen::VectorXd scales;
  Eigen::VectorXd mean_x;     ///< pooled predictor means (pooled mode)
  double mean_y = 0.0;
  Eigen::MatrixXd mean_x_entity;  ///< p x N (fixed-effects mode)
  Eigen::VectorXd mean_y_entity;

  /// Intercepts implied by slopes on the original scale.
  Eigen::VectorXd intercepts(InterceptMode mode, const Eigen::VectorXd& slopes) const {
    switch (mode) {
      case InterceptMode::kPooled: return Eigen::VectorXd::Constant(1, mean_y - mean_x.dot(slopes));
      case InterceptMode::kFixedEffects: return mean_y_entity - mean_x_entity.transpose() * slopes;
      case InterceptMode::kNone: break;
    }
    return Eigen::VectorXd();
  }
};

/// Empirical norms sqrt(mean(x_j^2)) of the predictors.
inline Eigen::VectorXd predictor_norms(const MomentStats& s, const RegressionView& v) {
  const Index p = static_cast<Index>(v.predictors.size());
  Eigen::VectorXd out(p);
  for (Index a = 0; a < p; ++a) {
    const Index j = v.predictors[a];
    out(a) = std::sqrt(std::max(s.cross(j, j), 0.0) / s.n);
    if (!(out(a) > 0.0)) throw DegenerateColumn(static_cast<std::size_t>(a), "");
  }
  return out;
}

inline ReducedRegression reduce(const MomentStats& s, const RegressionView& v, InterceptMode mode,
                                const Eigen::VectorXd& scales) {
  const Index p = static_cast<Index>(v.predictors.size());
  const Index r = v.response;
  ReducedRegression out;
  out.scales = scales;
  QuadraticModel& m = out.model;
  m.n = s.n;
  m.gram.resize(p, p);
  m.xty.resize(p);
  for (Index a = 0; a < p; ++a) {
    m.xty(a) = s.cross(v.predictors[a], r);
    for (Index b = 0; b < p; ++b) m.gram(a, b) = s.cross(v.predictors[a], v.predictors[b]);
  }
  m.yty = s.cross(r, r);
  auto gather = [&](const Eigen::VectorXd& col) {
    Eigen::VectorXd x(p);
    for (Index a = 0; a < p; ++a) x(a) = col(v.predictors[a]);
    return x;
  };
  if (mode == InterceptMode::kPooled) {
    const Eigen::VectorXd sx = gather(s.sum);
    const double sy = s.sum(r);
    out.mean_x = sx / s.n;
    out.mean_y = sy / s.n;
    m.gram.noalias() -= sx * sx.transpose() / s.n;
    m.xty -= sx * (sy / s.n);
    m.yty -= sy * sy / s.n;
  } else if (mode == InterceptMode::kFixedEffects) {
    const Index N = s.N();
    out.mean_x_entity.resize(p, N);
    out.mean_y_entity.resize(N);
    for (Index i = 0; i < N; ++i) {
      const double ni = s.n_entity(i);
      const Eigen::VectorXd sx = gather(s.sum_entity.col(i));
      const double sy = s.sum_entity(r, i);
      out.mean_x_entity.col(i) = sx / ni;
      out.mean_y_entity(i) = sy / ni;
      m.gram.noalias() -= sx * sx.transpose() / ni;
      m.xty -= sx * (sy / ni);
      m.yty -= sy * sy / ni;
    }
  }
  const Eigen::VectorXd inv = scales.cwiseInverse();
  m.gram = inv.asDiagonal() * m.gram * inv.asDiagonal();
  m.xty = inv.cwiseProduct(m.xty);
  m.estimate_max_eigenvalue();
  return out;
}

/// Sum of squared residuals of y - a_i - x'slopes over the rows summarised by
/// `s`, with a_i the per-entity intercepts (one shared value when pooled).
inline double residual_sum_of_squares(const MomentStats& s, const RegressionView& v, InterceptMode mode,
                                      const Eigen::VectorXd& slopes, const Eigen::VectorXd& intercepts) {
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(s.q());
  coef(v.response) = 1.0;
  for (std::size_t a = 0; a < v.predictors.size(); ++a) coef(v.predictors[a]) -= slopes(static_cast<Index>(a));
  double rss = coef.dot(s.cross * coef);
  if (mode == InterceptMode::kPooled) {
    const double a = intercepts(0);
    rss += -2.0 * a * s.sum.dot(coef) + s.n * a * a;
  } else if (mode == InterceptMode::kFixedEffects) {
    for (Index i = 0; i < s.N(); ++i) {
      const double a = intercepts(i);
      rss += -2.0 * a * s.sum_entity.col(i).dot(coef) + s.n_entity(i) * a * a;
    }
  }
  return std::max(rss, 0.0);
}

}  // namespace sglpanel
