#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sglpanel/dictionary.hpp"
#include "sglpanel/errors.hpp"

namespace sglpanel {

using Index = Eigen::Index;

/// One high-frequency covariate: for every entity a T x m matrix whose row t
/// holds the m most recent high-frequency observations at low-frequency
/// period t, most recent first.
struct Covariate {
  std::string name;
  int m = 1;
  std::vector<Eigen::MatrixXd> lags;
};

/// Balanced panel of a low-frequency response and high-frequency covariates.
///
/// `y` stores the raw response series (N x T). The forecasting horizon and
/// the number of autoregressive response lags are alignment metadata: the
/// design builders pair covariates observed at period t with y(t + horizon)
/// and append y(t + horizon - l) for l = 1..response_lags, dropping periods
/// where any of these fall outside the sample.
struct PanelDataset {
  std::vector<std::string> entities;
  std::vector<long long> periods;  ///< optional period labels, ascending
  Eigen::MatrixXd y;
  std::vector<Covariate> covariates;
  int horizon = 0;
  int response_lags = 0;

  Index N() const { return y.rows(); }
  Index T() const { return y.cols(); }
  Index first_period() const { return std::max(0, response_lags - horizon); }
  Index effective_T() const { return T() - horizon - first_period(); }

  void validate() const {
    if (N() < 1 || T() < 1) throw InvalidArgument("panel: empty response");
    if (horizon < 0 || response_lags < 0) throw InvalidArgument("panel: negative horizon or lag count");
    if (effective_T() < 1) throw InvalidArgument("panel: no periods left after horizon/lag alignment");
    if (!entities.empty() && static_cast<Index>(entities.size()) != N())
      throw DimensionMismatch("panel: entity labels do not match N");
    if (!periods.empty() && static_cast<Index>(periods.size()) != T())
      throw DimensionMismatch("panel: period labels do not match T");
    if (!y.allFinite()) throw InputError("panel: response contains non-finite values");
    for (const auto& c : covariates) {
      if (c.m < 1) throw InvalidArgument("panel: covariate '" + c.name + "' has m < 1");
      if (static_cast<Index>(c.lags.size()) != N())
        throw DimensionMismatch("panel: covariate '" + c.name + "' entity count differs from N");
      for (const auto& block : c.lags) {
        if (block.rows() != T() || block.cols() != c.m)
          throw DimensionMismatch("panel: covariate '" + c.name + "' has wrong T x m shape");
        if (!block.allFinite()) throw InputError("panel: covariate '" + c.name + "' contains non-finite values");
      }
    }
  }
};

/// Partition of column indices into labelled, nonempty, disjoint groups.
struct GroupStructure {
  std::vector<std::vector<Index>> sets;
  std::vector<std::string> labels;

  std::size_t size() const { return sets.size(); }

  Index cover_size() const {
    Index n = 0;
    for (const auto& s : sets) n += static_cast<Index>(s.size());
    return n;
  }

  /// Throws unless the groups partition exactly {0, ..., p-1}.
  void validate(Index p) const {
    if (!labels.empty() && labels.size() != sets.size())
      throw InvalidArgument("groups: label count differs from group count");
    std::vector<char> seen(static_cast<std::size_t>(p), 0);
    for (const auto& s : sets) {
      if (s.empty()) throw InvalidArgument("groups: empty group");
      for (Index j : s) {
        if (j < 0 || j >= p) throw InvalidArgument("groups: index out of range");
        if (seen[j]) throw InvalidArgument("groups: overlapping groups");
        seen[j] = 1;
      }
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end())
      throw InvalidArgument("groups: partition does not cover every column");
  }

  static GroupStructure singletons(Index p) {
    GroupStructure g;
    for (Index j = 0; j < p; ++j) {
      g.sets.push_back({j});
      g.labels.push_back(std::to_string(j));
    }
    return g;
  }

  static GroupStructure contiguous(const std::vector<Index>& sizes) {
    GroupStructure g;
    Index start = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      std::vector<Index> s(static_cast<std::size_t>(sizes[k]));
      std::iota(s.begin(), s.end(), start);
      start += sizes[k];
      g.sets.push_back(std::move(s));
      g.labels.push_back(std::to_string(k));
    }
    return g;
  }

  /// Index of the group labelled `label`, or -1.
  int find(const std::string& label) const {
    for (std::size_t k = 0; k < labels.size(); ++k)
      if (labels[k] == label) return static_cast<int>(k);
    return -1;
  }
};

enum class InterceptMode { kNone, kPooled, kFixedEffects };

/// Stacked regression problem. Rows are entity-major: entity i occupies rows
/// i*T .. i*T + T - 1 in period order.
struct DesignProblem {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  GroupStructure groups;  ///< penalty groups over the columns of X
  GroupStructure blocks;  ///< one block per source covariate, for testing
  std::vector<std::string> column_names;
  InterceptMode intercept_mode = InterceptMode::kPooled;
  Index N = 1;
  Index T = 0;
  Eigen::VectorXd column_scales;  ///< X_std = X / scale; ones when unstandardized
  bool standardized = false;

  Index n() const { return X.rows(); }
  Index p() const { return X.cols(); }

  void validate() const {
    if (N < 1 || T < 1 || N * T != X.rows() || y.size() != X.rows())
      throw DimensionMismatch("design: row count must equal N*T");
    if (column_scales.size() != X.cols()) throw DimensionMismatch("design: column_scales length differs from p");
    groups.validate(X.cols());
  }
};

namespace detail {

inline DesignProblem empty_design(const PanelDataset& data, Index p, InterceptMode mode) {
  DesignProblem d;
  d.N = data.N();
  d.T = data.effective_T();
  d.intercept_mode = mode;
  d.y.resize(d.N * d.T);
  d.X.resize(d.N * d.T, p);
  d.column_scales = Eigen::VectorXd::Ones(p);
  const Index t0 = data.first_period();
  for (Index i = 0; i < d.N; ++i)
    for (Index r = 0; r < d.T; ++r) d.y(i * d.T + r) = data.y(i, t0 + r + data.horizon);
  return d;
}

inline void append_response_lags(const PanelDataset& data, DesignProblem& d, Index col) {
  const Index t0 = data.first_period();
  for (int l = 1; l <= data.response_lags; ++l, ++col) {
    const std::string name = "y_lag" + std::to_string(l);
    for (Index i = 0; i < d.N; ++i)
      for (Index r = 0; r < d.T; ++r) d.X(i * d.T + r, col) = data.y(i, t0 + r + data.horizon - l);
    d.column_names.push_back(name);
    d.groups.sets.push_back({col});
    d.groups.labels.push_back(name);
    d.blocks.sets.push_back({col});
    d.blocks.labels.push_back(name);
  }
}

}  // namespace detail

/// MIDAS design: covariate k enters through X_{i,k} W_k, one penalty group per
/// covariate, followed by one singleton group per response lag.
inline DesignProblem build_midas_design(const PanelDataset& data,
                                        const std::vector<MidasDictionary>& dicts,
                                        InterceptMode mode = InterceptMode::kPooled) {
  data.validate();
  if (dicts.size() != data.covariates.size())
    throw DimensionMismatch("build_midas_design: need one dictionary per covariate");
  Index p = data.response_lags;
  for (std::size_t k = 0; k < dicts.size(); ++k) {
    const auto& c = data.covariates[k];
    if (dicts[k].m != c.m || dicts[k].W.rows() != c.m)
      throw DimensionMismatch("build_midas_design: dictionary m differs from covariate '" + c.name + "'");
    if (dicts[k].L > c.m) throw InvalidArgument("build_midas_design: L exceeds m for '" + c.name + "'");
    p += dicts[k].L;
  }
  DesignProblem d = detail::empty_design(data, p, mode);
  const Index t0 = data.first_period();
  Index col = 0;
  for (std::size_t k = 0; k < dicts.size(); ++k) {
    const auto& c = data.covariates[k];
    const Index L = dicts[k].L;
    for (Index i = 0; i < d.N; ++i)
      d.X.block(i * d.T, col, d.T, L).noalias() = c.lags[i].middleRows(t0, d.T) * dicts[k].W;
    std::vector<Index> members;
    for (Index l = 0; l < L; ++l) {
      members.push_back(col + l);
      d.column_names.push_back(c.name + "[" + std::to_string(l) + "]");
    }
    d.groups.sets.push_back(members);
    d.groups.labels.push_back(c.name);
    d.blocks.sets.push_back(members);
    d.blocks.labels.push_back(c.name);
    col += L;
  }
  detail::append_response_lags(data, d, col);
  return d;
}

/// Convenience overload: the same L-column Legendre dictionary for every
/// covariate, capped at m_k for low-frequency covariates.
inline DesignProblem build_midas_design(const PanelDataset& data, int L,
                                        InterceptMode mode = InterceptMode::kPooled) {
  std::vector<MidasDictionary> dicts;
  for (const auto& c : data.covariates) dicts.push_back(build_dictionary(c.m, std::min(L, c.m)));
  return build_midas_design(data, dicts, mode);
}

/// Unrestricted MIDAS design: every lag is its own column, scaled by 1/m_k,
/// with singleton penalty groups. Test blocks still collect each covariate.
inline DesignProblem build_umidas_design(const PanelDataset& data,
                                         InterceptMode mode = InterceptMode::kPooled) {
  data.validate();
  Index p = data.response_lags;
  for (const auto& c : data.covariates) p += c.m;
  DesignProblem d = detail::empty_design(data, p, mode);
  const Index t0 = data.first_period();
  Index col = 0;
  for (const auto& c : data.covariates) {
    for (Index i = 0; i < d.N; ++i)
      d.X.block(i * d.T, col, d.T, c.m) = c.lags[i].middleRows(t0, d.T) / static_cast<double>(c.m);
    std::vector<Index> members;
    for (Index j = 0; j < c.m; ++j) {
      const std::string name = c.name + "[" + std::to_string(j) + "]";
      members.push_back(col + j);
      d.column_names.push_back(name);
      d.groups.sets.push_back({col + j});
      d.groups.labels.push_back(name);
    }
    d.blocks.sets.push_back(members);
    d.blocks.labels.push_back(c.name);
    col += c.m;
  }
  detail::append_response_lags(data, d, col);
  return d;
}

/// Divides each column by its empirical norm sqrt(mean(x^2)).
inline DesignProblem standardize(const DesignProblem& problem) {
  DesignProblem out = problem;
  const double n = static_cast<double>(problem.n());
  for (Index j = 0; j < problem.p(); ++j) {
    const double scale = std::sqrt(problem.X.col(j).squaredNorm() / n);
    if (!(scale > 0.0) || !std::isfinite(scale))
      throw DegenerateColumn(static_cast<std::size_t>(j),
                             j < static_cast<Index>(problem.column_names.size()) ? problem.column_names[j] : "");
    out.X.col(j) /= scale;
    out.column_scales(j) = problem.column_scales(j) * scale;
  }
  out.standardized = true;
  return out;
}

/// Subtracts entity time means from y and every column (the projection M_B).
/// Accepts fixed-effects problems and already-transformed (intercept-free)
/// ones, so the transform is idempotent.
inline DesignProblem within_transform(const DesignProblem& problem) {
  if (problem.intercept_mode == InterceptMode::kPooled)
    throw InvalidArgument("within_transform: pooled problems have no entity effects to remove");
  DesignProblem out = problem;
  const Index T = problem.T;
  for (Index i = 0; i < problem.N; ++i) {
    auto yi = out.y.segment(i * T, T);
    yi.array() -= yi.mean();
    auto Xi = out.X.middleRows(i * T, T);
    const Eigen::RowVectorXd means = Xi.colwise().mean();
    Xi.rowwise() -= means;
  }
  out.intercept_mode = InterceptMode::kNone;
  return out;
}

/// Rows of the given entities, in the order listed.
inline DesignProblem select_entities(const DesignProblem& problem, const std::vector<Index>& entities) {
  DesignProblem out = problem;
  const Index T = problem.T;
  out.N = static_cast<Index>(entities.size());
  out.y.resize(out.N * T);
  out.X.resize(out.N * T, problem.p());
  for (Index k = 0; k < out.N; ++k) {
    const Index i = entities[k];
    if (i < 0 || i >= problem.N) throw InvalidArgument("select_entities: entity out of range");
    out.y.segment(k * T, T) = problem.y.segment(i * T, T);
    out.X.middleRows(k * T, T) = problem.X.middleRows(i * T, T);
  }
  return out;
}

/// Entity-major stacking of an N x T matrix and its inverse.
inline Eigen::VectorXd stack(const Eigen::MatrixXd& panel) {
  const Eigen::MatrixXd t = panel.transpose();
  return Eigen::Map<const Eigen::VectorXd>(t.data(), t.size());
}

inline Eigen::MatrixXd unstack(const Eigen::VectorXd& v, Index N, Index T) {
  if (v.size() != N * T) throw DimensionMismatch("unstack: length differs from N*T");
  return Eigen::Map<const Eigen::MatrixXd>(v.data(), T, N).transpose();
}

}  // namespace sglpanel
