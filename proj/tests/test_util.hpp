#pragma once

#include <random>
#include <string>

#include <Eigen/Dense>

#include "sglpanel/design.hpp"

namespace testutil {

inline Eigen::MatrixXd randn(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd A(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) A(i, j) = z(rng);
  return A;
}

inline Eigen::VectorXd randn(Eigen::Index n, std::mt19937_64& rng) { return randn(n, 1, rng).col(0); }

/// Random balanced panel with covariates of the given frequencies.
inline sglpanel::PanelDataset random_panel(int N, int T, const std::vector<int>& ms, std::uint64_t seed,
                                           int response_lags = 0) {
  std::mt19937_64 rng(seed);
  sglpanel::PanelDataset d;
  d.y = randn(N, T, rng);
  d.response_lags = response_lags;
  for (int i = 0; i < N; ++i) d.entities.push_back("e" + std::to_string(i));
  for (std::size_t k = 0; k < ms.size(); ++k) {
    sglpanel::Covariate c;
    c.name = "x" + std::to_string(k + 1);
    c.m = ms[k];
    for (int i = 0; i < N; ++i) c.lags.push_back(randn(T, ms[k], rng));
    d.covariates.push_back(std::move(c));
  }
  return d;
}

/// Random pooled problem with contiguous groups of the given sizes.
inline sglpanel::DesignProblem random_problem(int N, int T, const std::vector<Eigen::Index>& sizes, std::uint64_t seed,
                                              sglpanel::InterceptMode mode = sglpanel::InterceptMode::kPooled) {
  std::mt19937_64 rng(seed);
  sglpanel::DesignProblem p;
  p.N = N;
  p.T = T;
  Eigen::Index q = 0;
  for (auto s : sizes) q += s;
  p.X = randn(N * T, q, rng);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(q);
  for (Eigen::Index j = 0; j < q; j += 3) b(j) = 1.0 - 0.1 * j;
  p.y = p.X * b + 0.5 * randn(N * T, rng);
  for (int i = 0; i < N; ++i) p.y.segment(i * T, T).array() += 0.3 * i;
  p.groups = sglpanel::GroupStructure::contiguous(sizes);
  p.blocks = p.groups;
  for (Eigen::Index j = 0; j < q; ++j) p.column_names.push_back("c" + std::to_string(j));
  p.column_scales = Eigen::VectorXd::Ones(q);
  p.intercept_mode = mode;
  return p;
}

}  // namespace testutil
