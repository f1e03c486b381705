#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>

#include "sglpanel/design.hpp"
#include "sglpanel/estimators.hpp"
#include "sglpanel/moments.hpp"
#include "sglpanel/parallel.hpp"
#include "sglpanel/solver.hpp"

namespace sglpanel {

enum class Kernel { kParzen, kQuadraticSpectral };

inline const char* kernel_name(Kernel k) { return k == Kernel::kParzen ? "parzen" : "qs"; }

inline Kernel parse_kernel(const std::string& s) {
  if (s == "parzen") return Kernel::kParzen;
  if (s == "qs" || s == "quadratic-spectral") return Kernel::kQuadraticSpectral;
  throw InvalidArgument("unknown kernel '" + s + "' (expected parzen or qs)");
}

/// HAC lag weight K(x) with K(0) = 1.
///
/// Parzen: 1 - 6x^2 + 6|x|^3 on |x| <= 1/2, 2(1 - |x|)^3 on 1/2 < |x| <= 1,
/// zero beyond. Quadratic spectral (Andrews): with z = 6*pi*x/5,
/// K = 3/z^2 * (sin(z)/z - cos(z)); for |z| < 0.1 the Taylor series
/// 1 - z^2/10 + z^4/280 - z^6/15120 + z^8/1330560 is used instead.
inline double kernel_weight(Kernel kernel, double x) {
  const double ax = std::abs(x);
  if (kernel == Kernel::kParzen) {
    if (ax <= 0.5) return 1.0 - 6.0 * ax * ax + 6.0 * ax * ax * ax;
    if (ax <= 1.0) {
      const double r = 1.0 - ax;
      return 2.0 * r * r * r;
    }
    return 0.0;
  }
  const double z = 6.0 * std::numbers::pi * ax / 5.0;
  if (z < 0.1) {
    const double z2 = z * z;
    return 1.0 - z2 / 10.0 + z2 * z2 / 280.0 - z2 * z2 * z2 / 15120.0 + z2 * z2 * z2 * z2 / 1330560.0;
  }
  return 3.0 / (z * z) * (std::sin(z) / z - std::cos(z));
}

struct HacConfig {
  Kernel kernel = Kernel::kParzen;
  double bandwidth = 10.0;

  void validate() const {
    if (!(bandwidth > 0.0)) throw InvalidArgument("hac: bandwidth must be > 0");
  }
};

/// Rows Theta_G of the nodewise-LASSO precision estimate.
struct PrecisionEstimate {
  std::vector<Index> rows;     ///< target column indices into Z
  Eigen::MatrixXd theta;       ///< |G| x q
  Eigen::VectorXd sigma2;      ///< tau_j^2 per row
  Eigen::VectorXd lambdas;     ///< nodewise lambda per row
  int nonconverged = 0;
};

/// How each nodewise lambda_j is chosen.
struct NodewiseLambdaRule {
  enum class Kind { kFixed, kCrossValidated };
  Kind kind = Kind::kCrossValidated;
  double lambda = 0.0;  ///< used when kFixed
  CvConfig cv;          ///< used when kCrossValidated; gamma is forced to 1
};

/// Nodewise LASSO: for every j in `rows`, regress column j of Z on all other
/// columns with penalty 2*lambda_j*|mu|_1 (no intercept; Z carries its own
/// constant column, penalized like the others), then
///   sigma_j^2 = |Z_j - Z_{-j} mu_j|^2/n + lambda_j*|mu_j|_1,
///   Theta_j   = (-mu_j1, ..., 1, ..., -mu_jq) / sigma_j^2.
/// The lambda_j term carries coefficient 1, not 2, in sigma_j^2.
inline PrecisionEstimate nodewise_precision(const Eigen::MatrixXd& Z, Index N, Index T, const std::vector<Index>& rows,
                                            const NodewiseLambdaRule& rule, const SolverConfig& cfg = {}) {
  const Index q = Z.cols();
  if (N * T != Z.rows()) throw DimensionMismatch("nodewise_precision: Z rows differ from N*T");
  for (Index j : rows)
    if (j < 0 || j >= q) throw InvalidArgument("nodewise_precision: target row out of range");
  if (rule.kind == NodewiseLambdaRule::Kind::kFixed && !(rule.lambda >= 0.0))
    throw InvalidArgument("nodewise_precision: lambda must be >= 0");

  std::vector<MomentStats> folds;
  MomentStats total;
  if (rule.kind == NodewiseLambdaRule::Kind::kCrossValidated) {
    folds = fold_moments(Z, N, T, rule.cv.n_folds);
    total = folds.front();
    for (std::size_t k = 1; k < folds.size(); ++k) {
      total.n += folds[k].n;
      total.cross += folds[k].cross;
      total.sum += folds[k].sum;
      total.n_entity += folds[k].n_entity;
      total.sum_entity += folds[k].sum_entity;
    }
  } else {
    total = MomentStats::of_periods(Z, N, T, 0, T);
  }
  CvConfig cv = rule.cv;
  cv.gammas = {1.0};
  cv.threads = 1;

  const std::size_t G = rows.size();
  PrecisionEstimate est;
  est.rows = rows;
  est.theta = Eigen::MatrixXd::Zero(static_cast<Index>(G), q);
  est.sigma2.resize(static_cast<Index>(G));
  est.lambdas.resize(static_cast<Index>(G));
  std::vector<int> failures(G, 0);
  const double n = static_cast<double>(Z.rows());
  const int threads = rule.kind == NodewiseLambdaRule::Kind::kCrossValidated ? rule.cv.threads : 1;
  parallel_for(G, threads, [&](std::size_t g) {
    const Index j = rows[g];
    RegressionView view;
    view.response = j;
    for (Index k = 0; k < q; ++k)
      if (k != j) view.predictors.push_back(k);
    const Index p = q - 1;
    const GroupStructure singles = GroupStructure::singletons(p);
    double lam = rule.lambda;
    if (rule.kind == NodewiseLambdaRule::Kind::kCrossValidated) {
      const CvResult r = cross_validate_moments(folds, view, InterceptMode::kNone, singles, false, cv, cfg);
      lam = r.best_lambda;
      failures[g] += r.nonconverged;
    }
    const ReducedRegression red = reduce(total, view, InterceptMode::kNone, Eigen::VectorXd::Ones(p));
    PenaltyConfig pen;
    pen.lambda = lam;
    pen.gamma = 1.0;
    pen.groups = singles;
    pen.penalized.assign(static_cast<std::size_t>(p), true);
    const SolverResult r = solve(red.model, pen, cfg);
    failures[g] += !r.converged;
    Eigen::VectorXd resid = Z.col(j);
    for (Index a = 0; a < p; ++a)
      if (r.coefficients(a) != 0.0) resid -= r.coefficients(a) * Z.col(view.predictors[a]);
    const double s2 = resid.squaredNorm() / n + lam * r.coefficients.lpNorm<1>();
    if (!(s2 > 1e-12))
      throw NearSingularDesign("nodewise_precision: sigma^2 <= 1e-12 for column " + std::to_string(j));
    const Index gi = static_cast<Index>(g);
    est.sigma2(gi) = s2;
    est.lambdas(gi) = lam;
    est.theta(gi, j) = 1.0 / s2;
    for (Index a = 0; a < p; ++a) est.theta(gi, view.predictors[a]) = -r.coefficients(a) / s2;
  });
  for (int f : failures) est.nonconverged += f;
  return est;
}

/// rho_G + Theta_G Z'u/n on the scale of Z.
inline Eigen::VectorXd debias(const Eigen::VectorXd& rho, const PrecisionEstimate& precision, const Eigen::MatrixXd& Z,
                              const Eigen::VectorXd& residuals) {
  if (rho.size() != Z.cols() || residuals.size() != Z.rows() || precision.theta.cols() != Z.cols())
    throw DimensionMismatch("debias: dimensions of rho, Z, residuals and Theta disagree");
  Eigen::VectorXd out(static_cast<Index>(precision.rows.size()));
  for (std::size_t g = 0; g < precision.rows.size(); ++g) out(static_cast<Index>(g)) = rho(precision.rows[g]);
  const Eigen::VectorXd score = Z.transpose() * residuals / static_cast<double>(Z.rows());
  return out + precision.theta * score;
}

/// Pooled HAC long-run variance of u_it * Theta_G z_it:
///   Xi = (1/N) sum_i sum_{|k|<T} K(k/M) Gamma_{k,i},
///   Gamma_{k,i} = (1/T) sum_t s_it s_{i,t+k}',  Gamma_{-k,i} = Gamma_{k,i}'.
/// Entities are accumulated in index order.
inline Eigen::MatrixXd hac_lrv(const Eigen::MatrixXd& Z, const Eigen::VectorXd& residuals, Index N, Index T,
                               const PrecisionEstimate& precision, const HacConfig& hac) {
  hac.validate();
  if (Z.rows() != N * T || residuals.size() != Z.rows()) throw DimensionMismatch("hac_lrv: Z/residuals differ from N*T");
  const Eigen::MatrixXd scores = residuals.asDiagonal() * (Z * precision.theta.transpose());
  const Index G = scores.cols();
  std::vector<double> weights(static_cast<std::size_t>(T));
  for (Index k = 1; k < T; ++k) weights[k] = kernel_weight(hac.kernel, static_cast<double>(k) / hac.bandwidth);
  Eigen::MatrixXd xi = Eigen::MatrixXd::Zero(G, G);
  for (Index i = 0; i < N; ++i) {
    const auto s = scores.middleRows(i * T, T);
    Eigen::MatrixXd acc = s.transpose() * s;
    for (Index k = 1; k < T; ++k) {
      if (weights[k] == 0.0) continue;
      const Eigen::MatrixXd gk = s.topRows(T - k).transpose() * s.bottomRows(T - k);
      acc += weights[k] * (gk + gk.transpose());
    }
    xi += acc / static_cast<double>(T);
  }
  xi /= static_cast<double>(N);
  return 0.5 * (xi + xi.transpose());
}

struct WaldResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
};

inline double chi_squared_sf(double x, int df) {
  if (x <= 0.0) return 1.0;
  boost::math::chi_squared dist(static_cast<double>(df));
  return boost::math::cdf(boost::math::complement(dist, x));
}

/// n * d' Xi^{-1} d against chi-square with dim(d) degrees of freedom.
inline WaldResult wald_test(const Eigen::VectorXd& debiased, const Eigen::MatrixXd& covariance, double n) {
  const Index G = debiased.size();
  if (covariance.rows() != G || covariance.cols() != G) throw DimensionMismatch("wald_test: covariance shape");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e12) throw SingularCovariance("wald_test: HAC covariance is numerically singular");
  const Eigen::VectorXd v = eig.eigenvectors().transpose() * debiased;
  WaldResult w;
  w.df = static_cast<int>(G);
  w.statistic = n * (v.array().square() / eig.eigenvalues().array()).sum();
  w.p_value = chi_squared_sf(w.statistic, w.df);
  return w;
}

/// One Granger-causality test cell.
struct InferenceReport {
  std::string group;
  std::vector<Index> columns;  ///< slope columns of the design
  Eigen::VectorXd estimate;    ///< penalized estimate, original scale
  Eigen::VectorXd debiased;    ///< original scale
  Eigen::MatrixXd covariance;  ///< Xi_G, original scale
  Kernel kernel = Kernel::kParzen;
  double bandwidth = 0.0;
  WaldResult wald;
  std::vector<std::string> warnings;
};

/// Debiased inference for one coefficient group of a pooled fit. Nodewise
/// rows and the bias correction are computed once; `test` then evaluates any
/// kernel/bandwidth. Work happens on the solver scale Z = (1, X/scales) and
/// is mapped back to the original scale for reporting; the Wald statistic
/// is invariant to that rescaling.
class GrangerTest {
 public:
  GrangerTest(const DesignProblem& problem, const SgLassoFit& fit, std::vector<Index> columns, std::string label,
              const NodewiseLambdaRule& rule, const SolverConfig& cfg = {})
      : columns_(std::move(columns)), label_(std::move(label)), N_(problem.N), T_(problem.T) {
    if (problem.intercept_mode != InterceptMode::kPooled || fit.mode != InterceptMode::kPooled)
      throw InvalidArgument("GrangerTest: debiased inference requires a pooled fit");
    if (fit.slopes.size() != problem.p()) throw DimensionMismatch("GrangerTest: fit does not match problem");
    if (columns_.empty()) throw InvalidArgument("GrangerTest: empty group");
    const Index p = problem.p();
    scales_ = fit.column_scales.cwiseQuotient(problem.column_scales);
    Z_.resize(problem.n(), p + 1);
    Z_.col(0).setOnes();
    Z_.rightCols(p) = problem.X * scales_.cwiseInverse().asDiagonal();
    rho_.resize(p + 1);
    rho_(0) = fit.intercepts(0);
    rho_.tail(p) = fit.slopes_standardized;
    residuals_ = fit.residuals;
    std::vector<Index> rows;
    for (Index c : columns_) {
      if (c < 0 || c >= p) throw InvalidArgument("GrangerTest: column out of range");
      rows.push_back(c + 1);
    }
    precision_ = nodewise_precision(Z_, N_, T_, rows, rule, cfg);
    debiased_std_ = debias(rho_, precision_, Z_, residuals_);
    estimate_std_.resize(static_cast<Index>(rows.size()));
    for (std::size_t g = 0; g < rows.size(); ++g) estimate_std_(static_cast<Index>(g)) = rho_(rows[g]);
  }

  const PrecisionEstimate& precision() const { return precision_; }
  const Eigen::VectorXd& debiased_standardized() const { return debiased_std_; }
  const Eigen::MatrixXd& z_design() const { return Z_; }

  InferenceReport test(const HacConfig& hac) const {
    InferenceReport rep;
    rep.group = label_;
    rep.columns = columns_;
    rep.kernel = hac.kernel;
    rep.bandwidth = hac.bandwidth;
    if (hac.bandwidth >= static_cast<double>(T_))
      rep.warnings.push_back("bandwidth >= T: every available lag is weighted");
    const Eigen::MatrixXd xi = hac_lrv(Z_, residuals_, N_, T_, precision_, hac);
    rep.wald = wald_test(debiased_std_, xi, static_cast<double>(Z_.rows()));
    Eigen::VectorXd inv(static_cast<Index>(columns_.size()));
    for (std::size_t g = 0; g < columns_.size(); ++g) inv(static_cast<Index>(g)) = 1.0 / scales_(columns_[g]);
    rep.estimate = estimate_std_.cwiseProduct(inv);
    rep.debiased = debiased_std_.cwiseProduct(inv);
    rep.covariance = inv.asDiagonal() * xi * inv.asDiagonal();
    return rep;
  }

 private:
  std::vector<Index> columns_;
  std::string label_;
  Index N_;
  Index T_;
  Eigen::VectorXd scales_;
  Eigen::MatrixXd Z_;
  Eigen::VectorXd rho_;
  Eigen::VectorXd residuals_;
  PrecisionEstimate precision_;
  Eigen::VectorXd debiased_std_;
  Eigen::VectorXd estimate_std_;
};

}  // namespace sglpanel
