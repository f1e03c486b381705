#include <gtest/gtest.h>

#include <cmath>

#include "sglpanel/inference.hpp"
#include "test_util.hpp"

using namespace sglpanel;

namespace {

SolverConfig tight() {
  SolverConfig c;
  c.tolerance = 1e-12;
  c.max_iterations = 200000;
  return c;
}

NodewiseLambdaRule fixed(double lambda) {
  NodewiseLambdaRule r;
  r.kind = NodewiseLambdaRule::Kind::kFixed;
  r.lambda = lambda;
  return r;
}

Eigen::MatrixXd with_ones(const Eigen::MatrixXd& X) {
  Eigen::MatrixXd Z(X.rows(), X.cols() + 1);
  Z.col(0).setOnes();
  Z.rightCols(X.cols()) = X;
  return Z;
}

}  // namespace

TEST(Kernel, Values) {
  EXPECT_EQ(kernel_weight(Kernel::kParzen, 0.0), 1.0);
  EXPECT_EQ(kernel_weight(Kernel::kParzen, 0.5), 0.25);
  EXPECT_EQ(kernel_weight(Kernel::kParzen, -0.5), 0.25);
  EXPECT_EQ(kernel_weight(Kernel::kParzen, 1.0), 0.0);
  EXPECT_EQ(kernel_weight(Kernel::kParzen, 1.5), 0.0);
  EXPECT_NEAR(kernel_weight(Kernel::kParzen, 0.75), 2.0 * 0.25 * 0.25 * 0.25, 1e-15);
  EXPECT_NEAR(kernel_weight(Kernel::kQuadraticSpectral, 0.0), 1.0, 1e-10);
  EXPECT_NEAR(kernel_weight(Kernel::kQuadraticSpectral, 1e-9), 1.0, 1e-10);
}

TEST(Kernel, QsSeriesMatchesClosedFormNearSwitch) {
  // closed form in long double just above and below the series cutoff
  for (double x : {0.02, 0.025, 0.0265, 0.027, 0.03, 0.05}) {
    const long double z = 6.0L * 3.14159265358979323846264338327950288L * x / 5.0L;
    const long double exact = 3.0L / (z * z) * (std::sin(z) / z - std::cos(z));
    EXPECT_NEAR(kernel_weight(Kernel::kQuadraticSpectral, x), static_cast<double>(exact), 1e-10) << x;
  }
  // Andrews' form 25/(12 pi^2 x^2) (sin(6pi x/5)/(6pi x/5) - cos(6pi x/5))
  for (double x : {0.3, 1.0, 2.7}) {
    const double w = 6.0 * M_PI * x / 5.0;
    const double k = 25.0 / (12.0 * M_PI * M_PI * x * x) * (std::sin(w) / w - std::cos(w));
    EXPECT_NEAR(kernel_weight(Kernel::kQuadraticSpectral, x), k, 1e-14);
  }
}

TEST(Kernel, BoundedOnGrid) {
  for (int i = 0; i <= 10000; ++i) {
    const double x = -5.0 + 10.0 * i / 10000.0;
    const double p = kernel_weight(Kernel::kParzen, x);
    const double q = kernel_weight(Kernel::kQuadraticSpectral, x);
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
    EXPECT_GE(q, -1.0);
    EXPECT_LE(q, 1.0);
  }
}

TEST(Kernel, Parse) {
  EXPECT_EQ(parse_kernel("parzen"), Kernel::kParzen);
  EXPECT_EQ(parse_kernel("qs"), Kernel::kQuadraticSpectral);
  EXPECT_THROW(parse_kernel("bartlett"), InvalidArgument);
}

TEST(Nodewise, OrthonormalColumnsGiveDiagonal) {
  // columns orthogonal with squared norm n/ (j+1)
  const Index N = 2, T = 8, q = 4;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(N * T, q);
  for (Index i = 0; i < N * T; ++i) {
    H(i, 0) = 1.0;
    H(i, 1) = (i % 2 == 0) ? 1.0 : -1.0;
    H(i, 2) = ((i / 2) % 2 == 0) ? 1.0 : -1.0;
    H(i, 3) = ((i / 4) % 2 == 0) ? 2.0 : -2.0;
  }
  const auto est = nodewise_precision(H, N, T, {0, 1, 2, 3}, fixed(0.0), tight());
  for (Index g = 0; g < q; ++g) {
    const double s2 = H.col(g).squaredNorm() / (N * T);
    EXPECT_NEAR(est.sigma2(g), s2, 1e-10);
    for (Index k = 0; k < q; ++k) EXPECT_NEAR(est.theta(g, k), k == g ? 1.0 / s2 : 0.0, 1e-8);
  }
}

TEST(Nodewise, CorrelatedPairApproachesInverse) {
  std::mt19937_64 rng(71);
  const Index n = 5000;
  Eigen::MatrixXd Z = testutil::randn(n, 2, rng);
  Z.col(1) = 0.5 * Z.col(0) + std::sqrt(0.75) * Z.col(1);
  const auto est = nodewise_precision(Z, 1, n, {0, 1}, fixed(1e-4), tight());
  const double want[2][2] = {{4.0 / 3.0, -2.0 / 3.0}, {-2.0 / 3.0, 4.0 / 3.0}};
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) EXPECT_NEAR(est.theta(a, b), want[a][b], 0.1);
}

TEST(Nodewise, HugeLambdaGivesDiagonal) {
  std::mt19937_64 rng(72);
  const Eigen::MatrixXd Z = with_ones(testutil::randn(60, 5, rng));
  const auto est = nodewise_precision(Z, 3, 20, {1, 3}, fixed(1e9), tight());
  for (int g = 0; g < 2; ++g) {
    const Index j = est.rows[g];
    EXPECT_NEAR(est.sigma2(g), Z.col(j).squaredNorm() / 60.0, 1e-12);
    for (Index k = 0; k < Z.cols(); ++k)
      EXPECT_EQ(est.theta(g, k), k == j ? 1.0 / est.sigma2(g) : 0.0);
  }
}

TEST(Nodewise, SigmaRecomputedFromCoefficients) {
  std::mt19937_64 rng(73);
  Eigen::MatrixXd X = testutil::randn(200, 6, rng);
  X.col(2) += 0.7 * X.col(0);
  const Eigen::MatrixXd Z = with_ones(X);
  NodewiseLambdaRule rule;
  rule.cv.n_folds = 5;
  rule.cv.n_lambda = 8;
  const auto est = nodewise_precision(Z, 4, 50, {1, 3, 5}, rule, tight());
  for (int g = 0; g < 3; ++g) {
    const Index j = est.rows[g];
    const double s2 = est.sigma2(g);
    // mu_k = -theta_k * sigma^2
    Eigen::VectorXd mu = -est.theta.row(g).transpose() * s2;
    mu(j) = 0.0;
    const Eigen::VectorXd r = Z.col(j) - Z * mu;
    const double recomputed = r.squaredNorm() / 200.0 + est.lambdas(g) * mu.lpNorm<1>();
    EXPECT_NEAR(recomputed, s2, 1e-12 * std::max(1.0, s2));
    EXPECT_GT(est.lambdas(g), 0.0);
    EXPECT_NEAR(est.theta(g, j) * s2, 1.0, 1e-14);
  }
}

TEST(Nodewise, ConstantDuplicateIsNearSingular) {
  Eigen::MatrixXd Z = Eigen::MatrixXd::Ones(20, 2);
  EXPECT_THROW(nodewise_precision(Z, 1, 20, {1}, fixed(0.0), tight()), NearSingularDesign);
  EXPECT_THROW(nodewise_precision(Z, 1, 20, {2}, fixed(0.0)), InvalidArgument);
  EXPECT_THROW(nodewise_precision(Z, 2, 20, {1}, fixed(0.0)), DimensionMismatch);
}

TEST(Nodewise, ThreadInvariant) {
  std::mt19937_64 rng(74);
  const Eigen::MatrixXd Z = with_ones(testutil::randn(120, 7, rng));
  NodewiseLambdaRule rule;
  rule.cv.n_folds = 4;
  rule.cv.n_lambda = 6;
  const auto a = nodewise_precision(Z, 3, 40, {1, 2, 3, 4}, rule);
  rule.cv.threads = 4;
  const auto b = nodewise_precision(Z, 3, 40, {1, 2, 3, 4}, rule);
  EXPECT_EQ(a.theta, b.theta);
  EXPECT_EQ(a.lambdas, b.lambdas);
}

TEST(Debias, ZeroResidualsLeaveEstimate) {
  std::mt19937_64 rng(75);
  const Eigen::MatrixXd Z = with_ones(testutil::randn(50, 4, rng));
  const auto est = nodewise_precision(Z, 1, 50, {2, 4}, fixed(0.05), tight());
  const Eigen::VectorXd rho = testutil::randn(5, rng);
  const Eigen::VectorXd d = debias(rho, est, Z, Eigen::VectorXd::Zero(50));
  EXPECT_EQ(d(0), rho(2));
  EXPECT_EQ(d(1), rho(4));
  EXPECT_THROW(debias(rho.head(4), est, Z, Eigen::VectorXd::Zero(50)), DimensionMismatch);
}

TEST(Debias, OlsCorrectionVanishes) {
  std::mt19937_64 rng(76);
  const Eigen::MatrixXd Z = with_ones(testutil::randn(80, 4, rng));
  const Eigen::VectorXd y = Z * Eigen::Vector<double, 5>(1, 0.5, 0, -1, 0) + testutil::randn(80, rng);
  const Eigen::VectorXd rho = Z.colPivHouseholderQr().solve(y);
  const auto est = nodewise_precision(Z, 2, 40, {1, 2, 3}, fixed(0.02), tight());
  const Eigen::VectorXd d = debias(rho, est, Z, y - Z * rho);
  for (int g = 0; g < 3; ++g) EXPECT_NEAR(d(g), rho(g + 1), 1e-8);
}

TEST(Debias, InterceptTranslation) {
  auto p = testutil::random_problem(3, 30, {2, 2}, 77);
  const auto rule = fixed(0.05);
  const auto f = fit_pooled(p, 0.05, 0.5, tight());
  auto q = p;
  q.y.array() += 3.0;
  const auto g = fit_pooled(q, 0.05, 0.5, tight());
  const GrangerTest a(p, f, {0, 1, 2, 3}, "all", rule, tight());
  const GrangerTest b(q, g, {0, 1, 2, 3}, "all", rule, tight());
  EXPECT_LT((a.debiased_standardized() - b.debiased_standardized()).cwiseAbs().maxCoeff(), 1e-8);
  const auto pa = nodewise_precision(a.z_design(), 3, 30, {0}, rule, tight());
  Eigen::VectorXd ra(5), rb(5);
  ra << f.intercepts(0), f.slopes_standardized;
  rb << g.intercepts(0), g.slopes_standardized;
  const double da = debias(ra, pa, a.z_design(), f.residuals)(0);
  const double db = debias(rb, pa, b.z_design(), g.residuals)(0);
  EXPECT_NEAR(db - da, 3.0, 1e-8);
}

TEST(Debias, ReducesShrinkageBias) {
  double raw = 0.0, deb = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    std::mt19937_64 rng(1000 + rep);
    DesignProblem p;
    p.N = 50;
    p.T = 100;
    p.X = testutil::randn(5000, 10, rng);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(10);
    b(0) = 1.0;
    b(3) = -0.5;
    p.y = p.X * b + testutil::randn(5000, rng);
    p.groups = GroupStructure::contiguous({5, 5});
    p.blocks = p.groups;
    p.column_scales = Eigen::VectorXd::Ones(10);
    for (int j = 0; j < 10; ++j) p.column_names.push_back("c" + std::to_string(j));
    const auto f = fit_pooled(p, 0.05, 0.5);
    const GrangerTest t(p, f, {0, 3}, "g", fixed(0.01));
    const auto rep_ = t.test(HacConfig{});
    raw += std::abs(rep_.estimate(0) - 1.0) + std::abs(rep_.estimate(1) + 0.5);
    deb += std::abs(rep_.debiased(0) - 1.0) + std::abs(rep_.debiased(1) + 0.5);
  }
  EXPECT_LT(deb, raw);
}

TEST(Hac, TinyBandwidthIsLagZeroSandwich) {
  std::mt19937_64 rng(78);
  const Index N = 3, T = 25;
  const Eigen::MatrixXd Z = with_ones(testutil::randn(N * T, 4, rng));
  const Eigen::VectorXd u = testutil::randn(N * T, rng);
  const auto est = nodewise_precision(Z, N, T, {1, 2}, fixed(0.05), tight());
  const Eigen::MatrixXd xi = hac_lrv(Z, u, N, T, est, HacConfig{Kernel::kParzen, 1e-6});
  Eigen::MatrixXd want = Eigen::MatrixXd::Zero(2, 2);
  for (Index r = 0; r < N * T; ++r) {
    const Eigen::VectorXd s = est.theta * Z.row(r).transpose();
    want += u(r) * u(r) * s * s.transpose();
  }
  want /= static_cast<double>(N * T);
  EXPECT_LT((xi - want).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Hac, SingleEntityConstantScores) {
  const Index T = 40;
  const Eigen::MatrixXd Z = Eigen::MatrixXd::Ones(T, 1);
  PrecisionEstimate est;
  est.rows = {0};
  est.theta = Eigen::MatrixXd::Constant(1, 1, 1.7);
  for (Kernel k : {Kernel::kParzen, Kernel::kQuadraticSpectral})
    for (double M : {3.0, 10.0, 55.0}) {
      double want = 0.0;
      for (Index l = -(T - 1); l <= T - 1; ++l)
        want += kernel_weight(k, l / M) * static_cast<double>(T - std::abs(l)) / T;
      want *= 1.7 * 1.7;
      const Eigen::MatrixXd xi = hac_lrv(Z, Eigen::VectorXd::Ones(T), 1, T, est, HacConfig{k, M});
      EXPECT_NEAR(xi(0, 0), want, 1e-12 * std::abs(want));
    }
}

TEST(Hac, SymmetricAndParzenPsd) {
  for (int rep = 0; rep < 20; ++rep) {
    std::mt19937_64 rng(200 + rep);
    const Index N = 4, T = 30;
    const Eigen::MatrixXd Z = with_ones(testutil::randn(N * T, 5, rng));
    const Eigen::VectorXd u = testutil::randn(N * T, rng);
    const auto est = nodewise_precision(Z, N, T, {1, 2, 3}, fixed(0.05), tight());
    for (Kernel k : {Kernel::kParzen, Kernel::kQuadraticSpectral}) {
      const Eigen::MatrixXd xi = hac_lrv(Z, u, N, T, est, HacConfig{k, 7.0});
      EXPECT_LT((xi - xi.transpose()).cwiseAbs().maxCoeff(), 1e-12);
      if (k == Kernel::kParzen) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(xi);
        EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-10);
      }
    }
  }
}

TEST(Hac, IidResidualsMatchSandwich) {
  std::mt19937_64 rng(79);
  const Index N = 20, T = 1000, p = 3;
  Eigen::MatrixXd X = testutil::randn(N * T, p, rng);
  X.col(1) = 0.6 * X.col(0) + 0.8 * X.col(1);
  const Eigen::MatrixXd Z = with_ones(X);
  Eigen::MatrixXd S = Eigen::MatrixXd::Identity(p + 1, p + 1);
  S(1, 2) = S(2, 1) = 0.6;
  const double s2u = 2.0;
  const Eigen::VectorXd u = std::sqrt(s2u) * testutil::randn(N * T, rng);
  const auto est = nodewise_precision(Z, N, T, {1, 2}, fixed(1e-4), tight());
  const Eigen::MatrixXd xi = hac_lrv(Z, u, N, T, est, HacConfig{Kernel::kParzen, 10.0});
  const Eigen::MatrixXd want = s2u * est.theta * S * est.theta.transpose();
  for (int a = 0; a < 2; ++a) EXPECT_NEAR(xi(a, a), want(a, a), 0.1 * want(a, a));
  EXPECT_NEAR(xi(0, 1), want(0, 1), 0.1 * std::abs(want(0, 1)));
}

TEST(Hac, EntityOrderOnlyPermutesSum) {
  std::mt19937_64 rng(80);
  const Index N = 3, T = 15;
  const Eigen::MatrixXd Z = with_ones(testutil::randn(N * T, 3, rng));
  const Eigen::VectorXd u = testutil::randn(N * T, rng);
  const auto est = nodewise_precision(Z, N, T, {1, 2}, fixed(0.05), tight());
  Eigen::MatrixXd Zp(N * T, 4);
  Eigen::VectorXd up(N * T);
  const int order[3] = {2, 0, 1};
  for (int i = 0; i < 3; ++i) {
    Zp.middleRows(i * T, T) = Z.middleRows(order[i] * T, T);
    up.segment(i * T, T) = u.segment(order[i] * T, T);
  }
  const auto a = hac_lrv(Z, u, N, T, est, HacConfig{});
  const auto b = hac_lrv(Zp, up, N, T, est, HacConfig{});
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_THROW(hac_lrv(Z, u, N, T, est, HacConfig{Kernel::kParzen, 0.0}), InvalidArgument);
}

TEST(Wald, ZeroVector) {
  const auto w = wald_test(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3), 100.0);
  EXPECT_EQ(w.statistic, 0.0);
  EXPECT_EQ(w.p_value, 1.0);
  EXPECT_EQ(w.df, 3);
}

TEST(Wald, ScalarMatchesNormal) {
  for (double d : {0.01, 0.05, 0.13, -0.2, 0.31}) {
    Eigen::VectorXd v(1);
    v << d;
    const double xi = 1.3, n = 400.0;
    const auto w = wald_test(v, Eigen::MatrixXd::Constant(1, 1, xi), n);
    const double t = std::sqrt(n) * d / std::sqrt(xi);
    EXPECT_NEAR(w.statistic, t * t, 1e-12 * t * t);
    EXPECT_NEAR(w.p_value, std::erfc(std::abs(t) / std::sqrt(2.0)), 1e-12);
  }
}

TEST(Wald, KnownQuadraticForm) {
  Eigen::Vector2d d(0.1, -0.2);
  Eigen::Matrix2d C;
  C << 2.0, 0.5, 0.5, 1.0;
  const auto w = wald_test(d, C, 50.0);
  EXPECT_NEAR(w.statistic, 50.0 * d.dot(C.inverse() * d), 1e-12);
  EXPECT_NEAR(w.p_value, std::exp(-w.statistic / 2.0), 1e-12);
}

TEST(Wald, SingularCovariance) {
  Eigen::Matrix2d C;
  C << 1.0, 1.0, 1.0, 1.0;
  EXPECT_THROW(wald_test(Eigen::Vector2d(1, 0), C, 10.0), SingularCovariance);
  EXPECT_THROW(wald_test(Eigen::Vector2d(1, 0), Eigen::Matrix3d::Identity(), 10.0), DimensionMismatch);
}

TEST(GrangerTest, ReportInvariants) {
  auto p = testutil::random_problem(4, 30, {3, 2}, 81);
  p.X.col(1) *= 5.0;
  const auto f = fit_pooled(p, 0.05, 0.5);
  NodewiseLambdaRule rule;
  rule.cv.n_folds = 5;
  rule.cv.n_lambda = 6;
  const GrangerTest g(p, f, {0, 1, 2}, "g1", rule);
  for (Kernel k : {Kernel::kParzen, Kernel::kQuadraticSpectral}) {
    const auto r = g.test(HacConfig{k, 10.0});
    EXPECT_EQ(r.wald.df, 3);
    EXPECT_GE(r.wald.statistic, 0.0);
    EXPECT_GE(r.wald.p_value, 0.0);
    EXPECT_LE(r.wald.p_value, 1.0);
    EXPECT_LT((r.covariance - r.covariance.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    // statistic is invariant to the reporting scale
    const double back = p.n() * r.debiased.dot(r.covariance.ldlt().solve(r.debiased));
    EXPECT_NEAR(back, r.wald.statistic, 1e-8 * std::max(1.0, r.wald.statistic));
  }
  EXPECT_FALSE(g.test(HacConfig{Kernel::kParzen, 40.0}).warnings.empty());
}

TEST(GrangerTest, RejectsFixedEffects) {
  auto p = testutil::random_problem(3, 20, {2, 2}, 82, InterceptMode::kFixedEffects);
  const auto f = fit_fixed_effects(p, 0.05, 0.5);
  EXPECT_THROW(GrangerTest(p, f, {0}, "g", fixed(0.1)), InvalidArgument);
}

TEST(Chi2, SurvivalFunction) {
  EXPECT_EQ(chi_squared_sf(0.0, 3), 1.0);
  EXPECT_NEAR(chi_squared_sf(3.841458820694124, 1), 0.05, 1e-12);
  EXPECT_NEAR(chi_squared_sf(4.0, 2), std::exp(-2.0), 1e-14);
}
