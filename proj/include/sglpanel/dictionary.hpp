#pragma once

#include <cmath>
#include <Eigen/Dense>

#include "sglpanel/errors.hpp"

namespace sglpanel {

/// Weighting dictionary mapping m high-frequency lags onto L coefficients.
///
/// Row j (0-based) corresponds to the lag at distance j/m from the
/// low-frequency observation, row 0 being the most recent. Column l holds
/// w_l(j/m)/m for the shifted Legendre polynomial w_l.
struct MidasDictionary {
  int m = 0;
  int L = 0;
  Eigen::MatrixXd W;
};

/// Shifted Legendre polynomial of degree `degree` on [0,1], normalised so
/// that w_l(1) = 1. Evaluated through the three-term recurrence
///   (n+1) w_{n+1}(s) = (2n+1)(2s-1) w_n(s) - n w_{n-1}(s).
inline double legendre_value(int degree, double s) {
  if (degree < 0) throw InvalidArgument("legendre_value: negative degree");
  if (!(s >= 0.0 && s <= 1.0)) throw InvalidArgument("legendre_value: s outside [0,1]");
  const double x = 2.0 * s - 1.0;
  if (degree == 0) return 1.0;
  double prev = 1.0;
  double cur = x;
  for (int n = 1; n < degree; ++n) {
    const double next = ((2.0 * n + 1.0) * x * cur - n * prev) / (n + 1.0);
    prev = cur;
    cur = next;
  }
  return cur;
}

/// Builds the m x L Legendre dictionary W with W(j,l) = w_l(j/m)/m.
inline MidasDictionary build_dictionary(int m, int L) {
  if (m <= 0 || L <= 0) throw InvalidArgument("build_dictionary: m and L must be positive");
  if (L > m) throw InvalidArgument("build_dictionary: L must not exceed m");
  MidasDictionary dict{m, L, Eigen::MatrixXd(m, L)};
  for (int j = 0; j < m; ++j) {
    const double s = static_cast<double>(j) / m;
    for (int l = 0; l < L; ++l) dict.W(j, l) = legendre_value(l, s) / m;
  }
  return dict;
}

/// Grid on which Beta-density lag weights are evaluated.
enum class BetaGrid {
  kEndpoints,    ///< s_j = j/(m-1): both ends of [0,1] represented
  kLeftAligned,  ///< s_j = j/m
};

/// Scaled Beta(p1,p2) density at the lag grid, used as the true lag profile
/// of the simulated relevant covariate. The 1/m aggregation is left to the
/// caller. With m == 1 the single weight sits at s = 1/2 on the endpoint grid.
inline Eigen::VectorXd beta_weights(int m, double p1, double p2, double scale,
                                    BetaGrid grid = BetaGrid::kEndpoints) {
  if (m < 1) throw InvalidArgument("beta_weights: m must be >= 1");
  if (!(p1 > 0.0) || !(p2 > 0.0)) throw InvalidArgument("beta_weights: shape parameters must be positive");
  const double log_beta = std::lgamma(p1) + std::lgamma(p2) - std::lgamma(p1 + p2);
  Eigen::VectorXd w(m);
  for (int j = 0; j < m; ++j) {
    double s;
    if (grid == BetaGrid::kEndpoints)
      s = m == 1 ? 0.5 : static_cast<double>(j) / (m - 1);
    else
      s = static_cast<double>(j) / m;
    double density;
    if ((s == 0.0 && p1 < 1.0) || (s == 1.0 && p2 < 1.0)) {
      throw InvalidArgument("beta_weights: density unbounded at grid endpoint");
    } else if ((s == 0.0 && p1 > 1.0) || (s == 1.0 && p2 > 1.0)) {
      density = 0.0;
    } else {
      const double log_kernel = (s == 0.0 ? 0.0 : (p1 - 1.0) * std::log(s)) +
                                (s == 1.0 ? 0.0 : (p2 - 1.0) * std::log1p(-s));
      density = std::exp(log_kernel - log_beta);
    }
    w(j) = scale * density;
  }
  return w;
}

}  // namespace sglpanel
