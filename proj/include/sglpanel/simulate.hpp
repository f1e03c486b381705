#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sglpanel/design.hpp"
#include "sglpanel/dictionary.hpp"
#include "sglpanel/estimators.hpp"
#include "sglpanel/inference.hpp"
#include "sglpanel/parallel.hpp"

namespace sglpanel {

/// Pooled MIDAS panel with one autoregressive lag:
///   y_it = a_i + rho_y y_i,t-1 + scale * (1/m) sum_j w_j x_{i,t,j,k*} + u_it,
/// where only covariate k* = relevant_covariate carries the Beta lag profile
/// w and every covariate is an independent high-frequency AR(1).
struct DgpConfig {
  int N = 30;
  int T = 50;
  int K = 21;  ///< one relevant covariate plus K-1 irrelevant ones
  int m = 12;  ///< high-frequency observations (and lags) per low-frequency period
  double rho_y = 0.15;
  double rho_x = 0.7;
  double sigma2_u = 4.0;
  double intercept_low = -4.0;
  double intercept_high = 4.0;
  bool common_intercept = false;  ///< one draw shared by all entities
  double weight_scale = 0.0;      ///< the constant a multiplying the Beta density
  int relevant_covariate = 0;
  double beta_p1 = 3.0;
  double beta_p2 = 3.0;
  BetaGrid beta_grid = BetaGrid::kEndpoints;
  int hf_burnin = 200;
  int y_burnin = 50;
  int response_lags = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (N < 1 || T < 1 || K < 1 || m < 1) throw InvalidArgument("dgp: N, T, K and m must be >= 1");
    if (!(std::abs(rho_y) < 1.0) || !(std::abs(rho_x) < 1.0)) throw InvalidArgument("dgp: |rho| must be < 1");
    if (!(sigma2_u > 0.0)) throw InvalidArgument("dgp: sigma2_u must be > 0");
    if (!(intercept_low <= intercept_high)) throw InvalidArgument("dgp: empty intercept range");
    if (!(weight_scale >= 0.0)) throw InvalidArgument("dgp: weight scale must be >= 0");
    if (relevant_covariate < 0 || relevant_covariate >= K) throw InvalidArgument("dgp: relevant covariate out of range");
    if (hf_burnin < 0 || y_burnin < 0 || response_lags < 0) throw InvalidArgument("dgp: negative burn-in or lag count");
  }
};

/// SplitMix64 finaliser; maps (base_seed + index) to well-spread stream seeds.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Draws one panel. The returned dataset keeps T + response_lags periods so
/// that the effective sample after lag alignment has exactly T periods.
/// Draw order: intercepts, then per entity the covariate chains followed by
/// the response innovations.
inline PanelDataset simulate_panel(const DgpConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(cfg.intercept_low, cfg.intercept_high);
  const double sd_u = std::sqrt(cfg.sigma2_u);
  const int kept = cfg.T + cfg.response_lags;
  const int periods = cfg.y_burnin + kept;
  const int hf_len = cfg.hf_burnin + periods * cfg.m;
  const Eigen::VectorXd w = beta_weights(cfg.m, cfg.beta_p1, cfg.beta_p2, cfg.weight_scale, cfg.beta_grid) / cfg.m;

  Eigen::VectorXd alpha(cfg.N);
  if (cfg.common_intercept) {
    alpha.setConstant(cfg.intercept_low == cfg.intercept_high ? cfg.intercept_low : unif(rng));
  } else {
    for (int i = 0; i < cfg.N; ++i) alpha(i) = cfg.intercept_low == cfg.intercept_high ? cfg.intercept_low : unif(rng);
  }

  PanelDataset data;
  data.y.resize(cfg.N, kept);
  data.response_lags = cfg.response_lags;
  data.covariates.resize(cfg.K);
  for (int k = 0; k < cfg.K; ++k) {
    data.covariates[k].name = "x" + std::to_string(k + 1);
    data.covariates[k].m = cfg.m;
    data.covariates[k].lags.assign(cfg.N, Eigen::MatrixXd(kept, cfg.m));
  }
  std::vector<double> chain(static_cast<std::size_t>(hf_len));
  Eigen::MatrixXd relevant(periods, cfg.m);
  for (int i = 0; i < cfg.N; ++i) {
    data.entities.push_back(std::to_string(i + 1));
    for (int k = 0; k < cfg.K; ++k) {
      double x = 0.0;
      for (int h = 0; h < hf_len; ++h) {
        x = cfg.rho_x * x + std_normal(rng);
        chain[h] = x;
      }
      auto& block = data.covariates[k].lags[i];
      for (int t = 0; t < periods; ++t) {
        const int newest = cfg.hf_burnin + (t + 1) * cfg.m - 1;
        for (int j = 0; j < cfg.m; ++j) {
          const double v = chain[newest - j];
          if (k == cfg.relevant_covariate) relevant(t, j) = v;
          if (t >= cfg.y_burnin) block(t - cfg.y_burnin, j) = v;
        }
      }
    }
    double y_prev = 0.0;
    for (int t = 0; t < periods; ++t) {
      const double y = alpha(i) + cfg.rho_y * y_prev + relevant.row(t).dot(w) + sd_u * std_normal(rng);
      if (t >= cfg.y_burnin) data.y(i, t - cfg.y_burnin) = y;
      y_prev = y;
    }
  }
  return data;
}

// ---------------------------------------------------------------------------
// Monte Carlo experiment

enum class Estimator { kSgLassoMidas, kLassoUmidas };
enum class Pooling { kPooled, kIndividual };

inline const char* estimator_name(Estimator e) { return e == Estimator::kSgLassoMidas ? "sg-LASSO-MIDAS" : "LASSO-UMIDAS"; }
inline const char* pooling_name(Pooling p) { return p == Pooling::kPooled ? "pooled" : "individual"; }

inline Estimator parse_estimator(const std::string& s) {
  if (s == "sg-LASSO-MIDAS" || s == "sgl-midas") return Estimator::kSgLassoMidas;
  if (s == "LASSO-UMIDAS" || s == "lasso-umidas") return Estimator::kLassoUmidas;
  throw InvalidArgument("unknown estimator '" + s + "'");
}

inline Pooling parse_pooling(const std::string& s) {
  if (s == "pooled") return Pooling::kPooled;
  if (s == "individual") return Pooling::kIndividual;
  throw InvalidArgument("unknown pooling '" + s + "'");
}

struct ExperimentGrid {
  DgpConfig dgp;
  std::vector<Estimator> estimators{Estimator::kSgLassoMidas, Estimator::kLassoUmidas};
  std::vector<Pooling> poolings{Pooling::kPooled, Pooling::kIndividual};
  std::vector<Kernel> kernels{Kernel::kParzen, Kernel::kQuadraticSpectral};
  std::vector<double> bandwidths{10.0, 20.0, 30.0};
  std::vector<double> scales{0.0, 0.2, 0.25, 1.0 / 3.0};
  int replications = 500;
  std::uint64_t base_seed = 0;
  int threads = 1;
  int dictionary_size = 4;  ///< Legendre columns w_0..w_{L-1} per covariate
  CvConfig cv;              ///< main-fit tuning; LASSO-UMIDAS always uses gamma = 1
  NodewiseLambdaRule nodewise;
  SolverConfig solver;
  double level = 0.05;

  void validate() const {
    dgp.validate();
    if (replications < 1) throw InvalidArgument("experiment: replications must be >= 1");
    if (estimators.empty() || poolings.empty() || kernels.empty() || bandwidths.empty() || scales.empty())
      throw InvalidArgument("experiment: every grid dimension needs at least one value");
    for (double b : bandwidths)
      if (!(b > 0.0)) throw InvalidArgument("experiment: bandwidths must be > 0");
    for (double a : scales)
      if (!(a >= 0.0)) throw InvalidArgument("experiment: scales must be >= 0");
    if (dictionary_size < 1) throw InvalidArgument("experiment: dictionary_size must be >= 1");
    if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("experiment: level must lie in (0,1)");
    cv.validate();
    solver.validate();
  }
};

struct ExperimentCell {
  Estimator estimator = Estimator::kSgLassoMidas;
  Pooling pooling = Pooling::kPooled;
  Kernel kernel = Kernel::kParzen;
  double bandwidth = 0.0;
  double scale = 0.0;
  int rejections = 0;
  int valid = 0;     ///< replications that produced a test decision
  int failures = 0;  ///< non-convergence or singular covariance
  double frequency = 0.0;
  double mc_se = 0.0;
  bool flagged = false;  ///< failures above 1% of replications

  friend bool operator==(const ExperimentCell&, const ExperimentCell&) = default;
};

struct ExperimentResult {
  int replications = 0;
  std::uint64_t base_seed = 0;
  std::vector<ExperimentCell> cells;  ///< order: estimator, pooling, kernel, bandwidth, scale

  const ExperimentCell& cell(Estimator e, Pooling p, Kernel k, double bandwidth, double scale) const {
    for (const auto& c : cells)
      if (c.estimator == e && c.pooling == p && c.kernel == k && c.bandwidth == bandwidth && c.scale == scale) return c;
    throw InvalidArgument("experiment: no such cell");
  }

  friend bool operator==(const ExperimentResult&, const ExperimentResult&) = default;
};

namespace detail {

enum class Outcome : signed char { kAccept = 0, kReject = 1, kFail = -1 };

/// Test decisions for one replication and one scale, laid out as
/// estimator x pooling x kernel x bandwidth.
inline std::vector<Outcome> replicate(const ExperimentGrid& grid, std::uint64_t seed, double scale) {
  DgpConfig dgp = grid.dgp;
  dgp.seed = seed;
  dgp.weight_scale = scale;
  const PanelDataset data = simulate_panel(dgp);
  const std::size_t per_fit = grid.kernels.size() * grid.bandwidths.size();
  std::vector<Outcome> out;
  out.reserve(grid.estimators.size() * grid.poolings.size() * per_fit);
  for (Estimator est : grid.estimators) {
    const DesignProblem full = est == Estimator::kSgLassoMidas
                                   ? build_midas_design(data, grid.dictionary_size, InterceptMode::kPooled)
                                   : build_umidas_design(data, InterceptMode::kPooled);
    const auto& block = full.blocks.sets[static_cast<std::size_t>(grid.dgp.relevant_covariate)];
    CvConfig cv = grid.cv;
    cv.threads = 1;
    if (est == Estimator::kLassoUmidas) cv.gammas = {1.0};
    NodewiseLambdaRule rule = grid.nodewise;
    rule.cv.threads = 1;
    for (Pooling pool : grid.poolings) {
      std::vector<Outcome> cells(per_fit, Outcome::kFail);
      try {
        const DesignProblem problem = pool == Pooling::kPooled ? full : select_entities(full, {0});
        const CvResult tuned = cross_validate(problem, cv, grid.solver);
        const SgLassoFit fit = fit_pooled(problem, tuned.best_lambda, tuned.best_gamma, grid.solver);
        if (fit.diagnostics.converged) {
          const GrangerTest test(problem, fit, block, full.blocks.labels[grid.dgp.relevant_covariate], rule, grid.solver);
          if (test.precision().nonconverged == 0) {
            std::size_t c = 0;
            for (Kernel k : grid.kernels) {
              for (double bw : grid.bandwidths) {
                try {
                  const InferenceReport rep = test.test(HacConfig{k, bw});
                  cells[c] = rep.wald.p_value < grid.level ? Outcome::kReject : Outcome::kAccept;
                } catch (const SingularCovariance&) {
                }
                ++c;
              }
            }
          }
        }
      } catch (const NearSingularDesign&) {
      } catch (const DegenerateColumn&) {
      }
      out.insert(out.end(), cells.begin(), cells.end());
    }
  }
  return out;
}

}  // namespace detail

/// Runs every replication for every scale and aggregates rejection
/// frequencies in replication order. Replication r draws its panel from
/// derive_seed(base_seed, r) for every scale, so scales share common random
/// numbers, and the result does not depend on the thread count.
inline ExperimentResult run_experiment(const ExperimentGrid& grid) {
  grid.validate();
  const std::size_t R = static_cast<std::size_t>(grid.replications);
  const std::size_t S = grid.scales.size();
  std::vector<std::vector<detail::Outcome>> outcomes(R * S);
  parallel_for(R * S, grid.threads, [&](std::size_t task) {
    const std::size_t r = task / S;
    const std::size_t s = task % S;
    outcomes[task] = detail::replicate(grid, derive_seed(grid.base_seed, r), grid.scales[s]);
  });

  ExperimentResult res;
  res.replications = grid.replications;
  res.base_seed = grid.base_seed;
  std::size_t idx = 0;
  for (Estimator e : grid.estimators)
    for (Pooling p : grid.poolings)
      for (Kernel k : grid.kernels)
        for (double bw : grid.bandwidths) {
          for (std::size_t s = 0; s < S; ++s) {
            ExperimentCell cell{e, p, k, bw, grid.scales[s]};
            for (std::size_t r = 0; r < R; ++r) {
              const auto o = outcomes[r * S + s][idx];
              if (o == detail::Outcome::kFail) {
                ++cell.failures;
              } else {
                ++cell.valid;
                cell.rejections += o == detail::Outcome::kReject;
              }
            }
            if (cell.valid > 0) {
              cell.frequency = static_cast<double>(cell.rejections) / cell.valid;
              cell.mc_se = std::sqrt(cell.frequency * (1.0 - cell.frequency) / cell.valid);
            }
            cell.flagged = cell.failures * 100 > grid.replications;
            res.cells.push_back(cell);
          }
          ++idx;
        }
  return res;
}

// ---------------------------------------------------------------------------
// Output

/// Shortest decimal representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

/// Long-format CSV: one row per cell and statistic.
inline std::string experiment_csv(const ExperimentResult& res) {
  std::ostringstream os;
  os << "estimator,pooling,kernel,bandwidth,a,statistic,value\n";
  for (const auto& c : res.cells) {
    const std::string key = std::string(estimator_name(c.estimator)) + "," + pooling_name(c.pooling) + "," +
                            kernel_name(c.kernel) + "," + format_double(c.bandwidth) + "," + format_double(c.scale) + ",";
    os << key << "erf," << format_double(c.frequency) << "\n";
    os << key << "mc_se," << format_double(c.mc_se) << "\n";
    os << key << "rejections," << c.rejections << "\n";
    os << key << "valid," << c.valid << "\n";
    os << key << "failures," << c.failures << "\n";
    os << key << "flagged," << (c.flagged ? 1 : 0) << "\n";
  }
  os << "all,all,all,0,0,replications," << res.replications << "\n";
  os << "all,all,all,0,0,base_seed," << res.base_seed << "\n";
  return os.str();
}

namespace detail {

inline double parse_double(const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw InputError("experiment csv: bad number '" + s + "'");
  return v;
}

}  // namespace detail

/// Inverse of experiment_csv.
inline ExperimentResult parse_experiment_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(is, line) || line != "estimator,pooling,kernel,bandwidth,a,statistic,value")
    throw InputError("experiment csv: unexpected header", 1);
  ExperimentResult res;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string tok;
    while (std::getline(ls, tok, ',')) f.push_back(tok);
    if (f.size() != 7) throw InputError("experiment csv: expected 7 fields", lineno);
    if (f[0] == "all") {
      if (f[5] == "replications") res.replications = std::stoi(f[6]);
      else if (f[5] == "base_seed") res.base_seed = std::stoull(f[6]);
      continue;
    }
    const Estimator e = parse_estimator(f[0]);
    const Pooling p = parse_pooling(f[1]);
    const Kernel k = parse_kernel(f[2]);
    const double bw = detail::parse_double(f[3]);
    const double a = detail::parse_double(f[4]);
    if (res.cells.empty() || res.cells.back().estimator != e || res.cells.back().pooling != p ||
        res.cells.back().kernel != k || res.cells.back().bandwidth != bw || res.cells.back().scale != a)
      res.cells.push_back(ExperimentCell{e, p, k, bw, a});
    auto& c = res.cells.back();
    if (f[5] == "erf") c.frequency = detail::parse_double(f[6]);
    else if (f[5] == "mc_se") c.mc_se = detail::parse_double(f[6]);
    else if (f[5] == "rejections") c.rejections = std::stoi(f[6]);
    else if (f[5] == "valid") c.valid = std::stoi(f[6]);
    else if (f[5] == "failures") c.failures = std::stoi(f[6]);
    else if (f[5] == "flagged") c.flagged = f[6] == "1";
    else throw InputError("experiment csv: unknown statistic '" + f[5] + "'", lineno);
  }
  return res;
}

inline std::string scale_label(double a) {
  if (a == 0.0 || a >= 1.0) return format_double(a);
  const double inv = 1.0 / a;
  if (std::abs(inv - std::round(inv)) < 1e-9) return "1/" + std::to_string(static_cast<long>(std::round(inv)));
  return format_double(a);
}

/// Fixed-width table: one panel per pooling, kernels side by side, bandwidths
/// as rows and scales as columns, estimators stacked.
inline std::string experiment_table(const ExperimentResult& res, const ExperimentGrid& grid) {
  std::ostringstream os;
  char buf[64];
  for (Pooling p : grid.poolings) {
    os << (p == Pooling::kPooled ? "Pooled Panel" : "Individual Regressions (entity 1)") << "\n";
    os << "M_T\\a   ";
    for (std::size_t k = 0; k < grid.kernels.size(); ++k) {
      os << " |";
      for (double a : grid.scales) {
        std::snprintf(buf, sizeof buf, " %7s", scale_label(a).c_str());
        os << buf;
      }
    }
    os << "\n";
    for (Estimator e : grid.estimators) {
      os << estimator_name(e) << " (";
      for (std::size_t k = 0; k < grid.kernels.size(); ++k) os << (k ? " | " : "") << kernel_name(grid.kernels[k]);
      os << ")\n";
      for (double bw : grid.bandwidths) {
        std::snprintf(buf, sizeof buf, "%-8s", format_double(bw).c_str());
        os << buf;
        for (Kernel k : grid.kernels) {
          os << " |";
          for (double a : grid.scales) {
            const auto& c = res.cell(e, p, k, bw, a);
            std::snprintf(buf, sizeof buf, " %6.3f%s", c.frequency, c.flagged ? "!" : " ");
            os << buf;
          }
        }
        os << "\n";
      }
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace sglpanel
