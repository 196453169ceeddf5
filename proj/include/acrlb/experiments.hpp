#ifndef ACRLB_EXPERIMENTS_HPP
#define ACRLB_EXPERIMENTS_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "acrlb/bound.hpp"
#include "acrlb/error.hpp"
#include "acrlb/estimation.hpp"
#include "acrlb/model.hpp"
#include "acrlb/report.hpp"
#include "acrlb/rng.hpp"

namespace acrlb {

struct ExperimentConfig {
  FamilyPtr family;
  Vector theta_star;
  std::vector<Vector> theta_grid;  // bound sweep only; empty means {theta_star}
  std::vector<double> alphas;
  std::vector<int> ns;
  std::vector<double> epsilons{0.0};
  std::optional<Pmf> delta;
  std::size_t trials = 1;
  std::uint64_t seed = 0;
  std::vector<std::string> estimators{"sample_mean"};
  std::string output_path;
  std::string output_format = "csv";
  EnumerationOptions enumeration;
  FitOptions fit;
  unsigned threads = 1;  // Monte Carlo workers; 0 = hardware concurrency
};

/// Built-in estimators by name: sample_mean, mle, bhhj:<alpha>.
inline EstimatorFn make_estimator(const FamilyPtr& family, const std::string& name,
                                  const FitOptions& fit = {}) {
  if (name == "sample_mean" || name == "mle") return sample_mean_estimator(family, name);
  if (name.rfind("bhhj:", 0) == 0) {
    double alpha = 0.0;
    try {
      std::size_t used = 0;
      alpha = std::stod(name.substr(5), &used);
      if (used != name.size() - 5) throw std::invalid_argument(name);
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidArgument, "cannot read alpha in estimator '" + name + "'");
    }
    return bhhj_estimator(family, alpha, fit);
  }
  throw Error(ErrorKind::InvalidArgument,
              "unknown estimator '" + name + "' (expected sample_mean, mle or bhhj:<alpha>)");
}

namespace detail {

inline void require_grids(const ExperimentConfig& c, bool need_alpha, bool need_n) {
  if (!c.family) throw Error(ErrorKind::InvalidArgument, "experiment needs a family");
  if (need_alpha && c.alphas.empty()) throw Error(ErrorKind::InvalidArgument, "alpha grid is empty");
  if (need_n && c.ns.empty()) throw Error(ErrorKind::InvalidArgument, "n grid is empty");
  if (c.epsilons.empty()) throw Error(ErrorKind::InvalidArgument, "epsilon grid is empty");
  if (c.trials < 1) throw Error(ErrorKind::InvalidArgument, "trials must be at least 1");
  for (double a : c.alphas) require_alpha(a);
  for (int n : c.ns) {
    if (n < 1) throw Error(ErrorKind::InvalidArgument, "every n must be at least 1");
  }
}

inline nlohmann::ordered_json vector_json(const Vector& v) {
  auto arr = nlohmann::ordered_json::array();
  for (double x : v) arr.push_back(x);
  return arr;
}

inline nlohmann::ordered_json config_echo(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["family"] = c.family->name();
  j["theta_star"] = vector_json(c.theta_star);
  auto grid = nlohmann::ordered_json::array();
  for (const auto& t : c.theta_grid) grid.push_back(vector_json(t));
  j["theta_grid"] = std::move(grid);
  j["alphas"] = c.alphas;
  j["ns"] = c.ns;
  j["epsilons"] = c.epsilons;
  j["delta"] = c.delta ? vector_json(c.delta->probs()) : nlohmann::ordered_json(nullptr);
  j["trials"] = c.trials;
  j["seed"] = c.seed;
  j["estimators"] = c.estimators;
  j["budget"] = c.enumeration.budget;
  return j;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace detail

//------------------------------------------------------------------------------
// Aggregates
//------------------------------------------------------------------------------

struct Aggregate {
  std::size_t count = 0;  // converged records used
  std::size_t fail_count = 0;
  Vector mean;
  Vector bias;
  Vector variance;  // per component, divisor = count
  Matrix covariance;
  double mse = 0.0;  // mean of ||theta_hat - theta_star||^2
};

/// Aggregates over converged records matching (estimator, alpha, epsilon, n), in record order.
inline Aggregate aggregate_records(const std::vector<TrialRecord>& records,
                                   const std::string& estimator, double alpha, double epsilon,
                                   int n, const Vector& theta_star) {
  const auto k = theta_star.size();
  Aggregate agg;
  std::vector<const TrialRecord*> used;
  for (const auto& r : records) {
    if (r.estimator != estimator || r.alpha != alpha || r.epsilon != epsilon || r.n != n) continue;
    if (!r.converged) {
      ++agg.fail_count;
      continue;
    }
    used.push_back(&r);
  }
  agg.count = used.size();
  if (used.empty()) return agg;
  const double count = static_cast<double>(used.size());
  CompensatedSum sum(k, 1);
  for (const auto* r : used) sum.add(r->theta_hat);
  agg.mean = sum.value().col(0) / count;
  CompensatedSum cov(k, k);
  CompensatedSum sq(1, 1);
  for (const auto* r : used) {
    const Vector c = r->theta_hat - agg.mean;
    cov.add(c * c.transpose());
    sq.add_scalar((r->theta_hat - theta_star).squaredNorm());
  }
  agg.covariance = cov.value() / count;
  agg.variance = agg.covariance.diagonal();
  agg.bias = agg.mean - theta_star;
  agg.mse = sq.scalar() / count;
  return agg;
}

//------------------------------------------------------------------------------
// Bound sweep
//------------------------------------------------------------------------------

inline const std::vector<std::string>& bound_sweep_columns() {
  static const std::vector<std::string> cols{"family", "theta", "alpha", "n",   "estimator",
                                             "cov",    "bound", "gap",   "min_eig", "psd",
                                             "tangency_residual"};
  return cols;
}

inline std::vector<Cell> bound_report_row(const BoundReport& r) {
  return {r.family,
          vector_cell(r.theta),
          r.alpha,
          static_cast<std::int64_t>(r.n),
          r.estimator,
          matrix_cell(r.covariance),
          matrix_cell(r.bound),
          matrix_cell(r.gap),
          r.min_gap_eigenvalue,
          r.psd,
          r.tangency_residual};
}

/// One exact-enumeration BoundReport per (theta, alpha, n, estimator), in that nesting order.
inline Report run_bound_sweep(const ExperimentConfig& config) {
  detail::require_grids(config, true, true);
  if (config.estimators.empty()) throw Error(ErrorKind::InvalidArgument, "no estimators given");
  const detail::Stopwatch clock;
  std::vector<Vector> thetas = config.theta_grid;
  if (thetas.empty()) thetas.push_back(config.theta_star);
  for (const auto& t : thetas) require_domain(*config.family, t);

  Report report;
  report.kind = "bound_sweep";
  report.config = detail::config_echo(config);
  report.columns = bound_sweep_columns();
  std::vector<EstimatorFn> estimators;
  for (const auto& name : config.estimators) {
    estimators.push_back(make_estimator(config.family, name, config.fit));
  }
  EnumerationOptions opts = config.enumeration;
  opts.threads = config.threads;
  for (const auto& theta : thetas) {
    for (double alpha : config.alphas) {
      for (int n : config.ns) {
        for (const auto& est : estimators) {
          try {
            report.rows.push_back(
                bound_report_row(bound_gap(config.family, est, theta, alpha, n, opts)));
          } catch (const Error& e) {
            std::ostringstream msg;
            msg << "cell theta=" << format_vector(theta) << " alpha=" << alpha << " n=" << n
                << " estimator=" << est.name << ": " << e.message();
            throw Error(e.kind(), msg.str());
          }
        }
      }
    }
  }
  report.wall_clock_seconds = clock.seconds();
  return report;
}

//------------------------------------------------------------------------------
// Monte Carlo studies
//------------------------------------------------------------------------------

namespace detail {

/// Fits for one trial: BHHJ at each alpha (MLE where alpha = 0 and use_mle_at_zero), then MLE.
inline std::vector<TrialRecord> fit_trial(const ExperimentConfig& c, const Sample& data,
                                          std::size_t trial, std::uint64_t seed, double epsilon,
                                          int n, bool include_mle, bool use_mle_at_zero) {
  std::vector<TrialRecord> out;
  FitOptions fit = c.fit;
  fit.seed = seed;
  auto record = [&](const std::string& name, double alpha, auto&& fitter) {
    TrialRecord r{trial, seed, name, alpha, epsilon, n, Vector(), false};
    try {
      const FitResult res = fitter();
      r.theta_hat = res.theta_hat;
      r.converged = res.converged;
    } catch (const NonConvergenceError& e) {
      r.theta_hat = e.best().theta_hat;
      r.converged = false;
    }
    out.push_back(std::move(r));
  };
  for (double alpha : c.alphas) {
    if (use_mle_at_zero && alpha == 0.0) {
      record("mle", alpha, [&] { return fit_mle(c.family, data, fit); });
    } else {
      record("bhhj", alpha, [&] { return fit_bhhj(c.family, data, alpha, fit); });
    }
  }
  if (include_mle) record("mle", 0.0, [&] { return fit_mle(c.family, data, fit); });
  return out;
}

/// Runs `trials` trials of one data cell; records come back in trial order.
inline std::vector<TrialRecord> run_cell(const ExperimentConfig& c, const Pmf& source,
                                         std::uint64_t cell_index, double epsilon, int n,
                                         bool include_mle, bool use_mle_at_zero) {
  std::vector<std::vector<TrialRecord>> per_trial(c.trials);
  parallel_for_blocks(c.trials, c.threads, [&](std::size_t t) {
    const std::uint64_t seed = mix(c.seed, cell_index, t);
    const Sample data = sample_iid(source, static_cast<std::size_t>(n), seed);
    per_trial[t] = fit_trial(c, data, t, seed, epsilon, n, include_mle, use_mle_at_zero);
  });
  std::vector<TrialRecord> out;
  for (auto& v : per_trial) {
    for (auto& r : v) out.push_back(std::move(r));
  }
  return out;
}

inline void require_some_converged(const Aggregate& agg, const std::string& what) {
  if (agg.count == 0) {
    throw Error(ErrorKind::NonConvergence, "every trial failed to converge for " + what);
  }
}

}  // namespace detail

/// Bias, variance and MSE of BHHJ fits (one per alpha) and the MLE on samples drawn from
/// (1 - eps) p_theta* + eps delta. Data cell (eps, n) has index e * |ns| + j and trial t
/// uses seed mix(seed, cell, t); every alpha in a trial sees the same sample.
inline Report run_contamination_study(const ExperimentConfig& config) {
  detail::require_grids(config, true, true);
  const detail::Stopwatch clock;
  const ParametricFamily& fam = *config.family;
  require_domain(fam, config.theta_star);
  for (double eps : config.epsilons) {
    if (eps > 0.0 && !config.delta) {
      throw Error(ErrorKind::InvalidArgument, "a contaminating delta is required when epsilon > 0");
    }
  }

  Report report;
  report.kind = "contamination_study";
  report.config = detail::config_echo(config);
  report.columns = {"epsilon",   "n",        "alpha",   "trials",          "bhhj_bias",
                    "bhhj_var",  "bhhj_mse", "bhhj_fail_count", "mle_bias", "mle_var",
                    "mle_mse",   "mle_fail_count"};
  for (std::size_t e = 0; e < config.epsilons.size(); ++e) {
    const double eps = config.epsilons[e];
    const Pmf source = eps > 0.0 ? mixture_pmf(fam, config.theta_star,
                                               ContaminationSpec(eps, *config.delta))
                                 : pmf_eval(fam, config.theta_star);
    for (std::size_t j = 0; j < config.ns.size(); ++j) {
      const int n = config.ns[j];
      const auto cell = static_cast<std::uint64_t>(e * config.ns.size() + j);
      auto records = detail::run_cell(config, source, cell, eps, n, true, false);
      const Aggregate mle = aggregate_records(records, "mle", 0.0, eps, n, config.theta_star);
      detail::require_some_converged(mle, "the MLE");
      for (double alpha : config.alphas) {
        const Aggregate b = aggregate_records(records, "bhhj", alpha, eps, n, config.theta_star);
        detail::require_some_converged(b, "BHHJ fits");
        report.rows.push_back({eps, static_cast<std::int64_t>(n), alpha,
                               static_cast<std::int64_t>(config.trials), vector_cell(b.bias),
                               vector_cell(b.variance), b.mse,
                               static_cast<std::int64_t>(b.fail_count), vector_cell(mle.bias),
                               vector_cell(mle.variance), mle.mse,
                               static_cast<std::int64_t>(mle.fail_count)});
      }
      for (auto& r : records) report.records.push_back(std::move(r));
    }
  }
  report.wall_clock_seconds = clock.seconds();
  return report;
}

/// Largest relative deviation accepted between n Var(MLE) and [G(theta)]^-1.
inline constexpr double kClassicalAsymptoticTolerance = 0.10;

/// n x Monte Carlo covariance of the fitted estimator next to n [I_n]^-1 (factorized
/// moments) and the single-observation sandwich [G_1 K_1^-1 G_1]^-1. Only alpha = 0 rows
/// carry a hard check (against [G]^-1); the others are informational.
inline Report run_asymptotic_diagnostic(const ExperimentConfig& config) {
  detail::require_grids(config, true, true);
  for (double eps : config.epsilons) {
    if (eps != 0.0) {
      throw Error(ErrorKind::InvalidArgument, "the asymptotic diagnostic runs on the clean model");
    }
  }
  const detail::Stopwatch clock;
  const ParametricFamily& fam = *config.family;
  const Pmf source = pmf_eval(fam, config.theta_star);

  Report report;
  report.kind = "asymptotic_diagnostic";
  report.config = detail::config_echo(config);
  report.columns = {"alpha",     "n",      "estimator", "trials",    "fail_count", "mean",
                    "n_mc_cov", "n_inv_In", "inv_I1",   "rel_error", "check"};
  for (std::size_t j = 0; j < config.ns.size(); ++j) {
    const int n = config.ns[j];
    auto records = detail::run_cell(config, source, j, 0.0, n, false, true);
    for (double alpha : config.alphas) {
      const std::string name = alpha == 0.0 ? "mle" : "bhhj";
      const Aggregate agg = aggregate_records(records, name, alpha, 0.0, n, config.theta_star);
      detail::require_some_converged(agg, name);
      const Matrix n_cov = static_cast<double>(n) * agg.covariance;
      const auto k = config.theta_star.size();
      Matrix n_inv_in = Matrix::Constant(k, k, std::numeric_limits<double>::quiet_NaN());
      Matrix inv_i1 = n_inv_in;
      try {
        n_inv_in = static_cast<double>(n) *
                   factorized_inverse_information(config.family, config.theta_star, alpha, n);
      } catch (const Error&) {
      }
      try {
        inv_i1 = factorized_inverse_information(config.family, config.theta_star, alpha, 1);
      } catch (const Error&) {
      }
      const double rel = relative_deviation(n_cov, inv_i1);
      std::string check = "info";
      if (alpha == 0.0) check = rel <= kClassicalAsymptoticTolerance ? "pass" : "fail";
      report.rows.push_back({alpha, static_cast<std::int64_t>(n), name,
                             static_cast<std::int64_t>(config.trials),
                             static_cast<std::int64_t>(agg.fail_count), vector_cell(agg.mean),
                             matrix_cell(n_cov), matrix_cell(n_inv_in), matrix_cell(inv_i1), rel,
                             check});
    }
    for (auto& r : records) report.records.push_back(std::move(r));
  }
  report.wall_clock_seconds = clock.seconds();
  return report;
}

}  // namespace acrlb

#endif  // ACRLB_EXPERIMENTS_HPP
