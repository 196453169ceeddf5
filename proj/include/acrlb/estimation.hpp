#ifndef ACRLB_ESTIMATION_HPP
#define ACRLB_ESTIMATION_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "acrlb/error.hpp"
#include "acrlb/geometry.hpp"
#include "acrlb/linalg.hpp"
#include "acrlb/model.hpp"
#include "acrlb/rng.hpp"

namespace acrlb {

struct FitOptions {
  int max_iterations = 200;
  double gradient_tolerance = 1e-10;
  int starts = 5;
  std::uint64_t seed = 0;
  int max_halvings = 50;
};

struct FitResult {
  Vector theta_hat;
  double objective = -std::numeric_limits<double>::infinity();
  double gradient_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  int start_index = 0;
  /// Objective after each accepted step of the winning start (first entry = start point).
  std::vector<double> objective_trace;
};

/// Raised when no start reaches the gradient tolerance; carries the best attempt.
class NonConvergenceError : public Error {
 public:
  explicit NonConvergenceError(FitResult best, const std::string& message)
      : Error(ErrorKind::NonConvergence, message), best_(std::move(best)) {}

  const FitResult& best() const noexcept { return best_; }

 private:
  FitResult best_;
};

/// Map from an n-tuple of outcomes to a parameter vector. Must be pure and thread-safe.
struct EstimatorFn {
  std::string name;
  std::string family;
  std::function<Vector(std::span<const Outcome>)> map;

  Vector operator()(std::span<const Outcome> x) const { return map(x); }
};

namespace detail {

inline std::vector<double> frequencies(const ParametricFamily& family,
                                       std::span<const Outcome> data) {
  if (data.empty()) throw Error(ErrorKind::EmptyData, "data set is empty");
  std::vector<double> f = outcome_counts(data, family.alphabet_size());
  for (double& v : f) v /= static_cast<double>(data.size());
  return f;
}

struct ObjectiveValue {
  double value = -std::numeric_limits<double>::infinity();
  Vector gradient;  // d/d theta
};

/// BHHJ objective and its theta-gradient from outcome frequencies, without domain checks.
///   alpha != 0: sum_x f_x ((1+a) p^a - 1)/a - sum_x p^(1+a)
///   alpha == 0: sum_x f_x log p
///   gradient:   (1+a) sum_x (f_x p^(a-1) - p^a) d p_x / d theta
inline ObjectiveValue evaluate_objective(const ParametricFamily& family, const Vector& theta,
                                         std::span<const double> freq, double alpha) {
  ObjectiveValue out;
  const Vector p = family.probabilities(theta);
  if (!(p.minCoeff() > 0.0) || !p.allFinite()) return out;
  const Matrix jac = family.jacobian(theta);
  CompensatedSum value(1, 1);
  Vector weights(p.size());
  for (Eigen::Index x = 0; x < p.size(); ++x) {
    const double f = freq[static_cast<std::size_t>(x)];
    if (alpha == 0.0) {
      if (f > 0.0) value.add_scalar(f * std::log(p[x]));
      weights[x] = f / p[x] - 1.0;
    } else {
      const double pa = std::pow(p[x], alpha);
      if (f > 0.0) value.add_scalar(f * ((1.0 + alpha) * pa - 1.0) / alpha);
      value.add_scalar(-p[x] * pa);
      weights[x] = (1.0 + alpha) * (f * pa / p[x] - pa);
    }
  }
  out.value = value.scalar();
  out.gradient = jac.transpose() * weights;
  return out;
}

inline double convergence_measure(const Vector& grad_theta, double alpha) {
  const double norm = grad_theta.norm();
  return std::max(norm, norm / (1.0 + alpha));
}

inline constexpr double kEtaLimit = 25.0;

}  // namespace detail

/// The BHHJ likelihood l_n^(a)(theta; x); at alpha = 0 the mean log-likelihood.
inline double bhhj_objective(const ParametricFamily& family, const Vector& theta,
                             std::span<const Outcome> data, double alpha) {
  require_alpha(alpha);
  require_domain(family, theta);
  const auto freq = detail::frequencies(family, data);
  return detail::evaluate_objective(family, theta, freq, alpha).value;
}

/// Analytic theta-gradient of bhhj_objective.
inline Vector bhhj_objective_gradient(const ParametricFamily& family, const Vector& theta,
                                      std::span<const Outcome> data, double alpha) {
  require_alpha(alpha);
  require_domain(family, theta);
  const auto freq = detail::frequencies(family, data);
  return detail::evaluate_objective(family, theta, freq, alpha).gradient;
}

/// (1/n) sum_i p(x_i)^a s(x_i) - E_theta[p^a s].
inline Vector estimating_residual(const ParametricFamily& family, const Vector& theta,
                                  std::span<const Outcome> data, double alpha) {
  require_alpha(alpha);
  const Pmf p = pmf_eval(family, theta);
  const auto freq = detail::frequencies(family, data);
  const Matrix jac = family.jacobian(theta);
  Vector weights(p.size());
  for (int x = 0; x < p.size(); ++x) {
    const double pa = alpha == 0.0 ? 1.0 : std::pow(p[x], alpha);
    weights[x] = freq[static_cast<std::size_t>(x)] * pa / p[x] - pa;
  }
  return jac.transpose() * weights;
}

namespace detail {

struct EtaPoint {
  Vector eta;
  Vector theta;
  ObjectiveValue objective;
  Vector grad_eta;
};

inline EtaPoint evaluate_at(const ParametricFamily& family, const Vector& eta,
                            std::span<const double> freq, double alpha) {
  EtaPoint pt;
  pt.eta = eta.cwiseMax(-kEtaLimit).cwiseMin(kEtaLimit);
  pt.theta = family.from_unconstrained(pt.eta);
  pt.objective = evaluate_objective(family, pt.theta, freq, alpha);
  if (std::isfinite(pt.objective.value)) {
    pt.grad_eta = family.unconstrained_jacobian(pt.eta).transpose() * pt.objective.gradient;
  }
  return pt;
}

/// Safeguarded Newton ascent in the unconstrained chart, Hessian by central differences of
/// the analytic gradient, steepest ascent when that Hessian is not negative definite.
inline FitResult newton_ascent(const ParametricFamily& family, const Vector& eta0,
                               std::span<const double> freq, double alpha,
                               const FitOptions& options, int start_index) {
  FitResult result;
  result.start_index = start_index;
  EtaPoint cur = evaluate_at(family, eta0, freq, alpha);
  const int k = family.dim();
  auto finish = [&](int iterations) {
    result.theta_hat = cur.theta;
    result.objective = cur.objective.value;
    result.iterations = iterations;
    if (std::isfinite(cur.objective.value)) {
      result.gradient_norm = cur.objective.gradient.norm();
      result.converged = convergence_measure(cur.objective.gradient, alpha) <=
                         options.gradient_tolerance;
    }
    return result;
  };
  if (!std::isfinite(cur.objective.value)) return finish(0);
  result.objective_trace.push_back(cur.objective.value);

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    if (convergence_measure(cur.objective.gradient, alpha) <= options.gradient_tolerance) {
      return finish(iter);
    }
    Matrix hessian(k, k);
    bool hessian_ok = true;
    for (int j = 0; j < k && hessian_ok; ++j) {
      const double h = 1e-5 * (1.0 + std::abs(cur.eta[j]));
      Vector up = cur.eta, down = cur.eta;
      up[j] += h;
      down[j] -= h;
      const EtaPoint a = evaluate_at(family, up, freq, alpha);
      const EtaPoint b = evaluate_at(family, down, freq, alpha);
      if (!std::isfinite(a.objective.value) || !std::isfinite(b.objective.value)) {
        hessian_ok = false;
        break;
      }
      hessian.col(j) = (a.grad_eta - b.grad_eta) / (a.eta[j] - b.eta[j]);
    }
    Vector direction = cur.grad_eta;
    double scale = 1.0;
    if (hessian_ok) {
      const Matrix neg = -symmetrize(hessian);
      Eigen::LLT<Matrix> llt(neg);
      if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0) {
        direction = llt.solve(cur.grad_eta);
      }
    }
    if (direction.dot(cur.grad_eta) <= 0.0 || !direction.allFinite()) direction = cur.grad_eta;
    const double max_move = direction.cwiseAbs().maxCoeff();
    if (max_move > 5.0) scale = 5.0 / max_move;

    const double slack = 8.0 * std::numeric_limits<double>::epsilon() *
                         (1.0 + std::abs(cur.objective.value));
    bool accepted = false;
    for (int halving = 0; halving <= options.max_halvings; ++halving) {
      EtaPoint cand = evaluate_at(family, cur.eta + scale * direction, freq, alpha);
      if (std::isfinite(cand.objective.value)) {
        const bool better = cand.objective.value > cur.objective.value;
        const bool flat = cand.objective.value >= cur.objective.value - slack &&
                          cand.objective.gradient.norm() < cur.objective.gradient.norm();
        if (better || flat) {
          cur = std::move(cand);
          accepted = true;
          break;
        }
      }
      scale *= 0.5;
    }
    if (!accepted) return finish(iter + 1);
    result.objective_trace.push_back(cur.objective.value);
  }
  return finish(options.max_iterations);
}

inline void validate(const FitOptions& options) {
  if (options.max_iterations < 1 || options.starts < 1 || options.max_halvings < 1 ||
      !(options.gradient_tolerance > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "fit options must all be positive");
  }
}

/// Start point: the MLE, pulled toward the chart origin if it sits on the boundary.
inline Vector initial_theta(const ParametricFamily& family, std::span<const double> freq) {
  const Vector mle = family.closed_form_mle(freq);
  if (family.contains(mle, 1e-8)) return mle;
  const Vector center = family.from_unconstrained(Vector::Zero(family.dim()));
  constexpr double tau = 1e-6;
  return (1.0 - tau) * mle + tau * center;
}

}  // namespace detail

/// Maximizer of the BHHJ objective by multi-start safeguarded Newton ascent.
/// Start 0 is the MLE; start s > 0 perturbs it by U[-1, 1]^k in the unconstrained chart
/// using CounterRng(mix(seed, s)). The converged start with the highest objective wins,
/// ties going to the lower start index.
inline FitResult fit_bhhj(const FamilyPtr& family, std::span<const Outcome> data, double alpha,
                          const FitOptions& options = {}) {
  require_alpha(alpha);
  detail::validate(options);
  const auto freq = detail::frequencies(*family, data);
  const Vector eta0 = family->to_unconstrained(detail::initial_theta(*family, freq));

  FitResult best;
  bool have_converged = false;
  FitResult best_any;
  for (int s = 0; s < options.starts; ++s) {
    Vector eta = eta0;
    if (s > 0) {
      CounterRng rng(mix(options.seed, static_cast<std::uint64_t>(s)));
      for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] += 2.0 * rng.uniform() - 1.0;
    }
    FitResult r = detail::newton_ascent(*family, eta, freq, alpha, options, s);
    if (r.converged && (!have_converged || r.objective > best.objective)) {
      best = r;
      have_converged = true;
    }
    if (s == 0 || r.objective > best_any.objective) best_any = std::move(r);
  }
  if (!have_converged) {
    throw NonConvergenceError(best_any, "no start reached the gradient tolerance for " +
                                            family->name());
  }
  return best;
}

/// Maximum-likelihood estimate from the closed form of the family.
inline FitResult fit_mle(const FamilyPtr& family, std::span<const Outcome> data,
                         const FitOptions& options = {}) {
  const auto freq = detail::frequencies(*family, data);
  FitResult r;
  r.theta_hat = family->closed_form_mle(freq);
  r.iterations = 0;
  r.start_index = 0;
  if (!family->contains(r.theta_hat, kDomainMargin)) {
    r.gradient_norm = std::numeric_limits<double>::quiet_NaN();
    throw NonConvergenceError(r, "maximum-likelihood estimate " + format_vector(r.theta_hat) +
                                     " lies on the boundary of " + family->domain_description());
  }
  const auto value = detail::evaluate_objective(*family, r.theta_hat, freq, 0.0);
  r.objective = value.value;
  r.gradient_norm = value.gradient.norm();
  r.converged = r.gradient_norm <= options.gradient_tolerance;
  r.objective_trace = {r.objective};
  if (!r.converged) {
    throw NonConvergenceError(r, "closed-form MLE fails the gradient tolerance");
  }
  return r;
}

//------------------------------------------------------------------------------
// Estimators
//------------------------------------------------------------------------------

/// Closed-form MLE (sample mean, empirical frequencies, mean / trials).
inline EstimatorFn sample_mean_estimator(const FamilyPtr& family, std::string name = "sample_mean") {
  FamilyPtr fam = family;
  return {std::move(name), family->name(), [fam](std::span<const Outcome> x) {
            const auto counts = outcome_counts(x, fam->alphabet_size());
            return fam->closed_form_mle(counts);
          }};
}

inline EstimatorFn constant_estimator(const FamilyPtr& family, Vector value) {
  return {"constant", family->name(), [value](std::span<const Outcome>) { return value; }};
}

/// theta_hat of fit_bhhj; the best attempt when no start converges.
inline EstimatorFn bhhj_estimator(const FamilyPtr& family, double alpha, FitOptions options = {}) {
  require_alpha(alpha);
  FamilyPtr fam = family;
  std::ostringstream name;
  name << "bhhj:" << alpha;
  return {name.str(), family->name(), [fam, alpha, options](std::span<const Outcome> x) {
            try {
              return fit_bhhj(fam, x, alpha, options).theta_hat;
            } catch (const NonConvergenceError& e) {
              return e.best().theta_hat;
            }
          }};
}

/// Estimator outputs for every outcome tuple of the product model, one row each.
inline Matrix tabulate_estimator(const ProductModel& model, const EstimatorFn& estimator,
                                 const EnumerationOptions& opts = {}) {
  model.require_within(opts.budget);
  const auto count = static_cast<std::size_t>(model.outcome_count());
  const int k = model.dim();
  Matrix out(static_cast<Eigen::Index>(count), k);
  const std::size_t blocks = (count + kBlockSize - 1) / kBlockSize;
  parallel_for_blocks(blocks, opts.threads, [&](std::size_t b) {
    Sample tuple(static_cast<std::size_t>(model.n()));
    const std::size_t end = std::min(count, (b + 1) * kBlockSize);
    for (std::size_t i = b * kBlockSize; i < end; ++i) {
      model.decode(i, tuple);
      const Vector v = estimator(tuple);
      if (v.size() != k) {
        throw Error(ErrorKind::InvalidArgument,
                    "estimator " + estimator.name + " returned the wrong dimension");
      }
      out.row(static_cast<Eigen::Index>(i)) = v.transpose();
    }
  });
  return out;
}

/// E_theta[theta_hat] - theta by exhaustive enumeration of X^n.
inline Vector exact_bias(const FamilyPtr& family, const EstimatorFn& estimator, const Vector& theta,
                         int n, const EnumerationOptions& opts = {}) {
  const ProductModel model(family, n);
  const JointTable table = model.tabulate(theta, opts);
  const Matrix est = tabulate_estimator(model, estimator, opts);
  const int k = family->dim();
  const Matrix mean = ordered_sum(table.count, k, 1, opts.threads, [&](CompensatedSum& acc,
                                                                       std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    acc.add(std::exp(table.log_p[row]) * est.row(row).transpose());
  });
  return mean.col(0) - theta;
}

}  // namespace acrlb

#endif  // ACRLB_ESTIMATION_HPP
