#ifndef ACRLB_BOUND_HPP
#define ACRLB_BOUND_HPP

#include <algorithm>
#include <cmath>
#include <string>

#include "acrlb/error.hpp"
#include "acrlb/estimation.hpp"
#include "acrlb/geometry.hpp"
#include "acrlb/linalg.hpp"
#include "acrlb/model.hpp"

namespace acrlb {

/// Unbiasedness threshold on the exact bias norm.
inline constexpr double kBiasTolerance = 1e-10;
/// Gap size at or below which the bound is treated as attained.
inline constexpr double kEqualityTolerance = 1e-10;

struct JointMatrices {
  Matrix g;  // E[p^a s s^T]
  Matrix k;  // V[p^a s]
  Matrix i;  // G K^-1 G
};

/// G_n, K_n and I_n = G_n K_n^-1 G_n of the joint model on X^n by enumeration.
inline JointMatrices joint_alpha_matrices(const FamilyPtr& family, const Vector& theta,
                                          double alpha, int n,
                                          const EnumerationOptions& opts = {}) {
  require_alpha(alpha);
  const ProductModel model(family, n);
  const JointTable t = model.tabulate(theta, opts);
  const int k = family->dim();
  auto row = [](std::size_t i) { return static_cast<Eigen::Index>(i); };

  const Matrix g = ordered_sum(t.count, k, k, opts.threads, [&](CompensatedSum& acc, std::size_t i) {
    const Vector s = t.score.row(row(i)).transpose();
    acc.add(std::exp((1.0 + alpha) * t.log_p[row(i)]) * (s * s.transpose()));
  });
  // Two passes for the variance: mean of p^a s, then centered second moment.
  const Vector mu = ordered_sum(t.count, k, 1, opts.threads, [&](CompensatedSum& acc, std::size_t i) {
                      acc.add(std::exp((1.0 + alpha) * t.log_p[row(i)]) *
                              t.score.row(row(i)).transpose());
                    }).col(0);
  const Matrix kv = ordered_sum(t.count, k, k, opts.threads, [&](CompensatedSum& acc, std::size_t i) {
    const Vector v = std::exp(alpha * t.log_p[row(i)]) * t.score.row(row(i)).transpose() - mu;
    acc.add(std::exp(t.log_p[row(i)]) * (v * v.transpose()));
  });
  JointMatrices out{symmetrize(g), symmetrize(kv), Matrix()};
  const SpdFactor kf(out.k, "K_n");
  out.i = symmetrize(out.g * kf.solve(out.g));
  return out;
}

struct FactorizedMoments {
  Matrix g;
  Matrix k;
};

/// G_n and K_n from single-observation moments of the i.i.d. factorization:
///   c = E[p^a], J1 = E[p^a s s^T], mu = E[p^a s], d = E[p^2a], J2 = E[p^2a s s^T], nu = E[p^2a s]
///   G_n = n c^(n-1) J1 + n(n-1) c^(n-2) mu mu^T
///   K_n = n d^(n-1) J2 + n(n-1) d^(n-2) nu nu^T - n^2 c^(2(n-1)) mu mu^T
inline FactorizedMoments iid_factorized_moments(const FamilyPtr& family, const Vector& theta,
                                                double alpha, int n) {
  require_alpha(alpha);
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "n must be at least 1");
  const Pmf p = pmf_eval(*family, theta);
  const Matrix s = score_matrix(*family, theta);
  const int k = family->dim();
  double c = 0.0, d = 0.0;
  Matrix j1 = Matrix::Zero(k, k), j2 = Matrix::Zero(k, k);
  Vector mu = Vector::Zero(k), nu = Vector::Zero(k);
  for (int x = 0; x < p.size(); ++x) {
    const double pa = std::pow(p[x], alpha);
    const Vector sx = s.row(x).transpose();
    c += p[x] * pa;
    d += p[x] * pa * pa;
    mu += p[x] * pa * sx;
    nu += p[x] * pa * pa * sx;
    j1 += p[x] * pa * (sx * sx.transpose());
    j2 += p[x] * pa * pa * (sx * sx.transpose());
  }
  const double nn = n;
  FactorizedMoments out;
  out.g = nn * std::pow(c, nn - 1) * j1;
  out.k = nn * std::pow(d, nn - 1) * j2 - nn * nn * std::pow(c, 2 * (nn - 1)) * (mu * mu.transpose());
  if (n > 1) {
    out.g += nn * (nn - 1) * std::pow(c, nn - 2) * (mu * mu.transpose());
    out.k += nn * (nn - 1) * std::pow(d, nn - 2) * (nu * nu.transpose());
  }
  out.g = symmetrize(out.g);
  out.k = symmetrize(out.k);
  return out;
}

/// [I_n]^-1 = G_n^-1 K_n G_n^-1 from the factorized moments, with the common factors
/// c^(n-1) and d^(n-1) pulled out so large n neither underflows nor overflows prematurely.
inline Matrix factorized_inverse_information(const FamilyPtr& family, const Vector& theta,
                                             double alpha, int n) {
  const FactorizedMoments one = iid_factorized_moments(family, theta, alpha, 1);
  const Pmf p = pmf_eval(*family, theta);
  double c = 0.0, d = 0.0;
  for (int x = 0; x < p.size(); ++x) {
    c += std::pow(p[x], 1.0 + alpha);
    d += std::pow(p[x], 1.0 + 2.0 * alpha);
  }
  const Matrix s = score_matrix(*family, theta);
  const int k = family->dim();
  Vector mu = Vector::Zero(k), nu = Vector::Zero(k);
  for (int x = 0; x < p.size(); ++x) {
    mu += std::pow(p[x], 1.0 + alpha) * s.row(x).transpose();
    nu += std::pow(p[x], 1.0 + 2.0 * alpha) * s.row(x).transpose();
  }
  const double nn = n;
  // G_n / c^(n-1) and K_n / d^(n-1).
  const Matrix g = nn * one.g + nn * (nn - 1) / c * (mu * mu.transpose());
  const double ratio = std::exp((nn - 1) * (2.0 * std::log(c) - std::log(d)));
  const Matrix kk = nn * (one.k + mu * mu.transpose()) + nn * (nn - 1) / d * (nu * nu.transpose()) -
                    nn * nn * ratio * (mu * mu.transpose());
  const SpdFactor gf(g, "scaled G_n");
  const double scale = std::exp((nn - 1) * (std::log(d) - 2.0 * std::log(c)));
  return symmetrize(scale * gf.solve(Matrix(gf.solve(kk).transpose())));
}

namespace detail {

/// Escort weights p^(1-a) / Z over a table, and log Z.
struct EscortWeights {
  Vector weights;
  double log_z = 0.0;
};

inline EscortWeights escort_weights(const JointTable& t, double alpha, unsigned threads) {
  const Vector log_w = (1.0 - alpha) * t.log_p;
  const double shift = log_w.maxCoeff();
  const Vector w = (log_w.array() - shift).exp().matrix();
  const double total = ordered_sum(t.count, 1, 1, threads, [&](CompensatedSum& acc, std::size_t i) {
    acc.add_scalar(w[static_cast<Eigen::Index>(i)]);
  })(0, 0);
  return {w / total, shift + std::log(total)};
}

/// Weighted mean and covariance of the rows of `values` (two passes).
inline std::pair<Vector, Matrix> weighted_moments(const Matrix& values, const Vector& weights,
                                                  unsigned threads) {
  const auto count = static_cast<std::size_t>(values.rows());
  const int k = static_cast<int>(values.cols());
  const Vector mean = ordered_sum(count, k, 1, threads, [&](CompensatedSum& acc, std::size_t i) {
                        const auto r = static_cast<Eigen::Index>(i);
                        acc.add(weights[r] * values.row(r).transpose());
                      }).col(0);
  const Matrix cov = ordered_sum(count, k, k, threads, [&](CompensatedSum& acc, std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    const Vector c = values.row(r).transpose() - mean;
    acc.add(weights[r] * (c * c.transpose()));
  });
  return {mean, symmetrize(cov)};
}

inline Vector joint_probabilities(const JointTable& t) { return t.log_p.array().exp().matrix(); }

struct BoundTerms {
  Matrix g;      // G_n
  double log_z;  // log sum_y p(y)^(1-a)
};

inline BoundTerms bound_terms(const FamilyPtr& family, const Vector& theta, double alpha, int n,
                              const JointTable& t, unsigned threads) {
  const int k = family->dim();
  if (alpha == 0.0) {
    return {static_cast<double>(n) * fisher_matrix(*family, theta).entries, 0.0};
  }
  const Matrix g = ordered_sum(t.count, k, k, threads, [&](CompensatedSum& acc, std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    const Vector s = t.score.row(r).transpose();
    acc.add(std::exp((1.0 + alpha) * t.log_p[r]) * (s * s.transpose()));
  });
  return {symmetrize(g), escort_weights(t, alpha, threads).log_z};
}

}  // namespace detail

/// (1 / sum_y p(y)^(1-a)) [G_n^(a)]^-1; at alpha = 0 the classical [n G]^-1.
inline Matrix generalized_crlb(const FamilyPtr& family, const Vector& theta, double alpha, int n,
                               const EnumerationOptions& opts = {}) {
  require_alpha(alpha);
  const ProductModel model(family, n);
  const JointTable t = model.tabulate(theta, opts);
  const auto terms = detail::bound_terms(family, theta, alpha, n, t, opts.threads);
  return std::exp(-terms.log_z) * SpdFactor(terms.g, "G_n").inverse();
}

/// Covariance of the estimator under the joint escort p_theta(x)^(1-a) / Z.
inline Matrix escort_covariance_exact(const FamilyPtr& family, const EstimatorFn& estimator,
                                      const Vector& theta, double alpha, int n,
                                      const EnumerationOptions& opts = {}) {
  require_alpha(alpha);
  const ProductModel model(family, n);
  const JointTable t = model.tabulate(theta, opts);
  const Matrix est = tabulate_estimator(model, estimator, opts);
  const auto w = detail::escort_weights(t, alpha, opts.threads);
  return detail::weighted_moments(est, w.weights, opts.threads).second;
}

namespace detail {

/// Root of sum_j ||c_j - V beta_j||^2 in L2(escort): the part of the escort-centered
/// estimator outside span{p^a d_i log p}.
inline double tangency_residual(const JointTable& t, const Matrix& est, double alpha,
                                const EscortWeights& w, unsigned threads) {
  const int k = static_cast<int>(t.score.cols());
  const auto centered = weighted_moments(est, w.weights, threads);
  const Vector& mean = centered.first;
  auto span_vec = [&](Eigen::Index r) -> Vector {
    return std::exp(alpha * t.log_p[r]) * t.score.row(r).transpose();
  };
  const Matrix gram = ordered_sum(t.count, k, k, threads, [&](CompensatedSum& acc, std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    const Vector v = span_vec(r);
    acc.add(w.weights[r] * (v * v.transpose()));
  });
  const int q = static_cast<int>(est.cols());
  const Matrix rhs = ordered_sum(t.count, k, q, threads, [&](CompensatedSum& acc, std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    const Vector c = est.row(r).transpose() - mean;
    acc.add(w.weights[r] * (span_vec(r) * c.transpose()));
  });
  const Matrix beta = SpdFactor(gram, "tangent Gram matrix").solve(rhs);
  const double sq = ordered_sum(t.count, 1, 1, threads, [&](CompensatedSum& acc, std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    const Vector resid = est.row(r).transpose() - mean - beta.transpose() * span_vec(r);
    acc.add_scalar(w.weights[r] * resid.squaredNorm());
  })(0, 0);
  return std::sqrt(std::max(0.0, sq));
}

}  // namespace detail

/// Escort-L2 distance from theta_hat - E_a[theta_hat] to the alpha-tangent space of S_n.
/// Zero exactly when the generalized bound is attained by an unbiased estimator.
inline double tangency_residual(const FamilyPtr& family, const EstimatorFn& estimator,
                                const Vector& theta, double alpha, int n,
                                const EnumerationOptions& opts = {}) {
  require_alpha(alpha);
  const ProductModel model(family, n);
  const JointTable t = model.tabulate(theta, opts);
  const Matrix est = tabulate_estimator(model, estimator, opts);
  return detail::tangency_residual(t, est, alpha, detail::escort_weights(t, alpha, opts.threads),
                                   opts.threads);
}

struct BoundReport {
  std::string family;
  Vector theta;
  double alpha = 0.0;
  int n = 0;
  std::string estimator;
  Matrix covariance;  // escort covariance of theta_hat
  Matrix bound;
  Matrix gap;
  double min_gap_eigenvalue = 0.0;
  bool psd = false;
  double tangency_residual = 0.0;

  /// 1e-10 (1 + ||gap||_F).
  double psd_tolerance() const { return 1e-10 * (1.0 + gap.norm()); }
};

/// Escort covariance minus the generalized bound, with PSD and tangency diagnostics.
/// Requires an unbiased estimator (exact bias norm <= 1e-10).
inline BoundReport bound_gap(const FamilyPtr& family, const EstimatorFn& estimator,
                             const Vector& theta, double alpha, int n,
                             const EnumerationOptions& opts = {}) {
  require_alpha(alpha);
  const ProductModel model(family, n);
  const JointTable t = model.tabulate(theta, opts);
  const Matrix est = tabulate_estimator(model, estimator, opts);

  const Vector p = detail::joint_probabilities(t);
  const Vector mean = detail::weighted_moments(est, p, opts.threads).first;
  const Vector bias = mean - theta;
  if (bias.norm() > kBiasTolerance) {
    throw Error(ErrorKind::BiasedEstimator, estimator.name + " has exact bias " +
                                                format_vector(bias) + " at theta = " +
                                                format_vector(theta));
  }

  BoundReport r;
  r.family = family->name();
  r.theta = theta;
  r.alpha = alpha;
  r.n = n;
  r.estimator = estimator.name;
  const auto w = detail::escort_weights(t, alpha, opts.threads);
  r.covariance = detail::weighted_moments(est, w.weights, opts.threads).second;
  const auto terms = detail::bound_terms(family, theta, alpha, n, t, opts.threads);
  r.bound = std::exp(-terms.log_z) * SpdFactor(terms.g, "G_n").inverse();
  r.gap = symmetrize(r.covariance - r.bound);
  r.min_gap_eigenvalue = min_eigenvalue(r.gap);
  r.psd = r.min_gap_eigenvalue >= -r.psd_tolerance();
  r.tangency_residual = detail::tangency_residual(t, est, alpha, w, opts.threads);
  return r;
}

struct EscortVarianceSides {
  double lhs = 0.0;  // escort variance of A
  double rhs = 0.0;  // (1 / sum p^(1-a)) grad E[A]^T [G^(a)]^-1 grad E[A]
};

/// Both sides of the escort-variance identity on the full simplex, using the categorical
/// family in mixture coordinates (d_i E[A] = A(x_i) - A(x_m)).
inline EscortVarianceSides escort_variance_identity(const Pmf& p, const Vector& a, double alpha) {
  require_alpha(alpha);
  const int m = p.size();
  if (a.size() != m) throw Error(ErrorKind::SupportMismatch, "A must have one entry per symbol");
  const FamilyPtr simplex = make_categorical(m);
  const Vector theta = p.probs().head(m - 1);

  const Pmf pe = escort(p, alpha);
  CompensatedSum mean_acc(1, 1);
  for (int x = 0; x < m; ++x) mean_acc.add_scalar(pe[x] * a[x]);
  const double mean = mean_acc.scalar();
  CompensatedSum var_acc(1, 1);
  for (int x = 0; x < m; ++x) var_acc.add_scalar(pe[x] * (a[x] - mean) * (a[x] - mean));

  CompensatedSum z(1, 1);
  for (int x = 0; x < m; ++x) z.add_scalar(std::pow(p[x], 1.0 - alpha));
  const Vector grad = (a.head(m - 1).array() - a[m - 1]).matrix();
  const double norm_sq = differential_norm(*simplex, theta, alpha, grad);
  return {var_acc.scalar(), norm_sq / z.scalar()};
}

struct SandwichComparison {
  Matrix ordinary_covariance;  // V_theta[theta_hat]
  Matrix inverse_information;  // [I_n]^-1 = G_n^-1 K_n G_n^-1
  bool equality_config = false;
  double max_gap = 0.0;
};

/// Ordinary covariance of the estimator next to the inverse sandwich information.
/// equality_config: unbiased and the generalized bound attained within 1e-10.
inline SandwichComparison sandwich_covariance_check(const FamilyPtr& family, const EstimatorFn& estimator,
                                             const Vector& theta, double alpha, int n,
                                             const EnumerationOptions& opts = {}) {
  require_alpha(alpha);
  const ProductModel model(family, n);
  const JointTable t = model.tabulate(theta, opts);
  const Matrix est = tabulate_estimator(model, estimator, opts);
  const Vector p = detail::joint_probabilities(t);
  const auto ordinary = detail::weighted_moments(est, p, opts.threads);

  const JointMatrices jm = joint_alpha_matrices(family, theta, alpha, n, opts);
  const SpdFactor gf(jm.g, "G_n");
  SandwichComparison out;
  out.ordinary_covariance = ordinary.second;
  out.inverse_information = symmetrize(gf.solve(Matrix(gf.solve(jm.k).transpose())));

  const auto w = detail::escort_weights(t, alpha, opts.threads);
  const Matrix escort_cov = detail::weighted_moments(est, w.weights, opts.threads).second;
  const auto terms = detail::bound_terms(family, theta, alpha, n, t, opts.threads);
  const Matrix bound = std::exp(-terms.log_z) * SpdFactor(terms.g, "G_n").inverse();
  out.max_gap = (escort_cov - bound).cwiseAbs().maxCoeff();
  const bool unbiased = (ordinary.first - theta).norm() <= kBiasTolerance;
  out.equality_config = unbiased && out.max_gap <= kEqualityTolerance;
  return out;
}

}  // namespace acrlb

#endif  // ACRLB_BOUND_HPP
