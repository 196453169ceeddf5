#ifndef ACRLB_GEOMETRY_HPP
#define ACRLB_GEOMETRY_HPP

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <utility>

#include "acrlb/error.hpp"
#include "acrlb/linalg.hpp"
#include "acrlb/model.hpp"

namespace acrlb {

/// alpha must be finite and > -1 (alpha = -1 has no BHHJ divergence).
inline void require_alpha(double alpha) {
  if (std::isnan(alpha) || std::isinf(alpha)) {
    throw Error(ErrorKind::InvalidArgument, "alpha must be finite");
  }
  if (alpha <= -1.0) {
    std::ostringstream msg;
    msg << "alpha = " << alpha << " is excluded (must be > -1)";
    throw Error(ErrorKind::AlphaExcluded, msg.str());
  }
}

//------------------------------------------------------------------------------
// Divergences (nats)
//------------------------------------------------------------------------------

/// I(p, q) = sum p log(p / q).
inline double kl_divergence(const Pmf& p, const Pmf& q) {
  require_same_support(p, q);
  CompensatedSum acc(1, 1);
  for (int x = 0; x < p.size(); ++x) acc.add_scalar(p[x] * std::log(p[x] / q[x]));
  return std::max(0.0, acc.scalar());
}

/// Density power divergence
///   B(p, q) = sum { q^(1+a)/(1+a) - p q^a / a + p^(1+a) / (a (1+a)) }.
/// alpha = 0 is the KL limit and must be requested through kl_divergence.
inline double bhhj_divergence(const Pmf& p, const Pmf& q, double alpha) {
  require_same_support(p, q);
  require_alpha(alpha);
  if (alpha == 0.0) {
    throw Error(ErrorKind::AlphaZero, "alpha = 0 is the KL limit; call kl_divergence");
  }
  CompensatedSum acc(1, 1);
  for (int x = 0; x < p.size(); ++x) {
    const double qa = std::pow(q[x], alpha);
    acc.add_scalar(q[x] * qa / (1.0 + alpha));
    acc.add_scalar(-p[x] * qa / alpha);
    acc.add_scalar(std::pow(p[x], 1.0 + alpha) / (alpha * (1.0 + alpha)));
  }
  return std::max(0.0, acc.scalar());
}

/// Convex generator phi on (0, inf) with its first two derivatives.
struct BregmanGenerator {
  std::string name;
  std::function<double(double)> phi;
  std::function<double(double)> phi_prime;
  std::function<double(double)> phi_second;

  BregmanGenerator(std::string name_, std::function<double(double)> phi_,
                   std::function<double(double)> phi_prime_,
                   std::function<double(double)> phi_second_)
      : name(std::move(name_)),
        phi(std::move(phi_)),
        phi_prime(std::move(phi_prime_)),
        phi_second(std::move(phi_second_)) {
    for (double t : std::array{1e-9, 1e-6, 1e-3, 0.1, 0.25, 0.5, 0.75, 1.0}) {
      if (!(phi_second(t) > 0.0)) {
        std::ostringstream msg;
        msg << "generator " << name << " has phi''(" << t << ") <= 0";
        throw Error(ErrorKind::InvalidArgument, msg.str());
      }
    }
  }
};

/// phi(t) = (t^(1+a) - t) / (a (1+a)); generates the BHHJ divergence.
inline BregmanGenerator bhhj_generator(double alpha) {
  require_alpha(alpha);
  if (alpha == 0.0) {
    throw Error(ErrorKind::AlphaZero, "alpha = 0 BHHJ generator is t log t; use kl_generator");
  }
  const double a = alpha;
  return BregmanGenerator(
      "bhhj(" + std::to_string(alpha) + ")",
      [a](double t) { return (std::pow(t, 1.0 + a) - t) / (a * (1.0 + a)); },
      [a](double t) { return ((1.0 + a) * std::pow(t, a) - 1.0) / (a * (1.0 + a)); },
      [a](double t) { return std::pow(t, a - 1.0); });
}

/// phi(t) = t log t; generates the KL divergence.
inline BregmanGenerator kl_generator() {
  return BregmanGenerator(
      "kl", [](double t) { return t * std::log(t); },
      [](double t) { return std::log(t) + 1.0; }, [](double t) { return 1.0 / t; });
}

/// D_phi(p, q) = sum [phi(p) - phi(q) - phi'(q)(p - q)].
inline double bregman_divergence(const Pmf& p, const Pmf& q, const BregmanGenerator& gen) {
  require_same_support(p, q);
  CompensatedSum acc(1, 1);
  for (int x = 0; x < p.size(); ++x) {
    acc.add_scalar(gen.phi(p[x]));
    acc.add_scalar(-gen.phi(q[x]));
    acc.add_scalar(-gen.phi_prime(q[x]) * (p[x] - q[x]));
  }
  return std::max(0.0, acc.scalar());
}

//------------------------------------------------------------------------------
// Metrics
//------------------------------------------------------------------------------

/// A k x k information matrix at (theta, alpha) of a named family.
struct MetricMatrix {
  Matrix entries;
  Vector theta;
  double alpha = 0.0;
  std::string family;

  Eigen::Index k() const { return entries.rows(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return entries(i, j); }
  double min_eigenvalue() const { return acrlb::min_eigenvalue(entries); }
  bool is_symmetric(double rel_tol = 1e-10) const {
    return relative_deviation(entries.transpose(), entries) <= rel_tol;
  }
};

namespace detail {

/// sum_x w(x) J_x J_x^T with J_x the jacobian row at x.
inline Matrix weighted_gram(const Matrix& jac, const Vector& weights) {
  return symmetrize(jac.transpose() * weights.asDiagonal() * jac);
}

}  // namespace detail

/// Classical Fisher information E[d_i log p d_j log p].
inline MetricMatrix fisher_matrix(const ParametricFamily& family, const Vector& theta) {
  const Pmf p = pmf_eval(family, theta);
  if (auto closed = family.closed_form_fisher(theta)) {
    return {std::move(*closed), theta, 0.0, family.name()};
  }
  return {detail::weighted_gram(family.jacobian(theta), p.probs().cwiseInverse()), theta, 0.0,
          family.name()};
}

/// alpha-Fisher information E[p^a d_i log p d_j log p] = sum p^(a-1) d_i p d_j p.
inline MetricMatrix alpha_fisher_matrix(const ParametricFamily& family, const Vector& theta,
                                        double alpha) {
  require_alpha(alpha);
  if (alpha == 0.0) return fisher_matrix(family, theta);
  const Pmf p = pmf_eval(family, theta);
  const Vector w = p.probs().array().pow(alpha - 1.0).matrix();
  return {detail::weighted_gram(family.jacobian(theta), w), theta, alpha, family.name()};
}

/// General Bregman metric: weight p phi''(p) in place of p^a, i.e. sum phi''(p) d_i p d_j p.
/// The alpha tag is NaN because the generator, not alpha, defines the metric.
inline MetricMatrix bregman_fisher_matrix(const ParametricFamily& family, const Vector& theta,
                                          const BregmanGenerator& gen) {
  const Pmf p = pmf_eval(family, theta);
  Vector w(p.size());
  for (int x = 0; x < p.size(); ++x) w[x] = gen.phi_second(p[x]);
  return {detail::weighted_gram(family.jacobian(theta), w), theta,
          std::numeric_limits<double>::quiet_NaN(), family.name()};
}

/// Per-coordinate step max(1e-4, cbrt(eps) (1 + |theta_i|)).
inline Vector default_fd_steps(const Vector& theta) {
  const double root = std::cbrt(std::numeric_limits<double>::epsilon());
  Vector h(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    h[i] = std::max(1e-4, root * (1.0 + std::abs(theta[i])));
  }
  return h;
}

/// -d_i d'_j D(p_theta, p_theta') at theta' = theta by central mixed differences, where D is
/// the BHHJ divergence (KL at alpha = 0). Independent of the closed-form metric.
inline MetricMatrix eguchi_fd_metric(const ParametricFamily& family, const Vector& theta,
                                     double alpha, const Vector& steps) {
  require_alpha(alpha);
  require_domain(family, theta);
  const int k = family.dim();
  if (steps.size() != k) throw Error(ErrorKind::InvalidArgument, "one step per coordinate");
  for (int i = 0; i < k; ++i) {
    if (!(steps[i] > 0.0) || !std::isfinite(steps[i])) {
      throw Error(ErrorKind::StepTooLarge, "finite-difference steps must be positive");
    }
    for (double sign : {-1.0, 1.0}) {
      Vector probe = theta;
      probe[i] += sign * 2.0 * steps[i];
      if (!family.contains(probe, 0.0)) {
        std::ostringstream msg;
        msg << "step " << steps[i] << " on coordinate " << i
            << " reaches the domain boundary from theta = " << format_vector(theta);
        throw Error(ErrorKind::StepTooLarge, msg.str());
      }
    }
  }
  auto divergence = [&](const Vector& a, const Vector& b) {
    const Pmf p(family.probabilities(a));
    const Pmf q(family.probabilities(b));
    return alpha == 0.0 ? kl_divergence(p, q) : bhhj_divergence(p, q, alpha);
  };
  auto shifted = [&](int i, double sign) {
    Vector t = theta;
    t[i] += sign * steps[i];
    return t;
  };
  Matrix g(k, k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      const double pp = divergence(shifted(i, 1), shifted(j, 1));
      const double pm = divergence(shifted(i, 1), shifted(j, -1));
      const double mp = divergence(shifted(i, -1), shifted(j, 1));
      const double mm = divergence(shifted(i, -1), shifted(j, -1));
      g(i, j) = -(pp - pm - mp + mm) / (4.0 * steps[i] * steps[j]);
    }
  }
  return {symmetrize(g), theta, alpha, family.name()};
}

inline MetricMatrix eguchi_fd_metric(const ParametricFamily& family, const Vector& theta,
                                     double alpha, double h) {
  return eguchi_fd_metric(family, theta, alpha, Vector::Constant(theta.size(), h));
}

inline MetricMatrix eguchi_fd_metric(const ParametricFamily& family, const Vector& theta,
                                     double alpha) {
  return eguchi_fd_metric(family, theta, alpha, default_fd_steps(theta));
}

//------------------------------------------------------------------------------
// Escort distribution and tangent-space quantities
//------------------------------------------------------------------------------

/// p_a(x) = p(x)^(1-a) / sum_y p(y)^(1-a).
inline Pmf escort(const Pmf& p, double alpha) {
  require_alpha(alpha);
  if (alpha == 0.0) return p;
  const Vector log_w = (1.0 - alpha) * p.probs().array().log().matrix();
  const Vector w = (log_w.array() - log_w.maxCoeff()).exp().matrix();
  const double total = compensated_total(std::span<const double>(w.data(), w.size()));
  return Pmf(w / total);
}

/// <X, Y>_p = sum X^(m) Y^(a); equals E_p[X^(e) Y^(a)].
inline double metric_inner_product(const TangentRep& x_rep, const TangentRep& y_rep,
                                   const Pmf& p) {
  if (x_rep.m_rep.size() != p.size() || y_rep.alpha_rep.size() != p.size()) {
    throw Error(ErrorKind::SupportMismatch, "tangent representations do not match the pmf");
  }
  if (x_rep.alpha != y_rep.alpha) {
    throw Error(ErrorKind::AlphaMismatch, "tangent representations use different alpha");
  }
  CompensatedSum acc(1, 1);
  for (int x = 0; x < p.size(); ++x) acc.add_scalar(x_rep.m_rep[x] * y_rep.alpha_rep[x]);
  return acc.scalar();
}

/// Same inner product through the expectation form E_p[X^(e) Y^(a)].
inline double metric_inner_product_expectation(const TangentRep& x_rep, const TangentRep& y_rep,
                                               const Pmf& p) {
  if (x_rep.e_rep.size() != p.size() || y_rep.alpha_rep.size() != p.size()) {
    throw Error(ErrorKind::SupportMismatch, "tangent representations do not match the pmf");
  }
  if (x_rep.alpha != y_rep.alpha) {
    throw Error(ErrorKind::AlphaMismatch, "tangent representations use different alpha");
  }
  CompensatedSum acc(1, 1);
  for (int x = 0; x < p.size(); ++x) acc.add_scalar(p[x] * x_rep.e_rep[x] * y_rep.alpha_rep[x]);
  return acc.scalar();
}

/// |E_p[p^(-a) A]|: zero exactly when A is the alpha-representation of a tangent vector.
inline double alpha_tangent_residual(const Vector& a, const Pmf& p, double alpha) {
  if (a.size() != p.size()) throw Error(ErrorKind::SupportMismatch, "vector length != alphabet");
  require_alpha(alpha);
  CompensatedSum acc(1, 1);
  for (int x = 0; x < p.size(); ++x) acc.add_scalar(std::pow(p[x], 1.0 - alpha) * a[x]);
  return std::abs(acc.scalar());
}

/// ||(df)_p||^2 = grad_f^T [G^(a)]^-1 grad_f.
inline double differential_norm(const ParametricFamily& family, const Vector& theta, double alpha,
                                const Vector& grad_f) {
  if (grad_f.size() != family.dim()) {
    throw Error(ErrorKind::InvalidArgument, "gradient length must equal the parameter dimension");
  }
  const MetricMatrix g = alpha_fisher_matrix(family, theta, alpha);
  const SpdFactor factor(g.entries, "alpha-Fisher matrix");
  return std::max(0.0, grad_f.dot(factor.solve(grad_f)));
}

}  // namespace acrlb

#endif  // ACRLB_GEOMETRY_HPP
