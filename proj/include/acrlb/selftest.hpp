#ifndef ACRLB_SELFTEST_HPP
#define ACRLB_SELFTEST_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "acrlb/bound.hpp"
#include "acrlb/estimation.hpp"
#include "acrlb/geometry.hpp"
#include "acrlb/model.hpp"
#include "acrlb/report.hpp"
#include "acrlb/rng.hpp"

namespace acrlb {

/// A strictly positive pmf with roughly Dirichlet(1) spread, floored at 1e-3 before
/// renormalizing.
inline Pmf random_pmf(CounterRng& rng, int m) {
  Vector w(m);
  for (int i = 0; i < m; ++i) w[i] = -std::log(1.0 - rng.uniform()) + 1e-3;
  return Pmf(w / w.sum());
}

inline std::vector<Vector> interior_grid(const ParametricFamily& family) {
  std::vector<Vector> out;
  if (family.dim() == 1) {
    for (double t : {0.1, 0.3, 0.5, 0.7, 0.9}) out.push_back(Vector::Constant(1, t));
    return out;
  }
  // Five interior points of the (m-1)-dimensional mixture chart, built from fixed pmfs.
  const int m = family.alphabet_size();
  for (int g = 0; g < 5; ++g) {
    Vector w(m);
    for (int i = 0; i < m; ++i) w[i] = 1.0 + ((g + 1) * (i + 2)) % 5;
    out.push_back((w / w.sum()).head(m - 1));
  }
  return out;
}

namespace detail {

struct CheckOutcome {
  std::string name;
  double worst = 0.0;
  double tolerance = 0.0;
  std::size_t cases = 0;
  bool pass() const { return std::isfinite(worst) && worst <= tolerance; }
};

inline CheckOutcome eguchi_check() {
  CheckOutcome c{"eguchi_match", 0.0, 1e-5, 0};
  for (const FamilyPtr& fam : {make_bernoulli(), make_categorical(3)}) {
    for (const Vector& theta : interior_grid(*fam)) {
      for (double alpha : {0.0, 0.25, 0.5, 1.0, 2.0}) {
        const Matrix exact = alpha_fisher_matrix(*fam, theta, alpha).entries;
        const Matrix fd = eguchi_fd_metric(*fam, theta, alpha).entries;
        c.worst = std::max(c.worst, relative_deviation(fd, exact));
        ++c.cases;
      }
    }
  }
  return c;
}

inline CheckOutcome escort_identity_check(std::uint64_t seed) {
  CheckOutcome c{"escort_variance_identity", 0.0, 1e-10, 0};
  for (int m : {2, 3, 4}) {
    for (double alpha : {0.25, 0.5, 1.0, 2.0}) {
      CounterRng rng(mix(seed, static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(alpha * 4)));
      for (int draw = 0; draw < 50; ++draw) {
        const Pmf p = random_pmf(rng, m);
        Vector a(m);
        for (int i = 0; i < m; ++i) a[i] = 2.0 * rng.uniform() - 1.0;
        const EscortVarianceSides s = escort_variance_identity(p, a, alpha);
        c.worst = std::max(c.worst, std::abs(s.lhs - s.rhs) / std::max(std::abs(s.rhs), 1e-300));
        ++c.cases;
      }
    }
  }
  return c;
}

inline CheckOutcome factorization_check(int max_n) {
  CheckOutcome c{"factorization_match", 0.0, 1e-10, 0};
  for (const FamilyPtr& fam : {make_bernoulli(), make_categorical(3)}) {
    const Vector theta = interior_grid(*fam)[1];
    for (double alpha : {0.0, 0.5, 1.0}) {
      for (int n = 1; n <= max_n; ++n) {
        const JointMatrices jm = joint_alpha_matrices(fam, theta, alpha, n);
        const FactorizedMoments fm = iid_factorized_moments(fam, theta, alpha, n);
        c.worst = std::max({c.worst, relative_deviation(fm.g, jm.g), relative_deviation(fm.k, jm.k)});
        ++c.cases;
      }
    }
  }
  return c;
}

inline CheckOutcome sandwich_equality_check() {
  CheckOutcome c{"sandwich_equality", 0.0, 1e-10, 0};
  const FamilyPtr fam = make_bernoulli();
  const EstimatorFn mean = sample_mean_estimator(fam);
  auto run = [&](double theta, double alpha, int n) {
    const auto r = sandwich_covariance_check(fam, mean, Vector::Constant(1, theta), alpha, n);
    const double scale = 1.0 + r.ordinary_covariance.norm();
    double dev = (r.ordinary_covariance - r.inverse_information).norm() / scale;
    if (!r.equality_config) dev = std::numeric_limits<double>::infinity();
    c.worst = std::max(c.worst, dev);
    ++c.cases;
  };
  for (double alpha : {0.5, 1.0, 2.0}) {
    for (int n = 2; n <= 8; ++n) run(0.5, alpha, n);
  }
  for (double theta : {0.2, 0.5, 0.8}) {
    for (int n : {2, 5, 10}) run(theta, 0.0, n);
  }
  return c;
}

}  // namespace detail

/// Oracle suites: Eguchi finite differences vs the closed-form metric, the escort-variance
/// identity on random simplex points, factorized vs enumerated joint moments, and the
/// sandwich-covariance identity at equality configurations.
/// Columns: check,cases,worst,tolerance,pass.
inline Report run_selftest(std::uint64_t seed = 0) {
  Report report;
  report.kind = "selftest";
  report.config["seed"] = seed;
  report.columns = {"check", "cases", "worst", "tolerance", "pass"};
  for (const auto& c : {detail::eguchi_check(), detail::escort_identity_check(seed),
                        detail::factorization_check(8), detail::sandwich_equality_check()}) {
    report.rows.push_back({c.name, static_cast<std::int64_t>(c.cases), c.worst, c.tolerance,
                           c.pass()});
  }
  return report;
}

inline bool selftest_passed(const Report& report) {
  return std::all_of(report.rows.begin(), report.rows.end(),
                     [](const std::vector<Cell>& row) { return std::get<bool>(row.back()); });
}

}  // namespace acrlb

#endif  // ACRLB_SELFTEST_HPP
