#include <gtest/gtest.h>

#include <cmath>

#include "acrlb/bound.hpp"
#include "acrlb/selftest.hpp"
#include "oracle.hpp"

using namespace acrlb;

namespace {

Vector vec(std::initializer_list<double> xs) {
  return Eigen::Map<const Vector>(xs.begin(), static_cast<Eigen::Index>(xs.size()));
}

double scalar(const Matrix& m) { return m(0, 0); }

const std::vector<double> kAlphas{0.0, 0.25, 0.5, 1.0, 2.0};
const std::vector<int> kNs{1, 2, 3, 5};

std::vector<FamilyPtr> grid_families() {
  return {make_bernoulli(), make_categorical(3), make_binomial(3)};
}

}  // namespace

TEST(JointMatricesTest, Examples) {
  const auto b = make_bernoulli();
  const auto jm = joint_alpha_matrices(b, vec({0.5}), 1.0, 2);
  EXPECT_NEAR(scalar(jm.g), 2.0, 1e-13);
  EXPECT_NEAR(scalar(jm.k), 0.5, 1e-13);
  EXPECT_NEAR(scalar(jm.i), 8.0, 1e-12);

  // Two outcomes with p = 1/2 and scores -2, 2: sum p^2 s^2 = 2.
  EXPECT_NEAR(scalar(joint_alpha_matrices(b, vec({0.5}), 1.0, 1).g), 2.0, 1e-13);

  for (int n : {1, 3, 4}) {
    const auto z = joint_alpha_matrices(b, vec({0.3}), 0.0, n);
    const double ng = n / (0.3 * 0.7);
    EXPECT_NEAR(scalar(z.g), ng, 1e-12 * ng);
    EXPECT_NEAR(scalar(z.k), ng, 1e-12 * ng);
    EXPECT_NEAR(scalar(z.i), ng, 1e-12 * ng);
  }
}

TEST(JointMatricesTest, MatchesOracle) {
  for (double theta : {0.2, 0.3, 0.65}) {
    for (double alpha : {0.0, 0.25, 0.5, 1.0, 2.0}) {
      for (int n : {1, 2, 4, 7}) {
        const auto [g, k] = oracle::bernoulli_joint_gk(theta, alpha, n);
        const auto jm = joint_alpha_matrices(make_bernoulli(), vec({theta}), alpha, n);
        EXPECT_NEAR(scalar(jm.g), static_cast<double>(g), 1e-12 * static_cast<double>(g));
        EXPECT_NEAR(scalar(jm.k), static_cast<double>(k), 1e-11 * static_cast<double>(k));
      }
    }
  }
}

TEST(JointMatricesTest, SymmetricPositiveDefinite) {
  const auto c = make_categorical(3);
  const auto jm = joint_alpha_matrices(c, vec({0.2, 0.5}), 0.5, 3);
  for (const Matrix* m : {&jm.g, &jm.k, &jm.i}) {
    EXPECT_LE((*m - m->transpose()).cwiseAbs().maxCoeff(), 1e-14 * m->norm());
    EXPECT_GT(min_eigenvalue(*m), 0.0);
  }
}

TEST(FactorizedMomentsTest, Examples) {
  const auto b = make_bernoulli();
  EXPECT_NEAR(scalar(iid_factorized_moments(b, vec({0.5}), 1.0, 2).g), 2.0, 1e-14);
  const auto z = iid_factorized_moments(b, vec({0.4}), 0.0, 6);
  EXPECT_NEAR(scalar(z.g), 6 / 0.24, 1e-12);
  EXPECT_NEAR(scalar(z.k), 6 / 0.24, 1e-12);
}

TEST(FactorizedMomentsTest, MatchesEnumeration) {
  for (const auto& fam : {make_bernoulli(), make_categorical(3)}) {
    const Vector theta = interior_grid(*fam)[1];
    for (double alpha : {0.0, 0.5, 1.0}) {
      for (int n = 1; n <= 10; ++n) {
        const auto jm = joint_alpha_matrices(fam, theta, alpha, n);
        const auto fm = iid_factorized_moments(fam, theta, alpha, n);
        EXPECT_LE(relative_deviation(fm.g, jm.g), 1e-10) << fam->name() << " " << alpha << " " << n;
        EXPECT_LE(relative_deviation(fm.k, jm.k), 1e-10) << fam->name() << " " << alpha << " " << n;
      }
    }
  }
}

TEST(FactorizedMomentsTest, InverseInformationMatchesJoint) {
  const auto b = make_bernoulli();
  for (double alpha : {0.0, 0.5, 2.0}) {
    for (int n : {1, 3, 8}) {
      const auto jm = joint_alpha_matrices(b, vec({0.3}), alpha, n);
      const Matrix direct = jm.i.inverse();
      EXPECT_LE(relative_deviation(factorized_inverse_information(b, vec({0.3}), alpha, n), direct),
                1e-10);
    }
  }
  // Large n stays finite although c^(n-1) underflows.
  const Matrix big = factorized_inverse_information(b, vec({0.3}), 1.0, 5000);
  EXPECT_TRUE(std::isfinite(scalar(big)));
  EXPECT_GT(scalar(big), 0.0);
}

TEST(GeneralizedCrlbTest, Examples) {
  const auto b = make_bernoulli();
  EXPECT_NEAR(scalar(generalized_crlb(b, vec({0.5}), 0.0, 1)), 0.25, 1e-15);
  EXPECT_NEAR(scalar(generalized_crlb(b, vec({0.5}), 1.0, 2)), 0.125, 1e-14);
  EXPECT_NEAR(scalar(generalized_crlb(b, vec({0.3}), 0.5, 2)), 0.11106, 1e-5);
}

TEST(GeneralizedCrlbTest, ClassicalReduction) {
  for (const auto& fam : grid_families()) {
    for (const Vector& theta : interior_grid(*fam)) {
      for (int n : kNs) {
        const Matrix expected = (n * fisher_matrix(*fam, theta).entries).inverse();
        EXPECT_LE(relative_deviation(generalized_crlb(fam, theta, 0.0, n), expected), 1e-12);
      }
    }
  }
}

TEST(EscortCovarianceTest, Examples) {
  const auto b = make_bernoulli();
  const auto mean = sample_mean_estimator(b);
  EXPECT_NEAR(scalar(escort_covariance_exact(b, mean, vec({0.5}), 1.0, 2)), 0.125, 1e-15);
  EXPECT_NEAR(scalar(escort_covariance_exact(b, mean, vec({0.3}), 0.5, 2)), 0.11956, 1e-5);
  for (int n : {1, 4}) {
    EXPECT_NEAR(scalar(escort_covariance_exact(b, mean, vec({0.3}), 0.0, n)), 0.21 / n, 1e-15);
  }
}

TEST(BoundGapTest, ReferenceCell) {
  const auto b = make_bernoulli();
  const auto r = bound_gap(b, sample_mean_estimator(b), vec({0.3}), 0.5, 2);
  const auto o = oracle::bernoulli_mean_cell(0.3L, 0.5L, 2);
  EXPECT_NEAR(scalar(r.covariance), static_cast<double>(o.cov), 1e-14);
  EXPECT_NEAR(scalar(r.bound), static_cast<double>(o.bound), 1e-14);
  EXPECT_NEAR(scalar(r.gap), static_cast<double>(o.gap), 1e-14);
  EXPECT_NEAR(scalar(r.gap), 0.00850, 1e-5);
  EXPECT_TRUE(r.psd);
  EXPECT_GT(r.tangency_residual, 1e-3);
  EXPECT_EQ(r.family, "bernoulli");
  EXPECT_EQ(r.estimator, "sample_mean");
  EXPECT_EQ(r.n, 2);
}

TEST(BoundGapTest, FrozenOracleValues) {
  // 40-digit enumeration: (theta, alpha, n) -> gap of the Bernoulli sample mean.
  struct Row {
    double theta, alpha;
    int n;
    double gap;
  };
  const Row rows[] = {
      {0.3, 0.5, 2, 0.0084975675834495134},
      {0.2, 1.0, 3, 0.053874434389140271},
      {0.8, 0.25, 5, 0.0053861870494502087},
  };
  const auto b = make_bernoulli();
  for (const Row& row : rows) {
    const auto o = oracle::bernoulli_mean_cell(row.theta, row.alpha, row.n);
    EXPECT_NEAR(static_cast<double>(o.gap), row.gap, 1e-15);
    const auto r = bound_gap(b, sample_mean_estimator(b), vec({row.theta}), row.alpha, row.n);
    EXPECT_NEAR(scalar(r.gap), row.gap, 1e-14) << row.theta << " " << row.alpha << " " << row.n;
  }
}

TEST(BoundGapTest, EqualityCases) {
  const auto b = make_bernoulli();
  const auto mean = sample_mean_estimator(b);
  for (double theta : {0.2, 0.3, 0.8}) {
    for (int n : {2, 3, 5}) {
      EXPECT_LE(std::abs(scalar(bound_gap(b, mean, vec({theta}), 0.0, n).gap)), 1e-12);
    }
    for (double alpha : kAlphas) {
      EXPECT_LE(std::abs(scalar(bound_gap(b, mean, vec({theta}), alpha, 1).gap)), 1e-12);
    }
  }
  // theta = 1/2: the centered mean lies in the tangent span by symmetry.
  for (double alpha : kAlphas) {
    for (int n : kNs) {
      EXPECT_LE(std::abs(scalar(bound_gap(b, mean, vec({0.5}), alpha, n).gap)), 1e-12);
    }
  }
}

TEST(BoundGapTest, StrictAwayFromHalf) {
  const auto b = make_bernoulli();
  const auto mean = sample_mean_estimator(b);
  for (double theta : {0.2, 0.3, 0.8}) {
    for (double alpha : {0.25, 0.5, 1.0}) {
      for (int n : {2, 3, 5}) {
        EXPECT_GT(scalar(bound_gap(b, mean, vec({theta}), alpha, n).gap), 1e-4);
      }
    }
  }
}

TEST(BoundGapTest, PsdOverGrid) {
  for (const auto& fam : grid_families()) {
    const auto mean = sample_mean_estimator(fam);
    for (const Vector& theta : interior_grid(*fam)) {
      for (double alpha : kAlphas) {
        for (int n : kNs) {
          const auto r = bound_gap(fam, mean, theta, alpha, n);
          EXPECT_GE(r.min_gap_eigenvalue, -r.psd_tolerance())
              << fam->name() << " " << alpha << " " << n;
          EXPECT_TRUE(r.psd);
          EXPECT_LE((r.gap - (r.covariance - r.bound)).cwiseAbs().maxCoeff(), 1e-15);
        }
      }
    }
  }
}

TEST(BoundGapTest, EqualityIffTangency) {
  int equal = 0, strict = 0;
  for (const auto& fam : grid_families()) {
    const auto mean = sample_mean_estimator(fam);
    for (const Vector& theta : interior_grid(*fam)) {
      for (double alpha : kAlphas) {
        for (int n : kNs) {
          const auto r = bound_gap(fam, mean, theta, alpha, n);
          const bool tight = r.gap.cwiseAbs().maxCoeff() <= 1e-10;
          const bool tangent = r.tangency_residual <= 1e-8;
          EXPECT_EQ(tight, tangent) << fam->name() << " theta=" << format_vector(theta)
                                    << " alpha=" << alpha << " n=" << n
                                    << " gap=" << r.gap.cwiseAbs().maxCoeff()
                                    << " residual=" << r.tangency_residual;
          (tight ? equal : strict)++;
        }
      }
    }
  }
  EXPECT_GT(equal, 0);
  EXPECT_GT(strict, 0);
}

TEST(BoundGapTest, RejectsBiasedEstimator) {
  const auto b = make_bernoulli();
  try {
    bound_gap(b, constant_estimator(b, vec({0.4})), vec({0.3}), 0.5, 2);
    FAIL() << "expected BiasedEstimator";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BiasedEstimator);
  }
}

TEST(BoundGapTest, BudgetAndAlphaErrors) {
  const auto b = make_bernoulli();
  EnumerationOptions small;
  small.budget = 8;
  EXPECT_THROW(bound_gap(b, sample_mean_estimator(b), vec({0.3}), 0.5, 4, small), Error);
  EXPECT_THROW(generalized_crlb(b, vec({0.3}), -1.0, 2), Error);
}

TEST(BoundGapTest, ThreadCountDoesNotChangeBits) {
  const auto c = make_categorical(3);
  EnumerationOptions one, four;
  four.threads = 4;
  const auto a = bound_gap(c, sample_mean_estimator(c), vec({0.2, 0.3}), 0.5, 9, one);
  const auto d = bound_gap(c, sample_mean_estimator(c), vec({0.2, 0.3}), 0.5, 9, four);
  EXPECT_EQ(a.covariance, d.covariance);
  EXPECT_EQ(a.bound, d.bound);
  EXPECT_EQ(a.tangency_residual, d.tangency_residual);
}

TEST(TangencyTest, Examples) {
  const auto b = make_bernoulli();
  const auto mean = sample_mean_estimator(b);
  EXPECT_LE(tangency_residual(b, mean, vec({0.5}), 1.0, 2), 1e-12);
  EXPECT_GT(tangency_residual(b, mean, vec({0.3}), 0.5, 2), 1e-3);
  for (double theta : {0.2, 0.7}) {
    EXPECT_LE(tangency_residual(b, mean, vec({theta}), 0.0, 4), 1e-10);
  }
  const auto bin = make_binomial(4);
  EXPECT_LE(tangency_residual(bin, sample_mean_estimator(bin), vec({0.35}), 0.0, 3), 1e-10);
}

TEST(TangencyTest, ResidualSquaredIsGapTrace) {
  const auto b = make_bernoulli();
  const auto mean = sample_mean_estimator(b);
  for (double alpha : {0.25, 1.0, 2.0}) {
    const auto r = bound_gap(b, mean, vec({0.2}), alpha, 3);
    EXPECT_NEAR(r.tangency_residual * r.tangency_residual, r.gap.trace(), 1e-12);
  }
}

TEST(EscortVarianceIdentityTest, Examples) {
  const auto constant = escort_variance_identity(Pmf(vec({0.2, 0.5, 0.3})), vec({2, 2, 2}), 0.5);
  EXPECT_NEAR(constant.lhs, 0.0, 1e-15);
  EXPECT_NEAR(constant.rhs, 0.0, 1e-15);
  const auto half = escort_variance_identity(Pmf(vec({0.5, 0.5})), vec({0, 1}), 1.0);
  EXPECT_NEAR(half.lhs, 0.25, 1e-15);
  EXPECT_NEAR(half.rhs, 0.25, 1e-15);
  EXPECT_THROW(escort_variance_identity(Pmf(vec({0.5, 0.5})), vec({0, 1, 2}), 1.0), Error);
}

TEST(EscortVarianceIdentityTest, RandomDraws) {
  CounterRng rng(2024);
  for (int m : {2, 3, 4}) {
    for (int draw = 0; draw < 50; ++draw) {
      const Pmf p = random_pmf(rng, m);
      Vector a(m);
      for (int i = 0; i < m; ++i) a[i] = 4 * rng.uniform() - 2;
      for (double alpha : {0.25, 0.5, 1.0, 2.0}) {
        const auto s = escort_variance_identity(p, a, alpha);
        EXPECT_NEAR(s.lhs, s.rhs, 1e-10 * std::abs(s.lhs)) << m << " " << alpha;
      }
    }
  }
}

TEST(SandwichCovarianceTest, Examples) {
  const auto b = make_bernoulli();
  const auto mean = sample_mean_estimator(b);
  const auto ref = sandwich_covariance_check(b, mean, vec({0.5}), 1.0, 2);
  EXPECT_TRUE(ref.equality_config);
  EXPECT_NEAR(scalar(ref.ordinary_covariance), 0.125, 1e-15);
  EXPECT_NEAR(scalar(ref.inverse_information), 0.125, 1e-14);

  for (double theta : {0.2, 0.5, 0.8}) {
    for (int n : {2, 5, 10}) {
      const auto r = sandwich_covariance_check(b, mean, vec({theta}), 0.0, n);
      EXPECT_TRUE(r.equality_config);
      EXPECT_NEAR(scalar(r.ordinary_covariance), theta * (1 - theta) / n, 1e-14);
      EXPECT_NEAR(scalar(r.inverse_information), theta * (1 - theta) / n, 1e-14);
    }
  }

  const auto strict = sandwich_covariance_check(b, mean, vec({0.3}), 0.5, 2);
  EXPECT_FALSE(strict.equality_config);
  EXPECT_GT(strict.max_gap, 1e-4);
}

TEST(SandwichCovarianceTest, HoldsAtEqualityConfigurations) {
  const auto b = make_bernoulli();
  const auto mean = sample_mean_estimator(b);
  for (double alpha : {0.5, 1.0, 2.0}) {
    for (int n = 2; n <= 8; ++n) {
      const auto r = sandwich_covariance_check(b, mean, vec({0.5}), alpha, n);
      ASSERT_TRUE(r.equality_config);
      EXPECT_LE((r.ordinary_covariance - r.inverse_information).norm(),
                1e-10 * (1 + r.ordinary_covariance.norm()));
    }
  }
}
