#include <gtest/gtest.h>

#include <cmath>

#include "acrlb/geometry.hpp"
#include "acrlb/selftest.hpp"
#include "oracle.hpp"

using namespace acrlb;

namespace {

Vector vec(std::initializer_list<double> xs) {
  return Eigen::Map<const Vector>(xs.begin(), static_cast<Eigen::Index>(xs.size()));
}

std::vector<oracle::Real> to_real(const Pmf& p) {
  return {p.probs().begin(), p.probs().end()};
}

std::vector<FamilyPtr> families() {
  return {make_bernoulli(), make_categorical(3), make_categorical(4), make_binomial(3)};
}

}  // namespace

TEST(DivergenceTest, KlExamples) {
  const Pmf p{0.5, 0.5}, q{0.25, 0.75};
  EXPECT_EQ(kl_divergence(p, p), 0.0);
  EXPECT_NEAR(kl_divergence(p, q), 0.14384103622589042, 1e-15);
  EXPECT_NEAR(kl_divergence(q, p), 0.13081203594113697, 1e-15);
  EXPECT_NE(kl_divergence(p, q), kl_divergence(q, p));
  EXPECT_THROW(kl_divergence(p, Pmf{0.2, 0.3, 0.5}), Error);
}

TEST(DivergenceTest, BhhjExamples) {
  const Pmf p{0.5, 0.5}, q{0.8, 0.2}, r{0.25, 0.75};
  EXPECT_NEAR(bhhj_divergence(p, p, 0.5), 0.0, 1e-16);
  EXPECT_NEAR(bhhj_divergence(p, q, 1.0), 0.09, 1e-15);
  const double kl = kl_divergence(p, r);
  EXPECT_LE(std::abs(bhhj_divergence(p, r, 1e-3) - kl), 0.01 * kl);
  try {
    bhhj_divergence(p, q, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::AlphaZero);
  }
  EXPECT_THROW(bhhj_divergence(p, q, -1.0), Error);
  EXPECT_GE(bhhj_divergence(p, q, -0.5), 0.0);
}

TEST(DivergenceTest, BhhjMatchesOracleOnRandomPairs) {
  CounterRng rng(11);
  for (int draw = 0; draw < 30; ++draw) {
    const Pmf p = random_pmf(rng, 4), q = random_pmf(rng, 4);
    for (double a : {-0.5, 0.25, 1.0, 2.0}) {
      const double ref = static_cast<double>(oracle::bhhj(to_real(p), to_real(q), a));
      EXPECT_NEAR(bhhj_divergence(p, q, a), ref, 1e-13 * (1 + ref));
    }
  }
}

TEST(DivergenceTest, FirstOrderVanishingNearZero) {
  const Pmf p{0.5, 0.5}, q{0.25, 0.75};
  const double kl = kl_divergence(p, q);
  const double r2 = std::abs(bhhj_divergence(p, q, 1e-2) - kl) / 1e-2;
  const double r3 = std::abs(bhhj_divergence(p, q, 1e-3) - kl) / 1e-3;
  // Bounded, and non-increasing in alpha: the ratio settles on the first-order coefficient.
  EXPECT_LT(r3, 1.0);
  EXPECT_LE(r2, r3);
}

TEST(BregmanTest, GeneratorConsistency) {
  const Pmf p{0.5, 0.5}, q{0.8, 0.2};
  EXPECT_NEAR(bregman_divergence(p, q, bhhj_generator(1.0)), 0.09, 1e-15);
  const Pmf a{0.5, 0.5}, b{0.25, 0.75};
  EXPECT_NEAR(bregman_divergence(a, b, kl_generator()), kl_divergence(a, b), 1e-15);
  EXPECT_EQ(bregman_divergence(a, a, kl_generator()), 0.0);
  CounterRng rng(3);
  for (int draw = 0; draw < 20; ++draw) {
    const Pmf x = random_pmf(rng, 3), y = random_pmf(rng, 3);
    for (double alpha : {0.25, 0.5, 1.0, 2.0}) {
      const double direct = bhhj_divergence(x, y, alpha);
      EXPECT_LE(std::abs(bregman_divergence(x, y, bhhj_generator(alpha)) - direct),
                1e-12 * std::max(direct, 1e-300) + 1e-17);
    }
  }
  EXPECT_THROW(bhhj_generator(0.0), Error);
}

TEST(BregmanTest, RejectsNonConvexGenerator) {
  EXPECT_THROW((BregmanGenerator{"concave", [](double t) { return -t * t; },
                                 [](double t) { return -2 * t; }, [](double) { return -2.0; }}),
               Error);
}

TEST(MetricTest, FisherExamples) {
  const auto b = make_bernoulli();
  EXPECT_DOUBLE_EQ(fisher_matrix(*b, vec({0.5}))(0, 0), 4.0);
  EXPECT_NEAR(fisher_matrix(*b, vec({0.2}))(0, 0), 6.25, 1e-13);
  for (double t : {0.1, 0.3, 0.5, 0.7}) {
    EXPECT_EQ(fisher_matrix(*b, vec({t})).entries, alpha_fisher_matrix(*b, vec({t}), 0.0).entries);
  }
}

TEST(MetricTest, AlphaFisherExamples) {
  const auto b = make_bernoulli();
  EXPECT_NEAR(alpha_fisher_matrix(*b, vec({0.5}), 1.0)(0, 0), 2.0, 1e-14);
  EXPECT_NEAR(alpha_fisher_matrix(*b, vec({0.3}), 0.5)(0, 0), 3.020970467684948, 1e-13);
}

TEST(MetricTest, AlphaFisherMatchesOracle) {
  for (const auto& fam : families()) {
    for (const auto& theta : interior_grid(*fam)) {
      const Pmf p = pmf_eval(*fam, theta);
      const Matrix jac = family_jacobian(*fam, theta);
      std::vector<std::vector<oracle::Real>> dp(static_cast<std::size_t>(jac.rows()));
      for (Eigen::Index x = 0; x < jac.rows(); ++x) {
        for (Eigen::Index i = 0; i < jac.cols(); ++i) dp[static_cast<std::size_t>(x)].push_back(jac(x, i));
      }
      for (double alpha : {-0.5, 0.0, 0.25, 0.5, 1.0, 2.0}) {
        const auto ref = oracle::alpha_metric(to_real(p), dp, alpha);
        const MetricMatrix g = alpha_fisher_matrix(*fam, theta, alpha);
        for (Eigen::Index i = 0; i < g.k(); ++i) {
          for (Eigen::Index j = 0; j < g.k(); ++j) {
            const double r = static_cast<double>(ref[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
            EXPECT_NEAR(g(i, j), r, 1e-12 * std::abs(r) + 1e-14) << fam->name();
          }
        }
        EXPECT_TRUE(g.is_symmetric());
        EXPECT_GT(g.min_eigenvalue(), 0.0);
      }
    }
  }
}

TEST(MetricTest, BregmanFisherMatchesAlphaFisher) {
  for (const auto& fam : families()) {
    for (const auto& theta : interior_grid(*fam)) {
      for (double alpha : {0.25, 0.5, 1.0, 2.0}) {
        EXPECT_LE(relative_deviation(bregman_fisher_matrix(*fam, theta, bhhj_generator(alpha)).entries,
                                     alpha_fisher_matrix(*fam, theta, alpha).entries),
                  1e-12);
      }
      EXPECT_LE(relative_deviation(bregman_fisher_matrix(*fam, theta, kl_generator()).entries,
                                   fisher_matrix(*fam, theta).entries),
                1e-12);
    }
  }
  EXPECT_NEAR(bregman_fisher_matrix(*make_bernoulli(), vec({0.5}), bhhj_generator(1.0))(0, 0), 2.0,
              1e-14);
}

TEST(EguchiTest, MatchesClosedForm) {
  const auto b = make_bernoulli();
  EXPECT_LE(std::abs(eguchi_fd_metric(*b, vec({0.5}), 1.0, 1e-4)(0, 0) - 2.0) / 2.0, 1e-5);
  const auto c = make_categorical(3);
  EXPECT_LE(relative_deviation(eguchi_fd_metric(*c, vec({0.2, 0.3}), 0.5).entries,
                               alpha_fisher_matrix(*c, vec({0.2, 0.3}), 0.5).entries),
            1e-5);
  for (const auto& fam : families()) {
    for (const auto& theta : interior_grid(*fam)) {
      for (double alpha : {0.0, 0.25, 0.5, 1.0, 2.0}) {
        EXPECT_LE(relative_deviation(eguchi_fd_metric(*fam, theta, alpha, 1e-4).entries,
                                     alpha_fisher_matrix(*fam, theta, alpha).entries),
                  1e-5)
            << fam->name() << " alpha=" << alpha;
      }
    }
  }
}

TEST(EguchiTest, StepOutsideDomain) {
  const auto b = make_bernoulli();
  try {
    eguchi_fd_metric(*b, vec({0.01}), 0.5, 0.02);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::StepTooLarge);
  }
  EXPECT_THROW(eguchi_fd_metric(*b, vec({0.5}), 0.5, 0.0), Error);
}

TEST(EscortTest, Examples) {
  const Pmf p{0.7, 0.3};
  EXPECT_EQ(escort(p, 0.0).probs(), p.probs());
  EXPECT_NEAR(escort(p, 1.0)[0], 0.5, 1e-15);
  EXPECT_NEAR(escort(p, 0.5)[0], 0.60435607626104, 1e-13);
  EXPECT_NEAR(escort(p, 0.5)[1], 1 - 0.60435607626104, 1e-13);
}

TEST(EscortTest, FixedPointIffUniformOrAlphaZero) {
  CounterRng rng(8);
  for (int m : {2, 3, 5}) {
    const Pmf u = Pmf::uniform(m);
    const Pmf p = random_pmf(rng, m);
    for (double alpha : {-0.5, 0.25, 1.0, 2.0}) {
      EXPECT_LE((escort(u, alpha).probs() - u.probs()).cwiseAbs().maxCoeff(), 1e-15);
      EXPECT_GT((escort(p, alpha).probs() - p.probs()).cwiseAbs().maxCoeff(), 1e-6);
    }
    EXPECT_EQ(escort(p, 0.0).probs(), p.probs());
  }
}

TEST(InnerProductTest, ReproducesMetric) {
  for (const auto& fam : families()) {
    for (const auto& theta : interior_grid(*fam)) {
      const Pmf p = pmf_eval(*fam, theta);
      for (double alpha : {0.0, 0.5, 2.0}) {
        const MetricMatrix g = alpha_fisher_matrix(*fam, theta, alpha);
        for (int i = 0; i < fam->dim(); ++i) {
          for (int j = 0; j < fam->dim(); ++j) {
            const auto xi = tangent_representations(*fam, theta, alpha, i);
            const auto xj = tangent_representations(*fam, theta, alpha, j);
            EXPECT_NEAR(metric_inner_product(xi, xj, p), g(i, j), 1e-12 * std::abs(g(i, j)) + 1e-13);
            EXPECT_NEAR(metric_inner_product_expectation(xi, xj, p), g(i, j),
                        1e-12 * std::abs(g(i, j)) + 1e-13);
          }
        }
      }
    }
  }
}

TEST(InnerProductTest, Examples) {
  const auto b = make_bernoulli();
  const Pmf p = pmf_eval(*b, vec({0.5}));
  const auto d = tangent_representations(*b, vec({0.5}), 1.0, 0);
  EXPECT_NEAR(metric_inner_product(d, d, p), 2.0, 1e-14);
  const auto zero = TangentRep::from_mixture(Vector::Zero(2), p, 1.0);
  EXPECT_EQ(metric_inner_product(zero, d, p), 0.0);
  const auto other = tangent_representations(*b, vec({0.5}), 0.5, 0);
  try {
    metric_inner_product(d, other, p);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::AlphaMismatch);
  }
}

TEST(TangentResidualTest, Examples) {
  const auto c = make_categorical(3);
  const Vector theta = vec({0.2, 0.3});
  const Pmf p = pmf_eval(*c, theta);
  for (double alpha : {0.0, 0.5, 1.0}) {
    for (int i = 0; i < 2; ++i) {
      EXPECT_LE(alpha_tangent_residual(tangent_representations(*c, theta, alpha, i).alpha_rep, p, alpha),
                1e-12);
    }
  }
  EXPECT_NEAR(alpha_tangent_residual(Vector::Constant(3, 2.5), p, 0.0), 2.5, 1e-14);
  const Vector a = vec({1.0, -3.0, 0.7});
  for (double alpha : {0.25, 0.5, 2.0}) {
    const Pmf e = escort(p, alpha);
    const Vector centered = a.array() - a.dot(e.probs());
    EXPECT_LE(alpha_tangent_residual(centered, p, alpha), 1e-12);
  }
}

TEST(DifferentialNormTest, Examples) {
  const auto b = make_bernoulli();
  EXPECT_EQ(differential_norm(*b, vec({0.5}), 1.0, vec({0.0})), 0.0);
  EXPECT_NEAR(differential_norm(*b, vec({0.5}), 1.0, vec({1.0})), 0.5, 1e-15);
  const auto c = make_categorical(3);
  const Vector theta = vec({0.2, 0.3});
  const Matrix ginv = alpha_fisher_matrix(*c, theta, 0.5).entries.inverse();
  EXPECT_NEAR(differential_norm(*c, theta, 0.5, vec({1.0, 0.0})), ginv(0, 0), 1e-12 * ginv(0, 0));
}

TEST(AlphaValidationTest, Rejections) {
  EXPECT_THROW(require_alpha(std::nan("")), Error);
  EXPECT_THROW(require_alpha(-1.0), Error);
  EXPECT_THROW(require_alpha(-2.0), Error);
  EXPECT_NO_THROW(require_alpha(-0.999));
  EXPECT_NO_THROW(alpha_fisher_matrix(*make_bernoulli(), vec({0.3}), -0.5));
}

TEST(ConditioningTest, IllConditionedRaises) {
  Matrix a(2, 2);
  a << 1.0, 0.0, 0.0, 1e-14;
  try {
    SpdFactor f(a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IllConditioned);
  }
}
