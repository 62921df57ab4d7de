// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <limits>
#include <vector>

#include "generators.hpp"
#include "lp_oracle.hpp"
#include "plot/transport.hpp"

using namespace plot;

namespace {

double row_violation(const Coupling &c, const Vector &mu) {
  return (c.pi.rowwise().sum() - mu).cwiseAbs().sum();
}

double col_violation(const Coupling &c, const Vector &nu) {
  return (c.pi.colwise().sum().transpose() - nu).cwiseAbs().sum();
}

} // namespace

TEST(Sinkhorn, SingleAtomsGiveUnitCoupling) {
  Matrix u(1, 2), v(1, 2);
  u << 0.3, -1.0;
  v << 4.0, 2.0;
  const Coupling c = sinkhorn_eot(DiscreteMeasure::uniform(u), DiscreteMeasure::uniform(v), 0.5);
  ASSERT_EQ(c.pi.rows(), 1);
  EXPECT_NEAR(c.pi(0, 0), 1.0, 1e-12);
}

TEST(Sinkhorn, IdenticalSupportsConcentrateOnDiagonal) {
  Rng rng(1);
  const Matrix s = gaussian_matrix(5, 3, rng) * 3.0;
  const Coupling c = sinkhorn_eot(DiscreteMeasure::uniform(s), DiscreteMeasure::uniform(s), 1e-3);
  EXPECT_LT((c.pi - Matrix::Identity(5, 5) / 5.0).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Sinkhorn, MatchesLpOptimumAtSmallEps) {
  Rng rng(2);
  const auto mu = testgen::random_measure(3, 2, rng);
  const auto nu = testgen::random_measure(3, 2, rng);
  const Matrix cost = squared_euclidean_cost(mu.support, nu.support);
  const double exact = testgen::transport_lp(cost, mu.weights, nu.weights);
  const Coupling c = sinkhorn_eot(mu, nu, 1e-3);
  EXPECT_NEAR(c.transport_cost(cost), exact, 0.01 * exact);
}

TEST(Sinkhorn, RejectsBadInputs) {
  const auto m = DiscreteMeasure::uniform(Matrix::Zero(2, 2));
  EXPECT_THROW(sinkhorn_eot(m, m, 0.0), std::invalid_argument);
  EXPECT_THROW(sinkhorn_eot(m, DiscreteMeasure::uniform(Matrix::Zero(2, 3)), 1.0), std::invalid_argument);
  DiscreteMeasure empty;
  EXPECT_THROW(sinkhorn_eot(empty, m, 1.0), std::invalid_argument);
}

TEST(Sinkhorn, ReportsNonConvergenceWithinBudget) {
  Rng rng(3);
  const auto mu = testgen::random_measure(6, 2, rng);
  const auto nu = testgen::random_measure(6, 2, rng);
  SinkhornOptions opts;
  opts.max_iters = 1;
  opts.tol = 1e-300;
  const Coupling c = sinkhorn_eot(mu, nu, 1e-2, opts);
  EXPECT_FALSE(c.converged);
  EXPECT_EQ(c.iterations, 1);
}

TEST(SinkhornProperty, BalancedMarginalsOnRandomInstances) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const Index m = rng.uniform_int(1, 10), n = rng.uniform_int(1, 10), dim = rng.uniform_int(1, 5);
    const auto mu = testgen::random_measure(m, dim, rng);
    const auto nu = testgen::random_measure(n, dim, rng);
    const double eps = std::exp(rng.uniform(std::log(1e-2), std::log(10.0)));
    const Coupling c = sinkhorn_eot(mu, nu, eps);
    ASSERT_LT(row_violation(c, mu.weights), 1e-6) << "trial " << trial;
    ASSERT_LT(col_violation(c, nu.weights), 1e-6) << "trial " << trial;
    ASSERT_GE(c.pi.minCoeff(), 0.0) << "trial " << trial;
  }
}

TEST(SinkhornProperty, CostWithinOnePercentOfLpOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Index m = rng.uniform_int(2, 4), n = rng.uniform_int(2, 4);
    const auto mu = testgen::random_measure(m, 2, rng);
    const auto nu = testgen::random_measure(n, 2, rng);
    const Matrix cost = squared_euclidean_cost(mu.support, nu.support);
    const double exact = testgen::transport_lp(cost, mu.weights, nu.weights);
    const double got = sinkhorn_eot(mu, nu, 1e-3).transport_cost(cost);
    ASSERT_NEAR(got, exact, 0.01 * exact) << "trial " << trial;
  }
}

TEST(SinkhornProperty, NearlyDegenerateInstancesConvergeAtSmallEps) {
  Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    const Index m = rng.uniform_int(2, 4), n = rng.uniform_int(2, 4);
    const auto mu = testgen::random_measure(m, 2, rng);
    const auto nu = testgen::random_measure(n, 2, rng);
    const Matrix cost = squared_euclidean_cost(mu.support, nu.support);
    const double exact = testgen::transport_lp(cost, mu.weights, nu.weights);
    const Coupling c = sinkhorn_eot(mu, nu, 1e-3);
    ASSERT_TRUE(c.converged) << "trial " << trial;
    ASSERT_LT(row_violation(c, mu.weights), 1e-9) << "trial " << trial;
    ASSERT_NEAR(c.transport_cost(cost), exact, 0.01 * exact) << "trial " << trial;
  }
}

TEST(Sinkhorn, ClusteredTargetSupportConverges) {
  Matrix u(2, 1), v(4, 1);
  u << 0.0, 1.0;
  v << 0.0, 0.999, 1.0, 1.001;
  DiscreteMeasure mu{Vector(2), u}, nu{Vector(4), v};
  mu.weights << 0.29, 0.71;
  nu.weights << 0.2, 0.15, 0.08, 0.57;
  const Coupling c = sinkhorn_eot(mu, nu, 1e-3);
  EXPECT_TRUE(c.converged);
  const Matrix cost = squared_euclidean_cost(u, v);
  EXPECT_NEAR(c.transport_cost(cost), testgen::transport_lp(cost, mu.weights, nu.weights), 1e-4);
}

TEST(SinkhornProperty, SmallerEpsDoesNotRaiseCost) {
  Rng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    const auto mu = testgen::random_measure(rng.uniform_int(2, 6), 2, rng);
    const auto nu = testgen::random_measure(rng.uniform_int(2, 6), 2, rng);
    const Matrix cost = squared_euclidean_cost(mu.support, nu.support);
    double previous = std::numeric_limits<double>::infinity();
    for (double eps : {4.0, 1.0, 0.25, 0.0625}) {
      const double c = sinkhorn_eot(mu, nu, eps).transport_cost(cost);
      ASSERT_LE(c, previous + 1e-7) << "trial " << trial << " eps " << eps;
      previous = c;
    }
  }
}

TEST(Uot, LargeBetaRecoversBalanced) {
  Rng rng(7);
  const auto mu = testgen::random_measure(4, 3, rng);
  const auto nu = testgen::random_measure(5, 3, rng);
  const Coupling a = sinkhorn_eot(mu, nu, 0.5);
  const Coupling b = sinkhorn_uot_one_sided(mu, nu, 0.5, 1e6);
  EXPECT_LT((a.pi - b.pi).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Uot, FarColumnLosesMass) {
  Matrix u(2, 1), v(3, 1);
  u << 0.0, 1.0;
  v << 0.0, 1.0, 100.0;
  const auto mu = DiscreteMeasure::uniform(u);
  const auto nu = DiscreteMeasure::uniform(v);
  const Coupling c = sinkhorn_uot_one_sided(mu, nu, 0.1, 1.0);
  EXPECT_LT(c.pi.col(2).sum(), 1e-6);
  EXPECT_LT(row_violation(c, mu.weights), 1e-6);
}

TEST(Uot, SingleAtomsRowSumIsOne) {
  const auto m = DiscreteMeasure::uniform(Matrix::Constant(1, 2, 3.0));
  const auto n = DiscreteMeasure::uniform(Matrix::Constant(1, 2, -1.0));
  const Coupling c = sinkhorn_uot_one_sided(m, n, 1.0, 2.0);
  EXPECT_NEAR(c.pi.sum(), 1.0, 1e-9);
}

TEST(Uot, RejectsNonPositiveBeta) {
  const auto m = DiscreteMeasure::uniform(Matrix::Zero(2, 2));
  EXPECT_THROW(sinkhorn_uot_one_sided(m, m, 1.0, 0.0), std::invalid_argument);
}

TEST(UotProperty, LargeBetaMatchesEotOnRandomInstances) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto mu = testgen::random_measure(rng.uniform_int(1, 8), 3, rng);
    const auto nu = testgen::random_measure(rng.uniform_int(1, 8), 3, rng);
    const double eps = rng.uniform(0.1, 5.0);
    const Coupling a = sinkhorn_eot(mu, nu, eps);
    const Coupling b = sinkhorn_uot_one_sided(mu, nu, eps, 1e6);
    ASSERT_LT((a.pi - b.pi).cwiseAbs().maxCoeff(), 1e-4) << "trial " << trial;
  }
}

TEST(UotProperty, RowMarginalAlwaysExact) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto mu = testgen::random_measure(rng.uniform_int(1, 8), 2, rng);
    const auto nu = testgen::random_measure(rng.uniform_int(1, 8), 2, rng);
    const Coupling c = sinkhorn_uot_one_sided(mu, nu, rng.uniform(0.05, 2.0), rng.uniform(0.1, 10.0));
    ASSERT_LT(row_violation(c, mu.weights), 1e-6) << "trial " << trial;
  }
}

TEST(TopK, FullKIsNormalisedRow) {
  RowVector row(3);
  row << 0.2, 0.6, 0.4;
  const HandleWeights h = topk_renormalize(row, 0, 3);
  EXPECT_EQ(h.sites, (std::vector<int>{1, 2, 0}));
  EXPECT_NEAR(h.weights[0], 0.5, 1e-15);
  EXPECT_NEAR(h.weights[1], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(h.weights[2], 1.0 / 6.0, 1e-15);
}

TEST(TopK, HandComputedTwoOfThree) {
  RowVector row(3);
  row << 0.5, 0.3, 0.2;
  const HandleWeights h = topk_renormalize(row, 0, 2);
  EXPECT_EQ(h.sites, (std::vector<int>{0, 1}));
  EXPECT_NEAR(h.weights[0], 0.625, 1e-15);
  EXPECT_NEAR(h.weights[1], 0.375, 1e-15);
}

TEST(TopK, SingleIsArgmax) {
  RowVector row(4);
  row << 0.1, 0.2, 0.5, 0.2;
  const HandleWeights h = topk_renormalize(row, 2, 1);
  EXPECT_EQ(h.variable, 2);
  EXPECT_EQ(h.sites, std::vector<int>{2});
  EXPECT_EQ(h.weights, std::vector<double>{1.0});
}

TEST(TopK, TiesGoToLowerIndex) {
  RowVector row(4);
  row << 0.1, 0.3, 0.3, 0.3;
  const HandleWeights h = topk_renormalize(row, 0, 2);
  EXPECT_EQ(h.sites, (std::vector<int>{1, 2}));
}

TEST(TopK, Errors) {
  EXPECT_THROW(topk_renormalize(RowVector::Zero(3), 0, 1), std::runtime_error);
  EXPECT_THROW(topk_renormalize(RowVector::Ones(3), 0, 0), std::invalid_argument);
  EXPECT_THROW(topk_renormalize(RowVector::Ones(3), 0, 4), std::invalid_argument);
}

TEST(TopK, FromCouplingRow) {
  Coupling c;
  c.pi = Matrix(2, 3);
  c.pi << 0.1, 0.2, 0.0, 0.05, 0.05, 0.6;
  const HandleWeights h = topk_renormalize(c, 1, 1);
  EXPECT_EQ(h.sites, std::vector<int>{2});
  EXPECT_THROW(topk_renormalize(c, 2, 1), std::out_of_range);
}

TEST(TopKProperty, OrderingAndScaleInvariance) {
  Rng rng(10);
  for (int trial = 0; trial < 300; ++trial) {
    const Index n = rng.uniform_int(1, 12);
    RowVector row(n);
    for (Index j = 0; j < n; ++j)
      row(j) = rng.uniform(0.0, 1.0);
    row(rng.uniform_int(0, static_cast<int>(n) - 1)) += 0.1;
    const int k = rng.uniform_int(1, static_cast<int>(n));
    const HandleWeights h = topk_renormalize(row, 0, k);
    const HandleWeights scaled = topk_renormalize(row * rng.uniform(0.01, 100.0), 0, k);
    ASSERT_EQ(h.sites, scaled.sites);
    double sum = 0.0;
    for (std::size_t i = 0; i < h.weights.size(); ++i) {
      ASSERT_NEAR(h.weights[i], scaled.weights[i], 1e-12);
      ASSERT_GE(h.weights[i], 0.0);
      if (i > 0) {
        ASSERT_LE(h.weights[i], h.weights[i - 1]);
      }
      sum += h.weights[i];
    }
    ASSERT_NEAR(sum, 1.0, 1e-9);
    // Every kept entry is at least as large as every dropped one.
    double kept_min = std::numeric_limits<double>::infinity();
    for (int s : h.sites)
      kept_min = std::min(kept_min, row(s));
    for (Index j = 0; j < n; ++j)
      if (std::find(h.sites.begin(), h.sites.end(), static_cast<int>(j)) == h.sites.end()) {
        ASSERT_LE(row(j), kept_min);
      }
  }
}

TEST(Cost, SquaredEuclidean) {
  Matrix u(2, 2), v(1, 2);
  u << 0, 0, 1, 2;
  v << 1, 2;
  const Matrix c = squared_euclidean_cost(u, v);
  EXPECT_DOUBLE_EQ(c(0, 0), 5.0);
  EXPECT_DOUBLE_EQ(c(1, 0), 0.0);
}

TEST(CostProperty, NonNegativeAndZeroOnlyForEqualRows) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix u = testgen::int_matrix(rng.uniform_int(1, 6), 3, -2, 2, rng);
    const Matrix v = testgen::int_matrix(rng.uniform_int(1, 6), 3, -2, 2, rng);
    const Matrix c = squared_euclidean_cost(u, v);
    for (Index i = 0; i < u.rows(); ++i)
      for (Index j = 0; j < v.rows(); ++j) {
        ASSERT_GE(c(i, j), 0.0);
        ASSERT_EQ(c(i, j) == 0.0, u.row(i) == v.row(j));
      }
  }
}

TEST(Measure, ValidateRejectsBadWeights) {
  DiscreteMeasure m = DiscreteMeasure::uniform(Matrix::Zero(3, 2));
  EXPECT_NO_THROW(m.validate());
  EXPECT_NEAR(m.weights.sum(), 1.0, 1e-12);
  m.weights(0) = -0.1;
  EXPECT_THROW(m.validate(), std::invalid_argument);
  m.weights = Vector::Constant(2, 0.5);
  EXPECT_THROW(m.validate(), std::invalid_argument);
}

TEST(CouplingIo, JsonCarriesMetadata) {
  Rng rng(12);
  const Coupling c =
      sinkhorn_eot(testgen::random_measure(2, 2, rng), testgen::random_measure(3, 2, rng), 0.7);
  const nlohmann::json j = to_json(c);
  EXPECT_DOUBLE_EQ(j.at("eps").get<double>(), 0.7);
  EXPECT_EQ(j.at("mode").get<std::string>(), to_string(CouplingMode::Balanced));
  EXPECT_EQ(j.at("iterations").get<int>(), c.iterations);
  const std::string csv = coupling_to_csv(c);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), ','), 4);
}
