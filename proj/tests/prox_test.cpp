#include <cmath>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "cmtf/prox.hpp"
#include "cmtf/rng.hpp"
#include "oracles.hpp"

using namespace cmtf;

namespace {

constexpr int kTrials = 1000;

Matrix column(std::initializer_list<double> v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

double proxObjective(const RegularizerSpec& spec, const Matrix& u, const Matrix& x, double step) {
  return evalRegularizer(spec, u) + (x - u).squaredNorm() / (2.0 * step);
}

struct Named {
  std::string name;
  RegularizerSpec spec;
};

std::vector<Named> convexKinds() {
  return {{"nonnegative", RegularizerSpec::nonNegative()},
          {"box", RegularizerSpec::box(-0.5, 1.0)},
          {"simplex", RegularizerSpec::simplex()},
          {"monotone", RegularizerSpec::monotone()},
          {"l1ball", RegularizerSpec::l1Ball(1.5)},
          {"l2ball", RegularizerSpec::l2UnitBall()},
          {"lasso", RegularizerSpec::lasso(0.7)},
          {"l2norm", RegularizerSpec::l2Norm(0.9)},
          {"smoothness1", RegularizerSpec::smoothness(0.8, 1)},
          {"smoothness2", RegularizerSpec::smoothness(0.3, 2)}};
}

std::vector<Named> indicatorKinds() {
  std::vector<Named> out;
  for (auto& k : convexKinds()) {
    if (k.spec.isIndicator()) out.push_back(k);
  }
  out.push_back({"normalized_sparsity", RegularizerSpec::normalizedHardSparsity(2)});
  return out;
}

Matrix randomInput(Rng& rng) {
  const Eigen::Index rows = 1 + static_cast<Eigen::Index>(rng() % 8);
  const Eigen::Index cols = 1 + static_cast<Eigen::Index>(rng() % 3);
  return 2.0 * randomNormal(rows, cols, rng);
}

double randomStep(Rng& rng) { return std::exp(2.0 * randomUniform(1, 1, rng)(0, 0) - 1.0); }

}  // namespace

TEST(ProxExamples, NonNegative) {
  EXPECT_EQ(applyProx(RegularizerSpec::nonNegative(), column({-1, 2}), 1.0), column({0, 2}));
}

TEST(ProxExamples, LassoSoftThreshold) {
  EXPECT_EQ(applyProx(RegularizerSpec::lasso(1.0), column({2, -0.5}), 1.0), column({1, 0}));
}

TEST(ProxExamples, Box) {
  EXPECT_EQ(applyProx(RegularizerSpec::box(0, 1), column({-3, 0.4, 7}), 1.0), column({0, 0.4, 1}));
}

TEST(ProxExamples, MonotonePoolsViolation) {
  EXPECT_TRUE(applyProx(RegularizerSpec::monotone(), column({2, 1}), 1.0)
                  .isApprox(column({1.5, 1.5}), 1e-15));
}

TEST(ProxExamples, SimplexFixedPoint) {
  EXPECT_TRUE(applyProx(RegularizerSpec::simplex(), column({0.5, 0.5}), 1.0)
                  .isApprox(column({0.5, 0.5}), 1e-15));
}

TEST(ProxExamples, L2UnitBallScalesDown) {
  const Matrix x = column({1, 2, 2});
  EXPECT_TRUE(applyProx(RegularizerSpec::l2UnitBall(), x, 1.0).isApprox(x / 3.0, 1e-15));
}

TEST(ProxExamples, HardSparsityTiesAndZeros) {
  const Matrix out = applyProx(RegularizerSpec::normalizedHardSparsity(1), column({2, -2, 1}), 1.0);
  EXPECT_EQ(out, column({1, 0, 0}));
  EXPECT_EQ(applyProx(RegularizerSpec::normalizedHardSparsity(2), column({0, 0, 0}), 1.0),
            column({1, 0, 0}));
}

TEST(Regularizer, Values) {
  EXPECT_EQ(evalRegularizer(RegularizerSpec::nonNegative(), Matrix::Ones(3, 2)), 0.0);
  EXPECT_TRUE(std::isinf(evalRegularizer(RegularizerSpec::nonNegative(), column({1, -1}))));
  Matrix row(1, 2);
  row << 1, -1;
  EXPECT_DOUBLE_EQ(evalRegularizer(RegularizerSpec::lasso(2.0), row), 4.0);
  EXPECT_EQ(evalRegularizer(RegularizerSpec::smoothness(1.0), Matrix::Constant(5, 2, 3.0)), 0.0);
}

TEST(Regularizer, InvalidParameters) {
  EXPECT_THROW(applyProx(RegularizerSpec::lasso(0.0), column({1}), 1.0), std::invalid_argument);
  EXPECT_THROW(applyProx(RegularizerSpec::l1Ball(-1.0), column({1}), 1.0), std::invalid_argument);
  EXPECT_THROW(applyProx(RegularizerSpec::box(1.0, 0.0), column({1}), 1.0), std::invalid_argument);
  EXPECT_THROW(applyProx(RegularizerSpec::normalizedHardSparsity(3), column({1, 2}), 1.0),
               std::invalid_argument);
  EXPECT_THROW(applyProx(RegularizerSpec::nonNegative(), column({1}), 0.0), std::invalid_argument);
}

TEST(ProxProperties, IndicatorsAreIdempotentAndFeasible) {
  Rng rng(21);
  for (const auto& [name, spec] : indicatorKinds()) {
    for (int trial = 0; trial < kTrials; ++trial) {
      const Matrix x = randomInput(rng);
      if (spec.kind == RegularizerKind::NormalizedHardSparsity && x.rows() < spec.sparsity) continue;
      const double step = randomStep(rng);
      const Matrix p = applyProx(spec, x, step);
      ASSERT_LE((applyProx(spec, p, step) - p).cwiseAbs().maxCoeff(), 1e-12) << name;
      ASSERT_EQ(evalRegularizer(spec, p), 0.0) << name;
    }
  }
}

TEST(ProxProperties, ConvexKindsAreNonExpansive) {
  Rng rng(22);
  for (const auto& [name, spec] : convexKinds()) {
    for (int trial = 0; trial < kTrials; ++trial) {
      const Matrix x = randomInput(rng);
      const Matrix y = x + randomNormal(x.rows(), x.cols(), rng);
      const double step = randomStep(rng);
      const double lhs = (applyProx(spec, x, step) - applyProx(spec, y, step)).norm();
      ASSERT_LE(lhs, (x - y).norm() + 1e-12) << name;
    }
  }
}

TEST(ProxProperties, SimplexOutputIsDistribution) {
  Rng rng(23);
  for (int trial = 0; trial < kTrials; ++trial) {
    const Matrix p = applyProx(RegularizerSpec::simplex(), randomInput(rng), 1.0);
    ASSERT_GE(p.minCoeff(), 0.0);
    ASSERT_LT((p.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-10);
  }
}

TEST(ProxProperties, L1BallFeasibleAndFixesInterior) {
  Rng rng(24);
  const double r = 1.5;
  for (int trial = 0; trial < kTrials; ++trial) {
    const Matrix x = randomInput(rng);
    const Matrix p = applyProx(RegularizerSpec::l1Ball(r), x, 1.0);
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      ASSERT_LE(p.col(c).lpNorm<1>(), r + 1e-10);
      if (x.col(c).lpNorm<1>() <= r) ASSERT_EQ(p.col(c), x.col(c));
    }
  }
}

TEST(ProxProperties, MonotoneMatchesEnumeration) {
  Rng rng(25);
  for (int trial = 0; trial < kTrials; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng() % 8);
    const Vector x = randomNormal(n, 1, rng).col(0);
    const Vector p = applyProx(RegularizerSpec::monotone(), x, 1.0).col(0);
    for (Eigen::Index i = 1; i < n; ++i) ASSERT_GE(p(i), p(i - 1));
    ASSERT_LT((p - oracle::isotonicByEnumeration(x)).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(ProxProperties, SmoothnessStationarity) {
  Rng rng(26);
  for (int order : {1, 2}) {
    for (int trial = 0; trial < kTrials; ++trial) {
      const Matrix x = randomInput(rng);
      if (x.rows() <= order) continue;
      const double gamma = 0.5, step = randomStep(rng);
      const Matrix p = applyProx(RegularizerSpec::smoothness(gamma, order), x, step);
      const Matrix d = prox::differenceMatrix(x.rows(), order);
      const Matrix lhs = (2.0 * gamma * step) * (d.transpose() * d) * p + p;
      ASSERT_LT((lhs - x).cwiseAbs().maxCoeff(), 1e-10);
    }
  }
}

TEST(ProxProperties, LassoAndL2NormSubgradientConditions) {
  Rng rng(27);
  for (int trial = 0; trial < kTrials; ++trial) {
    const Matrix x = randomInput(rng);
    const double gamma = 0.7, step = randomStep(rng), t = gamma * step;
    const Matrix p = applyProx(RegularizerSpec::lasso(gamma), x, step);
    for (Eigen::Index j = 0; j < x.size(); ++j) {
      const double g = (x(j) - p(j)) / t;  // must lie in the subdifferential of |.| at p
      if (p(j) != 0.0) ASSERT_NEAR(g, std::copysign(1.0, p(j)), 1e-10);
      else ASSERT_LE(std::abs(g), 1.0 + 1e-12);
    }
    const Matrix q = applyProx(RegularizerSpec::l2Norm(gamma), x, step);
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const Vector g = (x.col(c) - q.col(c)) / t;
      if (q.col(c).norm() > 0.0) {
        ASSERT_LT((g - q.col(c).normalized()).norm(), 1e-10);
      } else {
        ASSERT_LE(g.norm(), 1.0 + 1e-12);
      }
    }
  }
}

TEST(ProxProperties, NoCandidateBeatsTheProx) {
  Rng rng(28);
  for (const auto& [name, spec] : convexKinds()) {
    for (int trial = 0; trial < 50; ++trial) {
      const Matrix x = randomInput(rng);
      const double step = randomStep(rng);
      const Matrix p = applyProx(spec, x, step);
      const double best = proxObjective(spec, p, x, step);
      for (int c = 0; c < 2000; ++c) {
        const double scale = c % 2 ? 1e-3 : 1.0;
        Matrix u = p + scale * randomNormal(p.rows(), p.cols(), rng);
        if (c % 4 == 3) u = applyProx(spec, x + randomNormal(x.rows(), x.cols(), rng), step);
        ASSERT_GE(proxObjective(spec, u, x, step), best - 1e-12) << name;
      }
    }
  }
}

TEST(ProxProperties, HardSparsityKeepsLargestEntries) {
  Rng rng(29);
  for (int trial = 0; trial < kTrials; ++trial) {
    const Eigen::Index n = 3 + static_cast<Eigen::Index>(rng() % 6);
    const Vector x = randomNormal(n, 1, rng).col(0);
    const Vector p = applyProx(RegularizerSpec::normalizedHardSparsity(2), x, 1.0).col(0);
    ASSERT_NEAR(p.norm(), 1.0, 1e-12);
    Vector sorted = x.cwiseAbs();
    std::sort(sorted.data(), sorted.data() + n, std::greater<>());
    for (Eigen::Index i = 0; i < n; ++i) {
      if (p(i) != 0.0) {
        ASSERT_GE(std::abs(x(i)), sorted(1));
        ASSERT_GT(p(i) * x(i), 0.0);
      }
    }
  }
}
