#include <cmath>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "cmtf/lbfgsb.hpp"
#include "cmtf/loss.hpp"
#include "cmtf/subproblem.hpp"
#include "cmtf/synth.hpp"
#include "oracles.hpp"

using namespace cmtf;

namespace {

struct Setting {
  std::string name;
  LossSpec spec;
};

std::vector<Setting> gradientSettings() {
  return {{"frobenius", LossSpec::frobenius()},
          {"kl", LossSpec::kl()},
          {"is", LossSpec::itakuraSaito()},
          {"beta0.5", LossSpec::betaDivergence(0.5)},
          {"beta1.5", LossSpec::betaDivergence(1.5)},
          {"beta2.5", LossSpec::betaDivergence(2.5)},
          {"alpha0.5", LossSpec::alphaDivergence(0.5)},
          {"alpha2", LossSpec::alphaDivergence(2.0)},
          {"huber0.1", LossSpec::huber(0.1)},
          {"huber1", LossSpec::huber(1.0)}};
}

DenseTensor uniformTensor(const Shape& shape, double lo, double hi, Rng& rng) {
  DenseTensor t(shape);
  const Matrix u = randomUniform(static_cast<Eigen::Index>(t.size()), 1, rng);
  for (std::size_t j = 0; j < t.size(); ++j) t[j] = lo + (hi - lo) * u(static_cast<Eigen::Index>(j));
  return t;
}

// Data and model inside the loss domain; KL data are counts.
std::pair<DenseTensor, DenseTensor> feasiblePair(const LossSpec& spec, Rng& rng) {
  const Shape shape{2, 3, 2};
  DenseTensor x = uniformTensor(shape, 0.2, 3.0, rng);
  DenseTensor t = uniformTensor(shape, 0.2, 3.0, rng);
  if (spec.kind == LossKind::KL) t = samplePoisson(x, rng);
  if (spec.kind == LossKind::Frobenius || spec.kind == LossKind::Huber) {
    x = oracle::randomTensor(shape, rng);
    t = oracle::randomTensor(shape, rng);
  }
  return {t, x};
}

DenseTensor withValues(const Shape& shape, const Vector& v) {
  DenseTensor out(shape);
  out.asVector() = v;
  return out;
}

}  // namespace

TEST(LossExamples, KlAndIsVanishOnData) {
  Rng rng(31);
  const DenseTensor x = uniformTensor({3, 4}, 0.5, 2.0, rng);
  EXPECT_NEAR(lossValue(LossSpec::itakuraSaito(), x, x), 0.0, 1e-12);
  DenseTensor counts = samplePoisson(x, rng);
  DenseTensor model = counts;
  for (std::size_t j = 0; j < model.size(); ++j) model[j] = std::max(model[j], 0.0);
  EXPECT_NEAR(lossValue(LossSpec::kl(), counts, model), 0.0, 1e-10);
  const DenseTensor grad = lossGradient(LossSpec::kl(), x, x);
  EXPECT_LT(grad.asVector().cwiseAbs().maxCoeff(), 1e-15);
}

TEST(LossExamples, KlZeroCountsContributeModel) {
  const DenseTensor t({1, 2}, {0.0, 0.0});
  const DenseTensor x({1, 2}, {0.5, 1.5});
  EXPECT_DOUBLE_EQ(lossValue(LossSpec::kl(), t, x), 2.0);
}

TEST(LossExamples, HuberBranches) {
  DenseTensor t({2, 2}, {1, 2, 3, 4});
  DenseTensor x = t;
  x[2] += 3.0;
  EXPECT_DOUBLE_EQ(lossValue(LossSpec::huber(1.0), t, x), 5.0);
  DenseTensor y = t;
  y[0] += 0.5;
  y[1] -= 0.5;
  const DenseTensor g = lossGradient(LossSpec::huber(1.0), t, y);
  EXPECT_DOUBLE_EQ(g[0], 1.0);
  EXPECT_DOUBLE_EQ(g[1], -1.0);
}

TEST(LossExamples, FrobeniusIsSquaredNorm) {
  Rng rng(32);
  const DenseTensor t = oracle::randomTensor({3, 4, 2}, rng);
  const DenseTensor x = oracle::randomTensor({3, 4, 2}, rng);
  EXPECT_NEAR(lossValue(LossSpec::frobenius(), t, x), (t.asVector() - x.asVector()).squaredNorm(),
              1e-12);
}

TEST(LossExamples, BetaTwoIsHalfFrobenius) {
  Rng rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    const DenseTensor t = uniformTensor({3, 3}, 0.1, 4.0, rng);
    const DenseTensor x = uniformTensor({3, 3}, 0.1, 4.0, rng);
    EXPECT_NEAR(lossValue(LossSpec::betaDivergence(2.0), t, x),
                0.5 * lossValue(LossSpec::frobenius(), t, x), 1e-12);
  }
}

TEST(LossDomain, RejectsInvalidInputs) {
  const DenseTensor t({1, 2}, {1.0, 2.0});
  const DenseTensor negative({1, 2}, {1.0, -0.5});
  try {
    lossValue(LossSpec::kl(), t, negative);
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_EQ(e.index(), 1u);
  }
  EXPECT_THROW(lossValue(LossSpec::itakuraSaito(), DenseTensor({1, 2}, {0.0, 1.0}), t), DomainError);
  EXPECT_THROW(lossValue(LossSpec::kl(), negative, t), DomainError);
  EXPECT_THROW(LossSpec::betaDivergence(1.0).validate(), std::invalid_argument);
  EXPECT_THROW(LossSpec::alphaDivergence(0.0).validate(), std::invalid_argument);
  EXPECT_THROW(LossSpec::huber(0.0).validate(), std::invalid_argument);
}

TEST(LossProperties, KlAndIsNonnegativeWithEqualityOnlyAtData) {
  Rng rng(34);
  for (int trial = 0; trial < 100; ++trial) {
    const DenseTensor t = uniformTensor({2, 3}, 0.1, 3.0, rng);
    const DenseTensor x = uniformTensor({2, 3}, 0.1, 3.0, rng);
    EXPECT_GT(lossValue(LossSpec::kl(), t, x), 1e-10);
    EXPECT_GT(lossValue(LossSpec::itakuraSaito(), t, x), 1e-10);
  }
}

TEST(LossProperties, GradientsMatchCentralDifferences) {
  Rng rng(35);
  for (const auto& [name, spec] : gradientSettings()) {
    for (int point = 0; point < 100; ++point) {
      const auto [t, x] = feasiblePair(spec, rng);
      const Vector g = lossGradient(spec, t, x).asVector();
      const auto f = [&, &t = t](const Vector& v) { return lossValue(spec, t, withValues(t.shape(), v)); };
      const Vector fd = oracle::finiteDifference(f, x.asVector(), 1e-6);
      ASSERT_LT((g - fd).norm() / std::max(fd.norm(), 1e-12), 1e-5) << name << " point " << point;
    }
  }
}

TEST(BoundedLbfgs, SolvesBoxConstrainedQuadratic) {
  // min ||x - c||^2 over [0, 1]^n has the clipped c as its solution.
  Vector c(5);
  c << -1.0, 0.3, 2.0, 0.9, -0.2;
  const SmoothObjective f = [&](const Vector& x, Vector& g) {
    g = 2.0 * (x - c);
    return (x - c).squaredNorm();
  };
  const auto r = minimizeBounded(f, Vector::Constant(5, 0.5), Vector::Zero(5), Vector::Ones(5));
  EXPECT_LT((r.x - c.cwiseMax(0.0).cwiseMin(1.0)).norm(), 1e-8);
}

TEST(BoundedLbfgs, UnboundedRosenbrockDescends) {
  const SmoothObjective f = [](const Vector& x, Vector& g) {
    g.resize(2);
    g(0) = -2.0 * (1.0 - x(0)) - 400.0 * x(0) * (x(1) - x(0) * x(0));
    g(1) = 200.0 * (x(1) - x(0) * x(0));
    return std::pow(1.0 - x(0), 2) + 100.0 * std::pow(x(1) - x(0) * x(0), 2);
  };
  BoundedLbfgsOptions o;
  o.maxIterations = 500;
  o.recordTrace = true;
  const Vector inf = Vector::Constant(2, INFINITY);
  const auto r = minimizeBounded(f, Vector::Constant(2, -1.2), -inf, inf, o);
  EXPECT_LT((r.x - Vector::Ones(2)).norm(), 1e-4);
  for (std::size_t k = 1; k < r.trace.size(); ++k) EXPECT_LT(r.trace[k], r.trace[k - 1]);
}

class GeneralSubproblem : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(36);
    k = oracle::randomKruskal({4, 3, 5}, 2, rng);
    t = reconstruct(k);
    for (std::size_t j = 0; j < t.size(); ++j) t[j] += 0.1 * randomNormal(1, 1, rng)(0, 0);
    z = randomNormal(4, 2, rng);
    mu = 0.1 * randomNormal(4, 2, rng);
    warm = randomNormal(4, 2, rng);
  }
  KruskalFactors k;
  DenseTensor t;
  Matrix z, mu, warm;
};

TEST_F(GeneralSubproblem, FrobeniusMatchesClosedForm) {
  const double w = 0.7, rho = 1.3;
  const auto r = solveFactorSubproblemGeneral(LossSpec::frobenius(), t, k, 0, w, rho,
                                              std::pair{z, mu}, std::nullopt, std::nullopt, warm);
  const Matrix target = z - mu;
  const FrobeniusFactorSolver closed(gramHadamard(k, 0), w, rho, true, nullptr);
  const Matrix exact = closed.solve(mttkrp(t, k, 0), &target, nullptr);
  EXPECT_LT((r.x - exact).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE(r.value, r.initialValue);
}

TEST_F(GeneralSubproblem, LargePenaltyPinsToSplitTarget) {
  const auto r = solveFactorSubproblemGeneral(LossSpec::huber(0.5), t, k, 0, 1.0, 1e8,
                                              std::pair{z, mu}, std::nullopt, std::nullopt, warm);
  EXPECT_LT((r.x - (z - mu)).cwiseAbs().maxCoeff(), 1e-4);
}

TEST_F(GeneralSubproblem, ObjectiveGradientMatchesDifferences) {
  Rng rng(37);
  const Matrix unfolded = unfold(t, 1);
  const Matrix coKr = coKhatriRao(k, 1);
  const std::vector<std::pair<CouplingCase, Matrix>> maps{
      {CouplingCase::Exact, Matrix()},
      {CouplingCase::ModeTransformToDelta, randomNormal(2, 3, rng)},
      {CouplingCase::DeltaToMode, randomNormal(3, 2, rng)},
      {CouplingCase::ComponentTransformToDelta, randomNormal(2, 3, rng)},
      {CouplingCase::DeltaToComponent, randomNormal(3, 2, rng)}};
  for (const auto& [kind, h] : maps) {
    FactorSubproblem p{.loss = LossSpec::huber(0.3), .unfolded = &unfolded, .coKr = &coKr,
                       .weight = 0.6, .rho = 1.7};
    p.splitTarget = randomNormal(3, 2, rng);
    p.map = CouplingMap(kind, h);
    p.couplingTarget = randomNormal(p.map->applyFactor(Matrix::Zero(3, 2)).rows(),
                                    p.map->applyFactor(Matrix::Zero(3, 2)).cols(), rng);
    const Matrix x = randomNormal(3, 2, rng);
    Matrix g;
    subproblemObjective(p, x, &g);
    const auto f = [&](const Vector& v) { return subproblemObjective(p, oracle::unvec(v, 3, 2), nullptr); };
    const Vector fd = oracle::finiteDifference(f, oracle::vec(x), 1e-6);
    EXPECT_LT((oracle::vec(g) - fd).norm() / fd.norm(), 1e-6) << toString(kind);
  }
}

TEST(GeneralSubproblemKl, TraceIsNonincreasingAndBounded) {
  Rng rng(38);
  const KruskalFactors truth({randomUniform(4, 2, rng), randomUniform(3, 2, rng),
                              randomUniform(2, 2, rng)});
  DenseTensor mean = reconstruct(truth);
  for (std::size_t j = 0; j < mean.size(); ++j) mean[j] *= 5.0;
  const DenseTensor counts = samplePoisson(mean, rng);
  KruskalFactors k = truth;
  const Matrix z = randomUniform(4, 2, rng);
  BoundedLbfgsOptions o;
  o.recordTrace = true;
  const auto r = solveFactorSubproblemGeneral(LossSpec::kl(), counts, k, 0, 0.5, 0.8,
                                              std::pair{z, Matrix(Matrix::Zero(4, 2))}, std::nullopt,
                                              0.0, randomUniform(4, 2, rng), o);
  ASSERT_GE(r.trace.size(), 2u);
  for (std::size_t j = 1; j < r.trace.size(); ++j) EXPECT_LE(r.trace[j], r.trace[j - 1]);
  EXPECT_GE(r.x.minCoeff(), 0.0);
  EXPECT_LT(r.value, r.initialValue);
}

TEST(GeneralSubproblemKl, RequiresNonnegativeBound) {
  Rng rng(39);
  const KruskalFactors k({randomUniform(3, 1, rng), randomUniform(2, 1, rng)});
  const DenseTensor t = reconstruct(k);
  EXPECT_THROW(solveFactorSubproblemGeneral(LossSpec::kl(), t, k, 0, 1.0, 1.0, std::nullopt,
                                            std::nullopt, std::nullopt, k[0]),
               std::invalid_argument);
}

TEST(GeneralSubproblemAll, NeverWorseThanWarmStart) {
  Rng rng(40);
  for (const auto& [name, spec] : gradientSettings()) {
    for (int trial = 0; trial < 10; ++trial) {
      const KruskalFactors k({randomUniform(4, 2, rng), randomUniform(3, 2, rng),
                              randomUniform(3, 2, rng)});
      DenseTensor t = reconstruct(k);
      for (std::size_t j = 0; j < t.size(); ++j) t[j] += 0.2 * randomUniform(1, 1, rng)(0, 0);
      if (spec.kind == LossKind::KL) t = samplePoisson(t, rng);
      const std::optional<double> lower =
          spec.requiresNonnegativeModel() ? std::optional<double>(0.0) : std::nullopt;
      const auto r = solveFactorSubproblemGeneral(spec, t, k, 2, 0.5, 1.0, std::nullopt,
                                                  std::nullopt, lower, randomUniform(3, 2, rng));
      EXPECT_LE(r.value, r.initialValue) << name;
    }
  }
}
