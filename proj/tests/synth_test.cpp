#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "cmtf/fms.hpp"
#include "cmtf/synth.hpp"
#include "oracles.hpp"

using namespace cmtf;

namespace {

KruskalFactors permuteAndScale(const KruskalFactors& k, const std::vector<int>& perm, Rng& rng) {
  std::vector<Matrix> out;
  for (std::size_t d = 0; d < k.order(); ++d) {
    Matrix m(k[d].rows(), k[d].cols());
    for (std::size_t r = 0; r < perm.size(); ++r) {
      const double s = 0.5 + randomUniform(1, 1, rng)(0, 0);
      m.col(static_cast<Eigen::Index>(r)) = (d % 2 ? -s : s) * k[d].col(perm[r]);
    }
    out.push_back(m);
  }
  return KruskalFactors(std::move(out));
}

}  // namespace

TEST(CollinearFactors, GramMatchesCongruence) {
  Rng rng(1);
  for (double c : {0.0, 0.5, 0.9}) {
    const Matrix a = generateCollinearFactors(40, 3, c, rng);
    Matrix expected = Matrix::Constant(3, 3, c);
    expected.diagonal().setOnes();
    EXPECT_LT((a.transpose() * a - expected).cwiseAbs().maxCoeff(), 1e-8) << c;
  }
}

TEST(CollinearFactors, RejectsInvalidArguments) {
  Rng rng(2);
  EXPECT_THROW(generateCollinearFactors(2, 3, 0.5, rng), std::invalid_argument);
  EXPECT_THROW(generateCollinearFactors(5, 2, 1.0, rng), std::invalid_argument);
  EXPECT_THROW(generateCollinearFactors(5, 2, -0.1, rng), std::invalid_argument);
}

TEST(GaussianNoise, HitsRequestedSignalToNoiseRatio) {
  Rng rng(3);
  const DenseTensor x = reconstruct(oracle::randomKruskal({10, 12, 8}, 3, rng));
  const DenseTensor y = addGaussianNoise(x, 0.2, rng);
  const double noise = (y.asVector() - x.asVector()).norm();
  const double snr = 20.0 * std::log10(x.frobeniusNorm() / noise);
  EXPECT_NEAR(snr, 13.98, 0.1);
}

TEST(Poisson, ZeroMeanGivesZero) {
  Rng rng(4);
  const DenseTensor z(Shape{3, 4});
  EXPECT_TRUE(samplePoisson(z, rng).asVector().isZero(0.0));
}

TEST(Poisson, SampleMeanMatchesRate) {
  Rng rng(5);
  constexpr std::size_t n = 100000;
  DenseTensor x(Shape{n, 1});
  x.asVector().setConstant(4.0);
  const DenseTensor s = samplePoisson(x, rng);
  const double mean = s.asVector().mean();
  EXPECT_NEAR(mean, 4.0, 3.0 * std::sqrt(4.0 / n));
  EXPECT_EQ(s.asVector().array().floor().matrix(), s.asVector());
  EXPECT_GE(s.asVector().minCoeff(), 0.0);
}

TEST(Poisson, ReproducibleAndRejectsNegativeMeans) {
  DenseTensor x(Shape{5, 6});
  x.asVector().setConstant(2.5);
  Rng a(6), b(6);
  EXPECT_EQ(samplePoisson(x, a), samplePoisson(x, b));
  x[3] = -1.0;
  EXPECT_THROW(samplePoisson(x, a), std::domain_error);
}

TEST(FactorMatch, IdentityScoresOne) {
  Rng rng(7);
  const std::vector<KruskalFactors> t{oracle::randomKruskal({5, 6, 7}, 3, rng),
                                      oracle::randomKruskal({5, 4}, 3, rng)};
  const FmsReport r = factorMatchScore(t, t);
  EXPECT_NEAR(r.fms, 1.0, 1e-12);
  EXPECT_NEAR(r.threshold, std::pow(0.99, 5), 1e-15);
  EXPECT_TRUE(r.passed);
}

TEST(FactorMatch, InvariantToPermutationAndScaling) {
  Rng rng(8);
  const KruskalFactors truth = oracle::randomKruskal({6, 5, 4}, 4, rng);
  const std::vector<int> perm{2, 0, 3, 1};
  const KruskalFactors est = permuteAndScale(truth, perm, rng);
  const FmsReport r = factorMatchScore({est}, {truth});
  EXPECT_NEAR(r.fms, 1.0, 1e-12);
  EXPECT_EQ(r.permutations[0], perm);
}

TEST(FactorMatch, MatchesBruteForcePermutationSearch) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index rank = 1 + static_cast<Eigen::Index>(trial % 5);
    const KruskalFactors truth = oracle::randomKruskal({4, 5, 3}, rank, rng);
    const KruskalFactors est = oracle::randomKruskal({4, 5, 3}, rank, rng);
    const Matrix sim = componentSimilarity(est, truth);
    const double expected = oracle::bestPermutationScore(sim) / static_cast<double>(rank);
    EXPECT_NEAR(factorMatchScore({est}, {truth}).fms, expected, 1e-12);
  }
}

TEST(FactorMatch, AssignmentIsOptimal) {
  Rng rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(trial % 6);
    const Matrix score = randomUniform(n, n, rng);
    const std::vector<int> a = maxWeightAssignment(score);
    double total = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) total += score(r, a[static_cast<std::size_t>(r)]);
    EXPECT_NEAR(total, oracle::bestPermutationScore(score), 1e-12);
  }
}

TEST(FactorMatch, RejectsRankMismatch) {
  Rng rng(11);
  EXPECT_THROW(factorMatchScore({oracle::randomKruskal({4, 5}, 2, rng)},
                                {oracle::randomKruskal({4, 5}, 3, rng)}),
               ShapeError);
}

TEST(Experiments, DefaultsCoverEveryName) {
  for (const std::string& name : experimentNames()) EXPECT_EQ(experimentDefaults(name).experiment, name);
  EXPECT_THROW(experimentDefaults("exp9"), std::invalid_argument);
}

TEST(Experiments, ModeTransformSelectsEverySecondRow) {
  SynthSpec spec = experimentDefaults("exp3");
  spec.shapes = {{9, 4, 3}, {5, 6}};
  Rng rng(12);
  const SyntheticProblem sp = buildExperiment(spec, rng);
  const CouplingSpec& c = sp.problem.couplings[0];
  EXPECT_EQ(c.kind, CouplingCase::ModeTransformToDelta);
  const Matrix& h = c.participants[0].transform;
  ASSERT_EQ(h.rows(), 5);
  ASSERT_EQ(h.cols(), 9);
  for (Eigen::Index r = 0; r < 5; ++r) {
    for (Eigen::Index col = 0; col < 9; ++col) EXPECT_EQ(h(r, col), col == 2 * r ? 1.0 : 0.0);
  }
  EXPECT_TRUE((h * sp.truth[0][0]).isApprox(sp.truth[1][0], 1e-14));
}

TEST(Experiments, SharedComponentSelections) {
  SynthSpec spec = experimentDefaults("exp4");
  spec.shapes = {{6, 4, 3}, {6, 5, 3}, {6, 3, 4}};
  Rng rng(13);
  const SyntheticProblem sp = buildExperiment(spec, rng);
  const CouplingSpec& c = sp.problem.couplings[0];
  EXPECT_EQ(c.kind, CouplingCase::DeltaToComponent);
  EXPECT_EQ(c.deltaCols, 4);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(c.participants[i].transform, Matrix::Identity(4, spec.ranks[i]));
    EXPECT_EQ(sp.truth[i][0], sp.truth[2][0].leftCols(spec.ranks[i]));
  }
  EXPECT_TRUE(sp.problem.diagnostics().empty());
}

TEST(Experiments, NormalizedGaussianDatasets) {
  SynthSpec spec = experimentDefaults("exp1a");
  spec.shapes = {{6, 5, 4}, {6, 7}};
  Rng rng(14);
  const SyntheticProblem sp = buildExperiment(spec, rng);
  for (const TensorBlock& b : sp.problem.tensors) {
    EXPECT_NEAR(b.data.frobeniusNorm(), 1.0, 1e-12);
    EXPECT_EQ(b.weight, 0.5);
  }
  EXPECT_EQ(sp.truth[0][0], sp.truth[1][0]);
}

TEST(Experiments, PoissonDatasetsAreCounts) {
  SynthSpec spec = experimentDefaults("exp5");
  spec.shapes = {{6, 5, 4}, {6, 7}};
  Rng rng(15);
  const SyntheticProblem sp = buildExperiment(spec, rng);
  for (const TensorBlock& b : sp.problem.tensors) {
    EXPECT_EQ(b.loss.kind, LossKind::KL);
    EXPECT_EQ(b.data.asVector().array().round().matrix(), b.data.asVector());
  }
  for (const auto& k : sp.truth) {
    for (std::size_t d = 0; d < k.order(); ++d) EXPECT_GT(k[d].minCoeff(), 0.0);
  }
}

TEST(Experiments, BuildIsDeterministic) {
  for (const std::string& name : experimentNames()) {
    SynthSpec spec = experimentDefaults(name);
    Rng a(16), b(16);
    const SyntheticProblem x = buildExperiment(spec, a);
    const SyntheticProblem y = buildExperiment(spec, b);
    for (std::size_t i = 0; i < x.problem.tensors.size(); ++i) {
      EXPECT_EQ(x.problem.tensors[i].data, y.problem.tensors[i].data) << name;
    }
  }
}
