#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cmtf/problem.hpp"
#include "cmtf/rng.hpp"

namespace cmtf {

/// n x R matrix with unit columns whose pairwise inner products all equal
/// `congruence`. Requires R <= n and 0 <= congruence < 1.
Matrix generateCollinearFactors(Eigen::Index n, Eigen::Index rank, double congruence, Rng& rng);

/// x + level * (||x|| / ||n||) * n with n standard normal.
DenseTensor addGaussianNoise(const DenseTensor& x, double level, Rng& rng);

/// Independent Poisson counts with means x.
DenseTensor samplePoisson(const DenseTensor& x, Rng& rng);

enum class FactorDistribution { Normal, Uniform, Gamma };
enum class NoiseModel { None, Gaussian, Poisson };

Matrix randomFactorMatrix(Eigen::Index n, Eigen::Index rank, FactorDistribution dist, Rng& rng);

/// Generation recipe for one of the built-in experiments.
struct SynthSpec {
  std::string experiment;  // exp1a, exp1b, exp2, exp3, exp4, exp5
  std::vector<Shape> shapes;
  std::vector<Eigen::Index> ranks;
  std::optional<double> congruence;
  FactorDistribution factors = FactorDistribution::Normal;
  NoiseModel noise = NoiseModel::Gaussian;
  double noiseLevel = 0.2;
  LossSpec loss;
  bool nonnegative = false;
  bool normalize = true;
};

const std::vector<std::string>& experimentNames();

/// Defaults for a named experiment; throws std::invalid_argument for
/// unknown names.
SynthSpec experimentDefaults(const std::string& name);

struct SyntheticProblem {
  ProblemSpec problem;
  std::vector<KruskalFactors> truth;
};

/// Draws ground truth and data for `spec`. All tensors share mode 1 through
/// the experiment's coupling.
SyntheticProblem buildExperiment(const SynthSpec& spec, Rng& rng);

}  // namespace cmtf
