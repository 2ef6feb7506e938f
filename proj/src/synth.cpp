#include "cmtf/synth.hpp"

#include <algorithm>
#include <stdexcept>

#include <boost/random/gamma_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>

namespace cmtf {

Matrix generateCollinearFactors(Eigen::Index n, Eigen::Index rank, double congruence, Rng& rng) {
  if (rank < 1 || rank > n) throw std::invalid_argument("collinear factors need 1 <= R <= n");
  if (!(congruence >= 0.0 && congruence < 1.0)) {
    throw std::invalid_argument("congruence must lie in [0, 1)");
  }
  Matrix k = Matrix::Constant(rank, rank, congruence);
  k.diagonal().setOnes();
  Eigen::LLT<Matrix> chol(k);
  if (chol.info() != Eigen::Success || chol.matrixL().toDenseMatrix().diagonal().minCoeff() < 1e-8) {
    throw std::invalid_argument("congruence too close to 1");
  }
  const Eigen::HouseholderQR<Matrix> qr(randomNormal(n, rank, rng));
  const Matrix q = qr.householderQ() * Matrix::Identity(n, rank);
  return q * chol.matrixL().transpose();
}

DenseTensor addGaussianNoise(const DenseTensor& x, double level, Rng& rng) {
  if (!(level > 0.0)) throw std::invalid_argument("noise level must be positive");
  const double xNorm = x.frobeniusNorm();
  if (xNorm == 0.0) throw std::invalid_argument("cannot scale noise to an all-zero tensor");
  const Matrix n = randomNormal(static_cast<Eigen::Index>(x.size()), 1, rng);
  DenseTensor out = x;
  out.asVector() += (level * xNorm / n.norm()) * n.col(0);
  return out;
}

DenseTensor samplePoisson(const DenseTensor& x, Rng& rng) {
  DenseTensor out(x.shape());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double mean = x[j];
    if (!(mean >= 0.0)) throw std::domain_error("Poisson mean must be nonnegative");
    if (mean == 0.0) continue;
    boost::random::poisson_distribution<long, double> dist(mean);
    out[j] = static_cast<double>(dist(rng));
  }
  return out;
}

Matrix randomFactorMatrix(Eigen::Index n, Eigen::Index rank, FactorDistribution dist, Rng& rng) {
  switch (dist) {
    case FactorDistribution::Normal: return randomNormal(n, rank, rng);
    case FactorDistribution::Uniform: return randomUniform(n, rank, rng);
    case FactorDistribution::Gamma: {
      boost::random::gamma_distribution<double> gamma(1.0, 1.0);
      Matrix m(n, rank);
      for (Eigen::Index j = 0; j < m.size(); ++j) m.data()[j] = gamma(rng);
      return m;
    }
  }
  return {};
}

const std::vector<std::string>& experimentNames() {
  static const std::vector<std::string> names{"exp1a", "exp1b", "exp2", "exp3", "exp4", "exp5"};
  return names;
}

SynthSpec experimentDefaults(const std::string& name) {
  SynthSpec s;
  s.experiment = name;
  s.shapes = {{40, 50, 60}, {40, 100}};
  s.ranks = {3, 3};
  if (name == "exp1a") {
    s.congruence = 0.5;
  } else if (name == "exp1b") {
    s.congruence = 0.9;
  } else if (name == "exp2") {
    s.factors = FactorDistribution::Uniform;
    s.nonnegative = true;
  } else if (name == "exp3") {
    s.shapes = {{80, 50, 60}, {40, 100}};
  } else if (name == "exp4") {
    s.shapes = {{40, 50, 60}, {40, 70, 60}, {40, 30, 50}};
    s.ranks = {2, 3, 4};
  } else if (name == "exp5") {
    s.factors = FactorDistribution::Gamma;
    s.noise = NoiseModel::Poisson;
    s.loss = LossSpec::kl();
    s.normalize = false;
  } else {
    throw std::invalid_argument("unknown experiment '" + name + "'");
  }
  return s;
}

namespace {

Matrix drawFactor(const SynthSpec& spec, Eigen::Index n, Eigen::Index rank, Rng& rng) {
  if (spec.congruence) return generateCollinearFactors(n, rank, *spec.congruence, rng);
  return randomFactorMatrix(n, rank, spec.factors, rng);
}

}  // namespace

SyntheticProblem buildExperiment(const SynthSpec& spec, Rng& rng) {
  const std::size_t count = spec.shapes.size();
  const bool exp3 = spec.experiment == "exp3";
  const bool exp4 = spec.experiment == "exp4";
  const std::size_t expected = exp4 ? 3 : 2;
  if (count != expected || spec.ranks.size() != count) {
    throw std::invalid_argument(spec.experiment + " expects " + std::to_string(expected) +
                                " shapes and as many ranks");
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (spec.shapes[i].size() < 2) throw std::invalid_argument("tensors need at least two modes");
    if (spec.ranks[i] < 1) throw std::invalid_argument("ranks must be positive");
  }
  const auto rows = [&](std::size_t i, std::size_t d) {
    return static_cast<Eigen::Index>(spec.shapes[i][d]);
  };

  CouplingSpec coupling;
  coupling.mode = 0;
  std::vector<Matrix> first(count);
  if (exp3) {
    const Eigen::Index nBig = rows(0, 0);
    const Eigen::Index nDelta = rows(1, 0);
    if (2 * nDelta - 1 > nBig || spec.ranks[0] != spec.ranks[1]) {
      throw std::invalid_argument("exp3 needs n1 >= 2 n2 - 1 and equal ranks");
    }
    Matrix select = Matrix::Zero(nDelta, nBig);
    for (Eigen::Index r = 0; r < nDelta; ++r) select(r, 2 * r) = 1.0;
    first[0] = drawFactor(spec, nBig, spec.ranks[0], rng);
    first[1] = select * first[0];
    coupling.kind = CouplingCase::ModeTransformToDelta;
    coupling.participants = {{0, select}, {1, Matrix::Identity(nDelta, nDelta)}};
    coupling.deltaRows = nDelta;
    coupling.deltaCols = spec.ranks[0];
  } else if (exp4) {
    const Eigen::Index n = rows(0, 0);
    const Eigen::Index shared = *std::max_element(spec.ranks.begin(), spec.ranks.end());
    const Matrix delta = drawFactor(spec, n, shared, rng);
    coupling.kind = CouplingCase::DeltaToComponent;
    coupling.deltaRows = n;
    coupling.deltaCols = shared;
    for (std::size_t i = 0; i < count; ++i) {
      if (rows(i, 0) != n) throw std::invalid_argument("exp4 tensors must share the mode-1 size");
      const Matrix select = Matrix::Identity(shared, spec.ranks[i]);
      first[i] = delta * select;
      coupling.participants.push_back({i, select});
    }
  } else {
    const Eigen::Index n = rows(0, 0);
    if (rows(1, 0) != n || spec.ranks[0] != spec.ranks[1]) {
      throw std::invalid_argument(spec.experiment + " needs equal mode-1 sizes and ranks");
    }
    first[0] = drawFactor(spec, n, spec.ranks[0], rng);
    first[1] = first[0];
    coupling.kind = CouplingCase::Exact;
    coupling.participants = {{0, Matrix()}, {1, Matrix()}};
    coupling.deltaRows = n;
    coupling.deltaCols = spec.ranks[0];
  }

  SyntheticProblem out;
  const double weight = 1.0 / static_cast<double>(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<Matrix> factors{first[i]};
    for (std::size_t d = 1; d < spec.shapes[i].size(); ++d) {
      factors.push_back(drawFactor(spec, rows(i, d), spec.ranks[i], rng));
    }
    KruskalFactors truth(std::move(factors));
    const DenseTensor clean = reconstruct(truth, spec.shapes[i]);
    DenseTensor data;
    switch (spec.noise) {
      case NoiseModel::None: data = clean; break;
      case NoiseModel::Gaussian: data = addGaussianNoise(clean, spec.noiseLevel, rng); break;
      case NoiseModel::Poisson: data = samplePoisson(clean, rng); break;
    }
    TensorBlock block = makeBlock("T" + std::to_string(i + 1), std::move(data), spec.ranks[i],
                                  weight, spec.loss);
    if (spec.nonnegative) {
      block.regularizers.assign(block.data.order(), RegularizerSpec::nonNegative());
    }
    out.problem.tensors.push_back(std::move(block));
    out.truth.push_back(std::move(truth));
  }
  out.problem.couplings.push_back(std::move(coupling));
  if (spec.normalize) normalizeTensors(out.problem);
  return out;
}

}  // namespace cmtf
