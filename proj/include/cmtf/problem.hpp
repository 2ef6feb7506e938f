#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cmtf/coupling.hpp"
#include "cmtf/lbfgsb.hpp"
#include "cmtf/loss.hpp"
#include "cmtf/prox.hpp"

namespace cmtf {

struct TensorBlock {
  std::string name;
  DenseTensor data;
  Eigen::Index rank = 1;
  double weight = 1.0;
  LossSpec loss;
  /// One entry per mode; RegularizerKind::None leaves the mode unsplit.
  std::vector<RegularizerSpec> regularizers;

  const RegularizerSpec& regularizer(std::size_t mode) const { return regularizers.at(mode); }
  bool nonnegativeFactor(std::size_t mode) const {
    return loss.requiresNonnegativeModel() || regularizer(mode).impliesNonnegative();
  }
};

struct ProblemSpec {
  std::vector<TensorBlock> tensors;
  std::vector<CouplingSpec> couplings;

  std::size_t maxOrder() const;
  /// Coupling acting on `mode`, or null.
  const CouplingSpec* couplingForMode(std::size_t mode) const;
  std::optional<std::size_t> couplingIndexForMode(std::size_t mode) const;

  /// Every violated invariant as a readable message; empty when valid.
  /// `checkData` also scans tensor entries against the loss domain.
  std::vector<std::string> diagnostics(bool checkData = true) const;
  /// Throws std::invalid_argument listing all diagnostics.
  void validate(bool checkData = true) const;
};

/// Block with every mode unregularized.
TensorBlock makeBlock(std::string name, DenseTensor data, Eigen::Index rank, double weight = 1.0,
                      LossSpec loss = {});

/// Scales every tensor to unit Frobenius norm and sets equal weights 1/N.
void normalizeTensors(ProblemSpec& p);

enum class InitMode {
  Svd,            // leading left singular vectors; random fallback when not applicable
  RandomNormal,   // standard normal, uniform for nonnegative factors
  RandomUniform,  // uniform in [0, 1)
};
std::string_view toString(InitMode mode);
InitMode initModeFromString(std::string_view name);

struct SolverOptions {
  int innerMaxIters = 5;
  double innerTol = 1e-4;
  double outerTolAbs = 1e-4;
  double outerTolRel = 1e-12;
  int outerMaxIters = 10000;
  std::uint64_t seed = 0;
  InitMode init = InitMode::RandomNormal;
  BoundedLbfgsOptions subsolver;
  /// Record 0 instead of wall-clock time, giving byte-stable traces.
  bool deterministicTiming = false;

  void validate() const;
};

struct TraceRecord {
  int outerIteration = 0;
  double fTensors = 0.0;
  double fCouplings = 0.0;
  double fConstraints = 0.0;
  double seconds = 0.0;
  /// One entry per (tensor, mode), tensor-major.
  std::vector<int> innerIterations;
  std::optional<double> fms;
};

enum class TerminationReason { Converged, IterationCap };
std::string_view toString(TerminationReason reason);

}  // namespace cmtf
