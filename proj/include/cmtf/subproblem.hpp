#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "cmtf/coupling.hpp"
#include "cmtf/lbfgsb.hpp"
#include "cmtf/loss.hpp"

namespace cmtf {

/// One factor update under a general loss:
///   w L(T_[d], X M^T) + rho/2 ||X - splitTarget||^2
///                     + rho/2 ||A(X) - couplingTarget||^2,  X >= lowerBound.
/// splitTarget is Z - muZ, couplingTarget is B(Delta) - muDelta.
struct FactorSubproblem {
  LossSpec loss;
  const Matrix* unfolded = nullptr;  // T_[d]
  const Matrix* coKr = nullptr;      // M
  double weight = 1.0;
  double rho = 1.0;
  std::optional<Matrix> splitTarget;
  std::optional<CouplingMap> map;
  Matrix couplingTarget;
  double lowerBound = -std::numeric_limits<double>::infinity();
};

struct SubproblemResult {
  Matrix x;
  double value = 0.0;
  double initialValue = 0.0;
  /// False when the subsolver could not lower the objective; x is then the
  /// (projected) warm start.
  bool improved = false;
  int iterations = 0;
  std::vector<double> trace;
};

/// Objective value; fills `gradient` when non-null. The loss's data-only
/// constant is dropped, so values are comparable only within one problem.
double subproblemObjective(const FactorSubproblem& p, const Matrix& x, Matrix* gradient);

SubproblemResult solveFactorSubproblemGeneral(const FactorSubproblem& p, const Matrix& warmStart,
                                              const BoundedLbfgsOptions& options = {});

/// Convenience form building the unfolding and co-Khatri-Rao product itself.
/// `split` is (Z, muZ); `coupling` is (map, Delta, muDelta).
struct CouplingTerm {
  CouplingMap map;
  Matrix delta;
  Matrix dual;
};
SubproblemResult solveFactorSubproblemGeneral(
    const LossSpec& loss, const DenseTensor& t, const KruskalFactors& k, std::size_t mode,
    double weight, double rho, const std::optional<std::pair<Matrix, Matrix>>& split,
    const std::optional<CouplingTerm>& coupling, std::optional<double> lowerBound,
    const Matrix& warmStart, const BoundedLbfgsOptions& options = {});

}  // namespace cmtf
