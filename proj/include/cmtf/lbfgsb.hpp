#pragma once

#include <functional>
#include <vector>

#include "cmtf/tensor.hpp"

namespace cmtf {

struct BoundedLbfgsOptions {
  int memory = 5;
  int maxIterations = 100;
  /// Stop when the infinity norm of the projected gradient falls below this.
  double projectedGradientTol = 1e-10;
  /// Stop when (f_k - f_{k+1}) / max(|f_k|, |f_{k+1}|, 1) falls below this.
  double relativeFunctionTol = 1e-10;
  int maxLineSearchSteps = 40;
  bool recordTrace = false;
};

enum class LbfgsStatus {
  ProjectedGradientConverged,
  FunctionChangeConverged,
  IterationLimit,
  LineSearchFailed,
};

struct BoundedLbfgsResult {
  Vector x;
  double value = 0.0;
  double initialValue = 0.0;
  int iterations = 0;
  int evaluations = 0;
  LbfgsStatus status = LbfgsStatus::IterationLimit;
  /// Objective after each accepted iterate, starting with the initial point.
  std::vector<double> trace;
};

/// Returns f(x) and writes its gradient into `grad` (already sized).
using SmoothObjective = std::function<double(const Vector& x, Vector& grad)>;

/// Limited-memory BFGS for box-constrained smooth problems. Directions come
/// from the two-loop recursion restricted to the free variables; steps are
/// projected onto the box and backtracked until Armijo decrease holds, with a
/// fall back to the projected gradient. Every accepted step strictly lowers f.
/// Bounds may be +-infinity.
BoundedLbfgsResult minimizeBounded(const SmoothObjective& f, const Vector& x0, const Vector& lower,
                                   const Vector& upper, const BoundedLbfgsOptions& options = {});

}  // namespace cmtf
