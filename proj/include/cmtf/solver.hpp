#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "cmtf/problem.hpp"
#include "cmtf/rng.hpp"

namespace cmtf {

/// Split variable Z of a regularized factor and its scaled dual.
struct SplitState {
  Matrix z;
  Matrix dual;
};

struct SolverState {
  std::vector<KruskalFactors> factors;
  /// splits[i][d] is set when mode d of tensor i is regularized.
  std::vector<std::vector<std::optional<SplitState>>> splits;
  /// One per entry of ProblemSpec::couplings.
  std::vector<ConsensusState> consensus;
};

/// trace(gramHadamard) / rank, floored at 1e-12.
double computeRho(const KruskalFactors& k, std::size_t mode, Eigen::Index rank);

/// Variables of one ADMM group (a coupling's participants, or a single
/// uncoupled tensor) in one mode.
struct GroupIterate {
  std::vector<Matrix> factors;
  std::vector<std::optional<SplitState>> splits;
  std::optional<ConsensusState> consensus;
};

struct InnerResiduals {
  double constraintPrimal = 0.0;
  double couplingPrimal = 0.0;
  double constraintDual = 0.0;
  double couplingDual = 0.0;

  bool below(double tol) const {
    return constraintPrimal <= tol && couplingPrimal <= tol && constraintDual <= tol &&
           couplingDual <= tol;
  }
};

/// The four relative residuals between consecutive inner iterates.
/// `coupling` is null for an uncoupled group.
InnerResiduals innerResiduals(const CouplingSpec* coupling, const GroupIterate& before,
                              const GroupIterate& after);

struct ModeUpdateReport {
  /// Inner iterations per tensor; 0 for tensors without this mode.
  std::vector<int> innerIterations;
  std::vector<InnerResiduals> residuals;  // last residuals of each ADMM group run
};

/// One pass of the per-mode ADMM over all tensors having `mode`.
ModeUpdateReport admmModeUpdate(const ProblemSpec& p, std::size_t mode, SolverState& state,
                                const SolverOptions& opts);

struct ObjectiveValues {
  double fTensors = 0.0;
  double fCouplings = 0.0;
  double fConstraints = 0.0;
};

ObjectiveValues evaluateObjective(const ProblemSpec& p, const SolverState& state);

SolverState initializeState(const ProblemSpec& p, const SolverOptions& opts, Rng& rng);

struct FitResult {
  SolverState state;
  std::vector<TraceRecord> trace;
  TerminationReason reason = TerminationReason::IterationCap;
  int iterations = 0;
};

/// Alternating sweep over modes until the outer residuals settle.
/// `initial` replaces the seeded initialization when given.
FitResult fit(const ProblemSpec& p, const SolverOptions& opts,
              const std::vector<KruskalFactors>* groundTruth = nullptr,
              std::optional<SolverState> initial = std::nullopt);

/// Sum of tensor orders; the number of inner-iteration columns in a trace.
std::size_t totalModes(const ProblemSpec& p);
void writeTraceCsv(std::ostream& os, const std::vector<TraceRecord>& trace, std::size_t modes);

}  // namespace cmtf
