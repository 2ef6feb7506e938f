#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cmtf/tensor.hpp"

namespace cmtf {

/// Structured forms of the linear coupling H vec(C) = H^Delta vec(Delta).
enum class CouplingCase {
  Exact,                      // C = Delta
  ModeTransformToDelta,       // Ht C = Delta          (Ht: nDelta x n)
  DeltaToMode,                // C = Ht Delta          (Ht: n x nDelta)
  ComponentTransformToDelta,  // C Hh = Delta          (Hh: R x RDelta)
  DeltaToComponent,           // C = Delta Hh          (Hh: RDelta x R)
};

std::string_view toString(CouplingCase c);
CouplingCase couplingCaseFromString(std::string_view name);

class SingularSystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One participant's side of a coupling: the maps A(C) and B(Delta) with
/// A(C) = B(Delta). Residuals and duals live in the shape of A(C).
class CouplingMap {
 public:
  CouplingMap() = default;
  CouplingMap(CouplingCase kind, Matrix transform);

  CouplingCase kind() const noexcept { return kind_; }
  const Matrix& transform() const noexcept { return transform_; }

  Matrix applyFactor(const Matrix& c) const;
  Matrix adjointFactor(const Matrix& y) const;
  Matrix applyDelta(const Matrix& delta) const;
  Matrix adjointDelta(const Matrix& y) const;

 private:
  CouplingCase kind_ = CouplingCase::Exact;
  Matrix transform_;  // unused for Exact
};

struct CouplingParticipant {
  std::size_t tensor = 0;
  Matrix transform;  // empty for Exact
};

/// A coupling of several tensors' factor matrices in one mode.
struct CouplingSpec {
  std::size_t mode = 0;
  CouplingCase kind = CouplingCase::Exact;
  std::vector<CouplingParticipant> participants;
  Eigen::Index deltaRows = 0;
  Eigen::Index deltaCols = 0;

  CouplingMap map(std::size_t participant) const {
    return {kind, participants.at(participant).transform};
  }
  /// Index into `participants` for a tensor, if it takes part.
  std::optional<std::size_t> participantOf(std::size_t tensor) const;
};

struct FactorShape {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
};

/// Delta shape implied by the transforms and participant factor shapes.
FactorShape impliedDeltaShape(CouplingCase kind, const Matrix& transform, FactorShape factor);

/// Error messages for every violated shape/rank rule; empty when valid.
/// `factors[p]` is the factor shape of participant p.
std::vector<std::string> couplingDiagnostics(const CouplingSpec& spec,
                                             std::span<const FactorShape> factors);

/// Consensus variable and the per-participant coupling duals.
struct ConsensusState {
  Matrix delta;
  std::vector<Matrix> duals;
};

/// Solves the quadratic Frobenius factor subproblem
///   min_X w ||T_[d] - X M^T||^2 + rho/2 ||X - Z + muZ||^2
///         + rho/2 ||A(X) - B(Delta) + muDelta||^2
/// for fixed M. Factorizations depend only on M^T M, w, rho, and which terms
/// are present, so one solver serves every inner iteration of a mode update.
class FrobeniusFactorSolver {
 public:
  /// `map` may be null (uncoupled). With neither a split nor a coupling term
  /// this is the plain least-squares update.
  FrobeniusFactorSolver(const Matrix& gram, double weight, double rho, bool hasSplit,
                        const CouplingMap* map);

  /// `mttkrp` is T_[d] M; `splitTarget` is Z - muZ; `couplingTarget` is
  /// B(Delta) - muDelta. Targets must be present exactly when configured.
  Matrix solve(const Matrix& mttkrp, const Matrix* splitTarget,
               const Matrix* couplingTarget) const;

 private:
  double weight_;
  double rho_;
  bool hasSplit_;
  std::optional<CouplingMap> map_;
  // Right-multiplied system X K = RHS.
  std::optional<Eigen::LLT<Matrix>> rightSolve_;
  std::optional<Eigen::CompleteOrthogonalDecomposition<Matrix>> leastSquares_;
  // Sylvester form L X + X (w G) = RHS via w G = Q diag(lambda) Q^T.
  Matrix eigenvectors_;
  std::vector<Eigen::LLT<Matrix>> shiftedSolves_;
};

/// Closed-form factor update for one coupling participant under Frobenius
/// loss. `split` holds (Z, muZ) when the factor is regularized.
Matrix updateFactorFrobenius(const CouplingSpec& spec, std::size_t participant,
                             const DenseTensor& t, const KruskalFactors& k, double weight,
                             double rho, const std::optional<std::pair<Matrix, Matrix>>& split,
                             const ConsensusState& cs);

/// argmin_Delta sum_p ||A_p(C_p) - B_p(Delta) + mu_p||^2 in closed form.
Matrix updateDelta(const CouplingSpec& spec, std::span<const Matrix> factors,
                   const ConsensusState& cs);

/// mu + A(C) - B(Delta).
Matrix updateDualDelta(const CouplingSpec& spec, std::size_t participant, const Matrix& c,
                       const Matrix& delta, const Matrix& mu);

/// ||A(C) - B(Delta)|| / ||A(C)||, denominator floored at 1e-15.
double couplingResidual(const CouplingSpec& spec, std::size_t participant, const Matrix& c,
                        const Matrix& delta);

}  // namespace cmtf
