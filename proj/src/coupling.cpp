#include "cmtf/coupling.hpp"

#include <algorithm>
#include <set>

namespace cmtf {

namespace {

constexpr double kDenominatorFloor = 1e-15;

std::string dims(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

bool isSelectionCandidate(const Matrix& m) {
  return (m.array() == 0.0 || m.array() == 1.0).all();
}

// Smallest over largest eigenvalue of a symmetric PSD matrix.
double conditionRatio(const Matrix& gram) {
  if (gram.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  const double hi = eig.eigenvalues().maxCoeff();
  return hi > 0.0 ? eig.eigenvalues().minCoeff() / hi : 0.0;
}

}  // namespace

std::string_view toString(CouplingCase c) {
  switch (c) {
    case CouplingCase::Exact: return "1";
    case CouplingCase::ModeTransformToDelta: return "2a";
    case CouplingCase::DeltaToMode: return "2b";
    case CouplingCase::ComponentTransformToDelta: return "3a";
    case CouplingCase::DeltaToComponent: return "3b";
  }
  return "?";
}

CouplingCase couplingCaseFromString(std::string_view name) {
  for (auto c : {CouplingCase::Exact, CouplingCase::ModeTransformToDelta, CouplingCase::DeltaToMode,
                 CouplingCase::ComponentTransformToDelta, CouplingCase::DeltaToComponent}) {
    if (toString(c) == name) return c;
  }
  if (name == "exact") return CouplingCase::Exact;
  throw std::invalid_argument("unknown coupling case '" + std::string(name) +
                              "' (expected 1, 2a, 2b, 3a or 3b)");
}

CouplingMap::CouplingMap(CouplingCase kind, Matrix transform)
    : kind_(kind), transform_(std::move(transform)) {}

Matrix CouplingMap::applyFactor(const Matrix& c) const {
  switch (kind_) {
    case CouplingCase::ModeTransformToDelta: return transform_ * c;
    case CouplingCase::ComponentTransformToDelta: return c * transform_;
    default: return c;
  }
}

Matrix CouplingMap::adjointFactor(const Matrix& y) const {
  switch (kind_) {
    case CouplingCase::ModeTransformToDelta: return transform_.transpose() * y;
    case CouplingCase::ComponentTransformToDelta: return y * transform_.transpose();
    default: return y;
  }
}

Matrix CouplingMap::applyDelta(const Matrix& delta) const {
  switch (kind_) {
    case CouplingCase::DeltaToMode: return transform_ * delta;
    case CouplingCase::DeltaToComponent: return delta * transform_;
    default: return delta;
  }
}

Matrix CouplingMap::adjointDelta(const Matrix& y) const {
  switch (kind_) {
    case CouplingCase::DeltaToMode: return transform_.transpose() * y;
    case CouplingCase::DeltaToComponent: return y * transform_.transpose();
    default: return y;
  }
}

std::optional<std::size_t> CouplingSpec::participantOf(std::size_t tensor) const {
  for (std::size_t p = 0; p < participants.size(); ++p) {
    if (participants[p].tensor == tensor) return p;
  }
  return std::nullopt;
}

FactorShape impliedDeltaShape(CouplingCase kind, const Matrix& transform, FactorShape factor) {
  switch (kind) {
    case CouplingCase::Exact: return factor;
    case CouplingCase::ModeTransformToDelta: return {transform.rows(), factor.cols};
    case CouplingCase::DeltaToMode: return {transform.cols(), factor.cols};
    case CouplingCase::ComponentTransformToDelta: return {factor.rows, transform.cols()};
    case CouplingCase::DeltaToComponent: return {factor.rows, transform.rows()};
  }
  return factor;
}

std::vector<std::string> couplingDiagnostics(const CouplingSpec& spec,
                                             std::span<const FactorShape> factors) {
  std::vector<std::string> errors;
  const std::string where = "coupling in mode " + std::to_string(spec.mode + 1) + " (case " +
                            std::string(toString(spec.kind)) + "): ";
  const auto fail = [&](const std::string& msg) { errors.push_back(where + msg); };

  if (spec.participants.empty()) fail("no participants");
  if (factors.size() != spec.participants.size()) {
    fail("expected one factor shape per participant");
    return errors;
  }
  std::set<std::size_t> seen;
  for (const auto& p : spec.participants) {
    if (!seen.insert(p.tensor).second) {
      fail("tensor " + std::to_string(p.tensor + 1) + " listed twice");
    }
  }
  if (spec.deltaRows < 1 || spec.deltaCols < 1) fail("Delta shape must be positive");

  const Eigen::Index nDelta = spec.deltaRows;
  const Eigen::Index rDelta = spec.deltaCols;
  Matrix gram;
  if (spec.kind == CouplingCase::DeltaToMode) gram = Matrix::Zero(nDelta, nDelta);
  if (spec.kind == CouplingCase::DeltaToComponent) gram = Matrix::Zero(rDelta, rDelta);
  bool shapesOk = true;

  for (std::size_t p = 0; p < spec.participants.size(); ++p) {
    const Matrix& h = spec.participants[p].transform;
    const auto [n, r] = factors[p];
    const std::string who = "participant tensor " + std::to_string(spec.participants[p].tensor + 1);
    const auto expect = [&](bool ok, const std::string& msg) {
      if (!ok) {
        fail(who + ": " + msg);
        shapesOk = false;
      }
    };
    switch (spec.kind) {
      case CouplingCase::Exact:
        expect(n == nDelta && r == rDelta,
               "factor is " + dims(n, r) + " but Delta is " + dims(nDelta, rDelta));
        break;
      case CouplingCase::ModeTransformToDelta:
        expect(h.rows() == nDelta && h.cols() == n,
               "transform must be " + dims(nDelta, n) + ", got " + dims(h.rows(), h.cols()));
        expect(r == rDelta, "rank " + std::to_string(r) + " differs from Delta columns");
        expect(nDelta <= n, "Delta rows " + std::to_string(nDelta) +
                                " exceed the mode dimension " + std::to_string(n) +
                                " (case 2a needs nDelta <= min n)");
        break;
      case CouplingCase::DeltaToMode:
        expect(h.rows() == n && h.cols() == nDelta,
               "transform must be " + dims(n, nDelta) + ", got " + dims(h.rows(), h.cols()));
        expect(r == rDelta, "rank " + std::to_string(r) + " differs from Delta columns");
        break;
      case CouplingCase::ComponentTransformToDelta:
        expect(h.rows() == r && h.cols() == rDelta,
               "transform must be " + dims(r, rDelta) + ", got " + dims(h.rows(), h.cols()));
        expect(n == nDelta, "mode dimension differs from Delta rows");
        break;
      case CouplingCase::DeltaToComponent:
        expect(h.rows() == rDelta && h.cols() == r,
               "transform must be " + dims(rDelta, r) + ", got " + dims(h.rows(), h.cols()));
        expect(n == nDelta, "mode dimension differs from Delta rows");
        if (h.rows() == rDelta && h.cols() == r && isSelectionCandidate(h)) {
          if ((h.colwise().sum().array() != 1.0).any()) {
            expect(false, "selection transform needs exactly one 1 per column");
          }
          if ((h.rowwise().sum().array() > 1.0).any()) {
            expect(false, "selection transform allows at most one 1 per row");
          }
        }
        break;
    }
    if (!shapesOk) continue;
    if (spec.kind == CouplingCase::DeltaToMode) gram += h.transpose() * h;
    if (spec.kind == CouplingCase::DeltaToComponent) gram += h * h.transpose();
  }

  if (shapesOk && gram.size() > 0) {
    if (spec.kind == CouplingCase::DeltaToComponent) {
      for (Eigen::Index c = 0; c < rDelta; ++c) {
        if (gram(c, c) == 0.0) fail("Delta column " + std::to_string(c + 1) + " is unused");
      }
    }
    if (conditionRatio(gram) < 1e-12) {
      fail("the Delta normal equations are singular (transforms are rank deficient)");
    }
  }
  return errors;
}

FrobeniusFactorSolver::FrobeniusFactorSolver(const Matrix& gram, double weight, double rho,
                                             bool hasSplit, const CouplingMap* map)
    : weight_(weight), rho_(rho), hasSplit_(hasSplit) {
  if (map) map_ = *map;
  if (map_ && (map_->kind() == CouplingCase::ModeTransformToDelta ||
               map_->kind() == CouplingCase::ComponentTransformToDelta)) {
    const Matrix& h = map_->transform();
    if (h.rows() == h.cols() && h.isIdentity(0.0)) map_ = CouplingMap(CouplingCase::Exact, Matrix());
  }
  const Eigen::Index r = gram.rows();
  const bool proximal = hasSplit_ || map_.has_value();
  if (proximal && !(rho_ > 0.0)) throw SingularSystemError("rho must be positive");

  if (map_ && map_->kind() == CouplingCase::ModeTransformToDelta) {
    const Matrix& h = map_->transform();
    Matrix left = h.transpose() * h;
    if (hasSplit_) left.diagonal().array() += 1.0;
    left *= 0.5 * rho_;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(weight_ * gram);
    eigenvectors_ = eig.eigenvectors();
    shiftedSolves_.reserve(r);
    for (Eigen::Index k = 0; k < r; ++k) {
      Matrix shifted = left;
      shifted.diagonal().array() += std::max(eig.eigenvalues()[k], 0.0);
      shiftedSolves_.emplace_back(shifted);
      if (shiftedSolves_.back().info() != Eigen::Success) {
        throw SingularSystemError("case 2a Sylvester system is singular");
      }
    }
    return;
  }

  Matrix system = weight_ * gram;
  double identityCount = hasSplit_ ? 1.0 : 0.0;
  if (map_) {
    if (map_->kind() == CouplingCase::ComponentTransformToDelta) {
      system += 0.5 * rho_ * map_->transform() * map_->transform().transpose();
    } else {
      identityCount += 1.0;
    }
  }
  system.diagonal().array() += 0.5 * rho_ * identityCount;
  if (!proximal) {
    // Plain least squares; fall back to the minimum-norm solution if the
    // Gram matrix is singular.
    rightSolve_.emplace(system);
    if (rightSolve_->info() != Eigen::Success) {
      rightSolve_.reset();
      leastSquares_.emplace(system);
    }
    return;
  }
  rightSolve_.emplace(system);
  if (rightSolve_->info() != Eigen::Success) {
    throw SingularSystemError("factor update system is not positive definite");
  }
}

Matrix FrobeniusFactorSolver::solve(const Matrix& mttkrp, const Matrix* splitTarget,
                                    const Matrix* couplingTarget) const {
  if (hasSplit_ != (splitTarget != nullptr) || map_.has_value() != (couplingTarget != nullptr)) {
    throw std::invalid_argument("factor update targets do not match the configured terms");
  }
  Matrix rhs = weight_ * mttkrp;
  if (splitTarget) {
    if (splitTarget->rows() != rhs.rows() || splitTarget->cols() != rhs.cols()) {
      throw ShapeError("split target shape mismatch");
    }
    rhs += 0.5 * rho_ * *splitTarget;
  }
  if (couplingTarget) {
    Matrix back = map_->adjointFactor(*couplingTarget);
    if (back.rows() != rhs.rows() || back.cols() != rhs.cols()) {
      throw ShapeError("coupling target shape mismatch");
    }
    rhs += 0.5 * rho_ * back;
  }

  if (!shiftedSolves_.empty()) {
    const Matrix rotated = rhs * eigenvectors_;
    Matrix y(rotated.rows(), rotated.cols());
    for (Eigen::Index k = 0; k < rotated.cols(); ++k) {
      y.col(k) = shiftedSolves_[k].solve(rotated.col(k));
    }
    return y * eigenvectors_.transpose();
  }
  if (rightSolve_) return rightSolve_->solve(rhs.transpose()).transpose();
  return leastSquares_->solve(rhs.transpose()).transpose();
}

Matrix updateFactorFrobenius(const CouplingSpec& spec, std::size_t participant,
                             const DenseTensor& t, const KruskalFactors& k, double weight,
                             double rho, const std::optional<std::pair<Matrix, Matrix>>& split,
                             const ConsensusState& cs) {
  const CouplingMap map = spec.map(participant);
  const FrobeniusFactorSolver solver(gramHadamard(k, spec.mode), weight, rho, split.has_value(),
                                     &map);
  const Matrix couplingTarget = map.applyDelta(cs.delta) - cs.duals.at(participant);
  std::optional<Matrix> splitTarget;
  if (split) splitTarget = split->first - split->second;
  return solver.solve(mttkrp(t, k, spec.mode), splitTarget ? &*splitTarget : nullptr,
                      &couplingTarget);
}

Matrix updateDelta(const CouplingSpec& spec, std::span<const Matrix> factors,
                   const ConsensusState& cs) {
  const std::size_t count = spec.participants.size();
  if (factors.size() != count || cs.duals.size() != count) {
    throw ShapeError("updateDelta: one factor and one dual per participant required");
  }
  Matrix sum = Matrix::Zero(spec.deltaRows, spec.deltaCols);
  switch (spec.kind) {
    case CouplingCase::Exact:
    case CouplingCase::ModeTransformToDelta:
    case CouplingCase::ComponentTransformToDelta: {
      for (std::size_t p = 0; p < count; ++p) {
        sum += spec.map(p).applyFactor(factors[p]) + cs.duals[p];
      }
      return sum / static_cast<double>(count);
    }
    case CouplingCase::DeltaToMode: {
      Matrix gram = Matrix::Zero(spec.deltaRows, spec.deltaRows);
      for (std::size_t p = 0; p < count; ++p) {
        const Matrix& h = spec.participants[p].transform;
        gram += h.transpose() * h;
        sum += h.transpose() * (factors[p] + cs.duals[p]);
      }
      Eigen::LLT<Matrix> llt(gram);
      if (llt.info() != Eigen::Success) throw SingularSystemError("case 2b Delta Gram is singular");
      return llt.solve(sum);
    }
    case CouplingCase::DeltaToComponent: {
      Matrix gram = Matrix::Zero(spec.deltaCols, spec.deltaCols);
      for (std::size_t p = 0; p < count; ++p) {
        const Matrix& h = spec.participants[p].transform;
        gram += h * h.transpose();
        sum += (factors[p] + cs.duals[p]) * h.transpose();
      }
      Eigen::LLT<Matrix> llt(gram);
      if (llt.info() != Eigen::Success) throw SingularSystemError("case 3b Delta Gram is singular");
      return llt.solve(sum.transpose()).transpose();
    }
  }
  return sum;
}

Matrix updateDualDelta(const CouplingSpec& spec, std::size_t participant, const Matrix& c,
                       const Matrix& delta, const Matrix& mu) {
  const CouplingMap map = spec.map(participant);
  return mu + map.applyFactor(c) - map.applyDelta(delta);
}

double couplingResidual(const CouplingSpec& spec, std::size_t participant, const Matrix& c,
                        const Matrix& delta) {
  const CouplingMap map = spec.map(participant);
  const Matrix lhs = map.applyFactor(c);
  return (lhs - map.applyDelta(delta)).norm() / std::max(lhs.norm(), kDenominatorFloor);
}

}  // namespace cmtf
